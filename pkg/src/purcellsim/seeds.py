"""Deterministic random-stream bookkeeping.

Every stochastic component draws from its own named substream spawned
from one root seed, so simulations are reproducible bit for bit no
matter how the work is split across workers.  Substreams are addressed
by small integer keys; per-ion streams append the ion id.
"""

import numpy as np

STREAM_ENSEMBLE = 0
STREAM_DIFFUSION = 1
STREAM_ION = 2
STREAM_COLD = 3
STREAM_DARK = 4
STREAM_BACKGROUND = 5
STREAM_NOISE = 6


def substream(root_seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream addressed by ``key`` under ``root_seed``.

    The same (seed, key) pair always yields an identical stream, and
    distinct keys yield statistically independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=tuple(key)))
