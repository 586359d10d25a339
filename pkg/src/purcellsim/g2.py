"""Second-order correlation estimators on pulsed time-tag data.

Counts are binned per pump cycle; the normalized correlation at cycle
offset k is

    g2(k) = <n_i n_{i+k}> / <n>^2,    g2(0) = <n (n - 1)> / <n>^2,

the standard time-bin estimator for pulsed sources. Uncertainties are
counting-statistics errors (root of the coincidence count), with an
optional block bootstrap for a model-free cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedEstimateError, ValidationError
from .timetags import TimeTagStream


@dataclass(eq=False)
class BinSeries:
    """Per-cycle photon counts for one acquisition."""

    counts: np.ndarray
    period_us: float | None = None

    def __post_init__(self) -> None:
        self.counts = np.ascontiguousarray(self.counts)
        if self.counts.ndim != 1:
            raise ValidationError("counts must be one-dimensional")
        if self.counts.size and self.counts.min() < 0:
            raise ValidationError("counts must be nonnegative")

    @property
    def n_cycles(self) -> int:
        return int(self.counts.size)

    @property
    def mean(self) -> float:
        if self.counts.size == 0:
            raise UndefinedEstimateError("empty bin series")
        return float(self.counts.mean())


def bin_by_cycle(stream: TimeTagStream, n_cycles: int | None = None) -> BinSeries:
    """Count detections per pump cycle (all channels).

    n_cycles defaults to the stream's recorded cycle count so trailing
    empty cycles are kept; pass an explicit value to truncate or pad.
    """
    if n_cycles is None:
        n_cycles = stream.n_cycles
    if n_cycles is None:
        n_cycles = int(stream.cycles.max()) + 1 if stream.cycles.size else 0
    n_cycles = int(n_cycles)
    inside = stream.cycles < n_cycles
    counts = np.bincount(stream.cycles[inside], minlength=n_cycles)
    period = stream.period_us
    return BinSeries(counts.astype(np.int32), period_us=period)


@dataclass(frozen=True)
class G2Result:
    """Normalized pulsed correlation versus cycle offset.

    offsets[0] is 0 and values[0] is the same-cycle estimator
    <n(n-1)>/<n>^2; std_errors are counting-statistics unless the
    bootstrap was requested, in which case they come from block
    resampling.
    """

    offsets: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    mean_counts: float
    n_cycles: int
    coincidences: np.ndarray

    @property
    def g2_zero(self) -> float:
        return float(self.values[0])

    @property
    def g2_zero_err(self) -> float:
        return float(self.std_errors[0])


def _raw_g2(counts: np.ndarray, max_offset: int) -> tuple[np.ndarray, np.ndarray]:
    """Coincidence sums and normalized values for offsets 0..max."""
    n = counts.astype(np.float64)
    m = n.size
    mu = n.mean()
    coinc = np.empty(max_offset + 1)
    pairs = np.empty(max_offset + 1)
    coinc[0] = np.dot(n, n - 1.0)
    pairs[0] = m
    for k in range(1, max_offset + 1):
        coinc[k] = np.dot(n[:-k], n[k:])
        pairs[k] = m - k
    values = coinc / (pairs * mu * mu)
    return coinc, values


def g2_timebin(
    bins: BinSeries,
    max_offset: int = 10,
    bootstrap: int = 0,
    rng: np.random.Generator | None = None,
) -> G2Result:
    """Pulsed g2 at cycle offsets 0..max_offset.

    Same-cycle coincidences use the factorial-moment estimator, finite
    offsets the plain product estimator. With bootstrap > 0 the errors
    are the standard deviation over that many block-bootstrap
    replicates (about 100 contiguous blocks), which picks up any
    correlation structure the counting-statistics error ignores.
    """
    counts = bins.counts
    m = counts.size
    if max_offset < 0:
        raise ValidationError("max_offset must be nonnegative")
    if m <= max_offset:
        raise UndefinedEstimateError(
            f"need more than {max_offset} cycles, got {m}"
        )
    mu = counts.mean()
    if mu == 0:
        raise UndefinedEstimateError("no detections; g2 is undefined")
    coinc, values = _raw_g2(counts, max_offset)
    pairs = m - np.arange(max_offset + 1)
    denom = pairs * mu * mu
    errors = np.sqrt(np.maximum(coinc, 1.0)) / denom
    if bootstrap > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        n_blocks = min(100, m)
        edges = np.linspace(0, m, n_blocks + 1).astype(int)
        blocks = [counts[a:b] for a, b in zip(edges[:-1], edges[1:])]
        reps = np.empty((bootstrap, max_offset + 1))
        for r in range(bootstrap):
            pick = rng.integers(0, n_blocks, size=n_blocks)
            resampled = np.concatenate([blocks[j] for j in pick])
            if resampled.mean() == 0:
                reps[r] = np.nan
                continue
            _, reps[r] = _raw_g2(resampled, max_offset)
        errors = np.nanstd(reps, axis=0)
    return G2Result(
        offsets=np.arange(max_offset + 1),
        values=values,
        std_errors=errors,
        mean_counts=float(mu),
        n_cycles=m,
        coincidences=coinc,
    )


def g2_from_snr(snr: float) -> float:
    """g2(0) of a single emitter over a Poissonian background.

    For signal-to-background ratio s, g2(0) = 1 - (s/(1+s))^2, i.e.
    (2s+1)/(s+1)^2. snr = 0 gives 1 (pure background), snr -> inf
    gives 0 (pure single emitter).
    """
    if snr < 0:
        raise ValidationError("snr must be nonnegative")
    x = snr / (1.0 + snr)
    return 1.0 - x * x


def snr_from_g2(g2_zero: float) -> float:
    """Signal-to-background ratio implied by a measured g2(0).

    Inverse of g2_from_snr; defined for g2 in (0, 1]. Values at or
    below 0 (perfect suppression needs infinite SNR) or above 1
    (super-Poissonian light has no single-emitter SNR reading) raise
    UndefinedEstimateError.
    """
    if not 0.0 < g2_zero <= 1.0:
        raise UndefinedEstimateError(
            f"snr is defined for g2 in (0, 1], got {g2_zero}"
        )
    t = np.sqrt(1.0 - g2_zero)
    if t == 1.0:
        return float("inf")
    return float(t / (1.0 - t))
