"""Composed measurement protocols built on the engine and the fitters.

These mirror how the hardware experiments are actually run: histogram
arrival times against the pump edge and fit a lifetime, step the laser
across the line and record count rates, or sweep the storage delay and
fit the retrieved intensity. Each sweep point runs on its own derived
seed while the ions (and their spectral-diffusion trajectories) are
shared across the sweep, the way a single physical sample would be.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .engine import SimScenario, resolve_ions, run_scenario
from .ensemble import diffusion_step_mhz
from .errors import UndefinedEstimateError, ValidationError
from .fitting import FitResult, fit_exponential
from .pulses import PulseSequence, sequence_storage
from .seeds import STREAM_DIFFUSION, STREAM_NOISE, substream
from .timetags import TimeTagStream

DEFAULT_BINS = 100


def _pump_end_us(stream: TimeTagStream, seq: PulseSequence | None) -> float:
    if seq is not None:
        return seq.pump_end_us
    if "pump_end_us" in stream.metadata:
        return float(stream.metadata["pump_end_us"])
    raise ValidationError("provide the pulse sequence or a stream with pump metadata")


def decay_histogram(
    stream: TimeTagStream,
    seq: PulseSequence | None = None,
    n_bins: int = DEFAULT_BINS,
    t_max_us: float | None = None,
    t_min_us: float = 0.0,
):
    """Histogram arrival times relative to the pump edge.

    Emissions that carried over from earlier cycles fold onto the same
    axis; for an exponential decay the fold preserves the decay
    constant exactly (it only rescales the amplitude), so lifetime
    fits on the folded histogram are unbiased. Returns (bin centers in
    us, counts).
    """
    if n_bins < 2:
        raise ValidationError("n_bins must be at least 2")
    tx = _pump_end_us(stream, seq)
    tau = stream.t_ns / 1000.0 - tx
    if t_max_us is None:
        if seq is not None:
            t_max_us = max(b for _, b in seq.detector_windows) - tx
        else:
            t_max_us = float(tau.max()) if tau.size else 1.0
    if t_max_us <= t_min_us:
        raise ValidationError("t_max_us must exceed t_min_us")
    counts, edges = np.histogram(
        tau[(tau >= t_min_us) & (tau < t_max_us)], bins=n_bins, range=(t_min_us, t_max_us)
    )
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, counts


def fit_lifetime(
    stream: TimeTagStream,
    seq: PulseSequence | None = None,
    n_bins: int = DEFAULT_BINS,
    t_max_us: float | None = None,
) -> FitResult:
    """Exponential lifetime from the folded decay histogram."""
    centers, counts = decay_histogram(stream, seq, n_bins=n_bins, t_max_us=t_max_us)
    if counts.sum() == 0:
        raise UndefinedEstimateError("no counts in the decay window")
    sigma = np.sqrt(np.maximum(counts, 1.0))
    return fit_exponential(centers, counts.astype(float), sigma=sigma)


def _derived_seed(root: int, index: int) -> int:
    state = np.random.SeedSequence(root, spawn_key=(STREAM_NOISE, index))
    return int(state.generate_state(1, dtype=np.uint64)[0])


def _walk_states(
    ions, n_points: int, point_duration_us: float, scenario: SimScenario
) -> np.ndarray:
    """Spectral-diffusion state of every ion at the start of each sweep
    point; the walk is continuous across the sweep."""
    rate, bound = scenario.resolved_diffusion()
    states = np.array([ion.diffusion_state_mhz for ion in ions])
    out = np.empty((n_points, len(ions)))
    rng = substream(scenario.seed, STREAM_DIFFUSION)
    for k in range(n_points):
        out[k] = states
        if rate > 0 and len(ions):
            states = diffusion_step_mhz(
                rate,
                np.full(len(ions), point_duration_us),
                rng,
                start_mhz=states,
                bound_mhz=bound,
            )
    return out


def excitation_spectrum(
    scenario: SimScenario,
    offsets_ghz,
    workers: int = 1,
) -> np.ndarray:
    """Detected count rate versus laser offset.

    Runs one acquisition per laser position over the same resolved ion
    population, with spectral diffusion walked continuously from point
    to point. Returns rows (offset_ghz, rate_hz, err_hz), the error
    being the Poisson counting uncertainty.
    """
    offsets = np.asarray(offsets_ghz, dtype=float).ravel()
    if offsets.size == 0:
        raise ValidationError("offsets_ghz must not be empty")
    ions, cavity_offset = resolve_ions(scenario)
    duration_us = scenario.n_cycles * scenario.sequence.period_us
    states = _walk_states(ions, offsets.size, duration_us, scenario)

    def one_point(k: int):
        ions_k = [
            replace(ion, diffusion_state_mhz=float(states[k, i]))
            for i, ion in enumerate(ions)
        ]
        point = replace(
            scenario,
            ions=ions_k,
            cavity_offset_ghz=cavity_offset,
            laser=replace(scenario.laser, frequency_ghz=float(offsets[k])),
            seed=_derived_seed(scenario.seed, k),
            diffusion_rate_mhz_per_sqrt_min=0.0,
        )
        stream = run_scenario(point)
        n = stream.cycles.size
        seconds = duration_us / 1e6
        return float(offsets[k]), n / seconds, np.sqrt(max(n, 1)) / seconds

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one_point, range(offsets.size)))
    else:
        rows = [one_point(k) for k in range(offsets.size)]
    return np.array(rows)


def lifetime_vs_delay(
    scenario: SimScenario,
    delays_us,
    storage_volts: float = 80.0,
    collect_us: float = 50.0,
    pump_us: float = 1.0,
    tail_us: float = 9.0,
) -> tuple[np.ndarray, FitResult]:
    """Retrieved intensity versus storage delay, with its lifetime fit.

    For each delay the pulse sequence detunes the cavity by
    storage_volts during the delay and collects for collect_us after
    the voltage returns to zero. The retrieved intensity is the mean
    detected count per cycle; the exponential fit of intensity against
    delay gives the storage lifetime. Returns (rows, fit) with rows
    (delay_us, intensity_per_cycle, err).
    """
    delays = np.asarray(delays_us, dtype=float).ravel()
    if delays.size < 4:
        raise ValidationError("need at least four delays for a lifetime fit")
    ions, cavity_offset = resolve_ions(scenario)
    bandwidth = scenario.sequence.amplifier_bandwidth_mhz
    rows = []
    for k, delay in enumerate(delays):
        seq = sequence_storage(
            float(delay),
            volts=storage_volts,
            collect_us=collect_us,
            pump_us=pump_us,
            tail_us=tail_us,
            amplifier_bandwidth_mhz=bandwidth,
        )
        point = replace(
            scenario,
            sequence=seq,
            ions=ions,
            cavity_offset_ghz=cavity_offset,
            seed=_derived_seed(scenario.seed, k),
        )
        stream = run_scenario(point)
        n = stream.channel_counts().get("signal", 0)
        rows.append(
            (float(delay), n / scenario.n_cycles, np.sqrt(max(n, 1)) / scenario.n_cycles)
        )
    rows = np.array(rows)
    fit = fit_exponential(rows[:, 0], rows[:, 1], sigma=rows[:, 2])
    return rows, fit


def window_rates(stream: TimeTagStream, windows_us) -> np.ndarray:
    """Mean detected rate (Hz) inside each (start, stop) phase window."""
    n_cycles = stream.n_cycles
    if not n_cycles:
        raise ValidationError("stream lacks cycle-count metadata")
    t_us = stream.t_ns / 1000.0
    out = []
    for a, b in windows_us:
        if b <= a:
            raise ValidationError("windows must have stop > start")
        n = int(((t_us >= a) & (t_us < b)).sum())
        seconds = n_cycles * (b - a) / 1e6
        out.append((a, b, n / seconds))
    return np.array(out)
