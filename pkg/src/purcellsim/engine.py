"""Monte Carlo engine producing detected photon time tags.

Each ion is an independent renewal process: the periodic pump attempts
to excite a ground-state ion with the saturated probability for the
ion's laser detuning, the excited ion decays after a time drawn from
its (possibly voltage-modulated) hazard, and the emission is kept if
it falls inside a detector gate, exits through the collection channel,
and survives the detection chain. Ions whose stationary duty cycle is
negligible are simulated in aggregate by Poisson statistics at their
exact stationary renewal rate; the busy ones get an exact
per-excitation renewal walk. Dark counts and any declared far-detuned
background are Poisson processes over the open gates.

Frames: ion and laser frequencies are offsets from one shared
reference, the inhomogeneous line center when an EnsembleConfig is
present and the zero-voltage cavity resonance otherwise. The cavity's
position in that frame is the scenario's cavity_offset_ghz.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .cavity import CavityModel, lorentzian
from .constants import GHZ_PER_MHZ, US_PER_MIN, US_PER_MS, US_PER_S
from .ensemble import (
    EnsembleConfig,
    IonRecord,
    cavity_offset_ghz as ensemble_cavity_offset_ghz,
    diffusion_step_mhz,
    sample_ensemble,
)
from .errors import BreakdownVoltageError, ValidationError
from .hazard import DecayLaw, build_decay_law
from .modeprofile import default_profile
from .pulses import PulseSequence, gate_open
from .seeds import (
    STREAM_BACKGROUND,
    STREAM_COLD,
    STREAM_DARK,
    STREAM_ENSEMBLE,
    STREAM_ION,
    substream,
)
from .timetags import CHANNEL_DARK, CHANNEL_SIGNAL, TimeTagStream

COLD_BUSY_LIMIT = 0.05
MAX_BATCH = 8192
DRIFT_SIGMA_BUDGET = 0.25


@dataclass(frozen=True)
class DetectionChain:
    """Excitation and collection efficiencies of the measurement path.

    transmission() is the probability that a photon already emitted
    into the collection channel reaches a detector click: waveguide
    out-coupling, fiber-chip interface, remaining component losses and
    detector quantum efficiency.
    """

    p_excited: float = 0.5
    coupling_ratio: float = 0.5
    fiber_chip: float = 0.1
    component_loss: float = 0.6
    detector_efficiency: float = 0.5
    dark_count_rate_hz: float = 20.0

    def __post_init__(self) -> None:
        for name in (
            "p_excited",
            "coupling_ratio",
            "fiber_chip",
            "component_loss",
            "detector_efficiency",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        if self.dark_count_rate_hz < 0:
            raise ValidationError("dark_count_rate_hz must be nonnegative")

    def transmission(self) -> float:
        return (
            self.coupling_ratio
            * self.fiber_chip
            * self.component_loss
            * self.detector_efficiency
        )


@dataclass(frozen=True)
class LaserSettings:
    """Pump laser placement and drive level.

    frequency_ghz is an offset in the scenario's shared frequency
    frame. With saturated=True every resonant pump attempt excites
    with probability 1/2 (two-level saturation); otherwise the peak
    probability is scaled by subsaturation_factor.
    """

    frequency_ghz: float = 0.0
    saturated: bool = True
    subsaturation_factor: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.subsaturation_factor <= 1.0:
            raise ValidationError("subsaturation_factor must lie in [0, 1]")

    @property
    def peak_probability(self) -> float:
        return 0.5 * (1.0 if self.saturated else self.subsaturation_factor)


def expected_count_rate(
    chain: DetectionChain,
    lifetime_us: float,
    gate_us: float,
    period_us: float,
    decay_probability: float | None = None,
) -> float:
    """Budgeted detector rate in Hz for one resonant ion.

    The per-cycle click probability is the product of the excitation
    probability, the chance of decaying within the collection gate and
    the chain transmission. decay_probability overrides the gate term
    with a fixed figure (handy for round-number budget checks); the
    default computes 1 - exp(-gate/lifetime).
    """
    if lifetime_us <= 0 or gate_us <= 0 or period_us <= 0:
        raise ValidationError("lifetime_us, gate_us and period_us must be positive")
    if decay_probability is None:
        p_decay = -np.expm1(-gate_us / lifetime_us)
    else:
        if not 0.0 <= decay_probability <= 1.0:
            raise ValidationError("decay_probability must lie in [0, 1]")
        p_decay = decay_probability
    per_cycle = chain.p_excited * p_decay * chain.transmission()
    return per_cycle * US_PER_S / period_us


def excitation_probability(
    ion: IonRecord,
    laser_detuning_ghz: float,
    pump_duration_us: float = 1.0,
    linewidth_mhz: float = 1.0,
    saturated: bool = True,
    subsaturation_factor: float = 1.0,
) -> float:
    """Probability that one pump pulse excites the ion.

    laser_detuning_ghz is laser minus the ion's center frequency; the
    ion's current spectral-diffusion state shifts the effective
    detuning. Saturated pumping pins the resonant probability at 1/2
    independent of pump_duration_us (kept in the signature for
    symmetry with pulse descriptions).
    """
    if pump_duration_us <= 0:
        raise ValidationError("pump_duration_us must be positive")
    delta = laser_detuning_ghz - ion.diffusion_state_mhz * GHZ_PER_MHZ
    width = linewidth_mhz * GHZ_PER_MHZ
    peak = 0.5 * (1.0 if saturated else subsaturation_factor)
    return float(peak * lorentzian(delta, width))


class StationaryRate(NamedTuple):
    rate_hz: float
    excitations_per_cycle: float
    busy_fraction: float
    gate_capture: float


def stationary_detected_rate(
    p_exc: float,
    lifetime_us: float,
    seq: PulseSequence,
    branch: float = 1.0,
    transmission: float = 1.0,
) -> StationaryRate:
    """Exact stationary rate of one exponentially decaying ion.

    The renewal cycle is: wait for the decay to finish (a mean of
    1/(1-exp(-T/T1)) pump periods, counting the period of the
    excitation itself), then retry the pump with success probability
    p_exc each period. gate_capture is the probability that a given
    emission's phase lands inside a detector window, summed over all
    later periods, so carryover across cycle boundaries is included.
    """
    if not 0.0 < p_exc <= 1.0:
        raise ValidationError("p_exc must lie in (0, 1]")
    if lifetime_us <= 0:
        raise ValidationError("lifetime_us must be positive")
    period = seq.period_us
    tx = seq.pump_end_us
    f_cycle = -np.expm1(-period / lifetime_us)
    gap_cycles = 1.0 / f_cycle + 1.0 / p_exc - 1.0
    capture = 0.0
    for a, b in seq.detector_windows:
        if b <= tx:
            a, b = a + period, b + period
        capture += np.exp(-(a - tx) / lifetime_us) - np.exp(-(b - tx) / lifetime_us)
    capture /= f_cycle
    exc_per_cycle = 1.0 / gap_cycles
    rate = exc_per_cycle * capture * branch * transmission * US_PER_S / period
    busy = (1.0 / f_cycle) / gap_cycles
    return StationaryRate(float(rate), float(exc_per_cycle), float(busy), float(capture))


@dataclass(eq=False)
class SimScenario:
    """Everything run_scenario needs to generate a time-tag stream.

    Populations come either from sampling `ensemble` over `profile`
    (profile defaults to the calibrated analytic mode) or from an
    explicit `ions` list, which wins when both are given. Sub-floor or
    out-of-band ions excluded from sampling can be folded into
    extra_background_hz as a flat in-gate rate. collect selects the
    measured channel: "cavity" keeps only emissions branched into the
    cavity-waveguide mode, "all" collects total decay (the waveguide
    reference geometry). linewidth/diffusion fields default to the
    ensemble's values when unset.
    """

    cavity: CavityModel
    sequence: PulseSequence
    chain: DetectionChain
    laser: LaserSettings
    n_cycles: int
    seed: int = 0
    ensemble: EnsembleConfig | None = None
    profile: object | None = None
    ions: Sequence[IonRecord] | None = None
    cavity_offset_ghz: float | None = None
    filter_order: int = 1
    extra_background_hz: float = 0.0
    collect: str = "cavity"
    linewidth_mhz: float | None = None
    diffusion_rate_mhz_per_sqrt_min: float | None = None
    diffusion_bound_mhz: float | None = None
    label: str = ""

    def __post_init__(self) -> None:
        if self.n_cycles < 1:
            raise ValidationError("n_cycles must be at least 1")
        if self.collect not in ("cavity", "all"):
            raise ValidationError("collect must be 'cavity' or 'all'")
        if self.extra_background_hz < 0:
            raise ValidationError("extra_background_hz must be nonnegative")
        if self.filter_order < 1:
            raise ValidationError("filter_order must be at least 1")
        if self.ions is None and self.ensemble is None:
            raise ValidationError("provide an ensemble or an explicit ion list")

    def resolved_linewidth_mhz(self) -> float:
        if self.linewidth_mhz is not None:
            return self.linewidth_mhz
        if self.ensemble is not None:
            return self.ensemble.homogeneous_linewidth_mhz
        return 1.0

    def resolved_diffusion(self) -> tuple[float, float | None]:
        rate = self.diffusion_rate_mhz_per_sqrt_min
        bound = self.diffusion_bound_mhz
        if rate is None:
            rate = (
                self.ensemble.spectral_diffusion_mhz_per_sqrt_min
                if self.ensemble is not None
                else 0.0
            )
        if bound is None and self.ensemble is not None:
            bound = self.ensemble.diffusion_bound_mhz
        return rate, bound


def resolve_ions(scenario: SimScenario) -> tuple[list[IonRecord], float]:
    """The scenario's ion list and the cavity's frame offset."""
    if scenario.ions is not None:
        ions = list(scenario.ions)
    else:
        profile = scenario.profile if scenario.profile is not None else default_profile()
        rng = substream(scenario.seed, STREAM_ENSEMBLE)
        ions = sample_ensemble(scenario.ensemble, profile, scenario.cavity, rng=rng)
    if scenario.cavity_offset_ghz is not None:
        offset = scenario.cavity_offset_ghz
    elif scenario.ensemble is not None:
        offset = ensemble_cavity_offset_ghz(scenario.ensemble, scenario.cavity)
    else:
        offset = 0.0
    return ions, float(offset)


def sample_decay_time(
    ion: IonRecord,
    cavity: CavityModel,
    seq: PulseSequence,
    rng: np.random.Generator,
    horizon_us: float | None = None,
    filter_order: int = 1,
) -> float | None:
    """One decay time for an ion excited at the end of the pump.

    The ion's center_frequency_ghz is taken relative to the
    zero-voltage cavity resonance here. Returns None when the draw
    exceeds horizon_us (no decay within the observation horizon);
    the default horizon is unbounded.
    """
    law = build_decay_law(
        ion.center_frequency_ghz,
        ion.purcell_factor,
        ion.baseline_rate_per_ms,
        seq,
        cavity,
        order=filter_order,
    )
    _, _, d = law.sample(1, rng, seq.pump_end_us)
    value = float(d[0])
    if horizon_us is not None and value > horizon_us:
        return None
    return value


def _drift_span_us(rate_mhz_per_sqrt_min: float, linewidth_mhz: float) -> float:
    """Longest stretch over which a frozen excitation probability stays
    honest: the walk's sigma over the span is capped at a fraction of
    the homogeneous linewidth."""
    if rate_mhz_per_sqrt_min <= 0:
        return float("inf")
    budget = DRIFT_SIGMA_BUDGET * linewidth_mhz
    return US_PER_MIN * (budget / rate_mhz_per_sqrt_min) ** 2


class _HotResult(NamedTuple):
    cycles: np.ndarray
    phases: np.ndarray


def _simulate_hot_ion(
    law: DecayLaw,
    p_of_state,
    diffusion_state0: float,
    diffusion_rate: float,
    diffusion_bound: float | None,
    seq: PulseSequence,
    n_cycles: int,
    rng: np.random.Generator,
    span_limit_us: float,
) -> _HotResult:
    """Exact renewal walk for one frequently excited ion.

    Pump attempts hit every eligible cycle; the geometric gap between
    successes and the decay-time draw that blocks re-pumping are both
    exact. Spectral diffusion is refreshed at batch boundaries spaced
    so the frozen-probability error stays below the sigma budget.
    """
    period = seq.period_us
    tx = seq.pump_end_us
    state = diffusion_state0
    p = p_of_state(state)
    out_cycles: list[np.ndarray] = []
    out_phases: list[np.ndarray] = []
    a = 0
    last_refresh_cycle = 0
    span_cycles = (
        max(1, int(span_limit_us / period)) if np.isfinite(span_limit_us) else None
    )
    while a < n_cycles:
        if diffusion_rate > 0 and a > last_refresh_cycle:
            dt = (a - last_refresh_cycle) * period
            state = float(
                diffusion_step_mhz(
                    diffusion_rate, dt, rng, start_mhz=state, bound_mhz=diffusion_bound
                )
            )
            p = p_of_state(state)
            last_refresh_cycle = a
        gap_est = 1.0 / max(p, 1e-12) + law.mean_lifetime_us / period
        batch = int(np.clip((n_cycles - a) / gap_est + 1, 16, MAX_BATCH))
        gaps = rng.geometric(p, size=batch).astype(np.int64)
        nper, phase, _ = law.sample(batch, rng, tx)
        skip = nper + (phase > tx)
        exc = (
            a
            - np.arange(1, batch + 1)
            + np.cumsum(gaps)
            + np.concatenate(([0], np.cumsum(skip[:-1])))
        )
        limit = n_cycles
        if span_cycles is not None:
            limit = min(limit, a + span_cycles)
        m = int(np.searchsorted(exc, limit, side="left"))
        if m == 0:
            if exc[0] >= n_cycles:
                break
            # span cut before the first success: restart at the refresh
            # boundary (exact for the geometric part by memorylessness)
            a = limit
            continue
        emit_cycle = exc[:m] + nper[:m]
        keep = emit_cycle < n_cycles
        out_cycles.append(emit_cycle[keep])
        out_phases.append(phase[:m][keep])
        a = int(exc[m - 1] + skip[m - 1])
        if m < batch and limit == n_cycles:
            # the next success already fell beyond the run
            break
    if out_cycles:
        return _HotResult(np.concatenate(out_cycles), np.concatenate(out_phases))
    return _HotResult(np.empty(0, dtype=np.int64), np.empty(0, dtype=float))


def _positions_in_gates(x: np.ndarray, seq: PulseSequence) -> np.ndarray:
    """Map uniform draws over [0, total gate length) to gate phases."""
    windows = np.asarray(seq.detector_windows, dtype=float)
    starts = windows[:, 0]
    lengths = windows[:, 1] - windows[:, 0]
    cum = np.concatenate(([0.0], np.cumsum(lengths)))
    idx = np.searchsorted(cum, x, side="right") - 1
    idx = np.clip(idx, 0, len(starts) - 1)
    return starts[idx] + (x - cum[idx])


def _poisson_gate_events(
    rate_hz: float,
    seq: PulseSequence,
    n_cycles: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Homogeneous in-gate Poisson arrivals: (cycles, phases)."""
    gate_total = seq.gate_total_us
    if rate_hz <= 0 or gate_total <= 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=float)
    lam = rate_hz * gate_total / US_PER_S
    total = rng.poisson(lam * n_cycles)
    cycles = rng.integers(0, n_cycles, size=total).astype(np.int64)
    phases = _positions_in_gates(rng.random(total) * gate_total, seq)
    return cycles, phases


def run_scenario(scenario: SimScenario, workers: int = 1) -> TimeTagStream:
    """Generate the detected time-tag stream for a scenario.

    Deterministic for a fixed scenario seed: every random decision
    lives on a keyed substream (ensemble draw, one stream per hot ion,
    one for the aggregated cold population, one each for dark counts
    and flat background), so the result is byte-identical for any
    workers count.
    """
    seq = scenario.sequence
    cavity = scenario.cavity
    if seq.max_abs_voltage > cavity.max_voltage_v:
        raise BreakdownVoltageError(
            f"sequence drives {seq.max_abs_voltage} V, above the "
            f"{cavity.max_voltage_v} V breakdown guard"
        )
    if len(seq.pump_windows) != 1:
        raise ValidationError("the engine assumes exactly one pump window per cycle")
    if len(seq.detector_windows) == 0:
        raise ValidationError("at least one detector window is required")
    ions, offset = resolve_ions(scenario)
    n_cycles = int(scenario.n_cycles)
    period = seq.period_us
    tx = seq.pump_end_us
    linewidth = scenario.resolved_linewidth_mhz()
    diff_rate, diff_bound = scenario.resolved_diffusion()
    peak_p = scenario.laser.peak_probability
    width_ghz = linewidth * GHZ_PER_MHZ
    transmission = scenario.chain.transmission()
    collect_all = scenario.collect == "all"

    n_ions = len(ions)
    freq_rel = np.array([ion.center_frequency_ghz - offset for ion in ions])
    baseline = np.array([ion.baseline_rate_per_ms for ion in ions])
    purcell = np.array([ion.purcell_factor for ion in ions])
    delta_laser = np.array(
        [scenario.laser.frequency_ghz - ion.center_frequency_ghz for ion in ions]
    )
    state0 = np.array([ion.diffusion_state_mhz for ion in ions])
    p0 = peak_p * lorentzian(delta_laser - state0 * GHZ_PER_MHZ, width_ghz)

    # with no voltage drive every law is a plain exponential, so the
    # rates, branches and the hot/cold split vectorize across the
    # population instead of touching one DecayLaw object per ion
    constant_seq = len(seq.voltage_segments) == 0 or seq.max_abs_voltage == 0.0
    if constant_seq and n_ions:
        gamma_b = baseline / US_PER_MS
        gamma_p = (
            purcell
            * gamma_b
            * lorentzian(-freq_rel, cavity.linewidth_ghz, order=scenario.filter_order)
        )
        gamma_const = gamma_b + gamma_p
        branch_const = np.where(gamma_const > 0, gamma_p / gamma_const, 0.0)
        f_cycle = -np.expm1(-period * gamma_const)
        gap = 1.0 / f_cycle + 1.0 / np.maximum(p0, 1e-300) - 1.0
        hot_mask = (1.0 / f_cycle) / gap > COLD_BUSY_LIMIT
    else:
        gamma_const = np.empty(0)
        branch_const = np.empty(0)
        hot_mask = np.ones(n_ions, dtype=bool)
    hot_idx = [int(i) for i in np.nonzero(hot_mask)[0]]
    cold_idx = np.nonzero(~hot_mask)[0]

    span_limit = _drift_span_us(diff_rate, linewidth)

    def hot_task(i: int) -> tuple[_HotResult, DecayLaw]:
        rng = substream(scenario.seed, STREAM_ION, i)
        law = build_decay_law(
            float(freq_rel[i]),
            float(purcell[i]),
            float(baseline[i]),
            seq,
            cavity,
            order=scenario.filter_order,
        )

        def p_of_state(state_mhz: float) -> float:
            return float(
                peak_p
                * lorentzian(delta_laser[i] - state_mhz * GHZ_PER_MHZ, width_ghz)
            )

        result = _simulate_hot_ion(
            law,
            p_of_state,
            float(state0[i]),
            diff_rate,
            diff_bound,
            seq,
            n_cycles,
            rng,
            span_limit,
        )
        return result, law

    if workers > 1 and len(hot_idx) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hot_results = list(pool.map(hot_task, hot_idx))
    else:
        hot_results = [hot_task(i) for i in hot_idx]

    pieces_cycles: list[np.ndarray] = []
    pieces_phases: list[np.ndarray] = []
    pieces_channel: list[np.ndarray] = []

    for i, (res, law) in zip(hot_idx, hot_results):
        if res.cycles.size == 0:
            continue
        rng = substream(scenario.seed, STREAM_ION, i, 1)
        inside = gate_open(seq, res.phases)
        prob = transmission if collect_all else law.branch_at(res.phases) * transmission
        accept = inside & (rng.random(res.cycles.size) < prob)
        pieces_cycles.append(res.cycles[accept])
        pieces_phases.append(res.phases[accept])
        pieces_channel.append(np.zeros(int(accept.sum()), dtype=np.uint8))

    if cold_idx.size:
        rng = substream(scenario.seed, STREAM_COLD)
        idx = cold_idx
        gamma = gamma_const[idx]
        branch = branch_const[idx]
        if diff_rate > 0 and diff_bound is not None:
            eff_state = rng.uniform(-diff_bound, diff_bound, size=idx.size)
        else:
            eff_state = state0[idx]
        p_cold = peak_p * lorentzian(
            delta_laser[idx] - eff_state * GHZ_PER_MHZ, width_ghz
        )
        f_cycle = -np.expm1(-period * gamma)
        with np.errstate(divide="ignore", over="ignore"):
            gap = 1.0 / f_cycle + 1.0 / p_cold - 1.0
            lam = np.where(np.isfinite(gap), n_cycles / gap, 0.0)
        counts = rng.poisson(lam)
        rep = np.repeat(np.arange(idx.size), counts)
        if rep.size:
            exc_cycle = rng.integers(0, n_cycles, size=rep.size).astype(np.int64)
            d = rng.exponential(1.0 / gamma[rep])
            abs_t = tx + d
            nper = np.floor(abs_t / period)
            phase = np.minimum(abs_t - nper * period, np.nextafter(period, 0.0))
            emit_cycle = exc_cycle + nper.astype(np.int64)
            inside = gate_open(seq, phase)
            prob = transmission if collect_all else branch[rep] * transmission
            accept = (
                (emit_cycle < n_cycles) & inside & (rng.random(rep.size) < prob)
            )
            pieces_cycles.append(emit_cycle[accept])
            pieces_phases.append(phase[accept])
            pieces_channel.append(np.zeros(int(accept.sum()), dtype=np.uint8))

    bg_cycles, bg_phases = _poisson_gate_events(
        scenario.extra_background_hz, seq, n_cycles, substream(scenario.seed, STREAM_BACKGROUND)
    )
    pieces_cycles.append(bg_cycles)
    pieces_phases.append(bg_phases)
    pieces_channel.append(np.full(bg_cycles.size, CHANNEL_SIGNAL, dtype=np.uint8))

    dark_cycles, dark_phases = _poisson_gate_events(
        scenario.chain.dark_count_rate_hz, seq, n_cycles, substream(scenario.seed, STREAM_DARK)
    )
    pieces_cycles.append(dark_cycles)
    pieces_phases.append(dark_phases)
    pieces_channel.append(np.full(dark_cycles.size, CHANNEL_DARK, dtype=np.uint8))

    cycles = np.concatenate(pieces_cycles) if pieces_cycles else np.empty(0, np.int64)
    phases = np.concatenate(pieces_phases) if pieces_phases else np.empty(0, float)
    channels = (
        np.concatenate(pieces_channel) if pieces_channel else np.empty(0, np.uint8)
    )
    t_ns = np.rint(phases * 1000.0).astype(np.uint32)
    order = np.lexsort((channels, t_ns, cycles))

    metadata = {
        "seed": str(scenario.seed),
        "n_cycles": str(n_cycles),
        "period_us": repr(period),
        "pump_end_us": repr(tx),
        "gate_total_us": repr(seq.gate_total_us),
        "gates": ";".join(f"{a}:{b}" for a, b in seq.detector_windows),
        "laser_ghz": repr(scenario.laser.frequency_ghz),
        "cavity_offset_ghz": repr(offset),
        "n_ions": str(len(ions)),
        "n_hot": str(len(hot_idx)),
        "n_cold": str(len(cold_idx)),
        "collect": scenario.collect,
        "filter_order": str(scenario.filter_order),
        "extra_background_hz": repr(scenario.extra_background_hz),
        "dark_count_rate_hz": repr(scenario.chain.dark_count_rate_hz),
        "transmission": repr(transmission),
    }
    if scenario.label:
        metadata["label"] = scenario.label

    return TimeTagStream(
        cycles=cycles[order],
        t_ns=t_ns[order],
        channels=channels[order],
        metadata=metadata,
    )
