"""Per-cycle waveforms: pump windows, detector gates, EO voltage.

A cycle starts at the pump rise (t = 0) and repeats every period.
Voltage segments describe the target waveform driven into the EO
electrodes; the amplifier is a single-pole low-pass, so the effective
voltage follows exact exponential segments with time constant
tau = 1/(2 pi BW). The effective trace is evaluated in its periodic
steady state, which makes the decay hazard strictly periodic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cavity import CavityModel, eo_detuning_unchecked
from .errors import ValidationError

Window = tuple[float, float]


def _check_windows(name: str, windows, period: float) -> tuple[Window, ...]:
    out = []
    for w in windows:
        if len(w) != 2:
            raise ValidationError(f"{name} window must be (start, stop)")
        a, b = float(w[0]), float(w[1])
        if not (0.0 <= a < b <= period):
            raise ValidationError(f"{name} window ({a}, {b}) outside [0, period={period})")
        out.append((a, b))
    out.sort()
    for (a1, b1), (a2, _) in zip(out, out[1:]):
        if a2 < b1:
            raise ValidationError(f"{name} windows overlap at {a2}")
    return tuple(out)


@dataclass(frozen=True)
class PulseSequence:
    """Validated, immutable description of one experiment cycle."""

    period_us: float
    pump_windows: tuple[Window, ...]
    detector_windows: tuple[Window, ...]
    voltage_segments: tuple[tuple[float, float, float], ...] = ()
    amplifier_bandwidth_mhz: float | None = 1.0

    @property
    def pump_end_us(self) -> float:
        return self.pump_windows[0][1]

    @property
    def gate_total_us(self) -> float:
        return sum(b - a for a, b in self.detector_windows)

    @property
    def max_abs_voltage(self) -> float:
        return max((abs(v) for _, _, v in self.voltage_segments), default=0.0)

    @property
    def tau_us(self) -> float | None:
        """Amplifier time constant; None means an ideal (unfiltered) drive."""
        if self.amplifier_bandwidth_mhz is None:
            return None
        return 1.0 / (2.0 * math.pi * self.amplifier_bandwidth_mhz)


def build_sequence(
    period_us: float,
    pump_windows,
    detector_windows,
    voltage_segments=(),
    amplifier_bandwidth_mhz: float | None = 1.0,
) -> PulseSequence:
    """Validate windows and assemble a PulseSequence.

    Raises ValidationError on windows outside the period, overlap
    within a channel, or any pump/detector overlap (the detector is
    blanked during excitation to avoid saturation).
    """
    if period_us <= 0:
        raise ValidationError("period_us must be positive")
    pumps = _check_windows("pump", pump_windows, period_us)
    gates = _check_windows("detector", detector_windows, period_us)
    if not pumps:
        raise ValidationError("at least one pump window is required")
    for pa, pb in pumps:
        for ga, gb in gates:
            if pa < gb and ga < pb:
                raise ValidationError(
                    f"pump window ({pa}, {pb}) overlaps detector window ({ga}, {gb})"
                )
    segs = []
    for seg in voltage_segments:
        if len(seg) != 3:
            raise ValidationError("voltage segment must be (start, stop, volts)")
        a, b, v = float(seg[0]), float(seg[1]), float(seg[2])
        if not (0.0 <= a < b <= period_us):
            raise ValidationError(f"voltage segment ({a}, {b}) outside [0, period)")
        segs.append((a, b, v))
    segs.sort()
    for (a1, b1, _), (a2, _, _) in zip(segs, segs[1:]):
        if a2 < b1:
            raise ValidationError(f"voltage segments overlap at {a2}")
    if amplifier_bandwidth_mhz is not None and amplifier_bandwidth_mhz <= 0:
        raise ValidationError("amplifier_bandwidth_mhz must be positive or None")
    return PulseSequence(
        period_us=period_us,
        pump_windows=pumps,
        detector_windows=gates,
        voltage_segments=tuple(segs),
        amplifier_bandwidth_mhz=amplifier_bandwidth_mhz,
    )


class EffectiveVoltage:
    """Voltage trace over one period after amplifier filtering.

    Piecewise targets propagate through the single-pole response in
    closed form; the value at t = 0 is the periodic steady state, so
    the trace is continuous across the cycle wrap. Callable on scalars
    or arrays of times within [0, period).
    """

    def __init__(self, seq: PulseSequence):
        self.seq = seq
        edges = {0.0, seq.period_us}
        for a, b, _ in seq.voltage_segments:
            edges.add(a)
            edges.add(b)
        starts = np.array(sorted(edges))
        self.piece_starts = starts[:-1]
        self.piece_stops = starts[1:]
        targets = np.zeros_like(self.piece_starts)
        for a, b, v in seq.voltage_segments:
            targets[(self.piece_starts >= a) & (self.piece_stops <= b)] = v
        self.targets = targets
        tau = seq.tau_us
        self.tau = tau
        if tau is None:
            self.piece_v0 = targets.copy()
            return
        decay = np.exp(-(self.piece_stops - self.piece_starts) / tau)
        # affine map across one period: v_end = A*v_start + B
        a_total = 1.0
        b_total = 0.0
        for q, d in zip(targets, decay):
            a_total, b_total = a_total * d, (b_total * d + q * (1.0 - d))
        v0 = b_total / (1.0 - a_total) if a_total < 1.0 else 0.0
        piece_v0 = np.empty_like(targets)
        v = v0
        for i, (q, d) in enumerate(zip(targets, decay)):
            piece_v0[i] = v
            v = q + (v - q) * d
        self.piece_v0 = piece_v0

    def __call__(self, t):
        tt = np.asarray(t, dtype=float)
        if np.any((tt < 0) | (tt >= self.seq.period_us)):
            raise ValidationError("time outside [0, period)")
        idx = np.searchsorted(self.piece_starts, tt, side="right") - 1
        if self.tau is None:
            out = self.targets[idx]
        else:
            q = self.targets[idx]
            out = q + (self.piece_v0[idx] - q) * np.exp(-(tt - self.piece_starts[idx]) / self.tau)
        if np.ndim(t) == 0:
            return float(out)
        return out


@lru_cache(maxsize=64)
def effective_voltage(seq: PulseSequence) -> EffectiveVoltage:
    return EffectiveVoltage(seq)


def voltage_at(seq: PulseSequence, t):
    """Filtered voltage at time(s) t within [0, period)."""
    return effective_voltage(seq)(t)


def cavity_detuning_at(seq: PulseSequence, cavity: CavityModel, ion_frequency_ghz: float, t):
    """Instantaneous cavity-ion detuning in GHz.

    ion_frequency_ghz is the ion frequency relative to the
    zero-voltage cavity resonance; the result is the EO-shifted cavity
    frequency minus the ion frequency.
    """
    v = voltage_at(seq, t)
    return eo_detuning_unchecked(cavity, v) - ion_frequency_ghz


def gate_open(seq: PulseSequence, t):
    """Whether t (scalar or array, within [0, period)) lies in a
    detector window. Windows are half-open: [start, stop)."""
    tt = np.asarray(t, dtype=float)
    if np.any((tt < 0) | (tt >= seq.period_us)):
        raise ValidationError("time outside [0, period)")
    edges = np.array([e for w in seq.detector_windows for e in w])
    idx = np.searchsorted(edges, tt, side="right")
    out = (idx % 2) == 1
    if np.ndim(t) == 0:
        return bool(out)
    return out


def sequence_fig3d(
    period_us: float = 20.0, pump_us: float = 1.0, gate_us: float = 10.0
) -> PulseSequence:
    """Pulsed-autocorrelation timing: pump, then a fluorescence
    collection window, then dead time to the next cycle."""
    return build_sequence(
        period_us,
        pump_windows=[(0.0, pump_us)],
        detector_windows=[(pump_us, pump_us + gate_us)],
    )


def sequence_shaping(
    detune_v: float = 40.0,
    suppress_us: float = 30.0,
    collect_us: float = 60.0,
    pump_us: float = 1.0,
    amplifier_bandwidth_mhz: float | None = 1.0,
) -> PulseSequence:
    """Emission-shaping protocol: excite on resonance, detune the
    cavity for a suppression window, retune, and watch the burst.
    The detector stays open from pump end to near the cycle end."""
    period = pump_us + suppress_us + collect_us + 4.0
    return build_sequence(
        period,
        pump_windows=[(0.0, pump_us)],
        detector_windows=[(pump_us, period - 2.0)],
        voltage_segments=[(pump_us, pump_us + suppress_us, detune_v)],
        amplifier_bandwidth_mhz=amplifier_bandwidth_mhz,
    )


def sequence_storage(
    delay_us: float,
    volts: float = 80.0,
    collect_us: float = 50.0,
    pump_us: float = 1.0,
    tail_us: float = 9.0,
    amplifier_bandwidth_mhz: float | None = 1.0,
) -> PulseSequence:
    """Storage protocol: excite on resonance, hold the cavity detuned
    for a delay, retune, and collect the retrieved emission."""
    if delay_us < 0:
        raise ValidationError("delay_us must be nonnegative")
    t_retune = pump_us + delay_us
    period = t_retune + collect_us + tail_us
    segments = [(pump_us, t_retune, volts)] if delay_us > 0 and volts != 0.0 else []
    return build_sequence(
        period,
        pump_windows=[(0.0, pump_us)],
        detector_windows=[(t_retune, t_retune + collect_us)],
        voltage_segments=segments,
        amplifier_bandwidth_mhz=amplifier_bandwidth_mhz,
    )


def render_timeline(seq: PulseSequence, n_samples: int = 2000) -> np.ndarray:
    """Sample the cycle for plotting: columns are time, pump flag,
    gate flag, target volts, effective volts."""
    t = np.linspace(0.0, seq.period_us, n_samples, endpoint=False)
    pump_edges = np.array([e for w in seq.pump_windows for e in w])
    pump = (np.searchsorted(pump_edges, t, side="right") % 2) == 1
    gate = gate_open(seq, t)
    ev = effective_voltage(seq)
    idx = np.searchsorted(ev.piece_starts, t, side="right") - 1
    target = ev.targets[idx]
    return np.column_stack([t, pump.astype(float), gate.astype(float), target, ev(t)])
