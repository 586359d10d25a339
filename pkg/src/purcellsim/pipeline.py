"""Config-driven execution: build scenarios, run them, report results.

Every run mode maps a RunConfig to domain objects, executes the
simulate/analyze pipeline, writes its artifacts (time-tag streams and
CSV tables) atomically, and appends named entries to a RunReport. The
report digest is reproducible from config, seed and version alone.
"""

import os
import time
from dataclasses import replace

import numpy as np
from scipy.signal import find_peaks

from . import timetags
from .cavity import (
    CavityModel,
    eo_detuning,
    lifetime_to_purcell,
    lorentzian,
    purcell_to_lifetime,
    reflection_spectrum,
)
from .engine import (
    DetectionChain,
    LaserSettings,
    SimScenario,
    excitation_probability,
    expected_count_rate,
    resolve_ions,
    run_scenario,
    stationary_detected_rate,
)
from .ensemble import (
    EnsembleConfig,
    IonRecord,
    ion_lifetime_us,
    spectral_density,
)
from .errors import ConfigError, UndefinedEstimateError, ValidationError
from .experiments import (
    decay_histogram,
    excitation_spectrum,
    fit_lifetime,
    lifetime_vs_delay,
    window_rates,
)
from .fitting import fit_gaussian, fit_lorentzian
from .g2 import bin_by_cycle, g2_from_snr, g2_timebin
from .modeprofile import default_profile, purcell_distribution, summarize
from .pulses import (
    build_sequence,
    sequence_fig3d,
    sequence_shaping,
    sequence_storage,
)
from .report import (
    RunReport,
    render_report,
    write_bytes_atomic,
    write_table_atomic,
    write_text_atomic,
)
from .runconfig import RunConfig, config_digest, render_config
from .seeds import STREAM_NOISE, substream
from .constants import US_PER_MS, US_PER_S

# measured-basis count rates the autocorrelation preset is calibrated
# to, and the projected rate once fiber-chip coupling reaches 1/2
MEASURED_SIGNAL_HZ = 160.0
MEASURED_BACKGROUND_HZ = 40.0
PROJECTED_SIGNAL_HZ = 1000.0


def derived_seed(root: int, index: int) -> int:
    """Independent integer seed for sweep point or sub-run ``index``."""
    seq = np.random.SeedSequence(root, spawn_key=(STREAM_NOISE, index))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def build_cavity(cfg: RunConfig) -> CavityModel:
    c = cfg.cavity
    return CavityModel(
        lambda0_nm=c.lambda0_nm,
        q_factor=c.q_factor,
        extinction_db=c.extinction_db,
        coupling_ratio=c.coupling_ratio,
        tuning_rate_pm_per_v=c.tuning_rate_pm_per_v,
        max_voltage_v=c.max_voltage_v,
    )


def build_ensemble(cfg: RunConfig) -> EnsembleConfig | None:
    e = cfg.ensemble
    if e is None:
        return None
    return EnsembleConfig(
        center_wavelength_nm=e.center_wavelength_nm,
        fwhm_ghz=e.fwhm_ghz,
        number_density_per_cm3=e.number_density_per_cm3,
        reference_volume_um3=e.reference_volume_um3,
        ion_count=e.ion_count,
        homogeneous_linewidth_mhz=e.homogeneous_linewidth_mhz,
        spectral_diffusion_mhz_per_sqrt_min=e.spectral_diffusion_mhz_per_sqrt_min,
        diffusion_bound_mhz=e.diffusion_bound_mhz,
        waveguide_lifetime_ms=e.waveguide_lifetime_ms,
        window_halfwidth_kappas=e.window_halfwidth_kappas,
        purcell_floor=e.purcell_floor,
        seed=cfg.run.seed,
    )


def build_chain(cfg: RunConfig) -> DetectionChain:
    c = cfg.chain
    return DetectionChain(
        p_excited=c.p_excited,
        coupling_ratio=c.coupling_ratio,
        fiber_chip=c.fiber_chip,
        component_loss=c.component_loss,
        detector_efficiency=c.detector_efficiency,
        dark_count_rate_hz=c.dark_count_rate_hz,
    )


def build_ions(cfg: RunConfig) -> list[IonRecord] | None:
    """Explicit ion list, replicated ion_replicas times.

    Replication models a slice of equivalent emitters measured
    together; each copy gets its own id and random substream.
    """
    if cfg.ions is None:
        return None
    specs = list(cfg.ions) * cfg.scenario.ion_replicas
    return [
        IonRecord(
            id=k,
            center_frequency_ghz=spec.frequency_ghz,
            purcell_factor=spec.purcell_factor,
            baseline_rate_per_ms=spec.baseline_rate_per_ms,
            diffusion_state_mhz=spec.diffusion_state_mhz,
        )
        for k, spec in enumerate(specs)
    ]


def parse_windows(text: str, what: str) -> list[tuple[float, float]]:
    """Windows from 'a:b;c:d' strings (microseconds)."""
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        bits = part.split(":")
        if len(bits) != 2:
            raise ConfigError(f"{what}: expected 'start:stop', got {part!r}")
        try:
            out.append((float(bits[0]), float(bits[1])))
        except ValueError:
            raise ConfigError(f"{what}: cannot parse {part!r}") from None
    if not out:
        raise ConfigError(f"{what}: no windows given")
    return out


def _parse_segments(text: str) -> list[tuple[float, float, float]]:
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        bits = part.split(":")
        if len(bits) != 3:
            raise ConfigError(
                f"voltage_segments: expected 'start:stop:volts', got {part!r}"
            )
        try:
            out.append((float(bits[0]), float(bits[1]), float(bits[2])))
        except ValueError:
            raise ConfigError(f"voltage_segments: cannot parse {part!r}") from None
    return out


def build_pulse_sequence(cfg: RunConfig):
    s = cfg.sequence
    if s.kind == "fig3d":
        return sequence_fig3d(period_us=s.period_us, pump_us=s.pump_us, gate_us=s.gate_us)
    if s.kind == "shaping":
        return sequence_shaping(
            detune_v=s.detune_v,
            suppress_us=s.suppress_us,
            collect_us=s.collect_us,
            pump_us=s.pump_us,
            amplifier_bandwidth_mhz=s.amplifier_bandwidth_mhz,
        )
    if s.kind == "storage":
        return sequence_storage(
            s.delay_us,
            volts=s.volts,
            collect_us=s.collect_us,
            pump_us=s.pump_us,
            tail_us=s.tail_us,
            amplifier_bandwidth_mhz=s.amplifier_bandwidth_mhz,
        )
    return build_sequence(
        s.period_us,
        pump_windows=parse_windows(s.pump_windows_us, "pump_windows_us"),
        detector_windows=parse_windows(s.detector_windows_us, "detector_windows_us"),
        voltage_segments=_parse_segments(s.voltage_segments),
        amplifier_bandwidth_mhz=s.amplifier_bandwidth_mhz,
    )


def build_scenario(cfg: RunConfig) -> SimScenario:
    sc = cfg.scenario
    return SimScenario(
        cavity=build_cavity(cfg),
        sequence=build_pulse_sequence(cfg),
        chain=build_chain(cfg),
        laser=LaserSettings(frequency_ghz=sc.laser_offset_ghz),
        n_cycles=cfg.run.cycles,
        seed=cfg.run.seed,
        ensemble=build_ensemble(cfg),
        ions=build_ions(cfg),
        cavity_offset_ghz=sc.cavity_offset_ghz,
        filter_order=sc.filter_order,
        extra_background_hz=sc.extra_background_hz,
        collect=sc.collect,
        linewidth_mhz=sc.linewidth_mhz,
        diffusion_rate_mhz_per_sqrt_min=sc.diffusion_rate_mhz_per_sqrt_min,
        diffusion_bound_mhz=sc.diffusion_bound_mhz,
        label=cfg.run.label or cfg.run.preset,
    )


class OutputSink:
    """Artifact writer rooted at one directory with a shared basename."""

    def __init__(self, directory: str, basename: str, fmt: str):
        self.directory = directory
        self.basename = basename
        self.format = fmt
        self.paths: dict[str, str] = {}

    def _path(self, name: str, ext: str) -> str:
        return os.path.join(self.directory, f"{self.basename}_{name}.{ext}")

    def table(self, name: str, header: list[str], rows) -> str:
        path = self._path(name, "csv")
        write_table_atomic(path, header, rows)
        self.paths[name] = path
        return path

    def stream(self, name: str, stream: timetags.TimeTagStream) -> str:
        if self.format == "binary":
            path = self._path(name, "ttb")
            write_bytes_atomic(path, timetags.stream_bytes(stream))
        else:
            path = self._path(name, "csv")
            tmp = path + ".part"
            try:
                timetags.save_csv(stream, tmp)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        self.paths[name] = path
        return path

    def text(self, name: str, ext: str, content: str) -> str:
        path = self._path(name, ext)
        write_text_atomic(path, content)
        self.paths[name] = path
        return path


def _stream_entry(report: RunReport, name: str, stream: timetags.TimeTagStream) -> dict:
    counts = stream.channel_counts()
    wall_s = stream.n_cycles * stream.period_us / US_PER_S
    values = {
        "n_events": len(stream),
        "n_cycles": stream.n_cycles,
        "wall_s": wall_s,
        "signal_counts": counts.get("signal", 0),
        "dark_counts": counts.get("dark", 0),
        "total_rate_hz": len(stream) / wall_s,
    }
    report.add(name, **values)
    return values


def _fit_entry(report: RunReport, name: str, fit, keys=None, **extra) -> None:
    values = {}
    for key in keys or fit.params:
        values[key] = fit.params[key]
        values[f"{key}_err"] = fit.stderr[key]
    values["converged"] = fit.converged
    values.update(extra)
    report.add(name, **values)


def _run_budget(cfg, report, out, workers):
    chain = build_chain(cfg)
    seq = build_pulse_sequence(cfg)
    ions = build_ions(cfg)
    t_wg_us = (
        cfg.ensemble.waveguide_lifetime_ms * US_PER_MS if cfg.ensemble else 2500.0
    )
    t1_us = (
        purcell_to_lifetime(t_wg_us, ions[0].purcell_factor) if ions else t_wg_us
    )
    gate = seq.gate_total_us
    period = seq.period_us
    # the round decay probability quoted for a 10 us gate at T1 = 10 us
    rate_quoted = expected_count_rate(chain, t1_us, gate, period, decay_probability=0.63)
    rate_exact = expected_count_rate(chain, t1_us, gate, period)
    rows = [
        ("p_excited", chain.p_excited),
        ("decay_probability", 0.63),
        ("cavity_waveguide_coupling", chain.coupling_ratio),
        ("fiber_chip", chain.fiber_chip),
        ("component_loss", chain.component_loss),
        ("detector_efficiency", chain.detector_efficiency),
        ("repetition_rate_khz", US_PER_MS / period),
        ("expected_rate_hz", rate_quoted),
    ]
    out.table("budget", ["factor", "value"], rows)
    report.add(
        "budget",
        lifetime_us=t1_us,
        gate_us=gate,
        period_us=period,
        decay_probability=0.63,
        decay_probability_exact=float(-np.expm1(-gate / t1_us)),
        expected_rate_hz=rate_quoted,
        expected_rate_exact_hz=rate_exact,
    )
    snr_measured = MEASURED_SIGNAL_HZ / MEASURED_BACKGROUND_HZ
    snr_projected = PROJECTED_SIGNAL_HZ / chain.dark_count_rate_hz
    report.add(
        "projection",
        measured_signal_hz=MEASURED_SIGNAL_HZ,
        measured_background_hz=MEASURED_BACKGROUND_HZ,
        snr_measured=snr_measured,
        g2_measured_basis=g2_from_snr(snr_measured),
        projected_signal_hz=PROJECTED_SIGNAL_HZ,
        projected_background_hz=chain.dark_count_rate_hz,
        snr_projected=snr_projected,
        g2_projected=g2_from_snr(snr_projected),
    )


def _analytic_rates(scenario: SimScenario) -> tuple[float, float]:
    """Stationary signal rate of the first ion and the flat in-gate
    background rate, both in Hz over wall time."""
    ions, offset = resolve_ions(scenario)
    ion = ions[0]
    seq = scenario.sequence
    p_exc = excitation_probability(
        ion,
        scenario.laser.frequency_ghz - ion.center_frequency_ghz,
        pump_duration_us=seq.pump_end_us,
        linewidth_mhz=scenario.resolved_linewidth_mhz(),
        saturated=scenario.laser.saturated,
        subsaturation_factor=scenario.laser.subsaturation_factor,
    )
    rel = ion.center_frequency_ghz - offset
    filt = float(
        lorentzian(-rel, scenario.cavity.linewidth_ghz, order=scenario.filter_order)
    )
    enhanced = ion.purcell_factor * filt
    t1 = 1.0 / (ion.baseline_rate_per_ms * (1.0 + enhanced)) * US_PER_MS
    branch = enhanced / (1.0 + enhanced) if scenario.collect == "cavity" else 1.0
    stat = stationary_detected_rate(
        p_exc, t1, seq, branch=branch, transmission=scenario.chain.transmission()
    )
    duty = seq.gate_total_us / seq.period_us
    background = (scenario.chain.dark_count_rate_hz + scenario.extra_background_hz) * duty
    return stat.rate_hz, background


def _run_timetags(cfg, report, out, workers):
    scenario = build_scenario(cfg)
    stream = run_scenario(scenario, workers=workers)
    out.stream("timetags", stream)
    values = _stream_entry(report, "stream", stream)
    duty = scenario.sequence.gate_total_us / scenario.sequence.period_us
    report.entry("stream").values.update(
        signal_rate_hz=values["signal_counts"] / values["wall_s"],
        dark_rate_hz=values["dark_counts"] / values["wall_s"],
        gate_duty=duty,
    )
    bins = bin_by_cycle(stream)
    rng = substream(cfg.run.seed, STREAM_NOISE, 99)
    res = g2_timebin(
        bins, max_offset=cfg.analysis.g2_max_offset,
        bootstrap=cfg.analysis.g2_bootstrap, rng=rng,
    )
    out.table(
        "g2",
        ["offset_cycles", "g2", "std_err", "coincidences"],
        zip(res.offsets.tolist(), res.values, res.std_errors, res.coincidences.tolist()),
    )
    report.add(
        "g2",
        mean_counts_per_cycle=res.mean_counts,
        g2_zero=res.g2_zero,
        g2_zero_err=res.g2_zero_err,
        g2_one=float(res.values[1]) if res.values.size > 1 else float("nan"),
    )
    signal_hz, background_hz = _analytic_rates(scenario)
    snr = signal_hz / background_hz
    report.add(
        "projection",
        predicted_signal_hz=signal_hz,
        predicted_background_hz=background_hz,
        snr=snr,
        g2_from_snr=g2_from_snr(snr),
    )


def _run_lifetime_pair(cfg, report, out, workers):
    scenario = build_scenario(cfg)
    if scenario.ions is None:
        raise ConfigError("lifetime_pair needs an explicit [ions] section")
    n_bins = cfg.analysis.histogram_bins

    stream_cav = run_scenario(scenario, workers=workers)
    out.stream("timetags_cavity", stream_cav)
    fit_cav = fit_lifetime(
        stream_cav, scenario.sequence, n_bins=n_bins, t_max_us=cfg.analysis.fit_t_max_us
    )
    centers, counts = decay_histogram(
        stream_cav, scenario.sequence, n_bins=n_bins, t_max_us=cfg.analysis.fit_t_max_us
    )
    out.table("histogram_cavity", ["t_us", "counts"], zip(centers, counts.tolist()))

    # reference branch: the same emitters with the cavity out of play,
    # collected through the waveguide over a window of five lifetimes
    ion = scenario.ions[0]
    t_wg_us = US_PER_MS / ion.baseline_rate_per_ms
    wg_ions = [replace(i, purcell_factor=0.0) for i in scenario.ions]
    gate_end = 1.0 + 5.0 * t_wg_us
    seq_wg = build_sequence(
        period_us=gate_end + 99.0,
        pump_windows=[(0.0, 1.0)],
        detector_windows=[(1.0, gate_end)],
    )
    scenario_wg = replace(
        scenario,
        ions=wg_ions,
        sequence=seq_wg,
        collect="all",
        seed=derived_seed(cfg.run.seed, 1),
    )
    stream_wg = run_scenario(scenario_wg, workers=workers)
    out.stream("timetags_waveguide", stream_wg)
    fit_wg = fit_lifetime(stream_wg, seq_wg, n_bins=n_bins)
    centers_wg, counts_wg = decay_histogram(stream_wg, seq_wg, n_bins=n_bins)
    out.table(
        "histogram_waveguide", ["t_us", "counts"], zip(centers_wg, counts_wg.tolist())
    )

    t_cav_pred = ion_lifetime_us(ion)
    _fit_entry(
        report, "cavity_fit", fit_cav, keys=("lifetime_us",),
        n_events=len(stream_cav), predicted_us=t_cav_pred,
        rel_dev=abs(fit_cav["lifetime_us"] - t_cav_pred) / t_cav_pred,
    )
    _fit_entry(
        report, "waveguide_fit", fit_wg, keys=("lifetime_us",),
        n_events=len(stream_wg), predicted_us=t_wg_us,
        rel_dev=abs(fit_wg["lifetime_us"] - t_wg_us) / t_wg_us,
    )
    report.add(
        "purcell",
        from_fits=lifetime_to_purcell(fit_wg["lifetime_us"], fit_cav["lifetime_us"]),
        configured=ion.purcell_factor,
    )


def _scan_offsets(cfg) -> np.ndarray:
    a = cfg.analysis
    if a.scan_points < 2:
        raise ConfigError("scan_points must be at least 2")
    return a.scan_center_ghz + np.linspace(
        -a.scan_halfwidth_ghz, a.scan_halfwidth_ghz, a.scan_points
    )


def _run_reflection(cfg, report, out, workers):
    cavity = build_cavity(cfg)
    offsets = _scan_offsets(cfg)
    clean = reflection_spectrum(cavity, offsets)
    rng = substream(cfg.run.seed, STREAM_NOISE)
    noisy = clean + cfg.analysis.noise_rel * rng.standard_normal(offsets.size)
    sigma = np.full(offsets.size, cfg.analysis.noise_rel)
    fit = fit_lorentzian(
        offsets, noisy, sigma=sigma, reference_frequency_ghz=cavity.frequency_ghz
    )
    out.table(
        "reflection", ["detuning_ghz", "reflectance"], zip(offsets, noisy)
    )
    _fit_entry(
        report, "reflection_fit", fit,
        keys=("center", "fwhm", "q_factor"),
        q_true=cavity.q_factor,
        q_rel_dev=abs(fit["q_factor"] - cavity.q_factor) / cavity.q_factor,
    )


def _run_line(cfg, report, out, workers):
    ens = build_ensemble(cfg)
    if ens is None:
        raise ConfigError("line mode needs an [ensemble] section")
    offsets = _scan_offsets(cfg)
    clean = np.asarray(spectral_density(ens, offsets))
    clean = clean / clean.max()
    rng = substream(cfg.run.seed, STREAM_NOISE)
    noisy = clean + cfg.analysis.noise_rel * rng.standard_normal(offsets.size)
    sigma = np.full(offsets.size, cfg.analysis.noise_rel)
    fit = fit_gaussian(offsets, noisy, sigma=sigma)
    out.table("line", ["detuning_ghz", "density"], zip(offsets, noisy))
    _fit_entry(
        report, "line_fit", fit, keys=("center", "fwhm"),
        fwhm_true_ghz=ens.fwhm_ghz,
        fwhm_rel_dev=abs(fit["fwhm"] - ens.fwhm_ghz) / ens.fwhm_ghz,
    )


def _peak_stats(offsets: np.ndarray, rates: np.ndarray, kappa_ghz: float, center: float):
    floor = float(max(np.median(rates), 1e-9))
    idx, _ = find_peaks(rates, height=5.0 * floor, distance=3)
    central = np.abs(offsets - center) <= kappa_ghz / 2.0
    peak = float(rates.max())
    coverage = (
        float(np.mean(rates[central] >= peak / 4.0)) if central.any() else 0.0
    )
    return {
        "floor_hz": floor,
        "peak_hz": peak,
        "contrast": peak / floor,
        "n_isolated_peaks": int(idx.size),
        "central_coverage": coverage,
    }


def _run_spectrum_scan(cfg, report, out, workers):
    scenario = build_scenario(cfg)
    scenario = replace(scenario, n_cycles=cfg.analysis.scan_cycles)
    offsets = _scan_offsets(cfg)
    rows = excitation_spectrum(scenario, offsets, workers=workers)
    out.table("spectrum", ["offset_ghz", "rate_hz", "err_hz"], rows)
    stats = _peak_stats(
        rows[:, 0], rows[:, 1], scenario.cavity.linewidth_ghz,
        cfg.analysis.scan_center_ghz,
    )
    report.add(
        "scan",
        points=offsets.size,
        cycles_per_point=cfg.analysis.scan_cycles,
        **stats,
    )


def _fit_peak_near(rows: np.ndarray, center_ghz: float, halfwidth_ghz: float):
    sel = np.abs(rows[:, 0] - center_ghz) <= halfwidth_ghz
    if sel.sum() < 5:
        raise UndefinedEstimateError(
            f"too few scan points within {halfwidth_ghz} GHz of {center_ghz}"
        )
    return fit_lorentzian(rows[sel, 0], rows[sel, 1], sigma=np.maximum(rows[sel, 2], 1e-9))


def _run_spectrum_pair(cfg, report, out, workers):
    scenario = build_scenario(cfg)
    if scenario.ions is None:
        raise ConfigError("spectrum_pair needs an explicit [ions] section")
    scenario = replace(scenario, n_cycles=cfg.analysis.scan_cycles)
    offsets = _scan_offsets(cfg)

    prompt_rows = excitation_spectrum(scenario, offsets, workers=workers)
    out.table("spectrum_prompt", ["offset_ghz", "rate_hz", "err_hz"], prompt_rows)

    stored_seq = sequence_storage(
        cfg.analysis.pair_delay_us,
        volts=cfg.analysis.pair_volts,
        collect_us=cfg.sequence.collect_us,
        pump_us=cfg.sequence.pump_us,
        tail_us=cfg.sequence.tail_us,
        amplifier_bandwidth_mhz=cfg.sequence.amplifier_bandwidth_mhz,
    )
    stored = replace(
        scenario, sequence=stored_seq, seed=derived_seed(cfg.run.seed, 2)
    )
    stored_rows = excitation_spectrum(stored, offsets, workers=workers)
    out.table("spectrum_stored", ["offset_ghz", "rate_hz", "err_hz"], stored_rows)

    window = max(
        6.0 * scenario.resolved_linewidth_mhz() * 1e-3,
        5.0 * (offsets[1] - offsets[0]),
    )
    shifts = []
    for k, ion in enumerate(scenario.ions):
        f_prompt = _fit_peak_near(prompt_rows, ion.center_frequency_ghz, window)
        f_stored = _fit_peak_near(stored_rows, ion.center_frequency_ghz, window)
        shift_mhz = (f_stored["center"] - f_prompt["center"]) * 1e3
        shifts.append(shift_mhz)
        report.add(
            f"peak{k}",
            ion_offset_ghz=ion.center_frequency_ghz,
            prompt_center_ghz=f_prompt["center"],
            prompt_center_err_mhz=f_prompt.stderr["center"] * 1e3,
            stored_center_ghz=f_stored["center"],
            stored_center_err_mhz=f_stored.stderr["center"] * 1e3,
            shift_mhz=shift_mhz,
        )
    report.add(
        "pair",
        delay_us=cfg.analysis.pair_delay_us,
        volts=cfg.analysis.pair_volts,
        n_peaks=len(shifts),
        max_abs_shift_mhz=float(np.max(np.abs(shifts))),
    )


def _run_storage_sweep(cfg, report, out, workers):
    scenario = build_scenario(cfg)
    if scenario.ions is None:
        raise ConfigError("storage_sweep needs an explicit [ions] section")
    ion = scenario.ions[0]
    try:
        volts = [float(v) for v in cfg.analysis.storage_volts.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(
            f"storage_volts: cannot parse {cfg.analysis.storage_volts!r}"
        ) from None
    if not volts:
        raise ConfigError("storage_volts is empty")
    fitted = []
    for j, v in enumerate(volts):
        delta = eo_detuning(scenario.cavity, v)
        filt = float(
            lorentzian(delta, scenario.cavity.linewidth_ghz, order=scenario.filter_order)
        )
        t_pred = US_PER_MS / (
            ion.baseline_rate_per_ms * (1.0 + ion.purcell_factor * filt)
        )
        delays = np.geomspace(0.3 * t_pred, 2.2 * t_pred, 8)
        sweep = replace(
            scenario,
            n_cycles=cfg.analysis.storage_cycles,
            seed=derived_seed(cfg.run.seed, 100 + j),
        )
        rows, fit = lifetime_vs_delay(
            sweep,
            delays,
            storage_volts=v,
            collect_us=cfg.sequence.collect_us,
            pump_us=cfg.sequence.pump_us,
            tail_us=cfg.sequence.tail_us,
        )
        out.table(
            f"storage_{j}", ["delay_us", "intensity_per_cycle", "err"], rows
        )
        fitted.append(fit["lifetime_us"])
        _fit_entry(
            report, f"storage_{v:g}v", fit, keys=("lifetime_us",),
            volts=v, predicted_us=t_pred,
            rel_dev=abs(fit["lifetime_us"] - t_pred) / t_pred,
            cycles_per_delay=cfg.analysis.storage_cycles,
        )
    order = np.argsort(np.abs(volts))
    monotone = bool(np.all(np.diff(np.asarray(fitted)[order]) > 0))
    report.add(
        "sweep",
        n_voltages=len(volts),
        monotone_in_voltage=monotone,
        resonant_lifetime_us=fitted[int(order[0])],
        longest_lifetime_us=fitted[int(order[-1])],
    )


def _run_shaping(cfg, report, out, workers):
    scenario = build_scenario(cfg)
    stream = run_scenario(scenario, workers=workers)
    out.stream("timetags", stream)
    _stream_entry(report, "stream", stream)
    seq = scenario.sequence
    s = cfg.sequence
    t_retune = s.pump_us + s.suppress_us
    if cfg.analysis.suppressed_window_us:
        w_sup = parse_windows(cfg.analysis.suppressed_window_us, "suppressed_window_us")[0]
    else:
        w_sup = (s.pump_us + 3.0, t_retune)
    if cfg.analysis.retrieved_window_us:
        w_rel = parse_windows(cfg.analysis.retrieved_window_us, "retrieved_window_us")[0]
    else:
        w_rel = (t_retune + 1.0, t_retune + 11.0)
    rates = window_rates(stream, [w_sup, w_rel])
    suppressed_hz, released_hz = float(rates[0, 2]), float(rates[1, 2])
    centers, counts = decay_histogram(stream, seq, n_bins=200)
    out.table("burst", ["t_us", "counts"], zip(centers, counts.tolist()))
    report.add(
        "shaping",
        suppressed_window_us=f"{w_sup[0]:g}:{w_sup[1]:g}",
        retrieved_window_us=f"{w_rel[0]:g}:{w_rel[1]:g}",
        suppressed_hz=suppressed_hz,
        released_hz=released_hz,
        suppression_ratio=released_hz / max(suppressed_hz, 1e-9),
    )


def _run_purcell_table(cfg, report, out, workers):
    cavity = build_cavity(cfg)
    profile = default_profile()
    summary = summarize(profile, cavity)
    grid = np.geomspace(0.5, summary.p_max, 61)
    frac = purcell_distribution(profile, cavity, grid)
    out.table(
        "purcell_distribution",
        ["p_min", "fraction_of_veff_population"],
        zip(grid, frac),
    )
    report.add(
        "purcell",
        p_max=summary.p_max,
        p_avg=summary.p_avg,
        v_mode_um3=summary.v_mode_um3,
        v_eff_um3=summary.v_eff_um3,
        fraction_above_100=float(np.interp(100.0, grid, frac)),
    )


_EXECUTORS = {
    "timetags": _run_timetags,
    "lifetime_pair": _run_lifetime_pair,
    "reflection": _run_reflection,
    "line": _run_line,
    "spectrum_scan": _run_spectrum_scan,
    "spectrum_pair": _run_spectrum_pair,
    "storage_sweep": _run_storage_sweep,
    "shaping": _run_shaping,
    "purcell_table": _run_purcell_table,
    "budget": _run_budget,
}


def execute(cfg: RunConfig, workers: int = 1) -> tuple[RunReport, OutputSink]:
    """Run a config end to end and write its artifacts.

    Returns the report and the sink holding the artifact paths. The
    report file itself is written last so its presence marks a
    completed run.
    """
    os.makedirs(cfg.output.directory, exist_ok=True)
    out = OutputSink(cfg.output.directory, cfg.output.basename, cfg.output.format)
    report = RunReport(config_digest(cfg), cfg.run.seed)
    t0 = time.perf_counter()
    _EXECUTORS[cfg.run.mode](cfg, report, out, workers)
    report.wall_clock_s = time.perf_counter() - t0
    out.text("config", "ini", render_config(cfg))
    out.text("report", "txt", render_report(report))
    return report, out


def analyze_stream(cfg: RunConfig, path) -> tuple[RunReport, OutputSink]:
    """Estimator-only pipeline over an existing time-tag file.

    Estimator failures (an empty stream, missing metadata) become
    structured error entries rather than aborting the report.
    """
    stream = timetags.load_stream(path)
    os.makedirs(cfg.output.directory, exist_ok=True)
    out = OutputSink(cfg.output.directory, cfg.output.basename, cfg.output.format)
    report = RunReport(config_digest(cfg), cfg.run.seed)
    report.add("input", path=os.fspath(path), n_events=len(stream))

    wanted = cfg.analysis.estimators
    names = (
        ("rates", "g2", "lifetime")
        if wanted == "auto"
        else tuple(w.strip() for w in wanted.split(",") if w.strip())
    )
    unknown = set(names) - {"rates", "g2", "lifetime"}
    if unknown:
        raise ConfigError(f"unknown estimators {sorted(unknown)}")

    for name in names:
        try:
            if name == "rates":
                values = dict(stream.channel_counts())
                values["total"] = len(stream)
                if stream.n_cycles and stream.period_us:
                    wall_s = stream.n_cycles * stream.period_us / US_PER_S
                    values["total_rate_hz"] = len(stream) / wall_s
                report.add("rates", **values)
            elif name == "g2":
                res = g2_timebin(
                    bin_by_cycle(stream), max_offset=cfg.analysis.g2_max_offset
                )
                out.table(
                    "g2",
                    ["offset_cycles", "g2", "std_err", "coincidences"],
                    zip(
                        res.offsets.tolist(), res.values, res.std_errors,
                        res.coincidences.tolist(),
                    ),
                )
                report.add(
                    "g2",
                    mean_counts_per_cycle=res.mean_counts,
                    g2_zero=res.g2_zero,
                    g2_zero_err=res.g2_zero_err,
                )
            elif name == "lifetime":
                fit = fit_lifetime(
                    stream,
                    n_bins=cfg.analysis.histogram_bins,
                    t_max_us=cfg.analysis.fit_t_max_us,
                )
                _fit_entry(report, "lifetime", fit, keys=("lifetime_us",))
        except (UndefinedEstimateError, ValidationError) as exc:
            report.add(name, error=f"{type(exc).__name__}: {exc}")
    out.text("report", "txt", render_report(report))
    return report, out
