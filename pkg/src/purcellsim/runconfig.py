"""Typed INI run configuration with exact round-tripping.

The file format is deliberately plain: named sections, key = value
pairs, every physical quantity carrying its unit in the key name. The
schema is the set of dataclasses below; unknown sections or keys are
rejected, and serialization is canonical (fixed section and key order,
repr-exact floats) so parse(render(config)) == config and the sha256
digest of the rendered text identifies a run unambiguously.
"""

import hashlib
import types
import typing
from configparser import ConfigParser, Error as ConfigParserError
from dataclasses import dataclass, fields

from .errors import ConfigError

MODES = (
    "timetags",
    "lifetime_pair",
    "reflection",
    "line",
    "spectrum_scan",
    "spectrum_pair",
    "storage_sweep",
    "shaping",
    "purcell_table",
    "budget",
)
SEQUENCE_KINDS = ("fig3d", "shaping", "storage", "custom")
FORMATS = ("csv", "binary")


@dataclass(frozen=True)
class RunSection:
    preset: str = ""
    mode: str = "timetags"
    seed: int = 0
    cycles: int = 100_000
    label: str = ""


@dataclass(frozen=True)
class CavitySection:
    lambda0_nm: float = 1532.0
    q_factor: float = 1.58e5
    extinction_db: float = 10.0
    coupling_ratio: float = 0.5
    tuning_rate_pm_per_v: float = 1.6
    max_voltage_v: float = 500.0


@dataclass(frozen=True)
class EnsembleSection:
    center_wavelength_nm: float = 1532.0
    fwhm_ghz: float = 160.0
    number_density_per_cm3: float = 1.9e18
    reference_volume_um3: float = 2.0
    ion_count: int | None = None
    homogeneous_linewidth_mhz: float = 1.0
    spectral_diffusion_mhz_per_sqrt_min: float = 20.0
    diffusion_bound_mhz: float | None = None
    waveguide_lifetime_ms: float = 2.5
    window_halfwidth_kappas: float | None = 5.0
    purcell_floor: float = 0.5


@dataclass(frozen=True)
class ChainSection:
    p_excited: float = 0.5
    coupling_ratio: float = 0.5
    fiber_chip: float = 0.1
    component_loss: float = 0.6
    detector_efficiency: float = 0.5
    dark_count_rate_hz: float = 20.0


@dataclass(frozen=True)
class SequenceSection:
    kind: str = "fig3d"
    period_us: float = 20.0
    pump_us: float = 1.0
    gate_us: float = 10.0
    detune_v: float = 40.0
    suppress_us: float = 30.0
    collect_us: float = 50.0
    delay_us: float = 0.0
    volts: float = 80.0
    tail_us: float = 9.0
    amplifier_bandwidth_mhz: float | None = 1.0
    pump_windows_us: str = ""
    detector_windows_us: str = ""
    voltage_segments: str = ""


@dataclass(frozen=True)
class ScenarioSection:
    laser_offset_ghz: float = 0.0
    cavity_offset_ghz: float | None = None
    collect: str = "cavity"
    filter_order: int = 1
    extra_background_hz: float = 0.0
    linewidth_mhz: float | None = None
    diffusion_rate_mhz_per_sqrt_min: float | None = None
    diffusion_bound_mhz: float | None = None
    ion_replicas: int = 1


@dataclass(frozen=True)
class AnalysisSection:
    g2_max_offset: int = 10
    g2_bootstrap: int = 0
    histogram_bins: int = 100
    fit_t_max_us: float | None = None
    scan_center_ghz: float = 0.0
    scan_halfwidth_ghz: float = 0.5
    scan_points: int = 101
    scan_cycles: int = 20_000
    storage_volts: str = "0,10,80"
    storage_cycles: int = 120_000
    pair_delay_us: float = 100.0
    pair_volts: float = 80.0
    noise_rel: float = 0.01
    suppressed_window_us: str = ""
    retrieved_window_us: str = ""
    estimators: str = "auto"


@dataclass(frozen=True)
class OutputSection:
    directory: str = "."
    format: str = "csv"
    basename: str = "run"


@dataclass(frozen=True)
class IonSpec:
    frequency_ghz: float
    purcell_factor: float
    baseline_rate_per_ms: float = 0.4
    diffusion_state_mhz: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = RunSection()
    scenario: ScenarioSection = ScenarioSection()
    cavity: CavitySection = CavitySection()
    chain: ChainSection = ChainSection()
    sequence: SequenceSection = SequenceSection()
    analysis: AnalysisSection = AnalysisSection()
    output: OutputSection = OutputSection()
    ensemble: EnsembleSection | None = None
    ions: tuple[IonSpec, ...] | None = None


_SECTIONS: dict[str, type] = {
    "run": RunSection,
    "scenario": ScenarioSection,
    "cavity": CavitySection,
    "chain": ChainSection,
    "sequence": SequenceSection,
    "analysis": AnalysisSection,
    "output": OutputSection,
    "ensemble": EnsembleSection,
}


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(tp, raw: str, where: str):
    raw = raw.strip()
    if isinstance(tp, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if raw.lower() == "none":
            return None
        return _parse_value(args[0], raw, where)
    try:
        if tp is float:
            return float(raw)
        if tp is int:
            return int(raw)
        if tp is bool:
            if raw.lower() in ("true", "false"):
                return raw.lower() == "true"
            raise ValueError(raw)
        if tp is str:
            return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {tp}") from None
    raise ConfigError(f"{where}: unsupported type {tp}")


def render_config(cfg: RunConfig) -> str:
    """Canonical text form; parse_config inverts it exactly."""
    lines: list[str] = []
    for name, cls in _SECTIONS.items():
        section = getattr(cfg, name)
        if section is None:
            continue
        lines.append(f"[{name}]")
        for f in fields(cls):
            lines.append(f"{f.name} = {_format_value(getattr(section, f.name))}")
        lines.append("")
    if cfg.ions is not None:
        lines.append("[ions]")
        for k, ion in enumerate(cfg.ions):
            lines.append(
                f"ion{k} = {_format_value(ion.frequency_ghz)} "
                f"{_format_value(ion.purcell_factor)} "
                f"{_format_value(ion.baseline_rate_per_ms)} "
                f"{_format_value(ion.diffusion_state_mhz)}"
            )
        lines.append("")
    return "\n".join(lines)


def _parse_ion(key: str, raw: str) -> IonSpec:
    parts = raw.split()
    if len(parts) not in (3, 4):
        raise ConfigError(
            f"[ions] {key}: expected 'frequency_ghz purcell baseline_per_ms "
            f"[diffusion_mhz]', got {raw!r}"
        )
    vals = [_parse_value(float, p, f"[ions] {key}") for p in parts]
    if len(vals) == 3:
        vals.append(0.0)
    return IonSpec(*vals)


def parse_config(text: str) -> RunConfig:
    """Parse the canonical INI text, rejecting unknown keys."""
    parser = ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except ConfigParserError as exc:
        raise ConfigError(f"invalid config syntax: {exc}") from None
    known = set(_SECTIONS) | {"ions"}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(
                f"unknown section [{section}]; expected one of {sorted(known)}"
            )
    built: dict[str, object] = {}
    for name, cls in _SECTIONS.items():
        if not parser.has_section(name):
            if name == "ensemble":
                built["ensemble"] = None
            continue
        allowed = {f.name: f for f in fields(cls)}
        values = {}
        for key, raw in parser.items(name):
            if key not in allowed:
                raise ConfigError(
                    f"unknown key {key!r} in [{name}]; expected one of "
                    f"{sorted(allowed)}"
                )
            values[key] = _parse_value(allowed[key].type, raw, f"[{name}] {key}")
        built[name] = cls(**values)
    if parser.has_section("ions"):
        ion_items = parser.items("ions")
        for key, _ in ion_items:
            if not (key.startswith("ion") and key[3:].isdigit()):
                raise ConfigError(f"unknown key {key!r} in [ions]; use ion0, ion1, ...")
        ions = tuple(
            _parse_ion(key, raw)
            for key, raw in sorted(ion_items, key=lambda kv: int(kv[0][3:]))
        )
        built["ions"] = ions
    cfg = RunConfig(**built)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.run.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg.run.mode!r}")
    if cfg.run.cycles < 1:
        raise ConfigError("cycles must be at least 1")
    if cfg.sequence.kind not in SEQUENCE_KINDS:
        raise ConfigError(
            f"sequence kind must be one of {SEQUENCE_KINDS}, got {cfg.sequence.kind!r}"
        )
    if cfg.output.format not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}, got {cfg.output.format!r}")
    if cfg.scenario.collect not in ("cavity", "all"):
        raise ConfigError("collect must be 'cavity' or 'all'")
    if cfg.scenario.ion_replicas < 1:
        raise ConfigError("ion_replicas must be at least 1")


def load_config(path) -> RunConfig:
    with open(path, "r") as fh:
        return parse_config(fh.read())


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(render_config(cfg))


def config_digest(cfg: RunConfig) -> str:
    return hashlib.sha256(render_config(cfg).encode()).hexdigest()
