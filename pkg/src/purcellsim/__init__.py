"""Stochastic simulator and analysis toolkit for Purcell-enhanced
single rare-earth-ion emission in an electro-optically tunable
nanocavity.

The public surface re-exported here covers the four layers:

- device physics: CavityModel, mode profiles, Purcell arithmetic
- populations and pulses: EnsembleConfig, IonRecord, PulseSequence
- simulation: SimScenario, run_scenario, time-tag streams
- analysis: g2 estimators, peak and lifetime fits, experiment sweeps
"""

from .constants import VERSION as __version__
from .errors import (
    BreakdownVoltageError,
    ConfigError,
    ProfileFormatError,
    StreamFormatError,
    UndefinedEstimateError,
    ValidationError,
)
from .cavity import (
    CavityModel,
    emission_rate_at_detuning,
    eo_detuning,
    lifetime_to_purcell,
    lorentzian,
    purcell_to_lifetime,
    reflection_spectrum,
)
from .modeprofile import (
    AnalyticProfile,
    PurcellSummary,
    average_purcell,
    default_profile,
    effective_mode_volume,
    load_profile,
    mode_volume,
    purcell_coefficient,
    purcell_distribution,
    purcell_point,
    rasterize,
    save_profile,
    summarize,
)
from .ensemble import (
    EnsembleConfig,
    IonRecord,
    advance_spectral_diffusion,
    cavity_offset_ghz,
    dump_ensemble,
    ion_lifetime_us,
    load_ensemble,
    sample_ensemble,
    spectral_density,
)
from .pulses import (
    PulseSequence,
    build_sequence,
    cavity_detuning_at,
    gate_open,
    render_timeline,
    sequence_fig3d,
    sequence_shaping,
    sequence_storage,
    voltage_at,
)
from .hazard import DecayLaw, build_decay_law
from .engine import (
    DetectionChain,
    LaserSettings,
    SimScenario,
    excitation_probability,
    expected_count_rate,
    run_scenario,
    sample_decay_time,
    stationary_detected_rate,
)
from .timetags import (
    TimeTagStream,
    load_binary,
    load_csv,
    load_stream,
    save_binary,
    save_csv,
)
from .g2 import (
    BinSeries,
    G2Result,
    bin_by_cycle,
    g2_from_snr,
    g2_timebin,
    snr_from_g2,
)
from .fitting import (
    FitResult,
    evaluate,
    fit_exponential,
    fit_gaussian,
    fit_lorentzian,
)
from .experiments import (
    decay_histogram,
    excitation_spectrum,
    fit_lifetime,
    lifetime_vs_delay,
    window_rates,
)
from .runconfig import RunConfig, config_digest, load_config, parse_config, render_config, save_config
from .presets import PRESETS, preset
from .pipeline import analyze_stream, build_scenario, execute
from .report import RunReport, render_report, report_digest
from .seeds import substream

__all__ = [name for name in dir() if not name.startswith("_")]
