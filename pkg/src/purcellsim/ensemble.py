"""Inhomogeneously broadened ion population coupled to the cavity.

Ion transition frequencies follow a Gaussian of configurable FWHM
around the ensemble center; positions are uniform in the dielectric and
map to Purcell factors through the mode profile. Frequencies are stored
as GHz offsets from the inhomogeneous center. Slow spectral wandering
of each ion is a Gaussian random walk in MHz with variance rate^2 * t
(rate in MHz per sqrt minute), optionally confined by a reflecting
bound for long runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cavity import CavityModel
from .constants import C_NM_GHZ, US_PER_MIN, US_PER_MS
from .errors import ValidationError
from .seeds import STREAM_ENSEMBLE, substream

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class EnsembleConfig:
    """Population parameters for the erbium ensemble.

    number_density_per_cm3 is the doping density; the bookkeeping
    population N_total used by spectral_density is the density times
    reference_volume_um3 (the effective mode volume by default), i.e.
    the ions that couple appreciably to the cavity. ion_count, when
    set, is an explicit number of ions for sample_ensemble and
    bypasses the density bookkeeping.

    window_halfwidth_kappas restricts sampling to a band around the
    cavity for Monte Carlo efficiency (None keeps every frequency);
    purcell_floor drops ions whose Purcell factor is below threshold.
    Ions excluded by either cut can be represented, if needed, by a
    constant background rate on the simulation scenario.
    """

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
    seed: int = 0

    def __post_init__(self) -> None:
        if self.fwhm_ghz <= 0:
            raise ValidationError("fwhm_ghz must be positive")
        if self.homogeneous_linewidth_mhz <= 0:
            raise ValidationError("homogeneous_linewidth_mhz must be positive")
        if self.number_density_per_cm3 < 0:
            raise ValidationError("number_density_per_cm3 must be nonnegative")
        if self.ion_count is not None and self.ion_count < 0:
            raise ValidationError("ion_count must be nonnegative")
        if self.waveguide_lifetime_ms <= 0:
            raise ValidationError("waveguide_lifetime_ms must be positive")
        if self.spectral_diffusion_mhz_per_sqrt_min < 0:
            raise ValidationError("spectral diffusion rate must be nonnegative")

    @property
    def sigma_ghz(self) -> float:
        return self.fwhm_ghz * FWHM_TO_SIGMA

    @property
    def number_density_per_um3(self) -> float:
        return self.number_density_per_cm3 * 1e-12

    @property
    def baseline_rate_per_ms(self) -> float:
        return 1.0 / self.waveguide_lifetime_ms

    def total_ions(self) -> float:
        """Bookkeeping population: ions within the reference volume."""
        if self.ion_count is not None:
            return float(self.ion_count)
        return self.number_density_per_um3 * self.reference_volume_um3

    def center_frequency_ghz(self) -> float:
        return C_NM_GHZ / self.center_wavelength_nm


@dataclass(frozen=True, slots=True)
class IonRecord:
    """One sampled ion. center_frequency_ghz is the offset from the
    inhomogeneous center; diffusion_state_mhz is the current wander of
    the transition away from that center frequency."""

    id: int
    center_frequency_ghz: float
    purcell_factor: float
    baseline_rate_per_ms: float
    diffusion_state_mhz: float = 0.0

    def __post_init__(self) -> None:
        if self.purcell_factor < 0:
            raise ValidationError("purcell_factor must be nonnegative")
        if self.baseline_rate_per_ms <= 0:
            raise ValidationError("baseline_rate_per_ms must be positive")


def cavity_offset_ghz(cfg: EnsembleConfig, cavity: CavityModel) -> float:
    """Zero-voltage cavity frequency as an offset from the ensemble center."""
    return C_NM_GHZ / cavity.lambda0_nm - cfg.center_frequency_ghz()


def spectral_density(cfg: EnsembleConfig, detuning_from_center_ghz) -> np.ndarray | float:
    """Ions per GHz at a detuning from the inhomogeneous center:
    N_total times the Gaussian PDF."""
    sigma = cfg.sigma_ghz
    x = np.asarray(detuning_from_center_ghz, dtype=float)
    out = cfg.total_ions() * np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
    if np.ndim(detuning_from_center_ghz) == 0:
        return float(out)
    return out


def expected_ions_in_band(
    cfg: EnsembleConfig, cavity: CavityModel, center_detuning_ghz: float
) -> float:
    """spectral_density integrated over one cavity linewidth centered at
    the given detuning from the ensemble center."""
    sigma = cfg.sigma_ghz
    half = cavity.linewidth_ghz / 2.0
    lo = (center_detuning_ghz - half) / (sigma * math.sqrt(2.0))
    hi = (center_detuning_ghz + half) / (sigma * math.sqrt(2.0))
    return cfg.total_ions() * 0.5 * (math.erf(hi) - math.erf(lo))


def _sample_positions(profile, n: int, rng: np.random.Generator, floor_intensity: float):
    """Uniform positions in the dielectric with intensity >= floor, by
    batched rejection sampling. Returns (n, 3) positions."""
    if hasattr(profile, "domain_half_um"):
        half = np.asarray(profile.domain_half_um)
        lo, hi = -half, half
    else:
        shape = np.asarray(profile.values.shape)
        lo = np.asarray(profile.origin_um) - profile.voxel_um / 2.0
        hi = lo + shape * profile.voxel_um
    out = np.empty((n, 3))
    got = 0
    while got < n:
        batch = max(4096, int(1.3 * (n - got)))
        cand = rng.uniform(lo, hi, size=(batch, 3))
        ok = profile.in_dielectric(cand)
        if floor_intensity > 0.0:
            ok &= profile.intensity(cand) >= floor_intensity
        cand = cand[ok]
        take = min(cand.shape[0], n - got)
        out[got : got + take] = cand[:take]
        got += take
    return out


def _floor_volume_fraction(profile, floor_intensity: float, rng: np.random.Generator) -> float:
    """Fraction of the dielectric where intensity >= floor (Monte Carlo
    with a fixed internal sample size; only used for population scaling)."""
    if floor_intensity <= 0.0:
        return 1.0
    if hasattr(profile, "domain_half_um"):
        half = np.asarray(profile.domain_half_um)
        lo, hi = -half, half
        box = float(np.prod(2 * half))
    else:
        shape = np.asarray(profile.values.shape)
        lo = np.asarray(profile.origin_um) - profile.voxel_um / 2.0
        hi = lo + shape * profile.voxel_um
        box = float(np.prod(shape) * profile.voxel_um**3)
    n = 200_000
    cand = rng.uniform(lo, hi, size=(n, 3))
    ok = profile.in_dielectric(cand) & (profile.intensity(cand) >= floor_intensity)
    return float(ok.sum()) / n * box / profile.dielectric_volume_um3()


def sample_ensemble(
    cfg: EnsembleConfig,
    profile,
    cavity: CavityModel,
    rng: np.random.Generator | None = None,
) -> list[IonRecord]:
    """Draw the ion population coupled to the cavity.

    Frequencies are Gaussian with the configured FWHM (truncated to the
    sampling window when one is set); positions are uniform in the
    dielectric above the Purcell floor and mapped to Purcell factors via
    the profile and cavity. With ion_count unset, the number of sampled
    ions is Poisson with mean density * (accepted volume) * (window
    probability mass). Deterministic given cfg.seed (or the supplied
    generator).
    """
    from .modeprofile import purcell_coefficient

    if rng is None:
        rng = substream(cfg.seed, STREAM_ENSEMBLE)

    coef = purcell_coefficient(profile, cavity)
    floor_intensity = cfg.purcell_floor / coef if cfg.purcell_floor > 0 else 0.0
    if floor_intensity > 1.0:
        return []

    sigma = cfg.sigma_ghz
    if cfg.window_halfwidth_kappas is not None:
        center = cavity_offset_ghz(cfg, cavity)
        halfw = cfg.window_halfwidth_kappas * cavity.linewidth_ghz
        a = (center - halfw) / (sigma * math.sqrt(2.0))
        b = (center + halfw) / (sigma * math.sqrt(2.0))
        window_mass = 0.5 * (math.erf(b) - math.erf(a))
    else:
        window_mass = 1.0

    if cfg.ion_count is not None:
        n = cfg.ion_count
    else:
        vfrac = _floor_volume_fraction(profile, floor_intensity, rng)
        mean = (
            cfg.number_density_per_um3
            * profile.dielectric_volume_um3()
            * vfrac
            * window_mass
        )
        n = int(rng.poisson(mean))
    if n == 0:
        return []

    if cfg.window_halfwidth_kappas is not None:
        # inverse-CDF sampling of the truncated Gaussian
        lo = 0.5 * (1.0 + math.erf((center - halfw) / (sigma * math.sqrt(2.0))))
        hi = 0.5 * (1.0 + math.erf((center + halfw) / (sigma * math.sqrt(2.0))))
        from scipy.special import ndtri

        u = rng.uniform(lo, hi, size=n)
        freqs = sigma * ndtri(u)
    else:
        freqs = rng.normal(0.0, sigma, size=n)

    positions = _sample_positions(profile, n, rng, floor_intensity)
    pvals = coef * profile.intensity(positions)
    base = cfg.baseline_rate_per_ms
    return [
        IonRecord(
            id=i,
            center_frequency_ghz=float(freqs[i]),
            purcell_factor=float(pvals[i]),
            baseline_rate_per_ms=base,
        )
        for i in range(n)
    ]


def _fold_reflect(x: np.ndarray, bound: float) -> np.ndarray:
    """Reflect a free walk endpoint into [-bound, bound] (method of
    images; exact for the marginal of a reflected Gaussian walk)."""
    period = 4.0 * bound
    y = np.mod(x + bound, period)
    return np.where(y > 2.0 * bound, 3.0 * bound - y, y - bound)


def diffusion_step_mhz(
    rate_mhz_per_sqrt_min: float,
    dt_us,
    rng: np.random.Generator,
    start_mhz=0.0,
    bound_mhz: float | None = None,
):
    """Advance a Gaussian frequency walk by dt (vectorized over dt)."""
    dt = np.asarray(dt_us, dtype=float)
    sigma = rate_mhz_per_sqrt_min * np.sqrt(dt / US_PER_MIN)
    step = rng.normal(0.0, 1.0, size=dt.shape) * sigma
    new = np.asarray(start_mhz, dtype=float) + step
    if bound_mhz is not None:
        new = _fold_reflect(new, bound_mhz)
    return new


def advance_spectral_diffusion(
    ion: IonRecord,
    dt_us: float,
    rng: np.random.Generator,
    rate_mhz_per_sqrt_min: float = 20.0,
    bound_mhz: float | None = None,
) -> IonRecord:
    """New IonRecord with the diffusion state advanced by dt.

    The walk variance is rate^2 * dt (rate in MHz per sqrt minute), so a
    population advanced by one minute has standard deviation equal to
    the rate. dt = 0 returns the ion unchanged.
    """
    if dt_us < 0:
        raise ValidationError("dt_us must be nonnegative")
    if dt_us == 0.0 or rate_mhz_per_sqrt_min == 0.0:
        return ion
    new = diffusion_step_mhz(
        rate_mhz_per_sqrt_min,
        np.asarray(dt_us),
        rng,
        start_mhz=ion.diffusion_state_mhz,
        bound_mhz=bound_mhz,
    )
    return replace(ion, diffusion_state_mhz=float(new))


def dump_ensemble(ions: list[IonRecord], path) -> None:
    """Write ions as a delimited text table for reproducibility audits:
    id, frequency offset (GHz), Purcell factor, baseline rate (1/ms)."""
    with open(path, "w") as fh:
        fh.write("# id\tfrequency_offset_ghz\tpurcell_factor\tbaseline_rate_per_ms\n")
        for ion in ions:
            fh.write(
                f"{ion.id}\t{ion.center_frequency_ghz!r}\t"
                f"{ion.purcell_factor!r}\t{ion.baseline_rate_per_ms!r}\n"
            )


def load_ensemble(path) -> list[IonRecord]:
    """Read a table written by dump_ensemble (diffusion states reset to 0)."""
    ions = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValidationError(f"line {lineno}: expected 4 columns, got {len(parts)}")
            ions.append(
                IonRecord(
                    id=int(parts[0]),
                    center_frequency_ghz=float(parts[1]),
                    purcell_factor=float(parts[2]),
                    baseline_rate_per_ms=float(parts[3]),
                )
            )
    return ions


def ion_lifetime_us(ion: IonRecord, cavity_filter: float = 1.0) -> float:
    """Decay lifetime of an ion given a cavity filter factor in [0, 1]."""
    rate_per_ms = ion.baseline_rate_per_ms * (1.0 + ion.purcell_factor * cavity_filter)
    return US_PER_MS / rate_per_ms
