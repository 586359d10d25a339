"""Cavity lineshapes, electro-optic tuning, and Purcell rate algebra.

Everything here is a pure function of immutable inputs. Frequencies and
detunings are in GHz, wavelengths in nm, voltages in V, rates in 1/ms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import C_NM_GHZ, NM_PER_PM
from .errors import BreakdownVoltageError, ValidationError


@dataclass(frozen=True)
class CavityModel:
    """Photonic-crystal cavity parameters.

    Parameters
    ----------
    lambda0_nm : float
        Resonance wavelength at zero applied volts.
    q_factor : float
        Loaded quality factor.
    extinction_db : float
        Depth of the reflection dip on resonance, in dB.
    coupling_ratio : float
        Waveguide coupling fraction kappa_ex / (kappa_ex + kappa_in).
    tuning_rate_pm_per_v : float
        Electro-optic wavelength shift per applied volt.
    max_voltage_v : float
        Breakdown guard; tuning requests beyond this raise.
    """

    lambda0_nm: float = 1532.0
    q_factor: float = 1.58e5
    extinction_db: float = 10.0
    coupling_ratio: float = 0.5
    tuning_rate_pm_per_v: float = 1.6
    max_voltage_v: float = 500.0

    def __post_init__(self) -> None:
        if self.lambda0_nm <= 0:
            raise ValidationError("lambda0_nm must be positive")
        if self.q_factor <= 0:
            raise ValidationError("q_factor must be positive")
        if not 0.0 <= self.coupling_ratio <= 1.0:
            raise ValidationError("coupling_ratio must lie in [0, 1]")
        if self.extinction_db < 0:
            raise ValidationError("extinction_db must be nonnegative")
        if self.max_voltage_v <= 0:
            raise ValidationError("max_voltage_v must be positive")

    @property
    def frequency_ghz(self) -> float:
        """Resonance frequency at zero volts."""
        return C_NM_GHZ / self.lambda0_nm

    @property
    def linewidth_ghz(self) -> float:
        """Loaded linewidth kappa = nu0 / Q."""
        return self.frequency_ghz / self.q_factor


def lorentzian(delta_ghz, kappa_ghz: float, order: int = 1):
    """Unit-peak Lorentzian filter factor 1 / (1 + (2*delta/kappa)^2)^order.

    ``order`` > 1 models a steeper spectral rolloff than a bare
    single-pole cavity response while keeping the same FWHM scale.
    """
    x = 2.0 * np.asarray(delta_ghz, dtype=float) / kappa_ghz
    base = 1.0 / (1.0 + x * x)
    if order == 1:
        out = base
    else:
        out = base**order
    if np.ndim(delta_ghz) == 0:
        return float(out)
    return out


def reflection_spectrum(cavity: CavityModel, detunings_ghz):
    """Reflectance R(delta) = 1 - d / (1 + (2*delta/kappa)^2).

    The dip depth d follows from the extinction ratio,
    d = 1 - 10^(-extinction_db/10), so R(0) equals the configured
    extinction floor and R -> 1 far from resonance.
    """
    depth = 1.0 - 10.0 ** (-cavity.extinction_db / 10.0)
    r = 1.0 - depth * lorentzian(detunings_ghz, cavity.linewidth_ghz)
    return r


def eo_detuning(cavity: CavityModel, voltage_v: float) -> float:
    """Frequency detuning of the resonance under an applied voltage.

    Positive voltage shifts the resonance wavelength upward by
    tuning_rate * V, hence the frequency downward:
    dnu = -(c / lambda0^2) * dlambda.

    Raises
    ------
    BreakdownVoltageError
        If |voltage| exceeds the cavity's max_voltage_v.
    """
    if abs(voltage_v) > cavity.max_voltage_v:
        raise BreakdownVoltageError(
            f"|{voltage_v} V| exceeds breakdown guard {cavity.max_voltage_v} V"
        )
    dlambda_nm = cavity.tuning_rate_pm_per_v * voltage_v * NM_PER_PM
    return -C_NM_GHZ * dlambda_nm / cavity.lambda0_nm**2


def eo_detuning_unchecked(cavity: CavityModel, voltage_v) -> np.ndarray:
    """Vectorized eo_detuning without the breakdown guard (sequence
    builders validate voltages once; per-sample evaluation skips the check)."""
    dlambda_nm = cavity.tuning_rate_pm_per_v * np.asarray(voltage_v, dtype=float) * NM_PER_PM
    return -C_NM_GHZ * dlambda_nm / cavity.lambda0_nm**2


def lifetime_to_purcell(t_wg_us: float, t_cav_us: float) -> float:
    """Purcell factor from the lifetime ratio, P = T_wg / T_cav - 1."""
    if t_wg_us <= 0 or t_cav_us <= 0:
        raise ValidationError("lifetimes must be positive")
    return t_wg_us / t_cav_us - 1.0


def purcell_to_lifetime(t_wg_us: float, purcell: float) -> float:
    """Enhanced lifetime T_wg / (1 + P); inverse of lifetime_to_purcell."""
    if t_wg_us <= 0:
        raise ValidationError("lifetime must be positive")
    if purcell < 0:
        raise ValidationError("purcell must be nonnegative")
    return t_wg_us / (1.0 + purcell)


def emission_rate_at_detuning(
    gamma_baseline,
    gamma_purcell_on_res,
    delta_ghz,
    kappa_ghz: float,
    order: int = 1,
):
    """Total decay rate of an ion at cavity detuning delta.

    Gamma(delta) = gamma_baseline + gamma_purcell_on_res * L(delta)
    with L a unit-peak Lorentzian of FWHM kappa raised to ``order``.
    Rates are in whatever unit the inputs share (per ms throughout this
    package).
    """
    if kappa_ghz <= 0:
        raise ValidationError("kappa_ghz must be positive")
    gb = np.asarray(gamma_baseline, dtype=float)
    gp = np.asarray(gamma_purcell_on_res, dtype=float)
    if np.any(gb < 0) or np.any(gp < 0):
        raise ValidationError("rates must be nonnegative")
    out = gb + gp * lorentzian(delta_ghz, kappa_ghz, order=order)
    if np.ndim(out) == 0:
        return float(out)
    return out
