"""Unit conventions and physical constants.

All frequencies and detunings are in GHz, times in microseconds,
wavelengths in nanometers, voltages in volts and volumes in cubic
micrometers unless a name says otherwise.  Rates carried by ion and
chain records are per millisecond (natural for millisecond-scale
baseline lifetimes); the conversion helpers below keep the exponents
out of the formulas.
"""

VERSION = "0.1.0"

# speed of light expressed so that frequency_ghz = C_NM_GHZ / wavelength_nm
C_NM_GHZ = 2.99792458e8

US_PER_MS = 1.0e3
US_PER_S = 1.0e6
US_PER_MIN = 6.0e7

GHZ_PER_MHZ = 1.0e-3
NM_PER_PM = 1.0e-3


def frequency_ghz(wavelength_nm: float) -> float:
    """Optical frequency in GHz for a vacuum wavelength in nm."""
    return C_NM_GHZ / wavelength_nm


def rate_per_us_from_hz(rate_hz: float) -> float:
    return rate_hz * 1.0e-6


def rate_per_ms_from_lifetime_us(lifetime_us: float) -> float:
    return US_PER_MS / lifetime_us
