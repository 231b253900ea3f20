"""Unit conversions between laboratory units and atomic units.

Everything downstream of configuration ingestion works in atomic units
(hbar = 1, m_e = 1, E_h = 1).  Lab-unit inputs (wavenumbers, femtoseconds,
kelvin) are converted once, here, with fixed CODATA-style constants.
"""

import math

# Conversion constants (>= 7 significant digits, fixed for reproducibility).
WAVENUMBER_TO_AU = 4.556335e-6      # 1 cm^-1 in hartree
FS_TO_AU = 41.34137334              # 1 fs in atomic time units
KELVIN_TO_AU = 3.166812e-6          # k_B in hartree/kelvin
PS_TO_AU = 1.0e3 * FS_TO_AU

AU_TO_WAVENUMBER = 1.0 / WAVENUMBER_TO_AU
AU_TO_FS = 1.0 / FS_TO_AU


class ConfigurationError(ValueError):
    """Invalid or inconsistent configuration input."""


_FACTORS = {
    "wavenumber": WAVENUMBER_TO_AU,
    "femtosecond": FS_TO_AU,
    "kelvin": KELVIN_TO_AU,
    "au": 1.0,
}


def convert_units(value, from_unit):
    """Convert a scalar from a laboratory unit to atomic units.

    Parameters
    ----------
    value : float
        Magnitude in the source unit.
    from_unit : str
        One of ``wavenumber`` (cm^-1 -> hartree), ``femtosecond``
        (fs -> a.u. time), ``kelvin`` (K -> hartree via k_B) or ``au``
        (identity).

    Returns
    -------
    float
        Value in atomic units.
    """
    if not math.isfinite(value):
        raise ConfigurationError(f"non-finite value {value!r}")
    try:
        return value * _FACTORS[from_unit]
    except KeyError:
        raise ConfigurationError(f"unknown unit {from_unit!r}") from None


def to_lab_units(value, to_unit):
    """Inverse of :func:`convert_units` (a.u. -> laboratory unit)."""
    if not math.isfinite(value):
        raise ConfigurationError(f"non-finite value {value!r}")
    try:
        return value / _FACTORS[to_unit]
    except KeyError:
        raise ConfigurationError(f"unknown unit {to_unit!r}") from None


def inverse_temperature(T_kelvin):
    """beta = 1/(k_B T) in atomic units for a temperature in kelvin."""
    if T_kelvin <= 0:
        raise ConfigurationError(f"temperature must be positive, got {T_kelvin}")
    return 1.0 / (KELVIN_TO_AU * T_kelvin)
