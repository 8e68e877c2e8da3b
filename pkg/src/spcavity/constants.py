"""Physical constants and unit conversions used throughout the package.

All internal computation is in SI units (meters, seconds, V/m).  Configuration
and reports use nanometers, electronvolts and femtoseconds; the helpers here
are the only sanctioned way to cross between the two.
"""

import scipy.constants as _sc

C0: float = _sc.c
"""Vacuum speed of light (m/s)."""

EPS0: float = _sc.epsilon_0
"""Vacuum permittivity (F/m)."""

MU0: float = _sc.mu_0
"""Vacuum permeability (H/m)."""

HBAR: float = _sc.hbar
"""Reduced Planck constant (J*s)."""

E_CHARGE: float = _sc.e
"""Elementary charge (C)."""

EV_TO_RAD_PER_S: float = _sc.e / _sc.hbar
"""Angular frequency (rad/s) of a photon with 1 eV energy."""

NM: float = 1e-9
FS: float = 1e-15


def omega_from_ev(energy_ev: float) -> float:
    """Angular frequency in rad/s for a photon energy in eV."""
    return energy_ev * EV_TO_RAD_PER_S


def ev_from_omega(omega: float) -> float:
    """Photon energy in eV for an angular frequency in rad/s."""
    return omega / EV_TO_RAD_PER_S


def vacuum_wavelength_nm(energy_ev: float) -> float:
    """Free-space wavelength in nm for a photon energy in eV."""
    return 2.0 * _sc.pi * C0 / omega_from_ev(energy_ev) / NM
