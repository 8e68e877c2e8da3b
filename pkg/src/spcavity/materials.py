"""Drude metals, dielectrics and the surface-plasmon dispersion relation.

The metal model is a single-pole Drude response

    eps(w) = eps_inf - wp^2 / (w^2 + i eta w)

with fields evolving as exp(-i w t), so an absorbing metal has a positive
imaginary permittivity.  Damping is expressed as a room-temperature value
divided by a dimensionless loss factor, which is how cryogenic operation is
modeled throughout: loss_factor = 1 is room temperature, larger values mean
colder, less lossy metal.

A bound surface plasmon on a metal/dielectric interface satisfies

    k_sp = (w / c) sqrt(eps_d eps_m / (eps_d + eps_m))

and a first-order distributed Bragg reflector for that mode uses a grating
period of half the plasmon wavelength, a = pi / Re(k_sp).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .constants import C0, EV_TO_RAD_PER_S

__all__ = [
    "DrudeMetal",
    "Dielectric",
    "SILVER",
    "GALLIUM_ARSENIDE",
    "DispersionPoleError",
    "DesignError",
    "SaturationError",
    "sp_wavevector",
    "design_grating_period",
    "loss_factor_to_temperature",
    "temperature_to_loss_factor",
    "XI_TEMPERATURE_ANCHORS",
    "RESIDUAL_RESISTIVITY_RATIO",
]


class DispersionPoleError(ValueError):
    """Surface-plasmon denominator eps_d + eps_m vanished at this energy."""


class DesignError(ValueError):
    """No bound surface mode exists at the requested design energy."""


class SaturationError(ValueError):
    """Loss factor beyond the residual-resistivity limit of the metal."""


@dataclass(frozen=True)
class DrudeMetal:
    """Drude metal with loss expressed relative to room temperature.

    Attributes:
        eps_inf: high-frequency permittivity offset, at least 1.
        plasma_energy_ev: plasma energy hbar*wp in eV.
        damping_energy_room_ev: collision energy hbar*eta at room temperature.
        loss_factor: divide room damping by this to get the effective damping.
    """

    eps_inf: float
    plasma_energy_ev: float
    damping_energy_room_ev: float
    loss_factor: float

    def __post_init__(self):
        if self.eps_inf < 1.0:
            raise ValueError(f"eps_inf must be >= 1, got {self.eps_inf}")
        if self.plasma_energy_ev <= 0.0:
            raise ValueError(
                f"plasma energy must be positive, got {self.plasma_energy_ev}"
            )
        if self.damping_energy_room_ev < 0.0:
            raise ValueError("room damping energy must be >= 0")
        if self.loss_factor <= 0.0:
            raise ValueError(f"loss factor must be positive, got {self.loss_factor}")

    @property
    def damping_energy_ev(self) -> float:
        """Effective collision energy hbar*eta in eV."""
        return self.damping_energy_room_ev / self.loss_factor

    @property
    def plasma_omega(self) -> float:
        """Plasma angular frequency in rad/s."""
        return self.plasma_energy_ev * EV_TO_RAD_PER_S

    @property
    def damping_rate(self) -> float:
        """Effective collision rate eta in 1/s."""
        return self.damping_energy_ev * EV_TO_RAD_PER_S

    def lossless(self) -> "DrudeMetal":
        """Copy of this metal with the damping removed."""
        return replace(self, damping_energy_room_ev=0.0, loss_factor=1.0)

    def with_loss_factor(self, xi: float) -> "DrudeMetal":
        return replace(self, loss_factor=xi)

    def permittivity_at(self, energy_ev: float) -> complex:
        """Complex relative permittivity at a photon energy in eV.

        Raises ValueError for a non-positive energy.  With zero damping the
        result is purely real.
        """
        if energy_ev <= 0.0:
            raise ValueError(f"photon energy must be positive, got {energy_ev}")
        w = energy_ev
        wp = self.plasma_energy_ev
        eta = self.damping_energy_ev
        # energies can be used directly since the hbar factors cancel
        return self.eps_inf - wp**2 / (w * w + 1j * eta * w)

    def energy_weight(self, energy_ev: float) -> float:
        """Electric energy-density weight eps_inf + (wp/w)^2 inside the metal.

        In a dispersive Drude medium the time-averaged electric plus kinetic
        energy density is (eps0/4) * this * |E|^2, which is what mode-volume
        integrals must use in place of the (negative) permittivity.
        """
        if energy_ev <= 0.0:
            raise ValueError(f"photon energy must be positive, got {energy_ev}")
        return self.eps_inf + (self.plasma_energy_ev / energy_ev) ** 2


@dataclass(frozen=True)
class Dielectric:
    """Non-dispersive dielectric half-space."""

    permittivity: float

    def __post_init__(self):
        if self.permittivity < 1.0:
            raise ValueError(
                f"dielectric permittivity must be >= 1, got {self.permittivity}"
            )

    @property
    def refractive_index(self) -> float:
        return math.sqrt(self.permittivity)


SILVER = DrudeMetal(
    eps_inf=1.0,
    plasma_energy_ev=8.8,
    damping_energy_room_ev=0.05,
    loss_factor=2000.0,
)

GALLIUM_ARSENIDE = Dielectric(permittivity=12.25)


def sp_wavevector(metal: DrudeMetal, diel: Dielectric, energy_ev: float) -> complex:
    """Surface-plasmon wavevector on a metal/dielectric interface, in 1/m.

    Branch choice: Re(k) > 0 and Im(k) >= 0, a forward wave decaying in its
    propagation direction under the exp(-i w t) convention.  Raises
    DispersionPoleError when Re(eps_m) + eps_d vanishes.
    """
    if energy_ev <= 0.0:
        raise ValueError(f"photon energy must be positive, got {energy_ev}")
    eps_m = metal.permittivity_at(energy_ev)
    eps_d = complex(diel.permittivity)
    denom = eps_m + eps_d
    if abs(denom.real) < 1e-9 * abs(eps_d) and abs(denom.imag) < 1e-9 * abs(eps_d):
        raise DispersionPoleError(
            f"eps_m + eps_d = {denom:.3e} at {energy_ev} eV; dispersion has a pole"
        )
    k0 = energy_ev * EV_TO_RAD_PER_S / C0
    k = k0 * cmath.sqrt(eps_d * eps_m / denom)
    if k.real < 0.0:
        k = -k
    if k.imag < 0.0:
        k = k.conjugate()
    return k


def design_grating_period(
    metal: DrudeMetal, diel: Dielectric, energy_ev: float
) -> float:
    """First-order Bragg period in meters for the surface plasmon at energy_ev.

    Half the plasmon wavelength, a = pi / Re(k_sp).  Raises DesignError when
    the interface carries no bound mode at this energy, which happens once
    Re(eps_m) > -eps_d.
    """
    eps_m = metal.permittivity_at(energy_ev)
    if eps_m.real + diel.permittivity >= 0.0:
        raise DesignError(
            f"no bound surface mode at {energy_ev} eV: "
            f"Re(eps_m) = {eps_m.real:.2f} >= -eps_d = {-diel.permittivity}"
        )
    k = sp_wavevector(metal, diel, energy_ev)
    return math.pi / k.real


def grating_stop_band(
    metal: DrudeMetal, diel: Dielectric, period_m: float
) -> tuple[float, float]:
    """Energy window, in eV, where a grating of this period mirrors the
    surface plasmon in first order.

    The edges are where the plasmon accumulates a quarter and three-quarter
    wave per period, Re(k_sp) a = pi/2 and 3 pi/2.  In between, the
    first-order Bragg condition is the only one in reach, so a long-lived
    line there can be attributed to the grating acting as intended; above
    the window the grating resonates in second order instead (a standing
    wave near Re(k_sp) a = 2 pi).  Edges that fall outside the bound-mode
    range of the interface are clamped to it.
    """
    if period_m <= 0.0:
        raise ValueError(f"period must be positive, got {period_m}")
    e_res = metal.plasma_energy_ev / math.sqrt(
        metal.eps_inf + diel.permittivity)
    e_min, e_max = 1e-3 * e_res, 0.999 * e_res

    def excess(energy_ev, target):
        return sp_wavevector(metal, diel, energy_ev).real * period_m - target

    edges = []
    for target in (0.5 * math.pi, 1.5 * math.pi):
        if excess(e_min, target) >= 0.0:
            edges.append(e_min)
        elif excess(e_max, target) <= 0.0:
            edges.append(e_max)
        else:
            edges.append(brentq(excess, e_min, e_max, args=(target,),
                                xtol=1e-12, rtol=1e-14))
    return edges[0], edges[1]


# Loss factor versus temperature for high-purity silver.  Anchors: room
# temperature by definition, a mid-range cryogenic point, and the residual
# resistivity plateau reached near liquid-helium conditions.  Interpolation is
# monotone cubic in log-log space; the table can be overridden per run.
XI_TEMPERATURE_ANCHORS: tuple[tuple[float, float], ...] = (
    (15.0, 1467.0),
    (40.0, 25.0),
    (295.0, 1.0),
)

RESIDUAL_RESISTIVITY_RATIO = 1467.0


def _build_interpolant(anchors):
    pts = sorted(anchors)
    if len(pts) < 2:
        raise ValueError("need at least two (temperature, xi) anchors")
    t = np.array([p[0] for p in pts], dtype=float)
    xi = np.array([p[1] for p in pts], dtype=float)
    if np.any(t <= 0.0) or np.any(xi <= 0.0):
        raise ValueError("anchor temperatures and loss factors must be positive")
    if np.any(np.diff(xi) >= 0.0):
        raise ValueError("loss factor must decrease with temperature")
    return t, xi, PchipInterpolator(np.log(t), np.log(xi))


def temperature_to_loss_factor(temperature_k: float, anchors=None) -> float:
    """Loss factor at a given temperature, from the anchor table."""
    t, xi, interp = _build_interpolant(anchors or XI_TEMPERATURE_ANCHORS)
    if not t[0] <= temperature_k <= t[-1]:
        raise ValueError(
            f"temperature {temperature_k} K outside the tabulated range "
            f"[{t[0]}, {t[-1]}] K"
        )
    return float(np.exp(interp(np.log(temperature_k))))


def loss_factor_to_temperature(xi: float, anchors=None) -> float:
    """Temperature in K at which the metal reaches the given loss factor.

    Inverts the monotone anchor interpolation.  A loss factor above the
    residual-resistivity plateau cannot be reached by cooling and raises
    SaturationError; one below the room-temperature value of 1 raises
    ValueError.
    """
    t, xi_tab, interp = _build_interpolant(anchors or XI_TEMPERATURE_ANCHORS)
    if xi > xi_tab[0]:
        raise SaturationError(
            f"loss factor {xi} exceeds the residual-resistivity limit "
            f"{xi_tab[0]} reached at {t[0]} K"
        )
    if xi < xi_tab[-1]:
        raise ValueError(
            f"loss factor {xi} below the warm limit {xi_tab[-1]} at {t[-1]} K"
        )
    if xi == xi_tab[0]:
        return float(t[0])
    if xi == xi_tab[-1]:
        return float(t[-1])
    target = math.log(xi)
    return float(
        math.exp(
            brentq(
                lambda logt: float(interp(logt)) - target,
                math.log(t[0]),
                math.log(t[-1]),
                xtol=1e-14,
                rtol=1e-14,
            )
        )
    )
