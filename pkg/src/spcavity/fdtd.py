"""Dispersive 2D finite-difference time-domain solver.

TM polarization on a Yee grid: Ex, Ez in the plane, Hy out of plane, with
the metal handled by an auxiliary polarization current J per metal field
node so the Drude response enters the time stepping exactly:

    dJ/dt + eta J = eps0 wp^2 E

discretized with the same bilinear (trapezoidal) damping used everywhere
else, which makes the eta = 0 limit exactly lossless.  Domain boundaries
are perfectly conducting walls backed by a graded convolutional absorber
(boundary="pml"), or periodic in x with absorbers only in z
(boundary="periodic") which the validation tests use for quasi-1D runs.

Energy bookkeeping is built around discrete identities rather than
continuum formulas.  With the staggered product energy

    U = dx^2 sum [ eps0 eps/2 E^n E^{n+1} + mu0/2 (Hy^{n+1/2})^2
                   + J^2 / (2 eps0 wp^2) ]

the update equations satisfy, exactly in exact arithmetic,

    (U^{n+1/2} - U^{n-1/2})/dt + P_flux^n + P_abs^n = 0

for any rectangle that contains no source and no absorber cells, where
P_flux pairs boundary-plane E^n values with time-averaged Hy on the
adjacent outer half-plane and P_abs = dx^2 sum eta/(eps0 wp^2) Jbar^2 with
Jbar the two-step average of J.  The flux and energy monitors record
exactly these combinations, so closure checks are limited by float64
round-off, not by discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import C0, EPS0, MU0, omega_from_ev
from .geometry import CellKind, MaterialGrid
from .materials import Dielectric, DrudeMetal, GALLIUM_ARSENIDE, SILVER

__all__ = [
    "InstabilityError",
    "PmlSpec",
    "GaussianPulse",
    "PointProbe",
    "FluxLine",
    "FluxBox",
    "EnergyRegion",
    "AbsorptionRegion",
    "FieldSnapshot",
    "Simulation",
]


class InstabilityError(RuntimeError):
    """Raised when a field array stops being finite."""

    def __init__(self, step: int):
        super().__init__(f"non-finite field values at step {step}")
        self.step = step


@dataclass(frozen=True)
class PmlSpec:
    """Graded-absorber parameters: polynomial order and the target
    round-trip reflection used to set the peak conductivity."""

    order: float = 3.0
    target_reflection: float = 1e-5


@dataclass(frozen=True)
class GaussianPulse:
    """Soft current source: a Gaussian-windowed tone on one E node.

    i may be None to drive an entire grid row at the plane k, which
    launches a plane wave in quasi-1D runs.  rel_bandwidth is the full
    width at half maximum of the amplitude spectrum as a fraction of the
    center frequency.  The waveform is delayed by six envelope widths, runs
    for twelve, and is identically zero outside that window.
    """

    center_ev: float
    i: int | None
    k: int
    rel_bandwidth: float = 0.5
    amplitude: float = 1.0
    component: str = "ez"

    def __post_init__(self):
        if self.component not in ("ex", "ez"):
            raise ValueError(f"component must be 'ex' or 'ez', got {self.component!r}")
        if not 0.0 < self.rel_bandwidth < 2.0:
            raise ValueError("rel_bandwidth out of range")

    @property
    def omega0(self) -> float:
        return omega_from_ev(self.center_ev)

    @property
    def tau(self) -> float:
        d_omega = self.rel_bandwidth * self.omega0
        return 2.0 * math.sqrt(2.0 * math.log(2.0)) / d_omega

    @property
    def t_peak(self) -> float:
        return 6.0 * self.tau

    @property
    def t_off(self) -> float:
        return 12.0 * self.tau

    def waveform(self, t: float) -> float:
        if t < 0.0 or t > self.t_off:
            return 0.0
        u = t - self.t_peak
        return self.amplitude * math.exp(-0.5 * (u / self.tau) ** 2) * math.sin(
            self.omega0 * u
        )


class Monitor:
    def attach(self, sim: "Simulation") -> None:
        pass

    def capture_pre(self, sim: "Simulation") -> None:
        pass

    def record(self, sim: "Simulation") -> None:
        pass


class PointProbe(Monitor):
    """Time series of one field component at one node."""

    def __init__(self, i: int, k: int, component: str = "ez"):
        if component not in ("ex", "ez", "hy"):
            raise ValueError(f"unknown component {component!r}")
        self.i, self.k, self.component = i, k, component
        self._times: list[float] = []
        self._values: list[float] = []

    def attach(self, sim):
        arr = getattr(sim, self.component)
        if not (0 <= self.i < arr.shape[0] and 0 <= self.k < arr.shape[1]):
            raise ValueError(f"probe index ({self.i}, {self.k}) outside {arr.shape}")
        self._arr = arr

    def record(self, sim):
        t = sim.time_h if self.component == "hy" else sim.time
        self._times.append(t)
        self._values.append(self._arr[self.i, self.k])

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self._times)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self._values)


class FluxLine(Monitor):
    """Power through a grid-aligned segment, positive toward +axis.

    axis "x": the segment is the Ez column at i = plane over rows
    span = (k0, k1); axis "z": the Ex plane at k = plane over columns
    span = (i0, i1).  hy_side picks which adjacent Hy half-plane pairs
    with the E values ("hi" = +axis side); a closed box uses the outer
    side on every face so the discrete energy identity closes.

    Two series are kept: power, sampled at half steps from time-averaged
    E against Hy^{n+1/2} (use for spectra and integrated energy), and
    power_centered, the whole-step pairing that enters the exact balance.
    """

    def __init__(self, axis: str, plane: int, span: tuple[int, int],
                 hy_side: str = "hi"):
        if axis not in ("x", "z"):
            raise ValueError("axis must be 'x' or 'z'")
        if hy_side not in ("lo", "hi"):
            raise ValueError("hy_side must be 'lo' or 'hi'")
        self.axis, self.plane, self.span, self.hy_side = axis, plane, span, hy_side
        self._power: list[float] = []
        self._centered: list[float] = []
        self._times: list[float] = []

    def attach(self, sim):
        lo, hi = self.span
        p = self.plane
        hp = p if self.hy_side == "hi" else p - 1
        if self.axis == "x":
            if not (0 <= p <= sim.nx and 0 <= hp < sim.nx):
                raise ValueError("flux line outside grid")
            self._e = sim.ez[p, lo:hi]
            self._h = sim.hy[hp, lo:hi]
            self._sign = -1.0
        else:
            if not (0 <= p <= sim.nz and 0 <= hp < sim.nz):
                raise ValueError("flux line outside grid")
            self._e = sim.ex[lo:hi, p]
            self._h = sim.hy[lo:hi, hp]
            self._sign = 1.0
        self._e_pre = np.empty_like(self._e)
        self._h_pre = np.empty_like(self._h)
        self._dx = sim.dx

    def capture_pre(self, sim):
        np.copyto(self._e_pre, self._e)
        np.copyto(self._h_pre, self._h)

    def record(self, sim):
        s = self._sign * self._dx
        e_avg = 0.5 * (self._e_pre + self._e)
        h_avg = 0.5 * (self._h_pre + self._h)
        self._power.append(s * float(np.dot(e_avg, self._h)))
        self._centered.append(s * float(np.dot(self._e_pre, h_avg)))
        self._times.append(sim.time_h)

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self._times)

    @property
    def power(self) -> np.ndarray:
        return np.asarray(self._power)

    @property
    def power_centered(self) -> np.ndarray:
        return np.asarray(self._centered)


class FluxBox(Monitor):
    """Outward power through the four faces of an E-plane rectangle."""

    def __init__(self, i0: int, i1: int, k0: int, k1: int):
        self.bounds = (i0, i1, k0, k1)
        self.right = FluxLine("x", i1, (k0, k1), "hi")
        self.left = FluxLine("x", i0, (k0, k1), "lo")
        self.top = FluxLine("z", k1, (i0, i1), "hi")
        self.bottom = FluxLine("z", k0, (i0, i1), "lo")
        self._faces = (self.right, self.left, self.top, self.bottom)

    def attach(self, sim):
        for f in self._faces:
            f.attach(sim)

    def capture_pre(self, sim):
        for f in self._faces:
            f.capture_pre(sim)

    def record(self, sim):
        for f in self._faces:
            f.record(sim)

    @property
    def times(self) -> np.ndarray:
        return self.right.times

    @property
    def outward_power(self) -> np.ndarray:
        return (self.right.power - self.left.power
                + self.top.power - self.bottom.power)

    @property
    def outward_centered(self) -> np.ndarray:
        return (self.right.power_centered - self.left.power_centered
                + self.top.power_centered - self.bottom.power_centered)

    @property
    def upward_power(self) -> np.ndarray:
        return self.top.power

    @property
    def downward_power(self) -> np.ndarray:
        return -self.bottom.power

    @property
    def lateral_power(self) -> np.ndarray:
        return self.right.power - self.left.power


class EnergyRegion(Monitor):
    """Staggered product energy inside an E-plane rectangle [i0,i1]x[k0,k1].

    periodic_x with i0=0, i1=nx covers the whole periodic domain without
    double counting the seam column.  every > 1 subsamples in time.
    """

    def __init__(self, i0: int, i1: int, k0: int, k1: int, *,
                 every: int = 1, periodic_x: bool = False):
        self.bounds = (i0, i1, k0, k1)
        self.every = int(every)
        self.periodic_x = periodic_x
        self._times: list[float] = []
        self._energy: list[float] = []
        self._armed = False

    def attach(self, sim):
        i0, i1, k0, k1 = self.bounds
        if not (0 <= i0 < i1 <= sim.nx and 0 <= k0 < k1 <= sim.nz):
            raise ValueError(f"energy region {self.bounds} outside grid")
        zhi = i1 if self.periodic_x else i1 + 1
        self._ez = sim.ez[i0:zhi, k0:k1]
        self._wz = sim.epsz[i0:zhi, k0:k1] * (0.5 * EPS0)
        self._ex = sim.ex[i0:i1, k0:k1 + 1]
        self._wx = sim.epsx[i0:i1, k0:k1 + 1] * (0.5 * EPS0)
        self._hy = sim.hy[i0:i1, k0:k1]
        self._ez_pre = np.empty_like(self._ez)
        self._ex_pre = np.empty_like(self._ex)
        ix, kx = sim.jx_idx
        self._jx_sel = np.flatnonzero(
            (ix >= i0) & (ix < i1) & (kx >= k0) & (kx <= k1))
        iz, kz = sim.jz_idx
        self._jz_sel = np.flatnonzero(
            (iz >= i0) & (iz <= (i1 - 1 if self.periodic_x else i1))
            & (kz >= k0) & (kz < k1))
        self._ju = sim.current_energy_coeff
        self._da = sim.dx ** 2

    def capture_pre(self, sim):
        self._armed = sim.step_count % self.every == 0
        if not self._armed:
            return
        np.copyto(self._ez_pre, self._ez)
        np.copyto(self._ex_pre, self._ex)

    def record(self, sim):
        if not self._armed:
            return
        u = float(np.sum(self._wz * self._ez_pre * self._ez))
        u += float(np.sum(self._wx * self._ex_pre * self._ex))
        u += 0.5 * MU0 * float(np.sum(self._hy ** 2))
        if self._jx_sel.size:
            u += self._ju * float(np.sum(sim.jx[self._jx_sel] ** 2))
        if self._jz_sel.size:
            u += self._ju * float(np.sum(sim.jz[self._jz_sel] ** 2))
        self._energy.append(u * self._da)
        self._times.append(sim.time_h)

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self._times)

    @property
    def energy(self) -> np.ndarray:
        return np.asarray(self._energy)


class AbsorptionRegion(Monitor):
    """Ohmic power dissipated by the polarization current, whole domain.

    Evaluates the exact discrete form eta/(eps0 wp^2) Jbar^2 summed over
    metal nodes, with Jbar the average of J before and after the step, so
    it plugs straight into the energy balance.
    """

    def __init__(self, *, every: int = 1):
        self.every = int(every)
        self._times: list[float] = []
        self._power: list[float] = []
        self._armed = False

    def attach(self, sim):
        self._jx_pre = np.empty_like(sim.jx)
        self._jz_pre = np.empty_like(sim.jz)
        self._coeff = sim.dissipation_coeff * sim.dx ** 2

    def capture_pre(self, sim):
        self._armed = sim.step_count % self.every == 0
        if not self._armed:
            return
        np.copyto(self._jx_pre, sim.jx)
        np.copyto(self._jz_pre, sim.jz)

    def record(self, sim):
        if not self._armed:
            return
        p = 0.0
        if sim.jx.size:
            jbar = 0.5 * (self._jx_pre + sim.jx)
            p += float(np.dot(jbar, jbar))
        if sim.jz.size:
            jbar = 0.5 * (self._jz_pre + sim.jz)
            p += float(np.dot(jbar, jbar))
        self._power.append(self._coeff * p)
        self._times.append(sim.time)

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self._times)

    @property
    def power(self) -> np.ndarray:
        return np.asarray(self._power)


class FieldSnapshot(Monitor):
    """Running discrete Fourier transform of Ex and Ez at one frequency.

    Accumulates E(t) exp(+i omega t) dt on a subsampled cadence, which is
    plenty below the Nyquist limit of the cadence.  retune() rezeros the
    accumulators to lock onto a refined frequency mid-run.
    """

    def __init__(self, omega: float, cadence: int = 4):
        self.omega = float(omega)
        self.cadence = int(cadence)
        self.start_time = 0.0

    def attach(self, sim):
        self._ex_acc = np.zeros_like(sim.ex, dtype=np.complex128)
        self._ez_acc = np.zeros_like(sim.ez, dtype=np.complex128)
        self._sim = sim
        self.start_time = sim.time

    def retune(self, omega: float) -> None:
        self.omega = float(omega)
        self._ex_acc[:] = 0.0
        self._ez_acc[:] = 0.0
        self.start_time = self._sim.time

    def record(self, sim):
        n = sim.step_count
        if n % self.cadence:
            return
        w = self.cadence * sim.dt * np.exp(1j * self.omega * sim.time)
        self._ex_acc.real += w.real * sim.ex
        self._ex_acc.imag += w.imag * sim.ex
        self._ez_acc.real += w.real * sim.ez
        self._ez_acc.imag += w.imag * sim.ez

    @property
    def ex_dft(self) -> np.ndarray:
        return self._ex_acc

    @property
    def ez_dft(self) -> np.ndarray:
        return self._ez_acc


def _component_permittivity(grid: MaterialGrid, eps_d: float, eps_inf: float):
    """Per-node relative permittivity for Ex and Ez with the metal rule:
    a node is metal only if both touching cells are metal; otherwise it
    averages the permittivities of its non-metal neighbors."""
    cells = grid.cell_kind
    metal = cells == CellKind.METAL
    epsc = np.where(cells == CellKind.DIELECTRIC, eps_d, 1.0)

    def along(axis):
        if axis == 0:
            a, b = epsc[:-1, :], epsc[1:, :]
            ma, mb = metal[:-1, :], metal[1:, :]
        else:
            a, b = epsc[:, :-1], epsc[:, 1:]
            ma, mb = metal[:, :-1], metal[:, 1:]
        interior = np.where(
            ma & mb, eps_inf,
            np.where(ma, b, np.where(mb, a, 0.5 * (a + b))))
        return interior

    nx, nz = grid.nx, grid.nz
    epsx = np.empty((nx, nz + 1))
    epsx[:, 0] = epsc[:, 0]
    epsx[:, -1] = epsc[:, -1]
    epsx[:, 1:-1] = along(1)
    epsz = np.empty((nx + 1, nz))
    epsz[0, :] = epsc[0, :]
    epsz[-1, :] = epsc[-1, :]
    epsz[1:-1, :] = along(0)
    return epsx, epsz


class Simulation:
    """Time stepper for one material grid.

    The constructor precomputes every coefficient array; run() advances
    the fields, injecting sources at half steps and letting monitors
    sample around each update.  Fields are plain attributes (ex, ez, hy)
    so tests can set initial conditions directly.
    """

    def __init__(self, grid: MaterialGrid, *,
                 metal: DrudeMetal = SILVER,
                 dielectric: Dielectric = GALLIUM_ARSENIDE,
                 courant: float = 0.99,
                 boundary: str = "pml",
                 pml: PmlSpec = PmlSpec()):
        if boundary not in ("pml", "periodic"):
            raise ValueError(f"unknown boundary {boundary!r}")
        if not 0.0 < courant <= 1.0:
            raise ValueError("courant factor must be in (0, 1]")
        self.grid = grid
        self.metal = metal
        self.dielectric = dielectric
        self.boundary = boundary
        self.pml_spec = pml
        self.nx, self.nz = grid.nx, grid.nz
        self.dx = grid.dx
        self.dt = courant * self.dx / (C0 * math.sqrt(2.0))

        self.ex = np.zeros((self.nx, self.nz + 1))
        self.ez = np.zeros((self.nx + 1, self.nz))
        self.hy = np.zeros((self.nx, self.nz))

        eps_d = dielectric.permittivity
        self.epsx, self.epsz = _component_permittivity(grid, eps_d, metal.eps_inf)
        self._ch = self.dt / (MU0 * self.dx)
        self._cex = self.dt / (EPS0 * self.epsx * self.dx)
        self._cez = self.dt / (EPS0 * self.epsz * self.dx)

        xm = grid.ex_metal_mask()
        zm = grid.ez_metal_mask()
        ix, kx = np.nonzero(xm)
        iz, kz = np.nonzero(zm)
        self.jx_idx = (ix, kx)
        self.jz_idx = (iz, kz)
        self.jx = np.zeros(ix.size)
        self.jz = np.zeros(iz.size)
        cj = self.dt / (EPS0 * metal.eps_inf)
        self._cjx = np.full(ix.size, cj)
        self._cjz = np.full(iz.size, cj)

        wp = metal.plasma_omega
        eta = metal.damping_rate
        self._alpha = (1.0 - eta * self.dt / 2.0) / (1.0 + eta * self.dt / 2.0)
        self._beta = self.dt * EPS0 * wp ** 2 / (1.0 + eta * self.dt / 2.0)
        self.current_energy_coeff = 1.0 / (2.0 * EPS0 * wp ** 2)
        self.dissipation_coeff = eta / (EPS0 * wp ** 2)

        self._build_pml()
        self.sources: list[GaussianPulse] = []
        self._source_targets: list[np.ndarray] = []
        self._source_coeffs: list[np.ndarray | float] = []
        self.monitors: list[Monitor] = []
        self.step_count = 0
        self._kernels = None
        if boundary == "pml":
            from . import _kernels
            self._kernels = _kernels

    # -- setup ---------------------------------------------------------

    def _pml_strip(self, depths: np.ndarray, eps_local: np.ndarray):
        """b and a recursion coefficients for one strip.  depths holds the
        normalized distance into the absorber (1 at the outer wall) per
        strip slot; eps_local the node permittivities, same shape."""
        m = self.pml_spec.order
        L = self.grid.pml_cells * self.dx
        base = -(m + 1.0) * math.log(self.pml_spec.target_reflection) \
            * EPS0 * C0 / (2.0 * L)
        sigma = base * np.sqrt(eps_local) * np.clip(depths, 0.0, 1.0) ** m
        b = np.exp(-sigma * self.dt / EPS0)
        return b, b - 1.0

    def _build_pml(self):
        self._pml = {}
        p = self.grid.pml_cells
        if p <= 0:
            return
        nx, nz = self.nx, self.nz
        cells = self.grid.cell_kind
        eps_cell = np.where(cells == CellKind.DIELECTRIC,
                            self.dielectric.permittivity, 1.0)
        s = np.arange(p)

        # z strips (both boundary modes)
        d_h_lo = (p - s - 0.5) / p
        d_h_hi = (s + 0.5) / p
        self._pml["h_z"] = (
            np.zeros((nx, p)), np.zeros((nx, p)),
            *self._pml_strip(d_h_lo[None, :], eps_cell[:, :p]),
            *self._pml_strip(d_h_hi[None, :], eps_cell[:, nz - p:]),
        )
        d_e_lo = (p - s) / p
        d_e_hi = s / p
        self._pml["ex_z"] = (
            np.zeros((nx, p)), np.zeros((nx, p)),
            *self._pml_strip(d_e_lo[None, :], self.epsx[:, :p]),
            *self._pml_strip(d_e_hi[None, :], self.epsx[:, nz - p:nz]),
        )
        if self.boundary != "pml":
            return
        # x strips
        self._pml["h_x"] = (
            np.zeros((p, nz)), np.zeros((p, nz)),
            *self._pml_strip(d_h_lo[:, None], eps_cell[:p, :]),
            *self._pml_strip(d_h_hi[:, None], eps_cell[nx - p:, :]),
        )
        self._pml["ez_x"] = (
            np.zeros((p, nz)), np.zeros((p, nz)),
            *self._pml_strip(d_e_lo[:, None], self.epsz[:p, :]),
            *self._pml_strip(d_e_hi[:, None], self.epsz[nx - p:nx, :]),
        )

    def add_source(self, source: GaussianPulse) -> GaussianPulse:
        arr = self.ez if source.component == "ez" else self.ex
        eps = self.epsz if source.component == "ez" else self.epsx
        if source.i is None:
            # full-row drive; keep conducting-wall and seam columns out
            lo, hi = 0, arr.shape[0]
            if source.component == "ez":
                hi -= 1
                if self.boundary == "pml":
                    lo += 1
            target = arr[lo:hi, source.k]
            coeff = self.dt / (EPS0 * eps[lo:hi, source.k])
        else:
            target = arr[source.i: source.i + 1, source.k]
            coeff = self.dt / (EPS0 * eps[source.i, source.k])
        self.sources.append(source)
        self._source_targets.append(target)
        self._source_coeffs.append(coeff)
        return source

    def add_monitor(self, monitor: Monitor) -> Monitor:
        monitor.attach(self)
        self.monitors.append(monitor)
        return monitor

    # -- time ----------------------------------------------------------

    @property
    def time(self) -> float:
        """Time of the current E field values."""
        return self.step_count * self.dt

    @property
    def time_h(self) -> float:
        """Time of the current Hy and J values."""
        return (self.step_count - 0.5) * self.dt

    def steps_for(self, duration: float) -> int:
        return int(math.ceil(duration / self.dt))

    # -- stepping ------------------------------------------------------

    def _step_kernels(self):
        K = self._kernels
        p = self.grid.pml_cells
        K.h_update(self.hy, self.ex, self.ez, self._ch)
        if p:
            K.h_pml_x(self.hy, self.ez, *self._pml["h_x"], self._ch)
            K.h_pml_z(self.hy, self.ex, *self._pml["h_z"], self._ch)
        if self.jx.size:
            K.j_update(self.jx, *self.jx_idx, self.ex, self._alpha, self._beta)
        if self.jz.size:
            K.j_update(self.jz, *self.jz_idx, self.ez, self._alpha, self._beta)
        K.ex_update(self.ex, self.hy, self._cex)
        K.ez_update(self.ez, self.hy, self._cez)
        if p:
            K.ex_pml_z(self.ex, self.hy, *self._pml["ex_z"], self._cex)
            K.ez_pml_x(self.ez, self.hy, *self._pml["ez_x"], self._cez)
        if self.jx.size:
            K.subtract_current(self.ex, self.jx, *self.jx_idx, self._cjx)
        if self.jz.size:
            K.subtract_current(self.ez, self.jz, *self.jz_idx, self._cjz)

    def _step_periodic(self):
        ex, ez, hy = self.ex, self.ez, self.hy
        p = self.grid.pml_cells
        nz = self.nz
        hy += self._ch * ((ez[1:, :] - ez[:-1, :]) - (ex[:, 1:] - ex[:, :-1]))
        if p:
            psi_lo, psi_hi, b_lo, a_lo, b_hi, a_hi = self._pml["h_z"]
            du = ex[:, 1:p + 1] - ex[:, :p]
            psi_lo[:] = b_lo * psi_lo + a_lo * du
            hy[:, :p] -= self._ch * psi_lo
            du = ex[:, nz - p + 1:] - ex[:, nz - p:nz]
            psi_hi[:] = b_hi * psi_hi + a_hi * du
            hy[:, nz - p:] -= self._ch * psi_hi
        if self.jx.size:
            ix, kx = self.jx_idx
            self.jx *= self._alpha
            self.jx += self._beta * ex[ix, kx]
        if self.jz.size:
            iz, kz = self.jz_idx
            self.jz *= self._alpha
            self.jz += self._beta * ez[iz, kz]
        ex[:, 1:-1] -= self._cex[:, 1:-1] * (hy[:, 1:] - hy[:, :-1])
        if p:
            psi_lo, psi_hi, b_lo, a_lo, b_hi, a_hi = self._pml["ex_z"]
            du = hy[:, 1:p] - hy[:, :p - 1]
            psi_lo[:, 1:] = b_lo[:, 1:] * psi_lo[:, 1:] + a_lo[:, 1:] * du
            ex[:, 1:p] -= self._cex[:, 1:p] * psi_lo[:, 1:]
            du = hy[:, nz - p:] - hy[:, nz - p - 1:-1]
            psi_hi[:] = b_hi * psi_hi + a_hi * du
            ex[:, nz - p:nz] -= self._cex[:, nz - p:nz] * psi_hi
        ez[:-1, :] += self._cez[:-1, :] * (hy - np.roll(hy, 1, axis=0))
        if self.jz.size:
            iz, kz = self.jz_idx
            ez[iz, kz] -= self._cjz * self.jz
        if self.jx.size:
            ix, kx = self.jx_idx
            ex[ix, kx] -= self._cjx * self.jx
        ez[-1, :] = ez[0, :]

    def run(self, n_steps: int, *, check_every: int = 1000) -> None:
        if self.boundary == "periodic":
            self.ez[-1, :] = self.ez[0, :]
            step = self._step_periodic
        else:
            step = self._step_kernels
        monitors = self.monitors
        for _ in range(int(n_steps)):
            for m in monitors:
                m.capture_pre(self)
            step()
            t_half = (self.step_count + 0.5) * self.dt
            for src, target, coeff in zip(
                    self.sources, self._source_targets, self._source_coeffs):
                v = src.waveform(t_half)
                if v != 0.0:
                    target -= coeff * v
            if self.boundary == "periodic":
                self.ez[-1, :] = self.ez[0, :]
            self.step_count += 1
            for m in monitors:
                m.record(self)
            if self.step_count % check_every == 0:
                self._check_finite()
        self._check_finite()

    def _check_finite(self):
        if not (np.isfinite(self.ez).all() and np.isfinite(self.hy).all()):
            raise InstabilityError(self.step_count)

    def total_energy(self) -> float:
        """Instantaneous product energy of the whole domain (diagnostic;
        pairs E with itself, so it is approximate between half steps)."""
        u = 0.5 * EPS0 * (float(np.sum(self.epsx * self.ex ** 2))
                          + float(np.sum(self.epsz * self.ez ** 2)))
        u += 0.5 * MU0 * float(np.sum(self.hy ** 2))
        u += self.current_energy_coeff * (
            float(np.dot(self.jx, self.jx)) + float(np.dot(self.jz, self.jz)))
        return u * self.dx ** 2
