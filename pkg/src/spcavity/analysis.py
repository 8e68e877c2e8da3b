"""Post-processing: resonances, quality factors, mode geometry.

Resonance extraction works on a recorded ring-down.  Peaks are located on
a Hann-windowed spectrum, but each mode is then re-filtered from the raw
(unwindowed) record with a Gaussian bandpass and inverted to a complex
envelope, because windowing would bend the very exponential the fit needs.
Frequency comes from the phase slope of the analytic signal and the decay
time from a straight-line fit of the log envelope, so the usable Q range
is set by the record length, not by the FFT bin width.  The spectral
linewidth is only used as a cross-check, and only when the record is long
enough to resolve it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.signal import find_peaks, peak_widths

from .geometry import CellKind, MaterialGrid
from .materials import Dielectric, DrudeMetal, GALLIUM_ARSENIDE, SILVER

__all__ = [
    "FitQualityError",
    "Resonance",
    "DecayFit",
    "ModeVolume",
    "find_resonances",
    "q_from_energy_balance",
    "energy_balance_residual",
    "mode_volume",
    "cell_center_intensity",
    "fit_z_decay",
    "standing_wave_peaks",
    "fit_plane_wave_k",
]

Q_CAP = 1.0e6


class FitQualityError(RuntimeError):
    """A fit did not meet its quality threshold."""


@dataclass(frozen=True)
class Resonance:
    """One fitted mode.

    q is capped at Q_CAP; q_is_lower_bound marks records that show no
    measurable decay, where q means "at least this much".  linewidth_q is
    the independent spectral-width estimate, present only when the record
    is long enough to resolve the line; overlapping flags peaks closer
    than about two resolution widths, whose fits share energy.
    """

    omega: float
    q: float
    decay_time: float
    amplitude: float
    q_is_lower_bound: bool = False
    linewidth_q: float | None = None
    overlapping: bool = False
    fit_r2: float = float("nan")

    @property
    def frequency_ev(self) -> float:
        from .constants import ev_from_omega
        return ev_from_omega(self.omega)


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares line y = a + b x; returns (a, b, r_squared)."""
    b, a = np.polyfit(x, y, 1)
    resid = y - (a + b * x)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return a, b, r2


def find_resonances(
    times: np.ndarray,
    values: np.ndarray,
    *,
    max_modes: int = 8,
    min_rel_amplitude: float = 0.02,
    fit_window: tuple[float, float] = (0.3, 0.9),
    q_cap: float = Q_CAP,
) -> list[Resonance]:
    """Extract decaying modes from a ring-down record.

    Returns resonances sorted by spectral amplitude, strongest first.
    The record should contain only free decay (no drive).
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(values, dtype=float)
    if t.size != x.size or t.size < 32:
        raise ValueError("need matching time and value arrays, at least 32 samples")
    dt = t[1] - t[0]
    n = x.size
    duration = n * dt

    window = np.hanning(n)
    mag = np.abs(np.fft.rfft(x * window))
    omega_bins = 2.0 * math.pi * np.fft.rfftfreq(n, dt)
    d_omega = omega_bins[1]
    if mag.max() == 0.0:
        return []

    floor = min_rel_amplitude * mag.max()
    peaks, _ = find_peaks(mag, height=floor, prominence=0.5 * floor)
    if peaks.size == 0:
        return []
    order = np.argsort(mag[peaks])[::-1][:max_modes]
    peaks = peaks[order]
    widths = peak_widths(mag, peaks, rel_height=0.5)[0]  # bins

    # full complex spectrum of the *unwindowed* record for the bandpass,
    # zero padded so the filter convolution is linear: circular wrap would
    # fold the loud start of the record onto the quiet tail and flatten
    # the very decay being measured
    n_pad = 2 * n
    spec = np.fft.fft(x, n_pad)
    omega_full = 2.0 * math.pi * np.fft.fftfreq(n_pad, dt)
    lo = int(fit_window[0] * n)
    hi = int(fit_window[1] * n)
    amp_norm = 2.0 / window.sum()

    results: list[Resonance] = []
    for p, fwhm_bins in zip(peaks, widths):
        omega_pk = omega_bins[p]
        gap = np.inf
        overlapping = False
        for p2, w2 in zip(peaks, widths):
            if p2 == p:
                continue
            sep = abs(omega_bins[p2] - omega_pk)
            gap = min(gap, sep)
            if sep < d_omega * (fwhm_bins + w2):
                overlapping = True

        sigma = max(4.0 * d_omega, fwhm_bins * d_omega)
        if np.isfinite(gap):
            sigma = min(sigma, gap / 3.0)
        sigma = min(sigma, 0.05 * omega_pk)
        g = np.exp(-0.5 * ((omega_full - omega_pk) / sigma) ** 2)
        g[omega_full <= 0.0] = 0.0
        z = np.fft.ifft(spec * g * 2.0)[lo:hi]
        tz = t[lo:hi] - t[0]

        env = np.abs(z)
        if env.min() <= 0.0:
            continue
        _, slope, r2 = _linear_fit(tz, np.log(env))
        phase = np.unwrap(np.angle(z))
        _, omega_fit, _ = _linear_fit(tz, phase)
        if not (0.0 < omega_fit < omega_bins[-1]):
            omega_fit = omega_pk

        if slope < 0.0:
            tau = -1.0 / slope
            q = 0.5 * omega_fit * tau
            # A tone that sheds less than ~5% of its amplitude across the
            # fit window is indistinguishable from an undamped one: the
            # bandpass leaves ripple on the envelope at that level, and the
            # fitted slope is then an artifact of the record length.
            resolved = -slope * (tz[-1] - tz[0]) > 0.05
            capped = (q > q_cap) or not resolved
        else:
            tau = math.inf
            q = math.inf
            capped = True
        if capped:
            q = q_cap
            tau = 2.0 * q / omega_fit

        # spectral-width cross-check, only when the record can resolve it
        line_q = None
        cycles = duration * omega_fit / (2.0 * math.pi)
        if not capped and q <= cycles / 4.0 and fwhm_bins > 2.0:
            line_q = omega_fit / (fwhm_bins * d_omega)

        results.append(Resonance(
            omega=float(omega_fit),
            q=float(q),
            decay_time=float(tau),
            amplitude=float(mag[p] * amp_norm),
            q_is_lower_bound=bool(capped),
            linewidth_q=line_q,
            overlapping=overlapping,
            fit_r2=float(r2),
        ))

    results.sort(key=lambda r: r.amplitude, reverse=True)
    return results


def q_from_energy_balance(omega: float, energy: np.ndarray,
                          power_out: np.ndarray) -> float:
    """Quality factor from stored energy against outflow, averaged over a
    ring-down window.  Both series decay proportionally, so the ratio of
    means equals the ratio at any instant."""
    e = np.asarray(energy, dtype=float)
    p = np.asarray(power_out, dtype=float)
    p_mean = p.mean()
    if p_mean <= 0.0:
        raise FitQualityError("mean outflow is not positive; no decay to measure")
    return float(omega * e.mean() / p_mean)


def energy_balance_residual(dt: float, energy: np.ndarray,
                            flux_centered: np.ndarray,
                            absorbed: np.ndarray | None = None) -> np.ndarray:
    """Per-step residual of storage + outflow (+ absorption), length n-1.

    Feeding the monitor series of one run, the residual is round-off for
    any region with no source or absorber cells inside.
    """
    u = np.asarray(energy, dtype=float)
    r = (u[1:] - u[:-1]) / dt + np.asarray(flux_centered, dtype=float)[1:]
    if absorbed is not None:
        r = r + np.asarray(absorbed, dtype=float)[1:]
    return r


def cell_center_intensity(ex: np.ndarray, ez: np.ndarray) -> np.ndarray:
    """|E|^2 on cell centers from staggered (possibly complex) components."""
    cx = 0.5 * (ex[:, :-1] + ex[:, 1:])
    cz = 0.5 * (ez[:-1, :] + ez[1:, :])
    return np.abs(cx) ** 2 + np.abs(cz) ** 2


@dataclass(frozen=True)
class ModeVolume:
    """Energy-weighted footprint of a mode profile (2D, so an area)."""

    area: float
    peak_index: tuple[int, int]

    def volume(self, transverse_width: float) -> float:
        return self.area * transverse_width


def mode_volume(
    grid: MaterialGrid,
    ex: np.ndarray,
    ez: np.ndarray,
    energy_ev: float,
    *,
    metal: DrudeMetal = SILVER,
    dielectric: Dielectric = GALLIUM_ARSENIDE,
    margin: int | None = None,
) -> ModeVolume:
    """Effective mode area: integral of energy density over its peak.

    The density is eps_w |E|^2 with the dispersive energy weight inside
    the metal, the static permittivity in the dielectric, and 1 in air.
    Raises FitQualityError when the density peaks inside the absorber
    margin, which means the profile is not a localized mode.
    """
    intensity = cell_center_intensity(ex, ez)
    kinds = grid.cell_kind
    weight = np.ones_like(intensity)
    weight[kinds == CellKind.DIELECTRIC] = dielectric.permittivity
    weight[kinds == CellKind.METAL] = metal.energy_weight(energy_ev)
    density = weight * intensity

    flat_peak = int(np.argmax(density))
    peak = np.unravel_index(flat_peak, density.shape)
    peak_value = density[peak]
    if peak_value <= 0.0:
        raise FitQualityError("field profile is identically zero")
    if margin is None:
        margin = grid.pml_cells + 4
    i, k = int(peak[0]), int(peak[1])
    if (i < margin or i >= grid.nx - margin
            or k < margin or k >= grid.nz - margin):
        raise FitQualityError(
            f"energy density peaks at ({i}, {k}), inside the {margin}-cell "
            "boundary margin; the profile is not a confined mode")
    area = float(np.sum(density)) * grid.dx ** 2 / float(peak_value)
    return ModeVolume(area=area, peak_index=(i, k))


@dataclass(frozen=True)
class DecayFit:
    length: float  # meters, 1/e length of the fitted quantity
    r_squared: float


def fit_z_decay(
    intensity_column: np.ndarray,
    dx_nm: float,
    interface_k: int,
    *,
    fit_range_nm: tuple[float, float] = (10.0, 120.0),
    min_r2: float = 0.98,
) -> DecayFit:
    """Exponential decay length of |E|^2 with depth below the interface.

    intensity_column holds cell-center values along z (index k, upward).
    Fits ln I against depth over fit_range_nm and raises FitQualityError
    when the profile is not exponential to the requested r^2.
    """
    col = np.asarray(intensity_column, dtype=float)
    k_idx = np.arange(col.size)
    depth_nm = (interface_k - k_idx - 0.5) * dx_nm
    sel = (depth_nm >= fit_range_nm[0]) & (depth_nm <= fit_range_nm[1])
    if np.count_nonzero(sel) < 4:
        raise FitQualityError("fewer than 4 samples in the depth fit range")
    y = col[sel]
    if np.any(y <= 0.0):
        raise FitQualityError("non-positive intensity in the depth fit range")
    _, slope, r2 = _linear_fit(depth_nm[sel] * 1e-9, np.log(y))
    if r2 < min_r2:
        raise FitQualityError(
            f"depth profile is not exponential (r^2 = {r2:.4f} < {min_r2})")
    if slope >= 0.0:
        raise FitQualityError("intensity grows with depth; no bound tail")
    return DecayFit(length=float(-1.0 / slope), r_squared=float(r2))


def standing_wave_profile(
    grid: MaterialGrid,
    ex: np.ndarray,
    ez: np.ndarray,
    depth_nm: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Horizontal line cut of the intensity at a depth below the interface.

    Returns (x_nm, |E|^2, |Ex|^2, |Ez|^2) on cell centers along the row
    nearest the requested depth.  Depth is measured downward from the
    interface plane into the dielectric.
    """
    if depth_nm < 0.0:
        raise ValueError("depth_nm must be nonnegative")
    k = grid.interface_k - 1 - int(depth_nm / grid.dx_nm)
    if k < 0:
        raise ValueError(
            f"depth {depth_nm} nm reaches below the simulated substrate")
    cx = 0.5 * (ex[:, k] + ex[:, k + 1])
    cz = 0.5 * (ez[:-1, k] + ez[1:, k])
    along_x = np.abs(cx) ** 2
    along_z = np.abs(cz) ** 2
    x_nm = (np.arange(grid.nx) + 0.5) * grid.dx_nm
    return x_nm, along_x + along_z, along_x, along_z


def standing_wave_peaks(profile: np.ndarray,
                        rel_prominence: float = 0.25) -> np.ndarray:
    """Indices of antinodes in an intensity profile, ignoring ripple below
    rel_prominence of the full range."""
    y = np.asarray(profile, dtype=float)
    span = y.max() - y.min()
    if span <= 0.0:
        return np.array([], dtype=int)
    peaks, _ = find_peaks(y, prominence=rel_prominence * span)
    return peaks


def fit_plane_wave_k(
    x: np.ndarray,
    u: np.ndarray,
    k_lo: float,
    k_hi: float,
    *,
    n_scan: int = 400,
) -> tuple[float, float]:
    """Wavenumber of a complex profile u(x) = A e^{ikx} + B e^{-ikx}.

    Scans k over [k_lo, k_hi], solving for the two amplitudes at each
    candidate, then polishes the best minimum.  Returns (k, residual)
    where residual is the relative misfit of the two-wave model.
    """
    xs = np.asarray(x, dtype=float)
    us = np.asarray(u, dtype=complex)
    norm = float(np.linalg.norm(us))
    if norm == 0.0:
        raise ValueError("empty profile")

    def misfit(k: float) -> float:
        basis = np.column_stack((np.exp(1j * k * xs), np.exp(-1j * k * xs)))
        _, res, *_ = np.linalg.lstsq(basis, us, rcond=None)
        if res.size:
            return math.sqrt(float(res[0])) / norm
        fit = basis @ np.linalg.lstsq(basis, us, rcond=None)[0]
        return float(np.linalg.norm(us - fit)) / norm

    ks = np.linspace(k_lo, k_hi, n_scan)
    errs = np.array([misfit(k) for k in ks])
    jbest = int(np.argmin(errs))
    lo = ks[max(jbest - 1, 0)]
    hi = ks[min(jbest + 1, n_scan - 1)]
    out = minimize_scalar(misfit, bounds=(lo, hi), method="bounded",
                          options={"xatol": (k_hi - k_lo) * 1e-7})
    return float(out.x), float(out.fun)
