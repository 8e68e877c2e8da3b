"""Orchestrated runs: mode characterization, parameter sweeps, emitter maps.

A sweep point runs in two phases: a broadband survey locates the
resonances admitted by the source band and the grating's first-order
mirror window, then a narrowband tone burst re-excites the strongest one
and everything quantitative comes from its clean ring-down: the decay
fit, the energy/flux/absorption balance, and a lock-in field snapshot
retuned to the line.  Sweeps cache each point on disk under a content
hash of its configuration, so interrupted or repeated sweeps skip
finished work; data files carry no timestamps (those live in the
manifest) and rerunning a finished sweep rewrites nothing.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as config_mod
from .analysis import (
    FitQualityError,
    Q_CAP,
    cell_center_intensity,
    find_resonances,
    fit_z_decay,
    mode_volume,
    standing_wave_peaks,
    standing_wave_profile,
)
from .constants import C0, ev_from_omega, omega_from_ev
from .cqed import EmitterSpec, evaluate_mode, field_fraction, purcell_enhancement
from .fdtd import (
    AbsorptionRegion,
    EnergyRegion,
    FieldSnapshot,
    FluxBox,
    GaussianPulse,
    PointProbe,
    Simulation,
)
from .geometry import (
    MaterialGrid,
    PlacementError,
    emitter_position,
    export_field,
    load_field,
)
from .materials import (
    DispersionPoleError,
    SaturationError,
    grating_stop_band,
    loss_factor_to_temperature,
)

# fractions of the cavity length at which ring-down probes sit; staggered
# and incommensurate with the grating pitch so no probe set straddles all
# antinodes of any one mode
PROBE_OFFSETS = (-0.31, 0.11, 0.37)

# averaging window for the energy-balance quality factors, as fractions
# of the ring-down record; late enough that short-lived neighbors have
# decayed out of the mix
BALANCE_WINDOW = (0.5, 0.9)

# a mode whose quality factor collapses below this fraction of the
# reference is treated as reshaped by absorption rather than merely
# damped (loss and temperature sweeps)
PERTURBED_Q_FRACTION = 0.4

SWEEP_CSV_COLUMNS = (
    "omega0_ev", "omega0_over_omega_p", "xi", "temperature_k",
    "q_rad", "q_abs", "q_total", "q_ringdown",
    "purcell_per_um", "g_ghz", "kappa_ghz", "strong_coupling",
)

AXIS_COLUMN = {
    "cavity_length": "cavity_length_nm",
    "emitter_depth": "emitter_depth_nm",
    "emitter_x": "emitter_x_nm",
    "loss_factor": "loss_factor",
    "temperature": "temperature_k",
    "duty_cycle": "duty_cycle",
}


class SweepError(RuntimeError):
    """Every point of a sweep failed."""


def _package_version() -> str:
    from . import __version__
    return __version__


@dataclass
class PointResult:
    """Everything one characterization run produced.

    modes holds one serializable record per resonance, strongest first;
    dominant indexes the record that carries the full energy-balance and
    snapshot-derived fields.  The complex snapshot arrays stay in memory
    (and on disk next to the report) for position maps.
    """

    config: config_mod.RunConfig
    grid: MaterialGrid
    modes: list
    dominant: int | None
    snapshot_ex: np.ndarray | None
    snapshot_ez: np.ndarray | None
    notes: list
    wall_time_s: float
    series: dict | None = None

    @property
    def dominant_mode(self) -> dict | None:
        if self.dominant is None:
            return None
        return self.modes[self.dominant]


def point_config(base: config_mod.RunConfig, axis: str,
                 value: float) -> config_mod.RunConfig:
    """The per-point configuration a sweep axis value induces."""
    data = base.to_dict()
    if axis == "cavity_length":
        data["geometry"]["cavity_length_nm"] = float(value)
    elif axis == "emitter_depth":
        data["emitter"]["depth_nm"] = float(value)
    elif axis == "emitter_x":
        data["emitter"]["x_offset_nm"] = float(value)
    elif axis == "loss_factor":
        data["materials"]["metal"]["loss_factor"] = float(value)
        data["materials"]["temperature_k"] = None
    elif axis == "temperature":
        data["materials"]["temperature_k"] = float(value)
    elif axis == "duty_cycle":
        if not 0.0 < value < 1.0:
            raise ValueError("duty cycle must lie in (0, 1)")
        data["geometry"]["groove_width_nm"] = float(
            value * data["geometry"]["period_nm"])
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")
    return config_mod.from_dict(data)


def point_hash(cfg: config_mod.RunConfig) -> str:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


# -- single-point protocol -------------------------------------------------


def characterize(cfg: config_mod.RunConfig, *, keep_series: bool = False,
                 progress=None) -> PointResult:
    """Run the locate-then-ring protocol for one configuration.

    A broadband survey run locates the resonances inside the admitted
    band (the source band cut down to the window where the grating
    mirrors in first order); the strongest spectral line is then
    re-excited with the narrowband ring source, and the decay fit, the
    energy balance, and the lock-in snapshot all come from that clean
    ring-down.  When the configured source is already no wider than the
    ring bandwidth, the run itself is the ring run and the survey is
    skipped; the loss and temperature sweeps re-excite this way.
    progress, when given, is called as progress(steps_done, steps_total)
    at least once per check interval.
    """
    t_start = time.perf_counter()
    notes: list[str] = []
    grid = cfg.grid()
    metal = cfg.metal()
    diel = cfg.dielectric()
    check = cfg.fdtd.check_every

    two_phase = cfg.source.rel_bandwidth > cfg.source.ring_rel_bandwidth
    survey_reps: list = []
    ring_ev = cfg.source.center_ev
    done = 0
    total = _planned_steps(cfg, grid)

    if two_phase:
        survey_reps, located, done = _survey_run(
            cfg, grid, metal, diel, check, progress, total, notes)
        if located is None:
            notes.append("no spectral line in the admitted band; "
                         "ring run skipped")
            return PointResult(
                config=cfg, grid=grid,
                modes=[_base_record(m, cfg, metal) for m in survey_reps],
                dominant=None, snapshot_ex=None, snapshot_ez=None,
                notes=notes, wall_time_s=time.perf_counter() - t_start)
        ring_ev = ev_from_omega(located)

    sim = Simulation(grid, metal=metal, dielectric=diel,
                     courant=cfg.fdtd.dt_safety)
    si, sk = emitter_position(grid, cfg.source.x_offset_nm,
                              cfg.source.depth_nm)
    pulse = GaussianPulse(
        center_ev=ring_ev, i=si, k=sk,
        rel_bandwidth=cfg.source.ring_rel_bandwidth,
        amplitude=cfg.source.amplitude)
    sim.add_source(pulse)
    probes = _place_probes(sim, cfg, grid)

    margin = grid.pml_cells + cfg.monitors.flux_margin_cells
    bounds = (margin, grid.nx - margin, margin, grid.nz - margin)
    energy = sim.add_monitor(
        EnergyRegion(*bounds, every=cfg.monitors.cadence))
    box = sim.add_monitor(FluxBox(*bounds))
    absorbed = sim.add_monitor(AbsorptionRegion(every=1))
    snap = None
    if cfg.monitors.snapshot:
        snap = sim.add_monitor(
            FieldSnapshot(pulse.omega0, cadence=cfg.monitors.cadence))

    period = 2.0 * math.pi / pulse.omega0
    n_src = sim.steps_for(pulse.t_off)
    n_ring = sim.steps_for(cfg.fdtd.duration_periods * period)
    n_settle = min(sim.steps_for(cfg.fdtd.settle_periods * period),
                   max(n_ring - 1, 0))
    band = _admitted_band(pulse.omega0, cfg.source.ring_rel_bandwidth,
                          cfg, metal, diel, notes)

    _run_chunked(sim, n_src + n_settle, check, progress, total, done)
    omega_est = _dominant_frequency(probes, n_src, *band)
    if snap is not None:
        snap.retune(omega_est if omega_est else pulse.omega0)
    _run_chunked(sim, n_ring - n_settle, check, progress, total, done)

    times = probes[0].times
    ring = slice(n_src, None)
    pooled = []
    for pr in probes:
        pooled.extend(find_resonances(times[ring], pr.values[ring]))
    ring_reps = _merge_modes(pooled, *band)
    if not ring_reps:
        notes.append("re-excitation at %.4f eV left no decaying line "
                     "in the admitted band" % ring_ev)

    if two_phase:
        modes = [_base_record(m, cfg, metal) for m in survey_reps]
    else:
        modes = [_base_record(m, cfg, metal) for m in ring_reps]
    dominant = None
    if ring_reps:
        if two_phase:
            dominant = _fold_in(modes, _base_record(ring_reps[0], cfg, metal))
        else:
            dominant = 0

    if dominant is not None:
        rung = ring_reps[0]
        _attach_balance(modes[dominant], rung, sim, energy, box, absorbed,
                        pulse, n_src, n_ring, notes)
        if snap is not None:
            _attach_snapshot_fields(modes[dominant], rung, cfg, grid,
                                    metal, diel, snap, notes)

    result = PointResult(
        config=cfg,
        grid=grid,
        modes=modes,
        dominant=dominant,
        snapshot_ex=None if snap is None else snap.ex_dft,
        snapshot_ez=None if snap is None else snap.ez_dft,
        notes=notes,
        wall_time_s=time.perf_counter() - t_start,
    )
    if keep_series:
        result.series = {
            "probe0": (probes[0].times, probes[0].values),
            "energy": (energy.times, energy.energy),
            "flux_out": (box.times, box.outward_power),
            "absorbed": (absorbed.times, absorbed.power),
        }
    return result


def _place_probes(sim, cfg, grid):
    probes = []
    length = cfg.geometry.cavity_length_nm
    for frac in PROBE_OFFSETS:
        try:
            pi, pk = emitter_position(grid, frac * length,
                                      cfg.monitors.probe_depth_nm)
        except PlacementError:
            continue
        probes.append(sim.add_monitor(PointProbe(pi, pk, "ez")))
    if not probes:
        raise PlacementError("no valid probe position below the cavity")
    return probes


def _admitted_band(omega0, rel_bandwidth, cfg, metal, diel, notes):
    """Angular-frequency window a resonance may come from: the source
    band intersected with the window where the grating is a first-order
    mirror, so long-lived lines of other origin (the second-order
    standing wave above it) never win the amplitude contest."""
    half = max(0.75 * rel_bandwidth, 0.05) * omega0
    lo, hi = omega0 - half, omega0 + half
    try:
        e_lo, e_hi = grating_stop_band(
            metal, diel, cfg.geometry.period_nm * 1e-9)
    except (ValueError, DispersionPoleError):
        return lo, hi
    cut_lo = max(lo, omega_from_ev(e_lo))
    cut_hi = min(hi, omega_from_ev(e_hi))
    if cut_lo >= cut_hi:
        notes.append("source band lies outside the grating mirror window")
        return lo, hi
    return cut_lo, cut_hi


def _planned_steps(cfg, grid):
    """Step budget for progress reporting, both phases included.

    Mirrors the Courant step of Simulation; the ring phase is costed at
    the configured center, close enough for a progress denominator."""
    dt = cfg.fdtd.dt_safety * grid.dx_nm * 1e-9 / (C0 * math.sqrt(2.0))
    period = 2.0 * math.pi / omega_from_ev(cfg.source.center_ev)

    def phase(bandwidth, periods):
        t_src = GaussianPulse(center_ev=cfg.source.center_ev, i=0, k=0,
                              rel_bandwidth=bandwidth).t_off
        return int(math.ceil((t_src + periods * period) / dt))

    total = phase(cfg.source.ring_rel_bandwidth, cfg.fdtd.duration_periods)
    if cfg.source.rel_bandwidth > cfg.source.ring_rel_bandwidth:
        total += phase(cfg.source.rel_bandwidth, cfg.fdtd.locate_periods)
    return total


def _survey_run(cfg, grid, metal, diel, check, progress, total, notes):
    """Broadband locating run: probe records only, no balance monitors.

    Returns the per-probe resonance fits merged over the admitted band,
    the angular frequency of the strongest spectral line (None when the
    band is silent), and the number of steps spent."""
    sim = Simulation(grid, metal=metal, dielectric=diel,
                     courant=cfg.fdtd.dt_safety)
    si, sk = emitter_position(grid, cfg.source.x_offset_nm,
                              cfg.source.depth_nm)
    pulse = GaussianPulse(
        center_ev=cfg.source.center_ev, i=si, k=sk,
        rel_bandwidth=cfg.source.rel_bandwidth,
        amplitude=cfg.source.amplitude)
    sim.add_source(pulse)
    probes = _place_probes(sim, cfg, grid)

    period = 2.0 * math.pi / pulse.omega0
    n_src = sim.steps_for(pulse.t_off)
    n_ring = sim.steps_for(cfg.fdtd.locate_periods * period)
    _run_chunked(sim, n_src + n_ring, check, progress, total, 0)

    band = _admitted_band(pulse.omega0, cfg.source.rel_bandwidth,
                          cfg, metal, diel, notes)
    times = probes[0].times
    ring = slice(n_src, None)
    pooled = []
    for pr in probes:
        pooled.extend(find_resonances(times[ring], pr.values[ring]))
    merged = _merge_modes(pooled, *band)
    located = _dominant_frequency(probes, n_src, *band)
    return merged, located, n_src + n_ring


def _fold_in(modes, refined, rel_tol=0.02):
    """Replace the survey record closest to the re-excited line with the
    refined one (keeping the survey amplitude, which is comparable
    across the list) or prepend it; returns the dominant index."""
    best, gap = None, rel_tol
    for n, rec in enumerate(modes):
        sep = abs(rec["omega0_rad_per_s"] - refined["omega0_rad_per_s"]) \
            / refined["omega0_rad_per_s"]
        if sep < gap:
            best, gap = n, sep
    if best is None:
        modes.insert(0, refined)
        return 0
    refined["amplitude"] = modes[best]["amplitude"]
    modes[best] = refined
    return best


def _run_chunked(sim, n_steps, check_every, progress, total, done=0):
    """Advance the simulation, reporting done + sim.step_count so a
    second-phase run continues the count where the survey left off."""
    if progress is None:
        sim.run(n_steps, check_every=check_every)
        return
    left = n_steps
    chunk = max(check_every, 250)
    while left > 0:
        n = min(chunk, left)
        sim.run(n, check_every=check_every)
        left -= n
        progress(done + sim.step_count, total)


def _dominant_frequency(probes, skip, lo, hi):
    spectra = None
    for pr in probes:
        v = pr.values[skip:]
        if v.size < 16:
            return None
        w = v * np.hanning(v.size)
        mag = np.abs(np.fft.rfft(w))
        spectra = mag if spectra is None else spectra + mag
    dt = probes[0].times[1] - probes[0].times[0]
    omegas = 2.0 * math.pi * np.fft.rfftfreq(
        probes[0].values[skip:].size, dt)
    sel = (omegas >= lo) & (omegas <= hi)
    if not np.any(sel) or spectra is None:
        return None
    band = np.where(sel, spectra, 0.0)
    peak = int(np.argmax(band))
    if band[peak] <= 0.0:
        return None
    # refine to a fraction of a bin so the lock-in reference lands close
    # enough to the mode for a selective accumulation
    omega_peak = float(omegas[peak])
    if 0 < peak < band.size - 1 and band[peak - 1] > 0 and band[peak + 1] > 0:
        la, lb, lc = np.log(band[peak - 1: peak + 2])
        denom = la - 2.0 * lb + lc
        if denom < 0.0:
            shift = 0.5 * (la - lc) / denom
            omega_peak += shift * (omegas[1] - omegas[0])
    return omega_peak


def _merge_modes(pooled, omega_lo, omega_hi, rel_tol=0.004):
    """Cluster per-probe fits of the same resonance, keep the strongest
    representative of each cluster, drop anything outside the band."""
    kept = [m for m in pooled if omega_lo <= m.omega <= omega_hi]
    kept.sort(key=lambda m: m.omega)
    clusters = []
    for m in kept:
        if clusters and (m.omega - clusters[-1][-1].omega
                         <= rel_tol * m.omega):
            clusters[-1].append(m)
        else:
            clusters.append([m])
    reps = [max(c, key=lambda m: m.amplitude) for c in clusters]
    reps.sort(key=lambda m: m.amplitude, reverse=True)
    return reps


def _base_record(mode, cfg, metal):
    return {
        "omega0_rad_per_s": mode.omega,
        "omega0_ev": ev_from_omega(mode.omega),
        "omega0_over_omega_p": mode.omega / metal.plasma_omega,
        "cavity_length_nm": cfg.geometry.cavity_length_nm,
        "amplitude": mode.amplitude,
        "q_ringdown": min(mode.q, Q_CAP),
        "q_is_lower_bound": mode.q_is_lower_bound,
        "fit_r2": mode.fit_r2,
        "overlapping": mode.overlapping,
        "q_total": None,
        "q_rad": None,
        "q_abs": None,
        "q_abs_above_cap": False,
        "energy_u": None,
        "p_rad": None,
        "p_abs": None,
        "flux_split": None,
        "v_mode_per_width_nm2": None,
        "v_mode_nm3": None,
        "assumed_width_y_nm": cfg.emitter.width_nm,
        "decay_z_nm": None,
        "decay_r2": None,
        "peak_count": None,
        "field_fraction": None,
        "emitter_x_offset_nm": None,
        "emitter_depth_nm": cfg.emitter.depth_nm,
        "purcell_at_width": None,
        "purcell_per_um": None,
        "g_ghz": None,
        "kappa_ghz": None,
        "gamma_ghz": cfg.emitter.gamma_bulk_ghz + cfg.emitter.gamma_nr_ghz,
        "strong_coupling": None,
        "xi": metal.loss_factor,
    }


def _window_mean(t, v, t_lo, t_hi, floor):
    sel = (t >= t_lo) & (t <= t_hi)
    if not np.any(sel):
        return 0.0
    return float(np.mean(v[sel])) - floor


def _floor(t, v, t_cut):
    sel = t <= t_cut
    if not np.any(sel):
        return 0.0
    return float(np.mean(v[sel]))


def _attach_balance(record, mode, sim, energy, box, absorbed, pulse,
                    n_src, n_ring, notes):
    """Quality factors from time-averaged stored energy against the two
    loss channels; the split of the radiated power by direction."""
    omega = mode.omega
    t_off = n_src * sim.dt
    t_lo = t_off + BALANCE_WINDOW[0] * n_ring * sim.dt
    t_hi = t_off + BALANCE_WINDOW[1] * n_ring * sim.dt
    t_quiet = 2.0 * pulse.tau  # before the source amplitude is material

    u = _window_mean(energy.times, energy.energy, t_lo, t_hi,
                     _floor(energy.times, energy.energy, t_quiet))
    p_rad = _window_mean(box.times, box.outward_power, t_lo, t_hi,
                         _floor(box.times, box.outward_power, t_quiet))
    p_abs = _window_mean(absorbed.times, absorbed.power, t_lo, t_hi,
                         _floor(absorbed.times, absorbed.power, t_quiet))

    if u <= 0.0:
        notes.append("stored energy below the noise floor; "
                     "energy-balance Q unavailable")
        return
    record["energy_u"] = u
    record["p_rad"] = p_rad
    record["p_abs"] = max(p_abs, 0.0)

    if p_rad <= 0.0:
        notes.append("outward flux not positive over the averaging window")
        record["q_rad"] = Q_CAP
    else:
        record["q_rad"] = min(omega * u / p_rad, Q_CAP)
    if p_abs <= 0.0 or omega * u / p_abs > Q_CAP:
        record["q_abs"] = Q_CAP
        record["q_abs_above_cap"] = True
    else:
        record["q_abs"] = omega * u / p_abs
    p_total = max(p_rad, 0.0) + max(p_abs, 0.0)
    if p_total > 0.0:
        record["q_total"] = min(omega * u / p_total, Q_CAP)
    else:
        record["q_total"] = record["q_ringdown"]
        notes.append("no loss channel measurable; quality factor "
                     "taken from the ring-down fit")

    down = _window_mean(box.times, box.downward_power, t_lo, t_hi, 0.0)
    up = _window_mean(box.times, box.upward_power, t_lo, t_hi, 0.0)
    lateral = _window_mean(box.times, box.lateral_power, t_lo, t_hi, 0.0)
    total = max(down, 0.0) + max(up, 0.0) + max(lateral, 0.0)
    if total > 0.0:
        record["flux_split"] = {
            "down": max(down, 0.0) / total,
            "up": max(up, 0.0) / total,
            "lateral": max(lateral, 0.0) / total,
        }


def _attach_snapshot_fields(record, mode, cfg, grid, metal, diel, snap,
                            notes):
    """Mode geometry from the lock-in snapshot: effective area, vertical
    decay, standing-wave order, and the emitter figures of merit."""
    sx, sz = snap.ex_dft, snap.ez_dft
    omega = mode.omega
    energy_ev = ev_from_omega(omega)

    mv = None
    try:
        mv = mode_volume(grid, sx, sz, energy_ev, metal=metal,
                         dielectric=diel)
        record["v_mode_per_width_nm2"] = mv.area / 1e-18
        record["v_mode_nm3"] = mv.area / 1e-18 * cfg.emitter.width_nm
    except FitQualityError as exc:
        notes.append(f"mode volume unavailable: {exc}")

    intensity = cell_center_intensity(sx, sz)
    # average the depth profile over the groove-free cavity section: every
    # flat column decays at the same rate, so the average keeps the
    # exponential while the standing-wave pattern and the corner hot spots
    # of any single column drop out
    if grid.cavity_span is not None:
        lo, hi = grid.cavity_span
        profile_z = intensity[lo:hi, :].mean(axis=0)
    elif mv is not None:
        profile_z = intensity[mv.peak_index[0], :]
    else:
        profile_z = intensity[int(np.argmax(np.max(intensity, axis=1))), :]
    try:
        fit = fit_z_decay(profile_z, grid.dx_nm, grid.interface_k)
        record["decay_z_nm"] = fit.length / 1e-9
        record["decay_r2"] = fit.r_squared
    except FitQualityError as exc:
        notes.append(f"vertical decay fit rejected: {exc}")

    try:
        _, profile, _, _ = standing_wave_profile(
            grid, sx, sz, cfg.monitors.probe_depth_nm)
        lo, hi = grid.cavity_span
        record["peak_count"] = int(
            standing_wave_peaks(profile[lo:hi]).size)
    except ValueError as exc:
        notes.append(f"standing-wave cut unavailable: {exc}")

    x_offset = cfg.emitter.x_offset_nm
    if x_offset is None:
        x_offset = _antinode_offset(grid, sz, cfg.emitter.depth_nm)
    emitter = EmitterSpec(
        dipole_moment=cfg.emitter.dipole_moment,
        gamma_bulk=2.0 * math.pi * 1e9 * cfg.emitter.gamma_bulk_ghz,
        gamma_nr=2.0 * math.pi * 1e9 * cfg.emitter.gamma_nr_ghz,
        x_offset_nm=x_offset,
        depth_nm=cfg.emitter.depth_nm)
    record["emitter_x_offset_nm"] = x_offset
    try:
        fraction = field_fraction(grid, sx, sz, emitter)
    except (PlacementError, ValueError) as exc:
        notes.append(f"emitter field sample unavailable: {exc}")
        return
    record["field_fraction"] = fraction

    if mv is None or record["q_total"] is None:
        return
    report = evaluate_mode(
        omega, record["q_total"], mv, fraction, emitter,
        width_nm=cfg.emitter.width_nm, dielectric=diel)
    record["purcell_at_width"] = report.purcell_at_width
    record["purcell_per_um"] = report.purcell_per_um
    record["g_ghz"] = report.g_ghz
    record["kappa_ghz"] = report.kappa_ghz
    record["strong_coupling"] = report.strong_coupling


def _antinode_offset(grid, ez_dft, depth_nm):
    """x offset (nm from the cavity center) of the strongest Ez node at
    the requested depth, restricted to the cavity region.

    Antinodes right at the cavity edges sit next to the innermost
    grooves, where no emitter fits; candidates are tried strongest first
    and the first placeable one wins.
    """
    k = grid.interface_k - 1 - int(depth_nm / grid.dx_nm)
    k = max(min(k, grid.nz - 1), 0)
    row = np.abs(ez_dft[:, k])
    lo, hi = grid.cavity_span if grid.cavity_span else (1, grid.nx)
    nodes = lo + np.argsort(row[lo:hi + 1])[::-1]
    center = grid.nx // 2
    for i_node in nodes:
        offset = (int(i_node) - center) * grid.dx_nm
        try:
            emitter_position(grid, offset, depth_nm)
        except PlacementError:
            continue
        return offset
    return (int(nodes[0]) - center) * grid.dx_nm


# -- persistence -----------------------------------------------------------


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def run_point(cfg: config_mod.RunConfig, out_dir, *,
              write_series: bool = False,
              progress=None) -> tuple[PointResult, bool]:
    """Characterize one configuration with on-disk caching.

    Returns (result, cached).  A directory whose stored report matches
    the configuration hash is loaded instead of re-simulated, and its
    files are left untouched.
    """
    out = Path(out_dir)
    digest = point_hash(cfg)
    report_path = out / "mode_report.json"
    if report_path.exists():
        stored = json.loads(report_path.read_text())
        if stored.get("config_hash") == digest:
            return _load_point(cfg, out, stored), True

    result = characterize(cfg, keep_series=write_series, progress=progress)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(config_mod.dump(cfg))
    report = {
        "config_hash": digest,
        "dominant": result.dominant,
        "modes": _jsonable(result.modes),
        "notes": list(result.notes),
    }
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True)
                           + "\n")
    if result.snapshot_ex is not None:
        export_field(out / "snapshot_ex.bin", result.snapshot_ex,
                     cfg.fdtd.dx_nm, "ex")
        export_field(out / "snapshot_ez.bin", result.snapshot_ez,
                     cfg.fdtd.dx_nm, "ez")
    if write_series and result.series:
        for name, (t, v) in result.series.items():
            _write_series_csv(out / f"{name}.csv", t, v)
    manifest = {
        "config_hash": digest,
        "package_version": _package_version(),
        "grid": {"nx": result.grid.nx, "nz": result.grid.nz,
                 "dx_nm": result.grid.dx_nm},
        "wall_time_s": result.wall_time_s,
        "created_unix": time.time(),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return result, False


def _load_point(cfg, out, stored):
    grid = cfg.grid()
    sx = sz = None
    ex_path = out / "snapshot_ex.bin"
    ez_path = out / "snapshot_ez.bin"
    if ex_path.exists() and ez_path.exists():
        _, _, sx = load_field(ex_path)
        _, _, sz = load_field(ez_path)
    wall = 0.0
    manifest_path = out / "manifest.json"
    if manifest_path.exists():
        wall = json.loads(manifest_path.read_text()).get("wall_time_s", 0.0)
    return PointResult(
        config=cfg,
        grid=grid,
        modes=stored.get("modes", []),
        dominant=stored.get("dominant"),
        snapshot_ex=sx,
        snapshot_ez=sz,
        notes=list(stored.get("notes", [])),
        wall_time_s=wall,
    )


def _write_series_csv(path, t, v):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "time_fs", "value"])
        for n, (tt, vv) in enumerate(zip(t, v)):
            writer.writerow([n, repr(tt / 1e-15), repr(vv)])


# -- sweeps ----------------------------------------------------------------


@dataclass(frozen=True)
class SweepPlan:
    base: config_mod.RunConfig
    axis: str
    values: tuple
    output_dir: Path
    workers: int = 1

    def __post_init__(self):
        if self.axis not in config_mod.SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        diffs = np.diff(np.asarray(self.values, dtype=float))
        if diffs.size and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("sweep values must be strictly monotone")
        object.__setattr__(self, "values",
                           tuple(float(v) for v in self.values))
        object.__setattr__(self, "output_dir", Path(self.output_dir))

    @classmethod
    def from_config(cls, cfg: config_mod.RunConfig) -> "SweepPlan":
        return cls(base=cfg, axis=cfg.sweep.axis, values=cfg.sweep.values,
                   output_dir=Path(cfg.sweep.output_dir),
                   workers=cfg.sweep.workers)


@dataclass
class SweepResult:
    plan: SweepPlan
    rows: list
    failures: list
    csv_path: Path


def _point_dir(plan: SweepPlan, cfg, value) -> Path:
    return plan.output_dir / f"{plan.axis}_{value:g}_{point_hash(cfg)}"


def _sweep_row(axis, value, cfg, result) -> dict:
    mode = result.dominant_mode or {}
    xi = mode.get("xi", cfg.metal().loss_factor)
    temperature = cfg.materials.temperature_k
    if temperature is None:
        try:
            temperature = loss_factor_to_temperature(xi)
        except (SaturationError, ValueError):
            temperature = None
    row = {
        AXIS_COLUMN[axis]: value,
        "omega0_ev": mode.get("omega0_ev"),
        "omega0_over_omega_p": mode.get("omega0_over_omega_p"),
        "xi": xi,
        "temperature_k": temperature,
        "q_rad": mode.get("q_rad"),
        "q_abs": mode.get("q_abs"),
        "q_total": mode.get("q_total"),
        "q_ringdown": mode.get("q_ringdown"),
        "purcell_per_um": mode.get("purcell_per_um"),
        "g_ghz": mode.get("g_ghz"),
        "kappa_ghz": mode.get("kappa_ghz"),
        "strong_coupling": mode.get("strong_coupling"),
    }
    return row


def write_sweep_csv(path, axis, rows, extra_columns=()):
    columns = (AXIS_COLUMN[axis],) + SWEEP_CSV_COLUMNS + tuple(extra_columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            out = []
            for col in columns:
                v = row.get(col)
                if v is None:
                    out.append("")
                elif isinstance(v, bool):
                    out.append("true" if v else "false")
                elif isinstance(v, float):
                    out.append(repr(v))
                else:
                    out.append(str(v))
            writer.writerow(out)


def _pool_worker(payload):
    cfg = config_mod.from_dict(payload["config"])
    try:
        result, cached = run_point(cfg, payload["dir"])
        return {"row": _sweep_row(payload["axis"], payload["value"], cfg,
                                  result),
                "cached": cached}
    except Exception as exc:  # per-point isolation
        return {"error": f"{type(exc).__name__}: {exc}"}


def run_sweep(plan: SweepPlan, progress=None) -> SweepResult:
    """Execute every point of a sweep, consolidating into sweep.csv.

    Individual failures are recorded and skipped; the sweep only raises
    when nothing succeeded.  On interruption the points finished so far
    are still consolidated before the interrupt propagates, and finished
    points load from cache on the next attempt.
    """
    plan.output_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    for value in plan.values:
        cfg = point_config(plan.base, plan.axis, value)
        jobs.append({"axis": plan.axis, "value": value,
                     "config": cfg.to_dict(),
                     "dir": str(_point_dir(plan, cfg, value))})

    total = len(jobs)
    t0 = time.perf_counter()
    outcomes = []
    interrupted = False
    try:
        if plan.workers > 1:
            with ProcessPoolExecutor(max_workers=plan.workers) as pool:
                futures = [pool.submit(_pool_worker, job) for job in jobs]
                try:
                    outcomes = [f.result() for f in futures]
                except KeyboardInterrupt:
                    for f in futures:
                        f.cancel()
                    outcomes = [f.result() for f in futures
                                if f.done() and not f.cancelled()]
                    raise
        else:
            for n, job in enumerate(jobs):
                outcomes.append(_pool_worker(job))
                if progress is not None:
                    progress(n + 1, total, job["value"],
                             outcomes[-1].get("cached", False))
    except KeyboardInterrupt:
        interrupted = True
        raise
    finally:
        rows, failures = [], []
        for job, outcome in zip(jobs, outcomes):
            if "row" in outcome:
                rows.append(outcome["row"])
            else:
                failures.append({"value": job["value"],
                                 "error": outcome["error"]})
        if rows or not interrupted:
            _consolidate_sweep(plan, rows, failures, interrupted,
                               time.perf_counter() - t0)

    if not rows:
        raise SweepError("all sweep points failed; first error: "
                         + failures[0]["error"])
    return SweepResult(plan=plan, rows=rows, failures=failures,
                       csv_path=plan.output_dir / "sweep.csv")


def _consolidate_sweep(plan, rows, failures, interrupted, elapsed):
    write_sweep_csv(plan.output_dir / "sweep.csv", plan.axis, rows)
    manifest = {
        "axis": plan.axis,
        "values": list(plan.values),
        "package_version": _package_version(),
        "points_completed": len(rows),
        "points_failed": len(failures),
        "failures": failures,
        "interrupted": interrupted,
        "wall_time_s": elapsed,
        "created_unix": time.time(),
    }
    (plan.output_dir / "sweep_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# -- loss and temperature sweeps -------------------------------------------


def run_loss_sweep(base: config_mod.RunConfig, xi_values, output_dir,
                   progress=None) -> SweepResult:
    """Re-run the cavity at a series of loss factors, holding the drive
    at the reference mode frequency located first at the base loss.

    Each row carries `perturbed`: true when the mode can no longer be
    identified near the reference frequency or its quality factor has
    collapsed below PERTURBED_Q_FRACTION of the reference.
    """
    return _referenced_sweep(base, "loss_factor", xi_values, output_dir,
                             progress)


def run_temperature_sweep(base: config_mod.RunConfig, temperatures,
                          output_dir, progress=None) -> SweepResult:
    """Loss sweep parameterized by temperature through the resistivity
    table."""
    return _referenced_sweep(base, "temperature", temperatures, output_dir,
                             progress)


def _referenced_sweep(base, axis, values, output_dir, progress):
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ref_result, _ = run_point(base, out / f"reference_{point_hash(base)}")
    ref = ref_result.dominant_mode
    if ref is None or ref.get("q_total") is None:
        raise SweepError("reference run found no usable mode")
    ref_omega = ref["omega0_rad_per_s"]
    ref_q = ref["q_total"]

    narrowed = base.to_dict()
    narrowed["source"]["center_ev"] = ref["omega0_ev"]
    narrowed["source"]["rel_bandwidth"] = base.source.ring_rel_bandwidth
    narrowed_cfg = config_mod.from_dict(narrowed)

    plan = SweepPlan(base=narrowed_cfg, axis=axis,
                     values=tuple(values), output_dir=out)
    rows, failures = [], []
    interrupted = False
    try:
        for n, value in enumerate(plan.values):
            cfg = point_config(plan.base, plan.axis, value)
            try:
                result, cached = run_point(cfg,
                                           _point_dir(plan, cfg, value))
            except Exception as exc:
                failures.append({"value": value,
                                 "error": f"{type(exc).__name__}: {exc}"})
                continue
            row = _sweep_row(plan.axis, value, cfg, result)
            mode = result.dominant_mode
            lost = mode is None or (
                abs(mode["omega0_rad_per_s"] - ref_omega)
                > ref_omega / (2.0 * ref_q))
            collapsed = (mode is not None
                         and mode.get("q_total") is not None
                         and mode["q_total"] < PERTURBED_Q_FRACTION * ref_q)
            row["mode_lost"] = lost
            row["perturbed"] = bool(lost or collapsed)
            rows.append(row)
            if progress is not None:
                progress(n + 1, len(plan.values), value, cached)
    except KeyboardInterrupt:
        interrupted = True
        raise
    finally:
        if rows or not interrupted:
            summary = _loss_linearity(rows)
            write_sweep_csv(out / "sweep.csv", plan.axis, rows,
                            extra_columns=("mode_lost", "perturbed"))
            manifest = {
                "axis": plan.axis,
                "values": list(plan.values),
                "package_version": _package_version(),
                "reference": {"omega0_ev": ref["omega0_ev"],
                              "q_total": ref_q},
                "points_completed": len(rows),
                "points_failed": len(failures),
                "failures": failures,
                "interrupted": interrupted,
                "absorptive_q_scaling": summary,
                "created_unix": time.time(),
            }
            (out / "sweep_manifest.json").write_text(
                json.dumps(_jsonable(manifest), indent=2, sort_keys=True)
                + "\n")

    if not rows:
        raise SweepError("all sweep points failed; first error: "
                         + failures[0]["error"])
    return SweepResult(plan=plan, rows=rows, failures=failures,
                       csv_path=out / "sweep.csv")


def _loss_linearity(rows):
    """Log-log slope of the absorptive quality factor against the loss
    factor, over the unperturbed rows with xi >= 100."""
    pts = [(r["xi"], r["q_abs"]) for r in rows
           if r.get("q_abs") is not None and not r.get("perturbed")
           and r["xi"] >= 100.0 and r["q_abs"] < Q_CAP]
    if len(pts) < 3:
        return None
    x = np.log(np.asarray([p[0] for p in pts]))
    y = np.log(np.asarray([p[1] for p in pts]))
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return {"slope": float(slope), "r_squared": r2, "points": len(pts)}


# -- emitter placement map -------------------------------------------------


def emitter_map(result: PointResult, depths_nm, x_offsets_nm) -> list:
    """Purcell enhancement over a grid of emitter positions, evaluated on
    the stored mode snapshot without re-simulation.

    Positions that fall in metal or outside the domain come back with
    excluded=True rather than failing the map.
    """
    mode = result.dominant_mode
    if mode is None:
        raise ValueError("result holds no mode to map")
    if result.snapshot_ex is None:
        raise ValueError("result holds no field snapshot")
    if mode.get("v_mode_per_width_nm2") is None:
        raise ValueError("mode volume was not computed for this result")
    cfg = result.config
    omega = mode["omega0_rad_per_s"]
    q = mode["q_total"] if mode["q_total"] is not None \
        else mode["q_ringdown"]
    volume = mode["v_mode_per_width_nm2"] * 1e-18 \
        * cfg.emitter.width_nm * 1e-9
    diel = cfg.dielectric()
    rows = []
    for depth in depths_nm:
        for off in x_offsets_nm:
            entry = {"depth_nm": float(depth), "x_offset_nm": float(off),
                     "excluded": False, "field_fraction": None,
                     "purcell_at_width": None}
            emitter = EmitterSpec(x_offset_nm=float(off),
                                  depth_nm=float(depth))
            try:
                fraction = field_fraction(
                    result.grid, result.snapshot_ex, result.snapshot_ez,
                    emitter)
            except PlacementError:
                entry["excluded"] = True
                rows.append(entry)
                continue
            entry["field_fraction"] = fraction
            entry["purcell_at_width"] = purcell_enhancement(
                omega, q, volume, fraction=fraction, dielectric=diel)
            rows.append(entry)
    return rows
