"""Command-line front end: dispersion tables, runs, sweeps, reports.

Every subcommand that takes a configuration accepts `--config file.yaml`
plus dotted-path overrides (`--geometry.cavity-length-nm 440`); defaults
apply when no file is given.  Errors leave a single JSON object on
stderr and a stable exit code: 0 success, 1 runtime failure, 2 bad
configuration, 3 I/O.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

from . import __version__
from . import config as config_mod
from . import experiments
from .constants import C0, EV_TO_RAD_PER_S
from .fdtd import InstabilityError
from .geometry import (
    ConstructionError,
    PlacementError,
    ResolutionError,
    emitter_position,
)
from .materials import (
    DesignError,
    DispersionPoleError,
    SaturationError,
    design_grating_period,
    loss_factor_to_temperature,
    sp_wavevector,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_IO = 3

_CONFIG_ERRORS = (config_mod.ConfigError, ConstructionError,
                  ResolutionError, PlacementError, DesignError,
                  SaturationError)


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        overrides = _override_pairs(extra)
        return args.handler(args, overrides)
    except KeyboardInterrupt:
        print(file=sys.stderr)
        print("interrupted; completed points are checkpointed",
              file=sys.stderr)
        return 130
    except _CONFIG_ERRORS as exc:
        return _fail(EXIT_CONFIG, exc)
    except (InstabilityError, experiments.SweepError) as exc:
        return _fail(EXIT_RUNTIME, exc)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(EXIT_IO, exc)
    except ValueError as exc:
        return _fail(EXIT_CONFIG, exc)


def _fail(code: int, exc: Exception) -> int:
    payload = {"error": {"code": code, "type": type(exc).__name__,
                         "message": str(exc)}}
    path = getattr(exc, "path", "")
    if path:
        payload["error"]["path"] = path
    print(json.dumps(payload), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spcavity",
        description="Plasmonic DBR cavity design, simulation, and sweeps.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="run configuration file (YAML)")
    common.add_argument("--quiet", action="store_true",
                        help="suppress progress and summaries")

    p = sub.add_parser("dispersion", parents=[common],
                       help="surface-plasmon dispersion table")
    p.add_argument("--band", nargs=2, type=float, default=(0.8, 1.6),
                   metavar=("LO", "HI"), help="photon energy band in eV")
    p.add_argument("--points", type=int, default=33)
    p.add_argument("--energy-ev", type=float, default=None,
                   help="single energy instead of a band")
    p.add_argument("--output", type=Path, default=None,
                   help="write CSV here instead of a stdout table")
    p.set_defaults(handler=cmd_dispersion)

    p = sub.add_parser("simulate", parents=[common],
                       help="run one cavity characterization")
    p.add_argument("--output-dir", type=Path, default=Path("runs/single"))
    p.add_argument("--dry-run", action="store_true",
                   help="validate and print grid size; touch no files")
    p.add_argument("--write-series", action="store_true",
                   help="also write monitor time series as CSV")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common],
                       help="run a parameter sweep")
    p.add_argument("--axis", default=None,
                   choices=config_mod.SWEEP_AXES)
    p.add_argument("--values", default=None,
                   help="comma list or start:stop:step (inclusive)")
    p.add_argument("--output-dir", type=Path, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("report",
                       help="regenerate plot-ready CSV from a sweep dir")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--output-dir", type=Path, default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("config", help="configuration utilities")
    csub = p.add_subparsers(dest="config_command", required=True)
    pd = csub.add_parser("dump-defaults",
                         help="print the default configuration")
    pd.set_defaults(handler=cmd_dump_defaults)

    p = sub.add_parser("validate", parents=[common],
                       help="check a configuration without running")
    p.set_defaults(handler=cmd_validate)
    return parser


# -- configuration loading -------------------------------------------------


def _override_pairs(extra):
    """Turn leftover argv into (dotted-key, value) override pairs."""
    pairs = []
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--"):
            raise config_mod.ConfigError(
                f"unrecognized argument: {token}")
        body = token[2:]
        if "=" in body:
            key, value = body.split("=", 1)
            i += 1
        else:
            key = body
            if i + 1 >= len(extra):
                raise config_mod.ConfigError(
                    f"override {token} is missing a value")
            value = extra[i + 1]
            i += 2
        if "." not in key:
            raise config_mod.ConfigError(
                f"unrecognized argument: {token}")
        pairs.append((key, value))
    return pairs


def _load_config(args, overrides) -> config_mod.RunConfig:
    if args.config is not None:
        cfg = config_mod.load_config(args.config)
    else:
        cfg = config_mod.loads(config_mod.dump_defaults())
    if overrides:
        cfg = config_mod.apply_overrides(cfg, overrides)
    return cfg


def _reject_overrides(overrides):
    if overrides:
        key = overrides[0][0]
        raise config_mod.ConfigError(
            f"this subcommand takes no overrides (got --{key})")


# -- dispersion ------------------------------------------------------------

_DISPERSION_COLUMNS = ("energy_ev", "eps_metal_re", "eps_metal_im",
                       "n_eff", "k_sp_per_um", "period_nm", "flagged")


def cmd_dispersion(args, overrides) -> int:
    cfg = _load_config(args, overrides)
    metal, diel = cfg.metal(), cfg.dielectric()
    if args.energy_ev is not None:
        energies = [args.energy_ev]
    else:
        lo, hi = args.band
        if not 0.0 < lo < hi:
            raise config_mod.ConfigError(
                f"band must satisfy 0 < lo < hi, got {lo}..{hi}")
        if args.points < 2:
            raise config_mod.ConfigError("need at least 2 band points")
        step = (hi - lo) / (args.points - 1)
        energies = [lo + n * step for n in range(args.points)]

    rows, flagged = [], 0
    for ev in energies:
        row = {"energy_ev": ev, "flagged": False}
        eps_m = metal.permittivity_at(ev)
        row["eps_metal_re"] = eps_m.real
        row["eps_metal_im"] = eps_m.imag
        try:
            k_sp = sp_wavevector(metal, diel, ev)
            period_m = design_grating_period(metal, diel, ev)
        except (DispersionPoleError, DesignError) as exc:
            row["flagged"] = True
            flagged += 1
            if not args.quiet:
                print(f"warning: {ev:.4f} eV: {exc}", file=sys.stderr)
            rows.append(row)
            continue
        omega = ev * EV_TO_RAD_PER_S
        row["n_eff"] = k_sp.real * C0 / omega
        row["k_sp_per_um"] = k_sp.real / 1e6
        row["period_nm"] = period_m / 1e-9
        rows.append(row)

    if args.output is not None:
        _write_csv(args.output, _DISPERSION_COLUMNS, rows)
        if not args.quiet:
            print(args.output)
    else:
        _print_table(_DISPERSION_COLUMNS, rows)
    return EXIT_OK


def _print_table(columns, rows):
    widths = [max(len(c), 12) for c in columns]
    print("  ".join(c.rjust(w) for c, w in zip(columns, widths)))
    for row in rows:
        cells = []
        for c, w in zip(columns, widths):
            v = row.get(c)
            if v is None:
                cells.append("".rjust(w))
            elif isinstance(v, bool):
                cells.append(("yes" if v else "").rjust(w))
            elif isinstance(v, float):
                cells.append(f"{v:.6g}".rjust(w))
            else:
                cells.append(str(v).rjust(w))
        print("  ".join(cells))


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            out = []
            for c in columns:
                v = row.get(c)
                if v is None:
                    out.append("")
                elif isinstance(v, bool):
                    out.append("true" if v else "false")
                elif isinstance(v, float):
                    out.append(repr(v))
                else:
                    out.append(str(v))
            writer.writerow(out)


# -- simulate --------------------------------------------------------------


class _StatusLine:
    """Carriage-return progress line with rate and time remaining."""

    def __init__(self, stream):
        self.stream = stream
        self.t0 = time.perf_counter()
        self.dirty = False

    def __call__(self, done, total):
        elapsed = time.perf_counter() - self.t0
        if elapsed <= 0.0 or done <= 0:
            return
        rate = done / elapsed
        eta = (total - done) / rate
        print(f"\r  {done}/{total} steps  {rate:8.0f} steps/s"
              f"  eta {eta:6.1f} s ", end="", file=self.stream,
              flush=True)
        self.dirty = True

    def close(self):
        if self.dirty:
            print(file=self.stream)


def _progress_for(quiet):
    if quiet or not sys.stderr.isatty():
        return None, lambda: None
    status = _StatusLine(sys.stderr)
    return status, status.close


def cmd_simulate(args, overrides) -> int:
    cfg = _load_config(args, overrides)
    if args.dry_run:
        return _dry_run(cfg, args.quiet)
    progress, close = _progress_for(args.quiet)
    try:
        result, cached = experiments.run_point(
            cfg, args.output_dir, write_series=args.write_series,
            progress=progress)
    finally:
        close()
    if not args.quiet:
        _print_point_summary(result, args.output_dir, cached)
    return EXIT_OK


def _dry_run(cfg, quiet) -> int:
    grid = cfg.grid()
    dt = cfg.fdtd.dt_safety * (grid.dx_nm * 1e-9) / (C0 * math.sqrt(2.0))
    steps = experiments._planned_steps(cfg, grid)
    # field, current, and material arrays plus boundary strips and the
    # complex snapshot accumulators
    bytes_per_cell = 14 * 8 + 32
    mem_mb = grid.nx * grid.nz * bytes_per_cell / 2**20
    if not quiet:
        print(f"grid: {grid.nx} x {grid.nz} cells at {grid.dx_nm:g} nm "
              f"({grid.nx * grid.nz:,} cells)")
        print(f"time step: {dt / 1e-15:.4f} fs, about {steps:,} steps "
              "(survey and ring runs)")
        print(f"estimated field memory: {mem_mb:.0f} MB")
    return EXIT_OK


def _print_point_summary(result, out_dir, cached):
    if cached:
        print(f"cached: {out_dir}")
    mode = result.dominant_mode
    if mode is None:
        print("no resonance found; see "
              f"{Path(out_dir) / 'mode_report.json'}")
        return
    parts = [f"mode {mode['omega0_ev']:.4f} eV"]
    if mode.get("q_total") is not None:
        parts.append(f"Q_total {mode['q_total']:.1f}")
    if mode.get("q_rad") is not None:
        parts.append(f"Q_rad {mode['q_rad']:.1f}")
    if mode.get("q_abs") is not None:
        parts.append(f"Q_abs {mode['q_abs']:.1f}")
    if mode.get("purcell_at_width") is not None:
        parts.append(f"F {mode['purcell_at_width']:.1f}")
    print("  ".join(parts))
    for note in result.notes:
        print(f"note: {note}")
    print(f"report: {Path(out_dir) / 'mode_report.json'}")


# -- sweep -----------------------------------------------------------------


def parse_values(text: str) -> tuple:
    """Sweep values from either `1,2,3` or inclusive `start:stop:step`."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise config_mod.ConfigError(
                f"range syntax is start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step == 0.0 or (stop - start) * step < 0.0:
            raise config_mod.ConfigError(
                f"empty range {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9))
        return tuple(start + i * step for i in range(n + 1))
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise config_mod.ConfigError(f"bad sweep values {text!r}")


def cmd_sweep(args, overrides) -> int:
    cfg = _load_config(args, overrides)
    axis = args.axis or cfg.sweep.axis
    values = (parse_values(args.values) if args.values
              else tuple(cfg.sweep.values))
    if not values:
        raise config_mod.ConfigError(
            "no sweep values: pass --values or set sweep.values")
    out_dir = args.output_dir or Path(cfg.sweep.output_dir)
    workers = args.workers or cfg.sweep.workers

    progress = None
    if not args.quiet:
        def progress(n, total, value, cached):
            tag = "cached" if cached else "done"
            print(f"[{n}/{total}] {axis} = {value:g}  {tag}",
                  file=sys.stderr)

    if axis == "loss_factor":
        result = experiments.run_loss_sweep(cfg, values, out_dir,
                                            progress=progress)
    elif axis == "temperature":
        result = experiments.run_temperature_sweep(cfg, values, out_dir,
                                                   progress=progress)
    else:
        plan = experiments.SweepPlan(base=cfg, axis=axis, values=values,
                                     output_dir=out_dir, workers=workers)
        result = experiments.run_sweep(plan, progress=progress)

    for failure in result.failures:
        print(f"warning: point {failure['value']:g} failed: "
              f"{failure['error']}", file=sys.stderr)
    if not args.quiet:
        print(result.csv_path)
    return EXIT_OK


# -- report ----------------------------------------------------------------


def cmd_report(args, overrides) -> int:
    _reject_overrides(overrides)
    run_dir = args.run_dir
    manifest_path = run_dir / "sweep_manifest.json"
    if not run_dir.is_dir() or not manifest_path.exists():
        raise FileNotFoundError(
            f"no sweep manifest under {run_dir}")
    manifest = json.loads(manifest_path.read_text())
    axis = manifest["axis"]
    out_dir = args.output_dir or run_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    points = _collect_points(run_dir, axis)
    if not points:
        raise FileNotFoundError(f"no finished points under {run_dir}")

    written = _emit_report(points, axis, out_dir)
    if not args.quiet:
        for path in written:
            print(path)
    return EXIT_OK


def _collect_points(run_dir, axis):
    points = []
    for entry in sorted(run_dir.iterdir()):
        if not entry.is_dir() or entry.name.startswith("reference_"):
            continue
        report_path = entry / "mode_report.json"
        config_path = entry / "config.yaml"
        if not report_path.exists() or not config_path.exists():
            continue
        cfg = config_mod.load_config(config_path)
        report = json.loads(report_path.read_text())
        mode = None
        if report.get("dominant") is not None:
            mode = report["modes"][report["dominant"]]
        points.append((_axis_value(axis, cfg), cfg, mode))
    points.sort(key=lambda p: (p[0] is None, p[0]))
    return points


def _axis_value(axis, cfg):
    if axis == "cavity_length":
        return cfg.geometry.cavity_length_nm
    if axis == "emitter_depth":
        return cfg.emitter.depth_nm
    if axis == "emitter_x":
        return cfg.emitter.x_offset_nm
    if axis == "loss_factor":
        return cfg.metal().loss_factor
    if axis == "temperature":
        return cfg.materials.temperature_k
    if axis == "duty_cycle":
        return cfg.geometry.groove_width_nm / cfg.geometry.period_nm
    raise config_mod.ConfigError(f"unknown sweep axis {axis!r}")


def _emit_report(points, axis, out_dir):
    """Plot-ready CSV for the sweep kind: mode frequency and quality
    factor against cavity length, or Purcell enhancement against loss
    and temperature; a generic table otherwise."""
    written = []
    if axis == "cavity_length":
        rows_a, rows_b = [], []
        for value, _, mode in points:
            if mode is None or mode.get("q_total") is None:
                continue
            rows_a.append({"cavity_length_nm": value,
                           "omega0_over_omega_p":
                               mode["omega0_over_omega_p"],
                           "q_total": mode["q_total"]})
            rows_b.append({"cavity_length_nm": value,
                           "q_total": mode["q_total"]})
        written.append(_report_file(
            out_dir / "fig2a.csv",
            ("cavity_length_nm", "omega0_over_omega_p", "q_total"),
            rows_a))
        written.append(_report_file(
            out_dir / "fig2b.csv", ("cavity_length_nm", "q_total"),
            rows_b))
    elif axis in ("loss_factor", "temperature"):
        rows_a, rows_b = [], []
        for value, cfg, mode in points:
            if mode is None or mode.get("purcell_at_width") is None:
                continue
            xi = cfg.metal().loss_factor
            f_p = mode["purcell_at_width"]
            rows_a.append({"xi": xi, "purcell_at_width": f_p})
            temperature = cfg.materials.temperature_k
            if temperature is None:
                try:
                    temperature = loss_factor_to_temperature(xi)
                except (SaturationError, ValueError):
                    temperature = None
            if temperature is not None:
                rows_b.append({"temperature_k": temperature,
                               "purcell_at_width": f_p})
        rows_a.sort(key=lambda r: r["xi"])
        rows_b.sort(key=lambda r: r["temperature_k"])
        written.append(_report_file(
            out_dir / "fig4a.csv", ("xi", "purcell_at_width"), rows_a))
        written.append(_report_file(
            out_dir / "fig4b.csv", ("temperature_k", "purcell_at_width"),
            rows_b))
    else:
        rows = []
        for value, _, mode in points:
            if mode is None:
                continue
            rows.append({axis: value,
                         "omega0_ev": mode.get("omega0_ev"),
                         "q_total": mode.get("q_total"),
                         "purcell_at_width":
                             mode.get("purcell_at_width")})
        written.append(_report_file(
            out_dir / "report.csv",
            (axis, "omega0_ev", "q_total", "purcell_at_width"), rows))
    return written


def _report_file(path, columns, rows):
    _write_csv(path, columns, rows)
    return path


# -- config utilities ------------------------------------------------------


def cmd_dump_defaults(args, overrides) -> int:
    _reject_overrides(overrides)
    sys.stdout.write(config_mod.dump_defaults())
    return EXIT_OK


def cmd_validate(args, overrides) -> int:
    cfg = _load_config(args, overrides)
    grid = cfg.grid()  # raises on inconsistent or unresolvable geometry
    emitter_position(grid, cfg.source.x_offset_nm, cfg.source.depth_nm)
    if cfg.emitter.x_offset_nm is not None:
        emitter_position(grid, cfg.emitter.x_offset_nm,
                         cfg.emitter.depth_nm)
    if not args.quiet:
        print(f"ok {experiments.point_hash(cfg)}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
