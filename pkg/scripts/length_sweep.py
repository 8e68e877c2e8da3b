#!/usr/bin/env python3
"""Cavity-length sweep: dominant mode frequency and Q per length.

Runs the excite-and-ring protocol across a ladder of cavity lengths and
consolidates sweep.csv plus the plot-ready fig2a/fig2b tables.  Finished
points are cached on disk, so the sweep can be interrupted and resumed.

Typical use:
    python3 scripts/length_sweep.py --lengths 150:500:10 --out runs/length
    python3 scripts/length_sweep.py --fast --out /tmp/quick_look
"""

import argparse
import sys
from pathlib import Path

from spcavity import cli, config, experiments


def base_config(args) -> config.RunConfig:
    data = config.loads(config.dump_defaults()).to_dict()
    data["fdtd"]["dx_nm"] = args.dx
    if args.fast:
        data["fdtd"]["duration_periods"] = 120.0
        data["source"]["rel_bandwidth"] = 0.4
    return config.from_dict(data)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lengths", default="150:500:10",
                    help="nm, comma list or start:stop:step")
    ap.add_argument("--out", type=Path, default=Path("runs/length_sweep"))
    ap.add_argument("--dx", type=float, default=4.0,
                    help="grid step in nm (2 for converged runs)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--fast", action="store_true",
                    help="shorter ring-down for a quick look")
    args = ap.parse_args()

    plan = experiments.SweepPlan(
        base=base_config(args), axis="cavity_length",
        values=cli.parse_values(args.lengths),
        output_dir=args.out, workers=args.workers)

    def progress(n, total, value, cached):
        tag = "cached" if cached else "done"
        print(f"[{n}/{total}] L = {value:g} nm  {tag}", file=sys.stderr)

    result = experiments.run_sweep(plan, progress=progress)
    for failure in result.failures:
        print(f"warning: L = {failure['value']:g} nm failed: "
              f"{failure['error']}", file=sys.stderr)
    code = cli.main(["report", str(args.out)])
    print(result.csv_path)
    return code


if __name__ == "__main__":
    sys.exit(main())
