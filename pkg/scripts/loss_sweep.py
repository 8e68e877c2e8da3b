#!/usr/bin/env python3
"""Metal-loss sweep: absorptive Q scaling and Purcell figures vs xi.

Locates the cavity mode once at the base loss factor, then re-excites it
narrowband at each xi on a logarithmic ladder.  Emits sweep.csv with the
perturbed-mode flags, the fig4a (xi, F) and fig4b (T, F) tables, and the
fitted log-log slope of the absorptive quality factor.

Typical use:
    python3 scripts/loss_sweep.py --out runs/loss
    python3 scripts/loss_sweep.py --xi 25,50,100,500,2000 --out runs/loss
"""

import argparse
import json
import sys
from pathlib import Path

from spcavity import cli, config, experiments


DEFAULT_XI = "25,50,100,200,400,800,1600,2000"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--xi", default=DEFAULT_XI,
                    help="loss factors, comma list (ascending)")
    ap.add_argument("--out", type=Path, default=Path("runs/loss_sweep"))
    ap.add_argument("--dx", type=float, default=4.0)
    ap.add_argument("--cavity-length", type=float, default=328.0)
    args = ap.parse_args()

    data = config.loads(config.dump_defaults()).to_dict()
    data["fdtd"]["dx_nm"] = args.dx
    data["geometry"]["cavity_length_nm"] = args.cavity_length
    base = config.from_dict(data)

    def progress(n, total, value, cached):
        tag = "cached" if cached else "done"
        print(f"[{n}/{total}] xi = {value:g}  {tag}", file=sys.stderr)

    result = experiments.run_loss_sweep(
        base, cli.parse_values(args.xi), args.out, progress=progress)
    for failure in result.failures:
        print(f"warning: xi = {failure['value']:g} failed: "
              f"{failure['error']}", file=sys.stderr)

    manifest = json.loads((args.out / "sweep_manifest.json").read_text())
    scaling = manifest.get("absorptive_q_scaling")
    if scaling:
        print(f"Q_abs ~ xi^{scaling['slope']:.3f} "
              f"(R^2 = {scaling['r_squared']:.4f}, "
              f"{scaling['points']} points)")
    perturbed = [row["loss_factor"] for row in result.rows
                 if row.get("perturbed")]
    if perturbed:
        print("perturbed at xi = "
              + ", ".join(f"{v:g}" for v in perturbed))
    code = cli.main(["report", str(args.out)])
    print(result.csv_path)
    return code


if __name__ == "__main__":
    sys.exit(main())
