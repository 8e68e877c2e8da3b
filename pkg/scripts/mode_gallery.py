#!/usr/bin/env python3
"""Field snapshots for the showcase cavity lengths.

Characterizes the three standing-wave orders (two, three, and four
intensity peaks), printing per-mode geometry figures and leaving the
lock-in field snapshots on disk next to each report for plotting.

Typical use:
    python3 scripts/mode_gallery.py --out runs/gallery
"""

import argparse
import sys
from pathlib import Path

from spcavity import config, experiments


SHOWCASE_LENGTHS = (216.0, 328.0, 440.0)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lengths", type=float, nargs="*",
                    default=SHOWCASE_LENGTHS)
    ap.add_argument("--out", type=Path, default=Path("runs/gallery"))
    ap.add_argument("--dx", type=float, default=4.0)
    args = ap.parse_args()

    data = config.loads(config.dump_defaults()).to_dict()
    data["fdtd"]["dx_nm"] = args.dx
    base = config.from_dict(data)

    header = (f"{'L (nm)':>8}  {'eV':>7}  {'Q_tot':>7}  {'peaks':>5}  "
              f"{'decay (nm)':>10}  {'area (nm^2)':>11}")
    print(header)
    print("-" * len(header))
    for length in args.lengths:
        cfg = experiments.point_config(base, "cavity_length", length)
        out = args.out / f"L{length:g}_{experiments.point_hash(cfg)}"
        result, cached = experiments.run_point(cfg, out)
        mode = result.dominant_mode
        if mode is None:
            print(f"{length:8g}  no resonance found"
                  + ("  (cached)" if cached else ""))
            continue
        peaks = mode.get("peak_count")
        decay = mode.get("decay_z_nm")
        area = mode.get("v_mode_per_width_nm2")
        print(f"{length:8g}  {mode['omega0_ev']:7.4f}  "
              f"{(mode.get('q_total') or float('nan')):7.1f}  "
              f"{peaks if peaks is not None else '?':>5}  "
              f"{decay if decay is not None else float('nan'):10.1f}  "
              f"{area if area is not None else float('nan'):11.0f}")
        for note in result.notes:
            print(f"          note: {note}")
        print(f"          fields: {out}/snapshot_ez.bin")
    return 0


if __name__ == "__main__":
    sys.exit(main())
