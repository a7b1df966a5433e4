#!/usr/bin/env python3
"""Full trigonometric benchmark sweep.

Fits the built-in trig system over degrees 1..3 and df 4,6,...,28 with 30
fresh-sampled runs per cell, then writes results.csv (and SVG boxplots with
--plots) to the output directory. Takes roughly half an hour at the default
grid on one core; trim --degrees/--dfs for a quick look.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from decoupline.experiments import (
    median_table,
    run_trig_experiment,
    trig_spec,
)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="trig_out", help="output directory")
    ap.add_argument("--runs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0, help="base seed")
    ap.add_argument("--degrees", default=None, help="comma list, e.g. 3")
    ap.add_argument("--dfs", default=None, help="comma list, e.g. 12,16,20")
    ap.add_argument("--plots", action="store_true", help="emit SVG boxplots")
    args = ap.parse_args()

    overrides = dict(
        runs=args.runs, base_seed=args.seed, out_dir=args.out_dir, plots=args.plots
    )
    if args.degrees:
        overrides["degrees"] = tuple(int(v) for v in args.degrees.split(","))
    if args.dfs:
        overrides["dfs"] = tuple(int(v) for v in args.dfs.split(","))
    spec = trig_spec(**overrides)

    t0 = time.time()
    records = run_trig_experiment(spec)
    print(f"{len(records)} runs in {time.time() - t0:.0f}s -> {spec.out_dir}")

    meds = median_table(records, lambda rec: max(rec.poly_errors))
    print("median worst-output error of the poly refit (%):")
    print("  df: " + " ".join(f"{df:>7d}" for df in spec.dfs))
    for d in spec.degrees:
        row = " ".join(f"{meds[(d, df, False)]:7.3f}" for df in spec.dfs)
        print(f" d={d} " + row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
