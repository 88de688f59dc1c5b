"""Lorenz-96 comparison table: EnKF, gEnKF and ML-EnCMF at N = 600, M = 30, dt_obs = 0.4.

The ML-EnCMF run takes close to an hour on one core.

    python3 scripts/l96_table.py --out-dir runs/l96
"""
import argparse
from pathlib import Path

from encmf.config import load_preset
from encmf.harness import run_experiment, write_table


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--preset", default="l96_table1")
    p.add_argument("--filters", default="enkf,genkf,mlencmf")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    args = p.parse_args()

    cfg = load_preset(args.preset)
    if args.steps:
        cfg = cfg.replace(steps=args.steps)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    rows = []
    for name in args.filters.split(","):
        out = str(Path(args.out_dir) / name) if args.out_dir else None
        res = run_experiment(cfg.replace(filter=name, out_dir=out))
        rows.append({"filter": name, **res.metrics.to_dict(),
                     "a_active_steps": res.summary["a_active_steps"]})
        print(f"{name:>8}: avg RMSE {res.metrics.avg_rmse:.3f}  median {res.metrics.median_rmse:.3f}  "
              f"spread {res.metrics.avg_spread:.3f}  coverage {res.metrics.coverage_prob:.3f}", flush=True)
    if args.out_dir:
        write_table(Path(args.out_dir) / "table.csv", rows)


if __name__ == "__main__":
    main()
