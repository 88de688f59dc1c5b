"""Influence of the ensemble size N and of the augmentation factor M on Lorenz-63.

    python3 scripts/ensemble_size_sweep.py --axis n_ens --values 100,200,500,1000
    python3 scripts/ensemble_size_sweep.py --axis m_aug --values 1,10,30
"""
import argparse

from encmf.config import load_preset
from encmf.harness import sweep


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--preset", default="l63_fast")
    p.add_argument("--axis", choices=["n_ens", "m_aug"], default="n_ens")
    p.add_argument("--values", default="100,200,500")
    p.add_argument("--filters", default="enkf,mlencmf")
    p.add_argument("--steps", type=int)
    p.add_argument("--out-dir")
    args = p.parse_args()

    cfg = load_preset(args.preset)
    if args.steps:
        cfg = cfg.replace(steps=args.steps)
    values = [int(v) for v in args.values.split(",")]
    for r in sweep(cfg, args.axis, values, args.filters.split(","), out_dir=args.out_dir):
        if r["status"] == "ok":
            print(f"{args.axis}={r['value']:<6} {r['filter']:>8}  avg={r['avg_rmse']:.3f}  "
                  f"median={r['median_rmse']:.3f}  coverage={r['coverage_prob']:.3f}")
        else:
            print(f"{args.axis}={r['value']:<6} {r['filter']:>8}  {r['status']}")


if __name__ == "__main__":
    main()
