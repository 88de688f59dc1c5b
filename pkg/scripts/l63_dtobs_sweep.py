"""ML-EnCMF vs EnKF/gEnKF on Lorenz-63 across observation intervals.

    python3 scripts/l63_dtobs_sweep.py --values 0.3,0.5,1.0,2.0 --out-dir runs/l63_dtobs
"""
import argparse

from encmf.config import load_preset
from encmf.harness import sweep


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--preset", default="l63_dtobs")
    p.add_argument("--values", default="0.1,0.3,0.5,1.0,2.0")
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
    values = [float(v) for v in args.values.split(",")]
    rows = sweep(cfg, "dt_obs", values, args.filters.split(","), out_dir=args.out_dir)

    by = {(r["filter"], r["value"]): r for r in rows}
    print(f"{'dt_obs':>7} {'filter':>8} {'avg':>7} {'median':>7} {'spread':>7} {'cover':>6} {'vs enkf':>8}")
    for v in values:
        base = by.get(("enkf", v), {}).get("avg_rmse")
        for name in args.filters.split(","):
            r = by[(name, v)]
            if r["status"] != "ok":
                print(f"{v:7.2f} {name:>8} {r['status']}")
                continue
            rel = f"{1 - r['avg_rmse'] / base:+.1%}" if base else ""
            print(f"{v:7.2f} {name:>8} {r['avg_rmse']:7.3f} {r['median_rmse']:7.3f} "
                  f"{r['avg_spread']:7.3f} {r['coverage_prob']:6.3f} {rel:>8}")


if __name__ == "__main__":
    main()
