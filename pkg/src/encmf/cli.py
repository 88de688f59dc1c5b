"""Command-line entry point: ``encmf run | demo1d | sweep``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import DEMO_FILTER, Demo1DConfig, ExperimentConfig, load_preset, preset_path
from .errors import ConfigError, DomainError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML config file (or preset name, e.g. l96_table1)")
    p.add_argument("--model", choices=["lorenz63", "lorenz96"])
    p.add_argument("--filter", help="enkf | genkf | mlencmf")
    p.add_argument("--n-ens", type=int)
    p.add_argument("--m-aug", type=int)
    p.add_argument("--dt-obs", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--burn-in", action="store_true", default=None,
                   help="exclude the first 10%% of assimilation steps from the averages")
    p.add_argument("--force-a", choices=["0", "1", "auto"])


def _load(args) -> ExperimentConfig:
    if args.config is None:
        cfg = ExperimentConfig()
    elif args.config.endswith((".yaml", ".yml")):
        cfg = ExperimentConfig.from_yaml(args.config)
    else:
        cfg = load_preset(args.config)
    changes = {}
    for attr, key in [("model", "model"), ("filter", "filter"), ("n_ens", "n_ens"),
                      ("dt_obs", "dt_obs"), ("steps", "steps"), ("seed", "seed"),
                      ("out_dir", "out_dir"), ("burn_in", "burn_in"), ("force_a", "force_a"),
                      ("m_aug", "train.M")]:
        v = getattr(args, attr, None)
        if v is not None:
            changes[key] = v
    if "model" in changes and changes["model"] != cfg.model:
        changes.setdefault("model_params", {"n": 40, "F": 8.0} if changes["model"] == "lorenz96" else {})
    return cfg.replace(**changes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="encmf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a single twin experiment")
    _common(run)

    demo = sub.add_parser("demo1d", help="static 1-D EnCMF vs gEnKF illustration")
    demo.add_argument("--config")
    demo.add_argument("--n-ens", type=int)
    demo.add_argument("--seed", type=int)
    demo.add_argument("--out-dir")

    sw = sub.add_parser("sweep", help="run a config over a list of axis values")
    _common(sw)
    sw.add_argument("--axis", required=True, choices=["dt_obs", "n_ens", "m_aug"])
    sw.add_argument("--values", required=True, help="comma-separated axis values")
    sw.add_argument("--filters", help="comma-separated filters to compare (default: config filter)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            from .harness import run_experiment
            res = run_experiment(_load(args))
            print(json.dumps(res.summary["metrics"], indent=2))
        elif args.command == "demo1d":
            from .demo1d import demo_1d
            d = {}
            if args.config:
                path = args.config if args.config.endswith((".yaml", ".yml")) else preset_path(args.config)
                d = Demo1DConfig.from_yaml(path).to_dict()
            for k in ("n_ens", "seed", "out_dir"):
                if getattr(args, k) is not None:
                    d[k] = getattr(args, k)
            out = demo_1d(Demo1DConfig.from_dict(d))
            print(json.dumps(out["summary"]["cases"], indent=2))
        else:
            from .harness import sweep
            cfg = _load(args)
            cast = float if args.axis == "dt_obs" else int
            try:
                values = [cast(v) for v in args.values.split(",")]
            except ValueError as exc:
                raise ConfigError(f"bad --values: {exc}") from exc
            filters = args.filters.split(",") if args.filters else None
            if filters and DEMO_FILTER in filters:
                raise ConfigError(f"{DEMO_FILTER} is only available through demo1d")
            rows = sweep(cfg, args.axis, values, filters, out_dir=cfg.out_dir)
            for r in rows:
                print(json.dumps(r))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, DomainError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
