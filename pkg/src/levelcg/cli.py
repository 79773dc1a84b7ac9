"""Command line entry point: ``levelcg solve``, ``levelcg run`` and ``levelcg sweep``."""

import argparse
import json
import sys

from . import bench
from .errors import ConfigError, EmptyData, ParseError

EXIT_OK = 0
EXIT_SOLVER = 2
EXIT_CONFIG = 3

# flag -> config key
OVERRIDES = {
    "model": "model", "algo": "algorithm", "eps": "eps", "mu": "mu", "psi": "psi",
    "phi": "phi", "theta": "theta", "max_outer": "max_outer",
    "max_inner": "max_inner", "budget": "total_inner", "k": "K", "seed": "seed",
    "out": "out", "tau_scale": "tau_scale",
}


def _psi(text):
    if text == "auto":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("psi must be 'auto' or an integer") from None


def _parser():
    ap = argparse.ArgumentParser(prog="levelcg", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve", "run"):
        p = sub.add_parser(name, help="run one configuration and write a JSON report")
        p.add_argument("--config", help="JSON run config; flags override its fields")
        p.add_argument("--model", choices=bench.MODELS)
        p.add_argument("--algo", choices=bench.ALGORITHMS)
        p.add_argument("--data", help="returns CSV, IMRT instance directory, or 'synthetic'")
        p.add_argument("--eps", type=float)
        p.add_argument("--mu", type=float)
        p.add_argument("--psi", type=_psi)
        p.add_argument("--phi", type=float)
        p.add_argument("--theta", type=float)
        p.add_argument("--max-outer", type=int)
        p.add_argument("--max-inner", type=int)
        p.add_argument("--budget", type=int, help="total inner iterations across calls")
        p.add_argument("--k", type=int, help="DNCG iterations")
        p.add_argument("--seed", type=int)
        p.add_argument("--tau-scale", type=float)
        p.add_argument("--out")
        p.add_argument("--trace", action="store_true", default=None)
        p.add_argument("--force", action="store_true", default=None)
    p = sub.add_parser("sweep", help="run a list of configs and tabulate them")
    p.add_argument("--config", required=True, help="JSON list of run configs")
    p.add_argument("--csv")
    p.add_argument("--md")
    return ap


def _config_from_args(args):
    base = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigError("config must be a JSON object")
    for flag, key in OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            base[key] = v
    for flag in ("trace", "force"):
        if getattr(args, flag):
            base[flag] = True
    if args.data is not None:
        base["data"] = _data_source(args.data, base.get("model", "card-free-convex"))
    if args.seed is not None and "synthetic" in base.get("data", {}):
        spec = dict(base["data"]["synthetic"] or {})
        spec["seed"] = args.seed
        base["data"] = {"synthetic": spec}
    return bench.RunConfig.from_dict(base)


def _data_source(text, model):
    if text == "synthetic":
        return {"synthetic": {}}
    if model.startswith("imrt"):
        return {"dir": text}
    return {"csv": text}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "sweep":
            with open(args.config) as fh:
                items = json.load(fh)
            if not isinstance(items, list):
                raise ConfigError("sweep config must be a JSON list")
            rows, md = bench.sweep(items, args.csv, args.md)
            sys.stdout.write(md)
            return EXIT_OK if all(r["status"] != "failed" for r in rows) else EXIT_SOLVER
        cfg = _config_from_args(args)
        report = bench.run(cfg)
    except (ConfigError, ParseError, EmptyData, OSError, json.JSONDecodeError) as exc:
        print(f"levelcg: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    m = report.get("metrics", {})
    print(f"status={report['status']} objective={m.get('objective')} "
          f"constraint_norm={m.get('constraint_norm')}")
    if "criteria" in m:
        sys.stdout.write(bench.criteria_markdown(m["criteria"]))
    if report["status"] == "failed":
        print(f"levelcg: solver failed: {report['error']}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
