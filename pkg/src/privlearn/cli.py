"""Command-line entry point: ``privlearn <subcommand> [flags]``.

Parameters come from an optional ``--config`` file of ``key=value`` lines and
are overridden by flags. Each run writes ``<name>.summary.json`` and
``<name>.trials.csv`` into ``--out``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import EXPERIMENTS, ConfigError, run

# flag name -> help
PARAMS = {
    "d": "dimension (comma list for masked-parity-adaptive)",
    "n": "database size",
    "epsilon": "privacy parameter (comma list where several are swept)",
    "alpha": "accuracy parameter",
    "beta": "confidence parameter",
    "tau": "SQ tolerance",
    "b": "query range bound",
    "t": "number of queries / randomizer invocations",
    "c": "size constant (training slices, or the local simulation constant)",
    "c_prime": "hold-out size constant",
    "trials": "number of trials (runs per cell for simulate-local-by-sq)",
    "target": "verify-dp target: parity-A or exp-mech",
    "pairs": "neighbouring pairs for verify-dp on parity-A",
    "hypotheses": "size of the parity hypothesis class for exp-mech",
    "mode": "exp-mech mode: realizable or agnostic",
    "query": "simulate-sq-by-local query: mean or masked-parity",
    "domains": "simulate-local-by-sq grids: bit,4-symbol",
    "strategies": "separation strategies: random-battery,round-one-guess,majority-vote",
    "adaptive": "separation: also run the adaptive learner (1/0)",
    "adversarial_max_d": "largest d checked under every adversarial sign pattern",
    "scales": "sweep multipliers for the size constants, e.g. 1/16,1/4,1",
    "cases": "random cases per identity",
    "tail_trials": "Monte-Carlo draws per tail-bound cell",
    "bad_fraction_queries": "random queries for the bad-concept fraction",
}
META = ("seed", "out", "name", "workers")


def read_config(path) -> dict:
    params = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in PARAMS and key not in META:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        params[key] = value
    return params


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privlearn", description="Private learning experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key=value file; flags override it")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory (default: results)")
        sp.add_argument("--name", help="output file stem (default: the subcommand)")
        sp.add_argument("--workers", type=int, help="parallel worker processes")
        sp.add_argument("--strict", action="store_true", help="exit 1 when the summary reports failure")
        for key, text in PARAMS.items():
            sp.add_argument("--" + key.replace("_", "-"), dest=key, help=text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        merged = read_config(args.config) if args.config else {}
        flags = {k: v for k, v in vars(args).items()
                 if v is not None and k not in ("command", "config", "strict")}
        merged.update(flags)
        seed = merged.pop("seed", None)
        if seed is None:
            raise ConfigError("seed is mandatory (--seed or seed= in the config file)")
        out = merged.pop("out", "results")
        name = merged.pop("name", None)
        workers = int(merged.pop("workers", 1))
        result = run(args.command, merged, int(seed), workers=workers, name=name)
    except (ConfigError, ValueError) as e:
        print(f"privlearn {args.command}: configuration error: {e}", file=sys.stderr)
        return 2
    summary_path, trials_path = result.write(out)
    print(json.dumps({"experiment": args.command, "pass": result.passed,
                      "summary": str(summary_path), "trials": str(trials_path)}))
    if args.strict and result.passed is False:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
