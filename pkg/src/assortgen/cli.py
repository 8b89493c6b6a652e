"""Command-line interface.

Subcommands map onto the experiment kinds; every run writes CSV/JSON outputs
plus a manifest into ``--out``. Exit codes: 0 success, 2 configuration error,
3 infeasible target, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, InfeasibleTargetError, NotConvergedError
from .experiments import EXPERIMENT_KINDS, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_CONVERGED = 4

CONFIG_SCHEMA_VERSION = 1


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    allowed = {"schema_version", "kind", "seed", "threads", "out", "params"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    if cfg.get("schema_version") != CONFIG_SCHEMA_VERSION:
        raise ConfigError(
            f"config schema_version must be {CONFIG_SCHEMA_VERSION}, "
            f"got {cfg.get('schema_version')!r}"
        )
    return cfg


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--threads", type=int, default=1, help="worker processes")
    parser.add_argument("--out", type=str, default="out", help="output directory")
    parser.add_argument("--config", type=str, default=None,
                        help="JSON config file; overrides other flags")
    parser.add_argument("--param", action="append", default=[], metavar="KEY=JSON",
                        help="experiment parameter, value parsed as JSON "
                             "(e.g. --param targets=[0.4] --param num_samples=100)")


def _parse_params(pairs: list[str]) -> dict:
    params: dict = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--param expects KEY=JSON, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw  # bare strings allowed (paths, family names)
    return params


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="assortgen",
        description="Graph ensembles under soft (ERGM) and hard (rewiring) "
                    "assortativity constraints.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a graph and its metrics")
    _add_common(p)

    p = sub.add_parser("metrics", help="metrics of a graph (edge list or model)")
    _add_common(p)

    p = sub.add_parser("ergm", help="canonical-ensemble chain operations")
    ergm_sub = p.add_subparsers(dest="ergm_command", required=True)
    for name in ("run", "tune"):
        q = ergm_sub.add_parser(name)
        _add_common(q)

    p = sub.add_parser("dmgg", help="hard-constraint ensemble generation")
    dmgg_sub = p.add_subparsers(dest="dmgg_command", required=True)
    q = dmgg_sub.add_parser("run")
    _add_common(q)
    q.add_argument("--actor", choices=("greedy", "policy"), default=None)
    q.add_argument("--checkpoint", type=str, default=None)

    p = sub.add_parser("train", help="PPO training of the rewiring policy")
    _add_common(p)

    p = sub.add_parser("experiment", help="figure-level experiment pipelines")
    p.add_argument("kind", choices=sorted(k for k in EXPERIMENT_KINDS
                                          if k not in ("generate", "metrics", "train")))
    _add_common(p)

    return parser


def _resolve(args: argparse.Namespace) -> tuple[str, dict, int, str, int]:
    if args.config:
        cfg = _load_config(args.config)
        kind = cfg.get("kind")
        if not kind:
            raise ConfigError("config file must set 'kind'")
        return (
            kind,
            dict(cfg.get("params", {})),
            int(cfg.get("seed", args.seed)),
            str(cfg.get("out", args.out)),
            int(cfg.get("threads", args.threads)),
        )
    params = _parse_params(args.param)
    if args.command == "ergm":
        kind = f"ergm-{args.ergm_command}"
    elif args.command == "dmgg":
        kind = "dmgg-run"
        if args.actor:
            params.setdefault("actor", args.actor)
        if args.checkpoint:
            params.setdefault("checkpoint", args.checkpoint)
    elif args.command == "experiment":
        kind = args.kind
    else:
        kind = args.command
    return kind, params, args.seed, args.out, args.threads


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        kind, params, seed, out, threads = _resolve(args)
        summary = run_experiment(kind, params, seed, out, threads)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleTargetError as e:
        print(f"infeasible target: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NotConvergedError as e:
        print(f"did not converge: {e}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    json.dump(summary, sys.stdout, indent=2, sort_keys=True, default=str)
    print()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
