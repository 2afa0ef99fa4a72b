"""Command line: ``bcbandit {run,sweep,cover,replay,gen-log,inspect}``.

Exit status is 0 on success, 1 when input validation fails (the message names
the offending field) and 2 for any other failure.  Flags override the
matching entries of a config file.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .clustering import cluster, recover_types_exact
from .config import (ENV_KINDS, load_config_file, run_config_from_dict, sweep_config_from_dict)
from .cover import DEFAULT_BUDGET, find_cover
from .errors import ConfigError
from .replay import generate_log, policy_for_log, read_log, replay, write_log

ENV_FLAGS = ("K", "M", "N", "L", "delta", "epsilon", "noise", "sigma", "arrivals")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message, "arguments")


def emit(results, fmt: str = "json", path=None) -> None:
    """Write results as JSON or CSV to ``path`` (stdout when ``None`` or ``-``)."""
    if fmt == "json":
        payload = results if isinstance(results, (dict, list)) else results.to_dict()
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    elif fmt == "csv":
        if not hasattr(results, "csv"):
            raise ConfigError("these results have no CSV form", "format")
        text = results.csv()
    else:
        raise ConfigError(f"unknown format {fmt!r}", "format")
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _csv_ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}", "arguments") from None


def _add_env_flags(p):
    p.add_argument("--config", help="YAML or JSON config file")
    p.add_argument("--env", help=f"environment kind {ENV_KINDS} or a config file path")
    p.add_argument("--K", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--noise")
    p.add_argument("--sigma", type=float)
    p.add_argument("--arrivals")
    p.add_argument("--env-seed", type=int, help="structure seed of latent environments")


def _add_run_flags(p):
    _add_env_flags(p)
    p.add_argument("--policy")
    p.add_argument("--delta-lower", type=float)
    p.add_argument("--nu-lower", type=float)
    p.add_argument("--exploration-cap", type=float)
    p.add_argument("--action", type=int, help="1-based message for the fixed policy")
    p.add_argument("--T", type=int)
    p.add_argument("--tau", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--record-every", type=int)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", help="output path (default stdout)")


def _config_dict(args) -> dict:
    data = {}
    for src in (args.config, args.env if args.env and args.env not in ENV_KINDS else None):
        if src:
            loaded = load_config_file(src)
            for key, section in loaded.items():
                data.setdefault(key, {}).update(section or {})
    env = data.setdefault("env", {})
    if args.env in ENV_KINDS:
        env["kind"] = args.env
    for name in ENV_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            env[name] = v
    if getattr(args, "env_seed", None) is not None:
        env["seed"] = args.env_seed
    pol = data.setdefault("policy", {})
    for flag, key in (("policy", "name"), ("delta_lower", "delta_lower"), ("nu_lower", "nu_lower"),
                      ("exploration_cap", "exploration_cap"), ("action", "action")):
        v = getattr(args, flag, None)
        if v is not None:
            pol[key] = v
    run = data.setdefault("run", {})
    for key in ("T", "tau", "seed", "record_every"):
        v = getattr(args, key, None)
        if v is not None:
            run[key] = v
    return data


def _check_square(data):
    env = data.get("env", {})
    if env.get("kind") in ("spike", "borda") and env.get("M") not in (None, env.get("K")):
        raise ConfigError(f"{env['kind']} environments have M = K", "env.M")
    if env.get("kind") in ("spike", "borda"):
        env.pop("M", None)


def cmd_run(args):
    data = _config_dict(args)
    _check_square(data)
    data.pop("sweep", None)
    cfg = run_config_from_dict(data)
    emit(harness.run(cfg), args.format, args.out)


def cmd_sweep(args):
    data = _config_dict(args)
    _check_square(data)
    sw = data.setdefault("sweep", {})
    if args.tau_values:
        sw["tau_values"] = _csv_ints(args.tau_values)
    if args.seeds:
        sw["seeds"] = _csv_ints(args.seeds)
    if args.aggregation:
        sw["aggregation"] = [a for a in args.aggregation.split(",") if a]
    cfg = sweep_config_from_dict(data)
    emit(harness.sweep(cfg, workers=args.workers), args.format, args.out)


def cmd_cover(args):
    sol = find_cover(args.messages, args.contexts, budget=args.budget, seed=args.seed)
    emit(sol.to_json_dict(), "json", args.out)


def cmd_gen_log(args):
    data = _config_dict(args)
    _check_square(data)
    seed = args.seed if args.seed is not None else data.get("run", {}).get("seed")
    if seed is None:
        raise ConfigError("gen-log needs --seed", "seed")
    cfg = run_config_from_dict({"env": data["env"], "run": {"seed": seed}})
    env = cfg.env.build(seed)
    write_log(generate_log(env, args.records, seed), args.out)


def cmd_replay(args):
    records = read_log(args.log)
    mu = None
    if args.env or args.config:
        data = _config_dict(args)
        _check_square(data)
        seed = args.seed if args.seed is not None else data.get("run", {}).get("seed", 0)
        mu = run_config_from_dict({"env": data["env"], "run": {"seed": seed}}).env.build(seed).mu
    extra = {}
    if args.action is not None:
        extra["action"] = args.action - 1
    if args.seed is not None:
        extra["seed"] = args.seed
    policy = policy_for_log(args.policy, records, delta_lower=args.delta_lower, nu_lower=args.nu_lower,
                            mu=mu, horizon=args.horizon, **extra)
    summary = replay(policy, records)
    emit({"policy": args.policy, **summary.to_dict()}, "json", args.out)


def cmd_inspect(args):
    out = {}
    if args.distances:
        d = json.loads(Path(args.distances).read_text())
        M = int(d["M"])
        pairs = {(int(a) - 1, int(b) - 1): float(v) for a, b, v in d["pairs"]}
        if args.threshold is None:
            raise ConfigError("--distances needs --threshold", "threshold")
        out["partition"] = cluster(pairs, args.threshold, M).to_json_dict()
    else:
        data = _config_dict(args)
        _check_square(data)
        seed = args.seed if args.seed is not None else data.get("run", {}).get("seed", 0)
        env = run_config_from_dict({"env": data["env"], "run": {"seed": seed}}).env.build(seed)
        out = {"kind": env.kind, "K": env.K, "M": env.M, "N": env.N, "grid_step": env.payoff.grid_step,
               "mu": np.asarray(env.mu).tolist(), "partition": recover_types_exact(env.mu).to_json_dict(),
               "arrival_rates": list(env.arrivals.rates)}
    emit(out, "json", args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bcbandit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate one configuration")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="runs over tau values and seeds")
    _add_run_flags(p)
    p.add_argument("--tau-values", help="comma-separated, e.g. 1,2,4")
    p.add_argument("--seeds", help="comma-separated, e.g. 0,1,2")
    p.add_argument("--aggregation", help="subset of mean,std,min,max")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cover", help="pair covering design as JSON")
    p.add_argument("--messages", type=int, required=True)
    p.add_argument("--contexts", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cover)

    p = sub.add_parser("replay", help="evaluate a policy on a uniform log")
    _add_env_flags(p)
    p.add_argument("--log", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--delta-lower", type=float)
    p.add_argument("--nu-lower", type=float)
    p.add_argument("--action", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("gen-log", help="write a uniform synthetic log")
    _add_env_flags(p)
    p.add_argument("--records", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_log)

    p = sub.add_parser("inspect", help="environment or clustering details as JSON")
    _add_env_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--distances", help='JSON {"M": M, "pairs": [[a, b, d], ...]} with 1-based ids')
    p.add_argument("--threshold", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except ValueError as exc:  # ConfigError and the other input errors
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 2
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
