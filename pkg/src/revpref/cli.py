"""Command-line entry point: ``revpref <subcommand> ...``.

Every subcommand prints JSON (or a table for ``verify``) and exits 0 iff its
checks pass. ``--config file.json`` supplies defaults for the subcommand's
options; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from revpref import harness
from revpref.demand import demand
from revpref.features import second_best_linear, second_best_splc
from revpref.numerics import parse_rational
from revpref.rp_query import (
    RPOracle,
    learn_ces_rp,
    learn_leontief_rp_query,
    learn_linear_rp,
    learn_splc_rp,
)
from revpref.utility import (
    INF,
    PriceBudget,
    random_utility,
    utility_from_json,
    utility_to_json,
)
from revpref.value import ValueOracle, vq_ces, vq_leontief, vq_linear, vq_splc


def _rationals(text: str) -> list:
    return [parse_rational(t) for t in text.split(",") if t.strip()]


def _lengths(text: str) -> list:
    """Rows separated by ';', entries by ','; 'inf' closes a row."""
    rows = []
    for row in text.split(";"):
        rows.append(tuple(INF if t.strip() == "inf" else parse_rational(t) for t in row.split(",")))
    return rows


def _fmt(v) -> str:
    if v == INF:
        return "inf"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _load_utility(text: str):
    path = Path(text)
    obj = json.loads(path.read_text()) if path.exists() else json.loads(text)
    return utility_from_json(obj)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_demand(args) -> int:
    U = _load_utility(args.utility)
    pb = PriceBudget(_rationals(args.prices), parse_rational(args.budget))
    cap = None if args.cap == "none" else parse_rational(args.cap)
    res = demand(U, pb, cap)
    _emit({"bundle": [_fmt(v) for v in res.bundle], "spent": _fmt(res.spent), "tie_broken": res.tie_broken})
    return 0


def cmd_second_best(args) -> int:
    w = _rationals(args.w)
    pb = PriceBudget(_rationals(args.prices), parse_rational(args.budget))
    if args.lengths:
        lengths = _lengths(args.lengths)
        sb = second_best_splc(w, lengths, pb)
    else:
        sb = second_best_linear(w, pb)
    _emit({"bundle": [_fmt(v) for v in sb.bundle], "value": _fmt(sb.value), "degenerate": sb.degenerate})
    return 0


def _experiment_args(args, mode: str, sizes: list) -> harness.ExperimentConfig:
    return harness.ExperimentConfig(
        cls=args.cls,
        mode=mode,
        d=args.d,
        kappa=args.kappa,
        n_bits=args.n,
        rho=args.rho,
        p_lo=args.p_lo,
        p_hi=args.p_hi,
        b_lo=args.b_lo,
        b_hi=args.b_hi,
        sample_sizes=sizes,
        trials=1,
        test_size=args.test_size,
        seed=args.seed,
        timing=False,
    )


def cmd_learn_stat(args) -> int:
    cfg = _experiment_args(args, "stat-rp", [args.m])
    rec = harness.run_trial(cfg, 0, args.m)
    _emit(
        {
            "class": args.cls,
            "m": args.m,
            "err_value": rec.err_value,
            "err_bundle": rec.err_bundle,
            "train_err": rec.train_err,
            "converged": rec.converged,
        }
    )
    return 0


def cmd_learn_query(args) -> int:
    rng = np.random.default_rng(args.seed)
    U = random_utility(args.cls, args.d, kappa=args.kappa, n=args.n, seed=rng, rho=args.rho)
    if args.cls == "linear":
        oracle = RPOracle(U)
        V = learn_linear_rp(oracle, args.d, args.n)
    elif args.cls == "splc":
        oracle = RPOracle(U, cap=None)
        V = learn_splc_rp(oracle, args.d, args.kappa, args.n)
    elif args.cls == "ces":
        oracle = RPOracle(U)
        V = learn_ces_rp(oracle, args.d)
    else:
        oracle = RPOracle(U)
        V = learn_leontief_rp_query(oracle, args.d)
    ok = harness._ces_close(U, V, 1e-6) if args.cls == "ces" else V == U
    _emit({"hidden": utility_to_json(U), "learned": utility_to_json(V), "queries": oracle.query_count, "exact": ok})
    return 0 if ok else 1


def cmd_learn_value(args) -> int:
    if args.mode == "stat":
        cfg = _experiment_args(args, "stat-value", [args.m])
        rec = harness.run_trial(cfg, 0, args.m)
        _emit({"class": args.cls, "m": args.m, "err": rec.err_value, "train_err": rec.train_err})
        return 0
    rng = np.random.default_rng(args.seed)
    U = random_utility(args.cls, args.d, kappa=args.kappa, n=args.n, seed=rng, rho=args.rho)
    oracle = ValueOracle(U)
    if args.cls == "linear":
        V = vq_linear(oracle, args.d)
    elif args.cls == "splc":
        V = vq_splc(oracle, args.d, args.n)
    elif args.cls == "ces":
        V = vq_ces(oracle, args.d, U.rho)
    else:
        V = vq_leontief(oracle, args.d, args.n)
    ok = harness._ces_close(U, V, 1e-6) if args.cls == "ces" else V == U
    _emit({"hidden": utility_to_json(U), "learned": utility_to_json(V), "queries": oracle.query_count, "exact": ok})
    return 0 if ok else 1


def cmd_experiment(args) -> int:
    obj = dict(args.experiment or {})
    for key in ("cls", "mode", "d", "trials", "seed", "output", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            obj[key] = val
    if args.no_timing:
        obj["timing"] = False
    cfg = harness.ExperimentConfig.from_dict(obj)
    _, summary = harness.run_experiment(cfg)
    _emit(summary["per_m"])
    if cfg.mode in ("query-rp", "query-value"):
        return 0 if all(row["exact_recovery"] for row in summary["per_m"]) else 1
    return 0


def cmd_verify(args) -> int:
    try:
        results = harness.verify_suite(seed=args.seed, d_max=args.d_max)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(harness.format_checks(results))
    return 0 if all(r.passed for r in results) else 1


def _add_class_args(p, m_default: int | None = None) -> None:
    p.add_argument("--class", dest="cls", default="linear", choices=["linear", "splc", "ces", "leontief", "ordering"])
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--kappa", type=int, default=2)
    p.add_argument("--n", type=int, default=6, help="bit-length bound of the hidden parameters")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    if m_default is not None:
        p.add_argument("--m", type=int, default=m_default)
        p.add_argument("--test-size", type=int, default=1000)
        p.add_argument("--p-lo", type=float, default=0.1)
        p.add_argument("--p-hi", type=float, default=10.0)
        p.add_argument("--b-lo", type=float, default=0.1)
        p.add_argument("--b-hi", type=float, default=2.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="revpref", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with default option values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demand", help="optimal bundle of a utility")
    p.add_argument("--utility", required=True, help="utility JSON or path to it")
    p.add_argument("--prices", required=True, help="comma-separated rationals")
    p.add_argument("--budget", required=True)
    p.add_argument("--cap", default="1", help="per-good cap, or 'none'")
    p.set_defaults(func=cmd_demand)

    p = sub.add_parser("second-best", help="second-best admissible bundle under w")
    p.add_argument("--w", required=True)
    p.add_argument("--prices", required=True)
    p.add_argument("--budget", required=True)
    p.add_argument("--lengths", help="SPLC segment lengths, e.g. '1,inf;inf'")
    p.set_defaults(func=cmd_second_best)

    p = sub.add_parser("learn-stat", help="statistical RP learning on one random instance")
    _add_class_args(p, m_default=400)
    p.set_defaults(func=cmd_learn_stat)

    p = sub.add_parser("learn-query", help="exact learning from RP queries")
    _add_class_args(p)
    p.set_defaults(func=cmd_learn_query)

    p = sub.add_parser("learn-value", help="learning from utility values")
    _add_class_args(p, m_default=100)
    p.add_argument("--mode", choices=["stat", "query"], default="query")
    p.set_defaults(func=cmd_learn_value)

    p = sub.add_parser("experiment", help="sample-size sweep; writes CSV and JSON summary")
    p.add_argument("--class", dest="cls", default=None)
    p.add_argument("--mode", default=None, choices=list(harness.MODES))
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", default=None, help="path prefix for .csv and .json")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-timing", action="store_true", help="record 0 seconds (byte-identical output)")
    p.set_defaults(func=cmd_experiment, experiment=None)

    p = sub.add_parser("verify", help="cross-oracle verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-max", type=int, default=6)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        config = json.loads(Path(known.config).read_text())
        # defaults only: flags given on the command line still win
        for action in parser._subparsers._group_actions:
            for name, subparser in action.choices.items():
                if name == "experiment":
                    subparser.set_defaults(experiment=config)
                else:
                    subparser.set_defaults(**{k.replace("-", "_"): v for k, v in config.items()})
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
