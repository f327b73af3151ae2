"""Experiment orchestration: instance distributions, trials, sample-size
sweeps, CSV/JSON reports and the cross-oracle verification suite."""

from __future__ import annotations

import csv
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from revpref.demand import demand, demand_bruteforce, kkt_check
from revpref.features import (
    FeatureMapSpec,
    admissible_bundles_linear,
    admissible_bundles_splc,
    best_admissible_linear,
    best_admissible_splc,
    best_ordering,
    ordering_psi,
    second_best_linear,
    second_best_splc,
    split,
)
from revpref.rp_query import (
    RPOracle,
    slope_gap_epsilon,
    learn_ces_rp,
    learn_leontief_rp_query,
    learn_linear_rp,
    learn_splc_rp,
)
from revpref.svm import (
    learn_leontief_rp,
    min_norm_point,
    rp_error,
    shattering_check,
    svm_train,
    training_error,
)
from revpref.utility import (
    PriceBudget,
    evaluate,
    grid_allowance,
    random_utility,
)
from revpref.value import (
    ValueOracle,
    learn_ces_values_rho,
    learn_leontief_values,
    learn_linear_values,
    learn_splc_values_knownL,
    vq_ces,
    vq_leontief,
    vq_linear,
    vq_splc,
)

CLASSES = ("linear", "splc", "ces", "leontief", "ordering")
MODES = ("stat-rp", "query-rp", "stat-value", "query-value")
CSV_COLUMNS = ("trial", "m", "err_value", "err_bundle", "train_err", "queries", "seconds")
VERIFY_D_CAP = 8


@dataclass(frozen=True)
class PriceDist:
    """Log-uniform prices on [p_lo, p_hi], uniform budget on [b_lo, b_hi]."""

    d: int
    p_lo: float = 0.1
    p_hi: float = 10.0
    b_lo: float = 0.1
    b_hi: float = 2.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not (0 < self.p_lo <= self.p_hi):
            raise ValueError("need 0 < p_lo <= p_hi")
        if not (0 <= self.b_lo <= self.b_hi):
            raise ValueError("need 0 <= b_lo <= b_hi")


def sample_instance(dist: PriceDist, rng: np.random.Generator) -> PriceBudget:
    if dist.p_lo == dist.p_hi:
        prices = [float(dist.p_lo)] * dist.d
    else:
        logs = rng.uniform(math.log(dist.p_lo), math.log(dist.p_hi), dist.d)
        prices = [float(v) for v in np.exp(logs)]
    budget = float(rng.uniform(dist.b_lo, dist.b_hi)) if dist.b_lo < dist.b_hi else float(dist.b_lo)
    return PriceBudget(prices, budget)


def sample_bundle(d: int, rng: np.random.Generator, bits: int = 20) -> tuple:
    """Uniform bundle in [0,1]^d on the dyadic grid of step 2^-bits (exact)."""
    top = 2**bits
    return tuple(Fraction(int(v), top) for v in rng.integers(0, top + 1, d))


@dataclass
class ExperimentConfig:
    cls: str = "linear"
    mode: str = "stat-rp"
    d: int = 5
    kappa: int = 2
    n_bits: int = 6
    rho: float | None = None
    p_lo: float = 0.1
    p_hi: float = 10.0
    b_lo: float = 0.1
    b_hi: float = 2.0
    sample_sizes: list = field(default_factory=lambda: [25, 50, 100, 200, 400])
    trials: int = 10
    test_size: int = 1000
    seed: int = 0
    tol: float = 1e-9
    output: str | None = None
    workers: int = 1
    timing: bool = True

    def __post_init__(self):
        if self.cls not in CLASSES:
            raise ValueError(f"unknown class {self.cls!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.cls == "ordering" and self.mode != "stat-rp":
            raise ValueError("the ordering class only has a statistical RP learner")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.sample_sizes or any(b <= a for a, b in zip(self.sample_sizes, self.sample_sizes[1:])):
            raise ValueError("sample sizes must be non-empty and strictly increasing")
        PriceDist(self.d, self.p_lo, self.p_hi, self.b_lo, self.b_hi)

    @property
    def dist(self) -> PriceDist:
        return PriceDist(self.d, self.p_lo, self.p_hi, self.b_lo, self.b_hi)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class TrialRecord:
    trial: int
    m: int
    err_value: float
    err_bundle: float
    train_err: float
    queries: int
    seconds: float
    converged: bool = True
    ties: int = 0


def _utility_for(cfg: ExperimentConfig, rng):
    cls = "linear" if cfg.cls == "ordering" else cfg.cls
    return random_utility(cls, cfg.d, kappa=cfg.kappa, n=cfg.n_bits, seed=rng, rho=cfg.rho)


def _stat_rp(cfg: ExperimentConfig, m: int, rng) -> tuple:
    U = _utility_for(cfg, rng)
    dist = cfg.dist
    train = [sample_instance(dist, rng) for _ in range(m)]
    test = [sample_instance(dist, rng) for _ in range(cfg.test_size)]
    if cfg.cls == "leontief":
        h = learn_leontief_rp([(pb, demand(U, pb).bundle) for pb in train])
        err_v = err_b = 0
        for pb in test:
            x, y = demand(U, pb).bundle, demand(h, pb).bundle
            if abs(float(evaluate(U, x)) - float(evaluate(U, y))) > cfg.tol:
                err_v += 1
            if not np.allclose(np.asarray(x, float), np.asarray(y, float), atol=1e-12):
                err_b += 1
        return err_v / len(test), err_b / len(test), 0.0, m, True
    if cfg.cls == "ordering":
        spec = FeatureMapSpec("ordering", cfg.d)
        a = [float(v) for v in U.a]
        samples = [(pb, best_ordering(a, pb.prices)) for pb in train]
        h, rep = svm_train(samples, spec)
        wrong = sum(best_ordering([float(v) for v in h.w], pb.prices) != best_ordering(a, pb.prices) for pb in test)
        train_err = sum(best_ordering([float(v) for v in h.w], pb.prices) != y for pb, y in samples) / m
        rate = wrong / len(test)
        return rate, rate, train_err, m, rep.converged
    if cfg.cls == "linear":
        spec = FeatureMapSpec("linear", cfg.d)
    elif cfg.cls == "splc":
        spec = FeatureMapSpec("splc_knownL", cfg.d, lengths=U.lengths)
    else:
        raise ValueError("statistical RP learning is not available for CES (no separation oracle)")
    labels = [demand(U, pb) for pb in train]
    samples = [(pb, r.bundle) for pb, r in zip(train, labels)]
    h, rep = svm_train(samples, spec)
    err = rp_error(U, h, test, cfg.tol)
    ties = sum(r.tie_broken for r in labels)
    return err.value_rate, err.bundle_rate, training_error(h, samples), m, rep.converged, ties


def _query_rp(cfg: ExperimentConfig, rng) -> tuple:
    U = _utility_for(cfg, rng)
    d = cfg.d
    if cfg.cls == "linear":
        oracle = RPOracle(U)
        ok = learn_linear_rp(oracle, d, cfg.n_bits) == U
    elif cfg.cls == "splc":
        oracle = RPOracle(U, cap=None)
        ok = learn_splc_rp(oracle, d, cfg.kappa, cfg.n_bits) == U
    elif cfg.cls == "ces":
        oracle = RPOracle(U)
        V = learn_ces_rp(oracle, d)
        ok = _ces_close(U, V, 1e-6)
    else:
        oracle = RPOracle(U)
        ok = learn_leontief_rp_query(oracle, d) == U
    err = 0.0 if ok else 1.0
    return err, err, 0.0, oracle.query_count, True


def _ces_close(U, V, rel: float) -> bool:
    if abs(U.rho - V.rho) > rel * abs(U.rho):
        return False
    return all(abs(float(x) - float(y)) <= rel * max(float(y), 1e-300) for x, y in zip(V.a, U.a))


def _stat_value(cfg: ExperimentConfig, m: int, rng) -> tuple:
    U = _utility_for(cfg, rng)
    d = cfg.d
    train_x = [sample_bundle(d, rng) for _ in range(m)]
    test_x = [sample_bundle(d, rng) for _ in range(cfg.test_size)]
    if cfg.cls == "leontief":
        model = learn_leontief_values([(x, evaluate(U, x)) for x in train_x], d)
        predict = model.predict
    elif cfg.cls == "linear":
        model = learn_linear_values([(x, evaluate(U, x)) for x in train_x], d)
        predict = model.predict
    elif cfg.cls == "splc":
        model = learn_splc_values_knownL([(x, evaluate(U, x)) for x in train_x], U.lengths)
        predict = model.predict
    else:
        model = learn_ces_values_rho([(x, evaluate(U, x)) for x in train_x], U.rho)
        predict = model.predict

    def wrong(x) -> bool:
        got = predict(x)
        if got is None:
            return True  # abstention counts as an error
        want = evaluate(U, x)
        if cfg.cls == "ces":
            return abs(float(got) - float(want)) > 1e-6 * max(1.0, abs(float(want)))
        return got != want

    train_err = sum(wrong(x) for x in train_x) / m
    err = sum(wrong(x) for x in test_x) / len(test_x)
    return err, err, train_err, m, True


def _query_value(cfg: ExperimentConfig, rng) -> tuple:
    U = _utility_for(cfg, rng)
    oracle = ValueOracle(U)
    d = cfg.d
    if cfg.cls == "linear":
        ok = vq_linear(oracle, d) == U
    elif cfg.cls == "splc":
        ok = vq_splc(oracle, d, cfg.n_bits) == U
    elif cfg.cls == "ces":
        ok = _ces_close(U, vq_ces(oracle, d, U.rho), 1e-6)
    else:
        ok = vq_leontief(oracle, d, cfg.n_bits) == U
    err = 0.0 if ok else 1.0
    return err, err, 0.0, oracle.query_count, True


def run_trial(cfg: ExperimentConfig, trial: int, m: int) -> TrialRecord:
    """One trial; its RNG stream depends only on (seed, trial, m)."""
    rng = np.random.default_rng([cfg.seed, trial, m])
    start = time.perf_counter()
    if cfg.mode == "stat-rp":
        out = _stat_rp(cfg, m, rng)
    elif cfg.mode == "query-rp":
        out = _query_rp(cfg, rng)
    elif cfg.mode == "stat-value":
        out = _stat_value(cfg, m, rng)
    else:
        out = _query_value(cfg, rng)
    seconds = time.perf_counter() - start if cfg.timing else 0.0
    err_v, err_b, train_err, queries, converged = out[:5]
    ties = out[5] if len(out) > 5 else 0
    return TrialRecord(trial, m, err_v, err_b, train_err, queries, round(seconds, 6), converged, ties)


def _run_task(args):
    cfg, trial, m = args
    return run_trial(cfg, trial, m)


def summarize(records: Sequence[TrialRecord], cfg: ExperimentConfig) -> dict:
    per_m = []
    for m in cfg.sample_sizes:
        rows = [r for r in records if r.m == m]
        ev = np.array([r.err_value for r in rows])
        per_m.append(
            {
                "m": m,
                "trials": len(rows),
                "mean_err_value": float(ev.mean()),
                "median_err_value": float(np.quantile(ev, 0.5)),
                "q90_err_value": float(np.quantile(ev, 0.9)),
                "mean_err_bundle": float(np.mean([r.err_bundle for r in rows])),
                "mean_train_err": float(np.mean([r.train_err for r in rows])),
                "mean_queries": float(np.mean([r.queries for r in rows])),
                "max_queries": int(max(r.queries for r in rows)),
                "nonconverged": int(sum(not r.converged for r in rows)),
                "label_ties": int(sum(r.ties for r in rows)),
                "exact_recovery": bool(all(r.err_value == 0 for r in rows)),
            }
        )
    return {"config": asdict(cfg), "per_m": per_m}


def run_experiment(cfg: ExperimentConfig) -> tuple[list, dict]:
    """All (m, trial) pairs, in parallel when cfg.workers > 1; rows come back
    ordered by m, then trial, whatever the execution order."""
    tasks = [(cfg, t, m) for m in cfg.sample_sizes for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_run_task, tasks))
    else:
        records = [_run_task(t) for t in tasks]
    summary = summarize(records, cfg)
    if cfg.output:
        write_reports(records, summary, cfg.output)
    return records, summary


def write_reports(records: Sequence[TrialRecord], summary: dict, output: str) -> tuple[Path, Path]:
    base = Path(output)
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path = base.with_suffix(".csv")
    json_path = base.with_suffix(".json")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([getattr(r, c) for c in CSV_COLUMNS])
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


# --- verification suite -----------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _rand_rational(rng, hi: int = 20) -> Fraction:
    return Fraction(int(rng.integers(1, hi + 1)), int(rng.integers(1, hi + 1)))


def _rational_pb(rng, d: int) -> PriceBudget:
    p = [_rand_rational(rng) for _ in range(d)]
    B = Fraction(int(rng.integers(1, int(4 * sum(p)) + 2)), 4)
    return PriceBudget(p, B)


def check_demand(seed: int, count: int = 40, step=Fraction(1, 40)) -> CheckResult:
    rng = np.random.default_rng([seed, 1])
    for i in range(count):
        cls = ("linear", "splc", "ces", "leontief")[i % 4]
        d = int(rng.integers(1, 3))
        U = random_utility(cls, d, kappa=2, n=4, seed=rng)
        pb = PriceBudget(
            [Fraction(int(v), 8) for v in rng.integers(2, 24, d)], Fraction(int(rng.integers(0, 24)), 8)
        )
        x = demand(U, pb).bundle
        ref = demand_bruteforce(U, pb, step).bundle
        slack = grid_allowance(U, step) + 1e-9
        if float(evaluate(U, x)) < float(evaluate(U, ref)) - slack:
            return CheckResult("demand vs brute force", False, f"seed={seed} i={i} U={U} pb={pb}")
        tol = 1e-9 if cls == "ces" else 0
        if not kkt_check(cls, U, pb, x, tol):
            return CheckResult("demand vs brute force", False, f"KKT fails: seed={seed} i={i} U={U} pb={pb}")
    return CheckResult("demand vs brute force", True, f"{count} instances")


def check_second_best(seed: int, count: int = 60, d_max: int = 5) -> CheckResult:
    rng = np.random.default_rng([seed, 2])
    for i in range(count):
        d = int(rng.integers(2, d_max + 1))
        pb = _rational_pb(rng, d)
        w = [_rand_rational(rng) for _ in range(d)]
        sb = second_best_linear(w, pb)
        if sb.degenerate:
            continue
        best = best_admissible_linear(w, pb)
        vals = [sum(a * b for a, b in zip(w, y)) for y in admissible_bundles_linear(pb) if tuple(y) != tuple(best)]
        if vals and max(vals) != sb.value:
            return CheckResult("second best (linear/SPLC)", False, f"linear seed={seed} i={i} w={w} pb={pb}")
    for i in range(count // 2):
        d = int(rng.integers(1, 4))
        kappa = 2
        lengths = [tuple(_rand_rational(rng, 6) / 4 for _ in range(int(rng.integers(0, kappa)))) + (math.inf,) for _ in range(d)]
        w = []
        for j in range(d):
            w += sorted((_rand_rational(rng) for _ in range(kappa)), reverse=True)
        pb = _rational_pb(rng, d)
        sb = second_best_splc(w, lengths, pb, kappa)
        if sb.degenerate:
            continue
        best = best_admissible_splc(w, lengths, pb, kappa)
        val = lambda y: sum(a * b for a, b in zip(w, split(y, lengths, kappa)))
        vals = [val(y) for y in admissible_bundles_splc(lengths, pb) if tuple(y) != tuple(best)]
        if vals and max(vals) != sb.value:
            return CheckResult("second best (linear/SPLC)", False, f"splc seed={seed} i={i} w={w} L={lengths} pb={pb}")
    return CheckResult("second best (linear/SPLC)", True, f"{count + count // 2} instances")


def check_ordering(seed: int, psi_fn: Callable = ordering_psi, d_max: int = 4, count: int = 30) -> CheckResult:
    rng = np.random.default_rng([seed, 3])
    for d in range(2, d_max + 1):
        perms = list(itertools.permutations(range(d)))
        for i in range(count):
            w = rng.uniform(0.1, 1.0, d)
            p = np.exp(rng.uniform(-1, 1, d))
            scores = [float(np.dot(w, psi_fn(p, perm))) for perm in perms]
            top = perms[int(np.argmax(scores))]
            if tuple(top) != best_ordering(list(w), list(p)):
                return CheckResult(
                    "ordering argmax", False, f"d={d} seed={seed} i={i} w={w.tolist()} p={p.tolist()} argmax={top}"
                )
    return CheckResult("ordering argmax", True, f"d=2..{d_max}")


def check_min_norm(seed: int, count: int = 40) -> CheckResult:
    """The scaled min-norm point w = w'/|w'|^2 must carry a hard-margin SVM
    optimality certificate: all margins >= 1 and w = sum lam_i z_i with
    lam >= 0 supported on margin-1 constraints."""
    rng = np.random.default_rng([seed, 4])
    for i in range(count):
        D = int(rng.integers(2, 6))
        k = int(rng.integers(1, 21))
        direction = rng.normal(size=D)
        Z = rng.normal(size=(k, D))
        Z += np.outer(np.abs(Z @ direction) + 0.1 - Z @ direction, direction) / (direction @ direction)
        res = min_norm_point(Z)
        n2 = float(res.point @ res.point)
        w = res.point / n2
        lam = res.weights / n2
        margins = Z @ w
        ok = (
            res.converged
            and margins.min() >= 1 - 1e-9
            and np.allclose(lam @ Z, w, atol=1e-9 * max(1.0, np.abs(w).max()))
            and np.all(lam[margins > 1 + 1e-7] <= 1e-12)
        )
        if not ok:
            return CheckResult("SVM = min-norm point", False, f"seed={seed} i={i} Z={Z.tolist()}")
    return CheckResult("SVM = min-norm point", True, f"{count} instances")


def check_shattering(d_max: int = 6) -> CheckResult:
    for d in range(2, d_max + 1):
        if not shattering_check(d):
            return CheckResult("shattering construction", False, f"d={d}")
    if shattering_check(3, w1=3):
        return CheckResult("shattering construction", False, "mutated construction (w_1=3) still shatters")
    return CheckResult("shattering construction", True, f"d=2..{d_max}; mutation detected")


def check_slope_gap(n_max: int = 3) -> CheckResult:
    """For all size-n rationals s > s' >= 1/2^n: s'/s < 1/(1+eps)."""
    for n in range(1, n_max + 1):
        vals = sorted({Fraction(a, b) for a in range(1, 2**n) for b in range(1, 2**n)})
        bound = 1 / (1 + slope_gap_epsilon(n))
        for i, lo in enumerate(vals):
            for hi in vals[i + 1 :]:
                if lo / hi >= bound:
                    return CheckResult("slope gap", False, f"n={n} {lo} vs {hi}")
    return CheckResult("slope gap", True, f"n=1..{n_max}")


def check_query_learners(seed: int, count: int = 5) -> CheckResult:
    rng = np.random.default_rng([seed, 5])
    for i in range(count):
        U = random_utility("linear", 4, n=4, seed=rng)
        if learn_linear_rp(RPOracle(U), 4, 4) != U:
            return CheckResult("query learners", False, f"linear seed={seed} i={i} U={U}")
        U = random_utility("splc", 3, kappa=2, n=3, seed=rng)
        if learn_splc_rp(RPOracle(U, cap=None), 3, 2, 3) != U:
            return CheckResult("query learners", False, f"splc seed={seed} i={i} U={U}")
        U = random_utility("leontief", 4, n=4, seed=rng)
        if vq_leontief(ValueOracle(U), 4, 4) != U or learn_leontief_rp_query(RPOracle(U), 4) != U:
            return CheckResult("query learners", False, f"leontief seed={seed} i={i} U={U}")
        U = random_utility("splc", 2, kappa=3, n=3, seed=rng)
        if vq_splc(ValueOracle(U), 2, 3) != U:
            return CheckResult("query learners", False, f"splc values seed={seed} i={i} U={U}")
    return CheckResult("query learners", True, f"{count} rounds")


def verify_suite(seed: int = 0, d_max: int = 6, psi_ordering: Callable = ordering_psi) -> list:
    if d_max > VERIFY_D_CAP:
        raise ValueError(f"d cap exceeded: d_max={d_max} > {VERIFY_D_CAP}")
    if d_max < 2:
        raise ValueError("d_max must be >= 2")
    return [
        check_demand(seed),
        check_second_best(seed, d_max=min(d_max, 5)),
        check_ordering(seed, psi_ordering, d_max=min(d_max, 4)),
        check_min_norm(seed),
        check_shattering(d_max),
        check_slope_gap(),
        check_query_learners(seed),
    ]


def format_checks(results: Sequence[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check'.ljust(width)}  result  detail"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'PASS' if r.passed else 'FAIL':6}  {r.detail}")
    return "\n".join(lines)
