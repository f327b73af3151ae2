"""End-to-end acceptance criteria, one test per criterion.

Each test prints a PASS/FAIL line; the terminal summary repeats them all.
"""

import itertools
import math
import time
from fractions import Fraction as F

import numpy as np
import pytest

from revpref.demand import demand, demand_bruteforce, kkt_check
from revpref.features import (
    best_admissible_linear,
    best_admissible_splc,
    best_ordering,
    ordering_psi,
    second_best_linear,
    second_best_splc,
    split,
)
from revpref.harness import ExperimentConfig, run_experiment, sample_bundle
from revpref.rp_query import (
    SPLC_QUERY_CONSTANT,
    RPOracle,
    learn_ces_rp,
    learn_leontief_rp_query,
    learn_linear_rp,
    learn_splc_rp,
)
from revpref.svm import min_norm_point, shattering_check
from revpref.utility import PriceBudget, evaluate, grid_allowance, random_utility
from revpref.value import (
    VQ_SPLC_CONSTANT,
    LeontiefEstimate,
    ValueOracle,
    leontief_sample_size,
    vq_ces,
    vq_leontief,
    vq_linear,
    vq_splc,
)

from oracles import enumerate_linear, enumerate_splc, max_margin_direction, rand_q, random_splc_instance, rational_pb, realizable_Z

pytestmark = pytest.mark.slow


def dot(w, x):
    return sum(a * b for a, b in zip(w, x))


def test_01_linear_query_recovery(criterion):
    with criterion(1, "exact RP-query recovery, linear (d=5, n=6)") as note:
        d, n = 5, 6
        rng = np.random.default_rng(101)
        start = time.perf_counter()
        exact, worst = 0, 0
        for _ in range(100):
            U = random_utility("linear", d, n=n, seed=rng)
            oracle = RPOracle(U)
            exact += learn_linear_rp(oracle, d, n) == U
            worst = max(worst, oracle.query_count)
        elapsed = time.perf_counter() - start
        note(f"{exact}/100 exact, max queries {worst}, {elapsed:.1f}s")
        assert exact == 100
        assert worst <= 121
        assert elapsed < 10


def test_02_splc_query_recovery(criterion):
    with criterion(2, "exact RP-query recovery, SPLC (d=3, kappa=3, n=5)") as note:
        d, kappa, n = 3, 3, 5
        rng = np.random.default_rng(102)
        start = time.perf_counter()
        exact, worst = 0, 0
        for _ in range(50):
            U = random_utility("splc", d, kappa=kappa, n=n, seed=rng)
            oracle = RPOracle(U, cap=None)
            exact += learn_splc_rp(oracle, d, kappa, n) == U
            worst = max(worst, oracle.query_count)
        elapsed = time.perf_counter() - start
        bound = SPLC_QUERY_CONSTANT * n * d * kappa
        note(f"{exact}/50 exact, max queries {worst} <= c*n*d*kappa = {bound} (c={SPLC_QUERY_CONSTANT}), {elapsed:.1f}s")
        assert exact == 50
        assert worst <= bound
        assert elapsed < 60


def test_03_ces_and_leontief_queries(criterion):
    with criterion(3, "CES two-query and Leontief one-query recovery") as note:
        rng = np.random.default_rng(103)
        worst_rel = 0.0
        for _ in range(100):
            U = random_utility("ces", 4, n=6, seed=rng)
            oracle = RPOracle(U)
            V = learn_ces_rp(oracle, 4)
            assert oracle.query_count == 2
            rel = [abs(V.rho - U.rho) / abs(U.rho)]
            rel += [abs(float(b) - float(a)) / float(a) for a, b in zip(U.a, V.a)]
            worst_rel = max(worst_rel, max(rel))
        assert worst_rel <= 1e-6
        for _ in range(100):
            U = random_utility("leontief", 10, n=6, seed=rng)
            oracle = RPOracle(U)
            assert learn_leontief_rp_query(oracle, 10) == U
            assert oracle.query_count == 1
        note(f"CES max relative error {worst_rel:.1e}; Leontief 100/100 exact")


def test_04_demand_oracle_equivalence(criterion):
    with criterion(4, "demand oracle vs brute force, step 1/200, 500 per class") as note:
        step = F(1, 200)
        for index, cls in enumerate(["linear", "splc", "ces", "leontief"]):
            rng = np.random.default_rng([104, index])
            worst_gap = -math.inf
            for _ in range(500):
                d = int(rng.integers(1, 4))
                U = random_utility(cls, d, kappa=3, n=4, seed=rng)
                pb = PriceBudget(
                    tuple(F(int(v), 8) for v in rng.integers(2, 24, d)), F(int(rng.integers(0, 8 * d + 1)), 8)
                )
                x = demand(U, pb).bundle
                ref = demand_bruteforce(U, pb, step).bundle
                gap = float(evaluate(U, ref)) - float(evaluate(U, x))
                assert gap <= grid_allowance(U, step) + 1e-12, (U, pb)
                assert kkt_check(cls, U, pb, x, 1e-9 if cls == "ces" else 0), (U, pb)
                worst_gap = max(worst_gap, gap)
            note(f"{cls} max excess {worst_gap:.1e}")


def test_05_second_best(criterion):
    with criterion(5, "second best vs exhaustive enumeration") as note:
        rng = np.random.default_rng(105)
        checked = 0
        for _ in range(1000):
            d = int(rng.integers(2, 9))
            pb = rational_pb(rng, d)
            while sum(pb.prices) <= pb.budget:
                pb = rational_pb(rng, d)
            w = [rand_q(rng) for _ in range(d)]
            best = tuple(best_admissible_linear(w, pb))
            want = max(dot(w, y) for y in enumerate_linear(pb) if y != best)
            sb = second_best_linear(w, pb)
            assert sb.value == want, (w, pb)
            checked += 1
        splc = 0
        while splc < 300:
            d = int(rng.integers(1, 5))
            kappa = int(rng.integers(1, 4))
            w, L = random_splc_instance(rng, d, kappa)
            pb = rational_pb(rng, d)
            sb = second_best_splc(w, L, pb, kappa)
            if sb.degenerate:
                continue
            best = tuple(best_admissible_splc(w, L, pb, kappa))
            want = max(dot(w, split(y, L, kappa)) for y in enumerate_splc(L, pb) if y != best)
            assert sb.value == want, (w, L, pb)
            splc += 1
        note(f"linear {checked}/1000, SPLC {splc}/300")


def test_06_svm_is_min_norm_point(criterion):
    with criterion(6, "SVM direction = normalized min-norm point") as note:
        rng = np.random.default_rng(106)
        worst = 0.0
        for _ in range(200):
            Z = realizable_Z(rng, int(rng.integers(1, 6)), int(rng.integers(1, 21)))
            res = min_norm_point(Z)
            assert res.converged
            mine = res.point / np.linalg.norm(res.point)
            ref = max_margin_direction(Z)
            worst = max(worst, float(np.abs(mine - ref).max()))
        note(f"200 instances, max deviation {worst:.1e}")
        assert worst <= 1e-6


def test_07_statistical_linear(criterion):
    with criterion(7, "statistical RP learning, linear (d=5)") as note:
        start = time.perf_counter()
        cfg = ExperimentConfig(
            cls="linear", mode="stat-rp", d=5, n_bits=6, sample_sizes=[100, 400], trials=50,
            test_size=1000, seed=107, timing=False,
        )
        records, summary = run_experiment(cfg)
        elapsed = time.perf_counter() - start
        by_m = {row["m"]: row for row in summary["per_m"]}
        converged = [r for r in records if r.converged]
        note(
            f"mean error m=100 {by_m[100]['mean_err_value']:.4f}, m=400 {by_m[400]['mean_err_value']:.4f}; "
            f"{len(converged)}/{len(records)} converged; {elapsed:.0f}s"
        )
        assert by_m[400]["mean_err_value"] <= 0.1
        assert all(r.train_err == 0 for r in converged)
        assert by_m[400]["mean_err_value"] <= by_m[100]["mean_err_value"]
        assert elapsed < 300


def test_08_shattering(criterion):
    with criterion(8, "shattering construction, d=2..6, and mutation") as note:
        for d in range(2, 7):
            assert shattering_check(d), d
        assert not shattering_check(3, w1=3)
        note("all 2^(d-1) patterns realized; w_1=3 breaks it")


def test_09_leontief_values(criterion):
    with criterion(9, "Leontief value learning (d=10, eps=delta=0.1, m=461)") as note:
        d, eps, delta = 10, 0.1, 0.1
        m = leontief_sample_size(d, eps, delta)
        assert m == 461
        good, updates = 0, 0
        for trial in range(200):
            rng = np.random.default_rng([109, trial])
            U = random_utility("leontief", d, n=6, seed=rng)
            est = LeontiefEstimate(d)
            for _ in range(m):
                x = sample_bundle(d, rng)
                est.update(x, evaluate(U, x))
                updates += 1
                assert all(a <= b for a, b in zip(U.a, est.b))
            test = [sample_bundle(d, rng) for _ in range(1000)]
            err = sum(est.predict(x) != evaluate(U, x) for x in test) / len(test)
            good += err <= eps
        note(f"{good}/200 trials with error <= {eps}; sandwich held on {updates} updates")
        assert good >= 0.85 * 200


def test_10_value_queries(criterion):
    with criterion(10, "value-query learners") as note:
        rng = np.random.default_rng(110)
        for _ in range(50):
            U = random_utility("linear", 6, n=6, seed=rng)
            oracle = ValueOracle(U)
            assert vq_linear(oracle, 6) == U and oracle.query_count == 6
        for _ in range(50):
            U = random_utility("ces", 5, n=6, seed=rng)
            oracle = ValueOracle(U)
            V = vq_ces(oracle, 5, U.rho)
            assert np.allclose([float(v) for v in V.a], [float(v) for v in U.a], rtol=1e-9, atol=0)
            assert oracle.query_count == 5
        for _ in range(50):
            U = random_utility("leontief", 8, n=5, seed=rng, zero_prob=0.2)
            oracle = ValueOracle(U)
            assert vq_leontief(oracle, 8, 5) == U and oracle.query_count <= 16
        n, worst = 5, 0.0
        for _ in range(50):
            U = random_utility("splc", 3, kappa=3, n=n, seed=rng)
            per_good: dict = {}

            class Counting(ValueOracle):
                def query(self, x):
                    j = next(k for k, v in enumerate(x) if v != 0)
                    per_good[j] = per_good.get(j, 0) + 1
                    return super().query(x)

            assert vq_splc(Counting(U), 3, n) == U
            for j, count in enumerate(U.segment_counts()):
                assert per_good[j] <= VQ_SPLC_CONSTANT * n * count
                worst = max(worst, per_good[j] / (n * count))
        note(f"linear d, CES d, Leontief <= 2d queries; SPLC per good <= {worst:.2f} n |U_j| (c={VQ_SPLC_CONSTANT})")


def test_11_ordering_argmax(criterion):
    with criterion(11, "ordering argmax over S_d equals sort by w/p, d <= 5") as note:
        rng = np.random.default_rng(111)
        perms = {d: list(itertools.permutations(range(d))) for d in range(1, 6)}
        for i in range(500):
            d = 1 + i % 5
            w = rng.uniform(0.01, 1, d)
            p = np.exp(rng.uniform(-2, 2, d))
            top = max(perms[d], key=lambda pi: float(w @ ordering_psi(p, pi)))
            assert top == best_ordering(w, p) == tuple(np.argsort(-w / p, kind="stable"))
        note("500/500 draws")
