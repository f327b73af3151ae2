import json
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from revpref.demand import demand
from revpref.features import FeatureMapSpec, best_ordering, second_best_linear
from revpref.harness import PriceDist, sample_instance
from revpref.svm import (
    Hypothesis,
    learn_leontief_rp,
    min_norm_point,
    predict,
    rp_error,
    shattering_check,
    shattering_instances,
    svm_train,
    training_error,
)
from revpref.utility import INF, LeontiefUtility, LinearUtility, PriceBudget, random_utility


def realizable_Z(rng, D, k):
    u = rng.normal(size=D)
    Z = rng.normal(size=(k, D))
    shift = np.abs(Z @ u) + 0.1 - Z @ u
    return Z + np.outer(shift, u) / (u @ u)


def projected_gradient_min_norm(Z, iters=20000):
    """Projected gradient on the simplex for min |lam @ Z|^2: a different
    algorithm for the same convex program, accurate to ~1e-8 here."""
    k = Z.shape[0]
    lam = np.full(k, 1.0 / k)
    G = Z @ Z.T
    step = 1.0 / max(np.linalg.eigvalsh(G).max(), 1e-12)
    for _ in range(iters):
        v = lam - step * (G @ lam)
        u = np.sort(v)[::-1]
        css = np.cumsum(u) - 1
        r = np.nonzero(u - css / np.arange(1, k + 1) > 0)[0][-1]
        lam = np.maximum(v - css[r] / (r + 1), 0)
    return lam @ Z


class TestMinNormPoint:
    def test_symmetric(self):
        np.testing.assert_allclose(min_norm_point([[1, 0], [0, 1]]).point, [0.5, 0.5])

    def test_singleton(self):
        np.testing.assert_allclose(min_norm_point([[2, 0]]).point, [2, 0])

    def test_vertex_optimum(self):
        res = min_norm_point([[1, 1], [3, -1]])
        np.testing.assert_allclose(res.point, [1, 1])
        np.testing.assert_allclose(res.weights, [1, 0])

    def test_origin_inside_hull(self):
        res = min_norm_point([[1, 0], [-1, 0], [0, 1], [0, -1]])
        assert res.converged and np.allclose(res.point, 0)

    def test_empty(self):
        with pytest.raises(ValueError):
            min_norm_point(np.zeros((0, 2)))

    def test_deterministic(self):
        Z = realizable_Z(np.random.default_rng(0), 4, 12)
        a, b = min_norm_point(Z), min_norm_point(Z)
        np.testing.assert_array_equal(a.point, b.point)

    @given(st.integers(min_value=0, max_value=2**32))
    @settings(max_examples=60, deadline=None)
    def test_optimality_and_weights(self, seed):
        rng = np.random.default_rng(seed)
        Z = realizable_Z(rng, int(rng.integers(2, 6)), int(rng.integers(1, 21)))
        res = min_norm_point(Z)
        assert res.converged
        assert res.weights.min() >= 0 and res.weights.sum() == pytest.approx(1)
        np.testing.assert_allclose(res.weights @ Z, res.point, atol=1e-12)
        # Wolfe optimality: every point of Z lies on the far side of x
        x = res.point
        assert (Z @ x).min() >= x @ x * (1 - 1e-9)

    def test_matches_projected_gradient(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            Z = realizable_Z(rng, int(rng.integers(2, 5)), int(rng.integers(2, 10)))
            want = projected_gradient_min_norm(Z)
            np.testing.assert_allclose(min_norm_point(Z).point, want, atol=1e-6)

    def test_tiny_norm_is_exact(self):
        # nearly degenerate: the min-norm point is ~1e-6 long
        Z = np.array([[1.0, 1e-6], [-1.0, 1e-6], [0.0, 1.0]])
        res = min_norm_point(Z)
        np.testing.assert_allclose(res.point, [0, 1e-6], rtol=1e-9, atol=1e-20)


def linear_sample(U, m, rng, dist=None):
    dist = dist or PriceDist(U.d)
    pbs = [sample_instance(dist, rng) for _ in range(m)]
    return [(pb, demand(U, pb).bundle) for pb in pbs]


class TestSVMTrain:
    def test_single_sample(self):
        U = LinearUtility((F(2, 3), F(1, 3)))
        pb = PriceBudget((F(1), F(1)), F(1, 2))
        h, rep = svm_train([(pb, demand(U, pb).bundle)], FeatureMapSpec("linear", 2))
        assert rep.converged and rep.min_margin >= 1 - 1e-8
        assert training_error(h, [(pb, demand(U, pb).bundle)]) == 0

    def test_compression_property(self):
        U = LinearUtility((F(1, 2), F(3, 10), F(1, 5)))
        sample = linear_sample(U, 100, np.random.default_rng(2))
        h, rep = svm_train(sample, FeatureMapSpec("linear", 3))
        assert rep.converged
        assert training_error(h, sample) == 0

    def test_margins_after_convergence(self):
        rng = np.random.default_rng(3)
        U = random_utility("linear", 4, n=5, seed=rng)
        sample = linear_sample(U, 60, rng)
        h, rep = svm_train(sample, FeatureMapSpec("linear", 4))
        assert rep.converged
        for pb, y in sample:
            sb = second_best_linear(list(h.w), PriceBudget([float(v) for v in pb.prices], float(pb.budget)))
            if sb.degenerate:
                continue
            margin = float(h.w @ np.array([float(v) for v in y])) - float(sb.value)
            assert margin >= 1 - 1e-6

    def test_ordering_generalizes(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(0.1, 1, 3)
        dist = PriceDist(3)
        samples = []
        for _ in range(50):
            pb = sample_instance(dist, rng)
            samples.append((pb, best_ordering(a, pb.prices)))
        h, rep = svm_train(samples, FeatureMapSpec("ordering", 3))
        assert rep.converged and training_error(h, samples) == 0
        test = [sample_instance(dist, rng) for _ in range(1000)]
        agree = np.mean([predict(h, pb) == best_ordering(a, pb.prices) for pb in test])
        assert agree >= 0.95

    def test_splc_known_lengths(self):
        rng = np.random.default_rng(5)
        U = random_utility("splc", 2, kappa=2, n=4, seed=rng)
        sample = linear_sample(U, 80, rng)
        spec = FeatureMapSpec("splc_knownL", 2, lengths=U.lengths)
        h, rep = svm_train(sample, spec)
        if rep.converged:
            assert training_error(h, sample) == 0
        for j, row in enumerate(U.lengths):
            seg = h.w[j * spec.kappa : j * spec.kappa + len(row)]
            assert np.all(np.diff(seg) <= 1e-12) and np.all(seg >= 0)

    def test_unsupported_kind(self):
        pb = PriceBudget((F(1), F(1)), F(1, 2))
        with pytest.raises(ValueError):
            svm_train([(pb, (0.25, 0.25))], FeatureMapSpec("ces_rho", 2, rho=0.5))

    def test_empty_sample(self):
        with pytest.raises(ValueError):
            svm_train([], FeatureMapSpec("linear", 2))

    @pytest.mark.slow
    def test_error_shrinks_with_more_data(self):
        errs = {}
        for m in (25, 100):
            vals = []
            for trial in range(30):
                rng = np.random.default_rng([9, trial, m])
                U = random_utility("linear", 3, n=5, seed=rng)
                h, _ = svm_train(linear_sample(U, m, rng), FeatureMapSpec("linear", 3))
                test = [sample_instance(PriceDist(3), rng) for _ in range(300)]
                vals.append(rp_error(U, h, test).value_rate)
            errs[m] = np.mean(vals)
        assert errs[100] <= errs[25]


class TestPredict:
    def test_greedy(self):
        h = Hypothesis(np.array([2 / 3, 1 / 3]), FeatureMapSpec("linear", 2))
        assert predict(h, PriceBudget((F(1), F(1)), F(1, 2))) == (0.5, 0)

    def test_full_bundle(self):
        h = Hypothesis(np.array([0.5, 0.5]), FeatureMapSpec("linear", 2))
        assert predict(h, PriceBudget((F(1), F(1)), F(3))) == (1, 1)

    def test_true_weights_reproduce_labels(self):
        rng = np.random.default_rng(6)
        U = random_utility("linear", 4, n=5, seed=rng)
        h = Hypothesis(np.array([float(v) for v in U.a]), FeatureMapSpec("linear", 4))
        for pb, y in linear_sample(U, 200, rng):
            np.testing.assert_allclose(np.asarray(predict(h, pb), float), np.asarray(y, float), atol=1e-12)

    @pytest.mark.parametrize("alpha", [1 / 3, 2.0, 7.0])
    def test_scale_invariant(self, alpha):
        rng = np.random.default_rng(7)
        w = rng.uniform(0.1, 1, 4)
        spec = FeatureMapSpec("linear", 4)
        for _ in range(100):
            pb = sample_instance(PriceDist(4), rng)
            assert predict(Hypothesis(w, spec), pb) == pytest.approx(predict(Hypothesis(alpha * w, spec), pb))

    def test_unsupported_kind(self):
        with pytest.raises(ValueError):
            predict(Hypothesis(np.ones(2), FeatureMapSpec("ces_rho", 2, rho=0.5)), PriceBudget((1, 1), 1))

    def test_json_round_trip(self):
        spec = FeatureMapSpec("splc_knownL", 2, lengths=[(F(1, 2), INF), (INF,)])
        h = Hypothesis(np.array([1.0, 0.5, 0.25, 0.0]), spec)
        back = Hypothesis.from_json(json.loads(json.dumps(h.to_json())))
        assert back.spec == h.spec
        np.testing.assert_array_equal(back.w, h.w)


class TestRPError:
    def test_true_weights(self):
        rng = np.random.default_rng(8)
        U = random_utility("linear", 3, n=5, seed=rng)
        h = Hypothesis(np.array([float(v) for v in U.a]), FeatureMapSpec("linear", 3))
        test = [sample_instance(PriceDist(3), rng) for _ in range(200)]
        assert rp_error(U, h, test).value_rate == 0

    def test_reverse_order(self):
        U = LinearUtility((F(3, 4), F(1, 4)))
        h = Hypothesis(np.array([0.25, 0.75]), FeatureMapSpec("linear", 2))
        err = rp_error(U, h, [PriceBudget((F(1), F(1)), F(1, 2))])
        assert err.value_rate == 1 and err.bundle_rate == 1

    def test_empty(self):
        h = Hypothesis(np.ones(2), FeatureMapSpec("linear", 2))
        with pytest.raises(ValueError, match="empty test set"):
            rp_error(LinearUtility((F(1, 2), F(1, 2))), h, [])


class TestLeontiefFromOneObservation:
    @pytest.mark.parametrize(
        "x, a",
        [
            ((F(1, 4), F(1, 4)), (F(1, 2), F(1, 2))),
            ((F(1), F(1, 2), F(1, 2)), (F(1, 2), F(1, 4), F(1, 4))),
        ],
    )
    def test_examples(self, x, a):
        assert learn_leontief_rp([x]) == LeontiefUtility(a)

    def test_all_zero(self):
        with pytest.raises(ValueError):
            learn_leontief_rp([(F(0), F(0))])

    def test_skips_zero_bundles(self):
        pb0 = PriceBudget((F(1), F(1)), F(0))
        pb1 = PriceBudget((F(1), F(1)), F(1, 2))
        U = LeontiefUtility((F(1, 3), F(2, 3)))
        sample = [(pb, demand(U, pb).bundle) for pb in (pb0, pb1)]
        assert learn_leontief_rp(sample) == U

    def test_float_bundles(self):
        rng = np.random.default_rng(9)
        U = random_utility("leontief", 5, n=5, seed=rng)
        pb = sample_instance(PriceDist(5), rng)
        V = learn_leontief_rp([(pb, demand(U, pb).bundle)])
        assert [float(v) for v in V.a] == pytest.approx([float(v) for v in U.a], rel=1e-12)


class TestShattering:
    @pytest.mark.parametrize("d", [2, 3, 4, 5, 6])
    def test_shattered(self, d):
        assert shattering_check(d)

    def test_mutation_fails(self):
        assert not shattering_check(3, w1=3)

    def test_instances(self):
        inst = shattering_instances(4)
        assert len(inst) == 3
        assert inst[1].prices == (1, 10, 1, 10) and inst[1].budget == 1

    @pytest.mark.parametrize("d", [1, 9])
    def test_range(self, d):
        with pytest.raises(ValueError):
            shattering_check(d)
