"""Hard-margin multiclass SVM for D-dimensional linear classes: a cutting
plane loop over a working set of constraint vectors, solved by Wolfe's
minimum-norm-point algorithm."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from revpref.demand import demand, demand_linear
from revpref.features import (
    FeatureMapSpec,
    best_admissible_linear,
    best_admissible_splc,
    best_ordering,
    psi,
    second_best_linear,
    second_best_ordering,
    second_best_splc,
)
from revpref.numerics import format_rational, solve_linear_exact
from revpref.utility import (
    INF,
    LeontiefUtility,
    PriceBudget,
    evaluate,
)


# --- minimum norm point -----------------------------------------------------------


@dataclass
class MinNormResult:
    point: np.ndarray
    weights: np.ndarray
    converged: bool
    iterations: int


def _affine_min_norm(P: np.ndarray) -> np.ndarray:
    """Coefficients alpha (sum 1) of the min-norm point of the affine hull of
    the rows of P. Parametrizes the hull as P_0 + sum_i beta_i (P_i - P_0) and
    solves the least-squares problem directly (better conditioned than the
    Gram-matrix KKT system)."""
    k = P.shape[0]
    if k == 1:
        return np.ones(1)
    E = (P[1:] - P[0]).T
    beta = np.linalg.lstsq(E, -P[0], rcond=None)[0]
    return np.concatenate([[1.0 - beta.sum()], beta])


def _exact_affine(P: list) -> list:
    k = len(P)
    if k == 1:
        return [Fraction(1)]
    E = [[pi - p0 for pi, p0 in zip(P[i], P[0])] for i in range(1, k)]
    G = [[sum(a * b for a, b in zip(E[r], E[c])) for c in range(k - 1)] for r in range(k - 1)]
    rhs = [-sum(a * b for a, b in zip(E[r], P[0])) for r in range(k - 1)]
    beta = solve_linear_exact(G, rhs)
    return [1 - sum(beta)] + beta


def _wolfe_exact(Zq: list, S: list, lam: list, max_iter: int):
    """Wolfe's algorithm in rational arithmetic, warm-started from a corral
    S with convex weights lam. Returns (S, lam, converged, iterations)."""
    dot = lambda u, v: sum(a * b for a, b in zip(u, v))
    combo = lambda S, lam: [sum(l * Zq[s][c] for s, l in zip(S, lam)) for c in range(len(Zq[0]))]
    it = 0
    fresh = False  # the first pass only repairs the warm start
    while it < max_iter:
        it += 1
        if fresh:
            x = combo(S, lam)
            xx = dot(x, x)
            if xx == 0:
                return S, lam, True, it
            dots = [dot(x, z) for z in Zq]
            j = min(range(len(Zq)), key=dots.__getitem__)
            if xx - dots[j] <= 0:
                return S, lam, True, it
            if j in S:
                return S, lam, False, it
            S = S + [j]
            lam = lam + [Fraction(0)]
        fresh = True
        while True:
            alpha = _exact_affine([Zq[s] for s in S])
            if all(a > 0 for a in alpha):
                lam = alpha
                break
            theta = min(l / (l - a) for l, a in zip(lam, alpha) if a <= 0)
            lam = [(1 - theta) * l + theta * a for l, a in zip(lam, alpha)]
            keep = [i for i, l in enumerate(lam) if l > 0]
            S = [S[i] for i in keep]
            lam = [lam[i] for i in keep]
    return S, lam, False, it


def min_norm_point(Z, tol: float = 1e-12, max_iter: int | None = None, exact: bool = True) -> MinNormResult:
    """Smallest-norm point of conv(Z) by Wolfe's major/minor cycles.

    A floating-point pass finds the corral (supporting points); with
    ``exact`` the answer is then finished in rational arithmetic on the float
    inputs, so the reported point is optimal to full double precision even
    when it is tiny compared to the rows of Z (hard-margin problems with
    small margins produce exactly that).
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n = Z.shape[0]
    if n == 0:
        raise ValueError("Z must be non-empty")
    max_iter = max_iter or 50 * n + 100
    scale = max(float(np.max(np.sum(Z * Z, axis=1))), 1e-300)
    eps = 1e-12

    norms = np.sum(Z * Z, axis=1)
    S = [int(np.argmin(norms))]
    lam = np.array([1.0])
    x = Z[S[0]].copy()
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        dots = Z @ x
        j = int(np.argmin(dots))
        gap = x @ x - dots[j]
        if gap <= tol * (x @ x) or gap <= 1e-28 * scale:
            converged = True
            break
        if j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            alpha = _affine_min_norm(Z[S])
            if np.all(alpha > eps):
                lam = alpha
                break
            mask = alpha <= eps
            ratios = lam[mask] / (lam[mask] - alpha[mask])
            theta = float(np.min(ratios)) if ratios.size else 0.0
            lam = (1 - theta) * lam + theta * alpha
            keep = lam > eps
            S = [s for s, k in zip(S, keep) if k]
            lam = lam[keep]
            lam = lam / lam.sum()
        x = lam @ Z[S]
    if exact:
        Zq = [[Fraction(float(v)) for v in row] for row in Z]
        lam_q = [Fraction(float(l)) for l in lam]
        lam_q = [l / sum(lam_q) for l in lam_q]
        S, lam_q, converged, extra = _wolfe_exact(Zq, list(S), lam_q, max_iter)
        it += extra
        lam = np.array([float(l) for l in lam_q])
        x = np.array([float(sum(l * Zq[s][c] for s, l in zip(S, lam_q))) for c in range(Z.shape[1])])
    weights = np.zeros(n)
    weights[S] = lam
    return MinNormResult(x, weights, converged, it)


# --- hypotheses -------------------------------------------------------------------


@dataclass
class Hypothesis:
    w: np.ndarray
    spec: FeatureMapSpec

    def to_json(self) -> dict:
        params: dict = {"d": self.spec.d}
        if self.spec.lengths is not None:
            params["L"] = [
                ["inf" if l == INF else format_rational(Fraction(l)) for l in row]
                for row in self.spec.lengths
            ]
        if self.spec.rho is not None:
            params["rho"] = self.spec.rho
        return {"kind": self.spec.kind, "w": [float(v) for v in self.w], "params": params}

    @classmethod
    def from_json(cls, obj: dict) -> "Hypothesis":
        params = obj.get("params", {})
        lengths = None
        if "L" in params:
            lengths = tuple(
                tuple(INF if l == "inf" else Fraction(l) for l in row) for row in params["L"]
            )
        spec = FeatureMapSpec(obj["kind"], int(params["d"]), lengths=lengths, rho=params.get("rho"))
        return cls(np.asarray(obj["w"], dtype=float), spec)


@dataclass
class TrainReport:
    iterations: int
    active_constraints: int
    min_margin: float
    converged: bool


@dataclass
class SVMConfig:
    tol: float = 1e-8
    max_rounds: int | None = None


def _float_pb(pb: PriceBudget) -> PriceBudget:
    return PriceBudget([float(v) for v in pb.prices], float(pb.budget))


def predict(h: Hypothesis, pb: PriceBudget):
    """argmax over labels of <w, Psi(pb, y)>."""
    w = [float(v) for v in h.w]
    kind = h.spec.kind
    if kind == "linear":
        return best_admissible_linear(w, _float_pb(pb))
    if kind == "splc_knownL":
        return best_admissible_splc(w, h.spec.lengths, _float_pb(pb), h.spec.kappa)
    if kind == "ordering":
        return best_ordering(w, [float(v) for v in pb.prices])
    raise ValueError(f"prediction is not supported for kind {kind!r}")


def _competitor(spec: FeatureMapSpec, w: np.ndarray, pb: PriceBudget, label, z_label: np.ndarray):
    """Psi of the label y != y_i maximizing <w, Psi(pb, y)>: the argmax under
    w when it differs from the label, the second best otherwise. For bundle
    kinds the inadmissible labels (Psi = 0) also compete."""
    wl = [float(v) for v in w]
    fpb = _float_pb(pb)
    if spec.kind == "ordering":
        best = best_ordering(wl, fpb.prices)
        y = best if tuple(best) != tuple(label) else second_best_ordering(wl, fpb.prices)
        return psi(spec, fpb, y)
    if spec.kind == "linear":
        best = best_admissible_linear(wl, fpb)
        other = lambda: second_best_linear(wl, fpb)
    elif spec.kind == "splc_knownL":
        best = best_admissible_splc(wl, spec.lengths, fpb, spec.kappa)
        other = lambda: second_best_splc(wl, spec.lengths, fpb, spec.kappa)
    else:
        raise ValueError(f"no separation oracle for kind {spec.kind!r}")
    z_best = psi(spec, fpb, best)
    if not np.allclose(z_best, z_label, rtol=0, atol=1e-12):
        cand = z_best
    else:
        sb = other()
        cand = np.zeros(spec.dim) if sb.degenerate else psi(spec, fpb, sb.bundle)
    zero = np.zeros(spec.dim)
    return cand if w @ cand >= w @ zero else zero


def _project(spec: FeatureMapSpec, w: np.ndarray) -> np.ndarray:
    """Non-negative, per-good non-increasing slopes (SPLC kind only): the
    greedy separation oracle is only valid on that set."""
    if spec.kind != "splc_knownL":
        return w
    kappa = spec.kappa
    out = w.copy()
    for j, row in enumerate(spec.lengths):
        c = len(row)
        seg = out[j * kappa : j * kappa + c]
        out[j * kappa : j * kappa + c] = np.clip(_isotonic_decreasing(seg), 0.0, None)
        out[j * kappa + c : (j + 1) * kappa] = 0.0
    return out


def _isotonic_decreasing(y: np.ndarray) -> np.ndarray:
    """Least-squares non-increasing fit (pool adjacent violators)."""
    blocks: list = []  # [mean, size]
    for v in y:
        blocks.append([float(v), 1])
        while len(blocks) > 1 and blocks[-2][0] < blocks[-1][0]:
            m2, n2 = blocks.pop()
            m1, n1 = blocks.pop()
            blocks.append([(m1 * n1 + m2 * n2) / (n1 + n2), n1 + n2])
    return np.concatenate([np.full(n, m) for m, n in blocks]) if blocks else np.array([])


def svm_train(samples: Sequence, spec: FeatureMapSpec, cfg: SVMConfig | None = None):
    """Cutting-plane hard-margin SVM.

    ``samples`` is a list of (PriceBudget, label) pairs. Each round solves the
    restricted problem on the working set W via the min-norm point w' of
    conv(W) and rescales w = w' / |w'|^2 so that min_{z in W} <w, z> = 1; then
    the separation oracle adds, per sample, the most violated constraint.
    """
    cfg = cfg or SVMConfig()
    D = spec.dim
    m = len(samples)
    if m == 0:
        raise ValueError("empty sample")
    max_rounds = cfg.max_rounds or 10 * m * D
    labels_psi = [psi(spec, _float_pb(pb), y) for pb, y in samples]

    W: list = []
    seen: set = set()
    w = np.zeros(D)
    converged = False
    rounds = 0
    while rounds < max_rounds:
        rounds += 1
        added = 0
        for (pb, y), zl in zip(samples, labels_psi):
            z = zl - _competitor(spec, w, pb, y, zl)
            if not np.any(z):
                continue  # label indistinguishable from every competitor (e.g. B = 0)
            if w @ z < 1 - cfg.tol:
                key = tuple(np.round(z, 12))
                if key not in seen:
                    seen.add(key)
                    W.append(z)
                    added += 1
        if added == 0:
            converged = True
            break
        res = min_norm_point(np.array(W))
        nrm2 = float(res.point @ res.point)
        if nrm2 <= 1e-24:
            break  # 0 in conv(W): not separable
        w = _project(spec, res.point / nrm2)

    margins = [
        float(w @ (zl - _competitor(spec, w, pb, y, zl)))
        for (pb, y), zl in zip(samples, labels_psi)
        if np.any(zl - _competitor(spec, w, pb, y, zl))
    ]
    min_margin = min(margins) if margins else float("inf")
    converged = converged and min_margin >= 1 - cfg.tol
    report = TrainReport(rounds, len(W), min_margin, converged)
    return Hypothesis(w, spec), report


# --- error measurement -------------------------------------------------------------


@dataclass
class RPError:
    value_rate: float
    bundle_rate: float


def rp_error(trueU, h: Hypothesis, test: Sequence[PriceBudget], tol: float = 1e-9) -> RPError:
    """Fraction of test points where the true utility of the predicted bundle
    differs from the optimum by more than ``tol`` (value metric), and where
    the bundles themselves differ (bundle metric)."""
    if not test:
        raise ValueError("empty test set")
    value_err = bundle_err = 0
    for pb in test:
        opt = demand(trueU, pb).bundle
        pred = predict(h, pb)
        u_opt, u_pred = float(evaluate(trueU, opt)), float(evaluate(trueU, pred))
        if abs(u_opt - u_pred) > tol * max(1.0, abs(u_opt)):
            value_err += 1
        if not np.allclose(np.asarray(opt, float), np.asarray(pred, float), rtol=0, atol=1e-9):
            bundle_err += 1
    return RPError(value_err / len(test), bundle_err / len(test))


def training_error(h: Hypothesis, samples: Sequence) -> float:
    wrong = 0
    for pb, y in samples:
        pred = predict(h, pb)
        if not np.allclose(np.asarray(pred, float), np.asarray(y, float), rtol=0, atol=1e-9):
            wrong += 1
    return wrong / len(samples) if samples else 0.0


# --- Leontief and shattering ------------------------------------------------------


def learn_leontief_rp(sample: Sequence) -> LeontiefUtility:
    """A single optimal bundle x = beta * a reveals a = x / sum(x). Accepts
    bundles or (PriceBudget, bundle) pairs."""
    for item in sample:
        x = item[1] if isinstance(item, tuple) and isinstance(item[0], PriceBudget) else item
        x = [Fraction(v) for v in x]
        total = sum(x)
        if total > 0:
            return LeontiefUtility(tuple(v / total for v in x))
    raise ValueError("all observed bundles are zero; proportions are unidentifiable")


def shattering_instances(d: int) -> list:
    """d - 1 price vectors with goods 1 and j+1 at price 1, the rest at 10, and
    budget 1."""
    out = []
    for j in range(1, d):
        prices = [Fraction(10)] * d
        prices[0] = Fraction(1)
        prices[j] = Fraction(1)
        out.append(PriceBudget(prices, Fraction(1)))
    return out


def shattering_check(d: int, w1=1) -> bool:
    """True iff every pattern v in {0,1}^(d-1) is realized: under w (w_1 = w1,
    w_{j+1} = 2 if v_j = 1 else 1) the demand at the j-th instance buys only
    good j+1 when v_j = 1 and only good 1 when v_j = 0."""
    if not 2 <= d <= 8:
        raise ValueError("shattering_check supports 2 <= d <= 8")
    instances = shattering_instances(d)
    e = lambda i: tuple(Fraction(int(k == i)) for k in range(d))
    for v in itertools.product((0, 1), repeat=d - 1):
        w = [Fraction(w1)] + [Fraction(2 if bit else 1) for bit in v]
        for j, pb in enumerate(instances, start=1):
            want = e(j) if v[j - 1] else e(0)
            if tuple(demand_linear(w, pb).bundle) != want:
                return False
    return True
