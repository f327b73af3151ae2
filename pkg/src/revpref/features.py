"""Feature maps Psi that turn demand classes into D-dimensional linear
classes, admissibility predicates, and second-best bundle oracles."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from revpref.utility import INF, PriceBudget

KINDS = ("linear", "splc_knownL", "ces_rho", "ordering")


@dataclass(frozen=True)
class FeatureMapSpec:
    kind: str
    d: int
    lengths: tuple | None = None
    rho: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown feature map kind {self.kind!r}")
        if self.kind == "splc_knownL":
            if self.lengths is None or len(self.lengths) != self.d:
                raise ValueError("splc_knownL needs one length row per good")
            object.__setattr__(self, "lengths", tuple(tuple(row) for row in self.lengths))
        if self.kind == "ces_rho" and self.rho is None:
            raise ValueError("ces_rho needs rho")

    @property
    def kappa(self) -> int:
        return max(len(row) for row in self.lengths) if self.kind == "splc_knownL" else 1

    @property
    def dim(self) -> int:
        return self.kappa * self.d


@dataclass(frozen=True)
class SecondBest:
    bundle: tuple
    value: Any
    degenerate: bool = False


def _exact(*seqs) -> bool:
    return all(isinstance(v, (int, Fraction)) for s in seqs for v in s)


def _tol_for(pb: PriceBudget, x) -> float:
    return 0 if _exact(pb.prices, (pb.budget,), x) else 1e-9


def _eq(u, v, tol) -> bool:
    return u == v if tol == 0 else abs(u - v) <= tol * max(1.0, abs(u), abs(v))


def boundaries(lengths_row: Sequence, cap=1) -> list:
    """Segment boundaries of one good inside [0, cap]: 0, the prefix sums of
    the finite lengths that fall below the cap, and the cap itself."""
    out = [0]
    start = 0
    for l in lengths_row:
        if l == INF:
            break
        start += l
        if start >= cap:
            break
        out.append(start)
    out.append(cap)
    return out


def is_admissible(pb: PriceBudget, x: Sequence, kind: str = "linear", lengths=None, tol=None) -> bool:
    """Linear kind: at most one fractional coordinate and cost exactly B, or
    the full bundle when it is affordable. SPLC kind: the same with
    "fractional" replaced by "not on a segment boundary"."""
    x = tuple(x)
    if len(x) != pb.d:
        raise ValueError("dimension mismatch")
    if tol is None:
        tol = _tol_for(pb, x)
    if any(v < -tol or v > 1 + tol for v in x):
        return False
    if all(_eq(v, 1, tol) for v in x) and sum(pb.prices) <= pb.budget + tol:
        return True
    if not _eq(pb.cost(x), pb.budget, tol):
        return False
    if kind == "linear":
        loose = sum(1 for v in x if not (_eq(v, 0, tol) or _eq(v, 1, tol)))
    elif kind in ("splc", "splc_knownL"):
        if lengths is None:
            raise ValueError("splc admissibility needs segment lengths")
        loose = sum(
            1 for v, row in zip(x, lengths) if not any(_eq(v, b, tol) for b in boundaries(row))
        )
    else:
        raise ValueError(f"admissibility undefined for kind {kind!r}")
    return loose <= 1


def split(x: Sequence, lengths: Sequence[Sequence], kappa: int | None = None) -> list:
    """kappa*d vector of per-segment amounts, index j*kappa + k."""
    kappa = kappa or max(len(row) for row in lengths)
    out = [0] * (kappa * len(x))
    for j, (xj, row) in enumerate(zip(x, lengths)):
        start = 0
        for k, l in enumerate(row):
            if xj <= start:
                break
            amount = xj - start if l == INF else min(l, xj - start)
            out[j * kappa + k] = amount
            if l == INF:
                break
            start += l
    return out


def ordering_psi(p: Sequence, ranking: Sequence[int]) -> np.ndarray:
    """sum_{i<j} pi_ij ((1/p_i) e_i - (1/p_j) e_j), pi_ij = +1 iff i is
    ranked before j. Coordinate i collapses to (d - 1 - 2 pos_i) / p_i."""
    d = len(p)
    if sorted(ranking) != list(range(d)):
        raise ValueError("ranking must be a permutation of the goods")
    pos = [0] * d
    for r, j in enumerate(ranking):
        pos[j] = r
    return np.array([(d - 1 - 2 * pos[i]) / float(p[i]) for i in range(d)])


def psi(spec: FeatureMapSpec, pb: PriceBudget, label) -> np.ndarray:
    if spec.kind == "ordering":
        return ordering_psi(pb.prices, label)
    x = tuple(label)
    if len(x) != spec.d:
        raise ValueError("dimension mismatch")
    if spec.kind == "linear":
        if not is_admissible(pb, x, "linear"):
            return np.zeros(spec.dim)
        return np.array([float(v) for v in x])
    if spec.kind == "splc_knownL":
        if not is_admissible(pb, x, "splc", spec.lengths):
            return np.zeros(spec.dim)
        return np.array([float(v) for v in split(x, spec.lengths, spec.kappa)])
    # ces_rho
    if pb.cost(x) > pb.budget * (1 + 1e-12):
        return np.zeros(spec.dim)
    with np.errstate(divide="ignore"):
        return np.power(np.array([float(v) for v in x]), spec.rho)


# --- linear kind ----------------------------------------------------------------


def _order(w, p) -> list:
    return sorted(range(len(w)), key=lambda j: (-(w[j] / p[j]), j))


def best_admissible_linear(w: Sequence, pb: PriceBudget) -> tuple:
    """argmax of <w, x> over admissible bundles: fill goods in decreasing
    w_j/p_j order (ties to the lower index) until the budget is spent. Unlike
    demand_linear, goods with w_j <= 0 are bought too when money is left."""
    p = pb.prices
    if sum(p) <= pb.budget:
        return tuple(1 for _ in p)
    x = [0] * pb.d
    remaining = pb.budget
    for j in _order(w, p):
        if remaining <= 0:
            break
        x[j] = min(1, remaining / p[j])
        remaining -= x[j] * p[j]
    return tuple(x)


def _dot(w, x):
    return sum(wi * xi for wi, xi in zip(w, x))


def _transfer(x, p, src, dst, m):
    y = list(x)
    y[src] = x[src] - m / p[src]
    y[dst] = x[dst] + m / p[dst]
    return y


def _clean(y, tol):
    """Snap float round-off so admissibility checks see exact 0/1 values."""
    if tol == 0:
        return tuple(y)
    return tuple(0.0 if abs(v) <= tol else 1.0 if abs(v - 1) <= tol else v for v in y)


def _pick(cands, w):
    """Highest value; ties go to the lexicographically greatest bundle."""
    return max(cands, key=lambda y: (_dot(w, y), y))


def second_best_linear(w: Sequence, pb: PriceBudget) -> SecondBest:
    """Best admissible bundle other than the optimum x*, by single money
    transfers. With goods sorted by w/p and k the last good bought:
    if x*_k < 1, money moves from k to a later good or from an earlier good
    into k; if x*_k = 1, money moves from one of the first k goods to one of
    the unbought goods."""
    p = pb.prices
    tol = _tol_for(pb, w)
    if sum(p) <= pb.budget or pb.budget == 0:
        zero = tuple(0 for _ in p)
        return SecondBest(zero, 0, degenerate=True)
    order = _order(w, p)
    x = best_admissible_linear(w, pb)
    bought = [r for r, j in enumerate(order) if x[j] > tol]
    kr = bought[-1]
    k = order[kr]
    cands = []
    if not _eq(x[k], 1, tol):
        for l in order[kr + 1 :]:
            m = min(x[k] * p[k], p[l])
            cands.append(_transfer(x, p, k, l, m))
        for i in order[:kr]:
            m = min(p[i], (1 - x[k]) * p[k])
            cands.append(_transfer(x, p, i, k, m))
    else:
        for i in order[: kr + 1]:
            for l in order[kr + 1 :]:
                m = min(p[i], p[l])
                cands.append(_transfer(x, p, i, l, m))
    cands = [_clean(y, tol) for y in cands]
    y = _pick(cands, w)
    return SecondBest(y, _dot(w, y))


def admissible_bundles_linear(pb: PriceBudget) -> list:
    """Every admissible bundle (exact enumeration: a set of full goods plus at
    most one partial good whose amount the budget pins down)."""
    p = pb.prices
    d = pb.d
    found = set()
    if sum(p) <= pb.budget:
        found.add(tuple(Fraction(1) for _ in p))
    for full in itertools.product((0, 1), repeat=d):
        rest = pb.budget - sum(pj for pj, f in zip(p, full) if f)
        if rest == 0:
            found.add(tuple(Fraction(f) for f in full))
        if rest <= 0:
            continue
        for f in range(d):
            if full[f]:
                continue
            amount = Fraction(rest) / p[f]
            if 0 < amount < 1:
                y = [Fraction(v) for v in full]
                y[f] = amount
                found.add(tuple(y))
    return sorted(found)


# --- SPLC kind -------------------------------------------------------------------


def _splc_segments(w: Sequence, lengths, kappa, cap=1):
    """(j, k, weight, length) for every segment reachable inside [0, cap]."""
    segs = []
    for j, row in enumerate(lengths):
        bnd = boundaries(row, cap)
        for k in range(len(bnd) - 1):
            segs.append((j, k, w[j * kappa + k], bnd[k + 1] - bnd[k]))
    return segs


def best_admissible_splc(w: Sequence, lengths, pb: PriceBudget, kappa=None) -> tuple:
    kappa = kappa or max(len(row) for row in lengths)
    p = pb.prices
    if sum(p) <= pb.budget:
        return tuple(1 for _ in p)
    segs = sorted(_splc_segments(w, lengths, kappa), key=lambda s: (-(s[2] / p[s[0]]), s[0], s[1]))
    x = [0] * pb.d
    remaining = pb.budget
    for j, _, _, l in segs:
        if remaining <= 0:
            break
        amount = min(l, remaining / p[j])
        x[j] += amount
        remaining -= amount * p[j]
    return tuple(x)


def second_best_splc(w: Sequence, lengths, pb: PriceBudget, kappa=None) -> SecondBest:
    """Segment-level analogue of second_best_linear. Let (j, k_j) be the last
    segment bought of good j. If some segment (t, k_t) is partly filled, money
    moves from a last segment (i, k_i), i != t, into (t, k_t), or from (t, k_t)
    into a next segment (l, k_l + 1), l != t. Otherwise money moves from a last
    segment (i, k_i) into a next segment of another good."""
    kappa = kappa or max(len(row) for row in lengths)
    p = pb.prices
    tol = _tol_for(pb, w)
    if sum(p) <= pb.budget or pb.budget == 0:
        return SecondBest(tuple(0 for _ in p), 0, degenerate=True)
    value = lambda y: _dot(w, split(y, lengths, kappa))
    x = best_admissible_splc(w, lengths, pb, kappa)
    bnds = [boundaries(row) for row in lengths]

    last = {}  # good -> (k, fill) of its last bought segment
    nxt = {}  # good -> length of its first unbought segment
    partial = None
    for j in range(pb.d):
        b = bnds[j]
        for k in range(len(b) - 1):
            lo, hi = b[k], b[k + 1]
            if x[j] > lo + tol:
                fill = min(x[j], hi) - lo
                last[j] = (k, fill, hi - lo)
                if fill < hi - lo - tol:
                    partial = j
            else:
                nxt[j] = hi - lo
                break

    cands = []
    if partial is not None:
        t = partial
        _, fill_t, len_t = last[t]
        for i, (_, fill_i, _) in last.items():
            if i != t:
                m = min(fill_i * p[i], (len_t - fill_t) * p[t])
                cands.append(_transfer(x, p, i, t, m))
        for l, len_l in nxt.items():
            if l != t:
                m = min(fill_t * p[t], len_l * p[l])
                cands.append(_transfer(x, p, t, l, m))
    else:
        for i, (_, fill_i, _) in last.items():
            for l, len_l in nxt.items():
                if l != i:
                    m = min(fill_i * p[i], len_l * p[l])
                    cands.append(_transfer(x, p, i, l, m))
    cands = [_clean(y, tol) for y in cands]
    if not cands:
        return SecondBest(tuple(0 for _ in p), 0, degenerate=True)
    y = max(cands, key=lambda c: (value(c), c))
    return SecondBest(y, value(y))


def admissible_bundles_splc(lengths, pb: PriceBudget) -> list:
    """Every admissible SPLC bundle: each good on a boundary of its segments
    except at most one good whose amount the budget pins down."""
    p = pb.prices
    d = pb.d
    bnds = [[Fraction(b) for b in boundaries(row)] for row in lengths]
    found = set()
    if sum(p) <= pb.budget:
        found.add(tuple(Fraction(1) for _ in p))
    for f in range(-1, d):
        grids = [[None] if j == f else bnds[j] for j in range(d)]
        for combo in itertools.product(*grids):
            spent = sum(p[j] * v for j, v in enumerate(combo) if j != f)
            rest = pb.budget - spent
            if f < 0:
                if rest == 0:
                    found.add(tuple(combo))
                continue
            amount = Fraction(rest) / p[f]
            if 0 <= amount <= 1:
                y = list(combo)
                y[f] = amount
                found.add(tuple(y))
    return sorted(found)


# --- ordering kind -------------------------------------------------------------


def best_ordering(w: Sequence, p: Sequence) -> tuple:
    return tuple(sorted(range(len(w)), key=lambda j: (-(w[j] / p[j]), j)))


def second_best_ordering(w: Sequence, p: Sequence) -> tuple:
    """Swap the adjacent pair (in the optimal ranking) with the smallest gap in
    w/p; any other permutation inverts at least one pair with a gap at least
    as large. Ties go to the lexicographically smallest ranking."""
    d = len(w)
    if d < 2:
        raise ValueError("need at least two goods for a second-best ranking")
    best = best_ordering(w, p)
    v = [w[j] / p[j] for j in range(d)]
    cands = []
    for r in range(d - 1):
        ranking = list(best)
        ranking[r], ranking[r + 1] = ranking[r + 1], ranking[r]
        cands.append((v[best[r]] - v[best[r + 1]], tuple(ranking)))
    return min(cands)[1]
