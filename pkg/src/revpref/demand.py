"""Optimal-bundle oracles for the four utility classes, a grid brute-force
reference oracle and a checker for the optimality conditions.

Rational inputs give exact rational bundles for the linear, SPLC and
Leontief classes; float inputs propagate floats. CES is always float.

``cap`` is the per-good upper bound on amounts: 1 in the statistical setting
(domain [0,1]^d), ``None`` for the unbounded R_+ domain of SPLC query learning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from revpref.utility import (
    INF,
    CESUtility,
    LeontiefUtility,
    LinearUtility,
    PriceBudget,
    SPLCUtility,
)


@dataclass(frozen=True)
class DemandResult:
    bundle: tuple
    spent: Any
    tie_broken: bool = False


def _coeffs(U) -> tuple:
    return tuple(U.a) if hasattr(U, "a") else tuple(U)


def _segments(slopes: Sequence[Sequence], lengths: Sequence[Sequence], cap):
    """Per-good usable segments as (j, k, slope, start, length), with lengths
    truncated at ``cap`` (segments starting at or beyond the cap are dropped)."""
    out = []
    for j, (s_row, l_row) in enumerate(zip(slopes, lengths)):
        start = 0
        for k, (s, l) in enumerate(zip(s_row, l_row)):
            if cap is not None:
                if start >= cap:
                    break
                l = cap - start if l == INF else min(l, cap - start)
            out.append((j, k, s, start, l))
            if l == INF:
                break
            start += l
    return out


def _greedy(segments, prices, budget, d):
    """Buy segments in decreasing slope/price order (ties: lower good, then
    lower segment); segments with zero slope are never bought."""
    order = sorted(
        (seg for seg in segments if seg[2] > 0),
        key=lambda seg: (-(seg[2] / prices[seg[0]]), seg[0], seg[1]),
    )
    x = [0] * d
    remaining = budget
    fill: dict = {}
    for j, k, _, _, l in order:
        if remaining <= 0:
            break
        afford = remaining / prices[j]
        amount = afford if l == INF else min(l, afford)
        x[j] += amount
        fill[(j, k)] = amount
        remaining -= amount * prices[j]
    spent = budget - remaining
    tie = _tie_broken(order, fill, prices)
    return tuple(x), spent, tie


def _tie_broken(order, fill, prices) -> bool:
    """True when two segments of equal bang-per-buck were separated by the
    tie-breaking rule: one (partly) bought while the other is not full."""
    for i, (j, k, s, _, _) in enumerate(order):
        if fill.get((j, k), 0) <= 0:
            continue
        for j2, k2, s2, _, l2 in order[i + 1 :]:
            if j2 == j:
                continue
            if s / prices[j] != s2 / prices[j2]:
                break
            if l2 == INF or fill.get((j2, k2), 0) < l2:
                return True
    return False


def demand_linear(U, pb: PriceBudget, cap=1) -> DemandResult:
    """Greedy by bang-per-buck a_j/p_j. ``U`` may be a LinearUtility or any
    non-negative coefficient vector (e.g. a learned weight vector)."""
    a = _coeffs(U)
    if len(a) != pb.d:
        raise ValueError("dimension mismatch between utility and prices")
    segs = [(j, 0, aj, 0, INF if cap is None else cap) for j, aj in enumerate(a)]
    x, spent, tie = _greedy(segs, pb.prices, pb.budget, pb.d)
    return DemandResult(x, spent, tie)


def demand_splc(U, pb: PriceBudget, cap=1, lengths=None) -> DemandResult:
    """Greedy over segments by a_jk/p_j. Pass an SPLCUtility, or a slope
    matrix together with ``lengths``."""
    if isinstance(U, SPLCUtility):
        slopes, lengths = U.slopes, U.lengths
    else:
        if lengths is None:
            raise ValueError("slope matrix given without lengths")
        slopes = U
    if len(slopes) != pb.d:
        raise ValueError("dimension mismatch between utility and prices")
    x, spent, tie = _greedy(_segments(slopes, lengths, cap), pb.prices, pb.budget, pb.d)
    return DemandResult(x, spent, tie)


def demand_ces(U, pb: PriceBudget, cap=1, rho=None) -> DemandResult:
    """Water-filling on x_j proportional to (a_j/p_j)^(1/(1-rho)): goods whose
    share would exceed the cap are clipped to it and the remaining budget is
    re-split among the rest."""
    if isinstance(U, CESUtility):
        a, rho = U.a, U.rho
    else:
        a = tuple(U)
        if rho is None:
            raise ValueError("rho required when passing raw coefficients")
    if len(a) != pb.d:
        raise ValueError("dimension mismatch between utility and prices")
    if rho == 1:
        fpb = PriceBudget([float(v) for v in pb.prices], float(pb.budget))
        return demand_linear([float(v) for v in a], fpb, cap)
    d = pb.d
    p = [float(v) for v in pb.prices]
    af = [float(v) for v in a]
    budget = float(pb.budget)
    sigma = 1.0 / (1.0 - rho)
    x = [0.0] * d
    active = [j for j in range(d) if af[j] > 0]
    if cap is not None and budget >= sum(p[j] * cap for j in active):
        for j in active:
            x[j] = float(cap)
        return DemandResult(tuple(x), sum(p[j] * x[j] for j in active), False)
    remaining = budget
    while active and remaining > 0:
        weight = {j: (af[j] / p[j]) ** sigma for j in active}
        t = remaining / sum(p[j] * weight[j] for j in active)
        over = [j for j in active if cap is not None and t * weight[j] > cap]
        if not over:
            for j in active:
                x[j] = t * weight[j]
            break
        for j in over:
            x[j] = float(cap)
            remaining -= p[j] * cap
        active = [j for j in active if j not in over]
    spent = sum(pj * xj for pj, xj in zip(p, x))
    return DemandResult(tuple(x), spent, False)


def demand_leontief(U, pb: PriceBudget) -> DemandResult:
    """x = beta * a with beta = min(B / <a,p>, 1 / max_j a_j)."""
    a = _coeffs(U)
    if len(a) != pb.d:
        raise ValueError("dimension mismatch between utility and prices")
    cost = sum(aj * pj for aj, pj in zip(a, pb.prices))
    beta = min(pb.budget / cost, 1 / max(a))
    x = tuple(beta * aj for aj in a)
    return DemandResult(x, beta * cost, False)


def demand(U, pb: PriceBudget, cap=1) -> DemandResult:
    if isinstance(U, LinearUtility):
        return demand_linear(U, pb, cap)
    if isinstance(U, SPLCUtility):
        return demand_splc(U, pb, cap)
    if isinstance(U, CESUtility):
        return demand_ces(U, pb, cap)
    if isinstance(U, LeontiefUtility):
        return demand_leontief(U, pb)
    raise TypeError(f"not a utility function: {U!r}")


# --- brute force -------------------------------------------------------------


def _good_tables(U, grid: np.ndarray) -> tuple[list, str]:
    """Per-good value tables over the grid plus the combining rule, so that
    U(x) = combine_j table_j[x_j]."""
    d = U.d
    if isinstance(U, LinearUtility):
        return [float(U.a[j]) * grid for j in range(d)], "sum"
    if isinstance(U, SPLCUtility):
        return [np.array([float(U.good_value(j, Fraction(g))) for g in grid]) for j in range(d)], "sum"
    if isinstance(U, CESUtility):
        tables = []
        for j in range(d):
            aj = float(U.a[j])
            if aj == 0:
                tables.append(np.zeros_like(grid))
            elif U.rho < 0:
                with np.errstate(divide="ignore"):
                    tables.append(np.where(grid > 0, aj * np.power(np.where(grid > 0, grid, 1.0), U.rho), np.inf))
            else:
                tables.append(aj * np.power(grid, U.rho))
        return tables, "ces"
    if isinstance(U, LeontiefUtility):
        tables = []
        for j in range(d):
            aj = float(U.a[j])
            tables.append(np.full_like(grid, np.inf) if aj == 0 else grid / aj)
        return tables, "min"
    raise TypeError(f"not a utility function: {U!r}")


def demand_bruteforce(
    U, pb: PriceBudget, grid_step=Fraction(1, 100), cap=1, node_cap: int = 30_000_000
) -> DemandResult:
    """Exhaustive search over {0, s, 2s, ...}^d within the budget set.

    Ties in utility are broken by lower cost, then by the lexicographically
    greatest bundle (lower-index goods first). Used only as a test oracle.
    """
    d = pb.d
    step = float(grid_step)
    if step <= 0:
        raise ValueError("grid_step must be positive")
    p = np.array([float(v) for v in pb.prices])
    budget = float(pb.budget)
    if cap is None:
        top = budget / p.min()
    else:
        top = float(cap)
    count = int(math.floor(top / step + 1e-9)) + 1
    if count**d > node_cap:
        raise ValueError(f"grid too large: {count}^{d} nodes exceeds node cap {node_cap}")
    grid = np.arange(count) * step
    tables, rule = _good_tables(U, grid)

    shape = [count] * d
    value = np.zeros(shape) if rule != "min" else np.full(shape, np.inf)
    cost = np.zeros(shape)
    for j in range(d):
        view = [1] * d
        view[j] = count
        t = tables[j].reshape(view)
        if rule == "min":
            value = np.minimum(value, t)
        else:
            value = value + t
        cost = cost + (p[j] * grid).reshape(view)
    if rule == "ces":
        rho = U.rho
        with np.errstate(divide="ignore", over="ignore"):
            if rho < 0:
                value = np.where(np.isinf(value), 0.0, np.power(value, 1.0 / rho))
            else:
                value = np.power(value, 1.0 / rho)
    if rule == "min" and np.isinf(value).any():
        value = np.where(np.isinf(value), 0.0, value)
    feasible = cost <= budget * (1 + 1e-12) + 1e-12
    value = np.where(feasible, value, -np.inf)

    best = value.max()
    tol = 1e-12 * max(1.0, abs(best))
    cand = np.argwhere(value >= best - tol)
    costs = cost[tuple(cand.T)]
    cheapest = costs.min()
    cand = cand[costs <= cheapest + 1e-12 * max(1.0, cheapest)]
    # lexicographically greatest index tuple
    keys = [tuple(row) for row in cand.tolist()]
    pick = max(keys)
    x = tuple(Fraction(i) * Fraction(grid_step) for i in pick)
    return DemandResult(x, float(cost[pick]), len(keys) > 1)


# --- optimality conditions ----------------------------------------------------


def _segment_fill(x, segments):
    """Amount of each segment covered by bundle x."""
    fill = []
    for j, k, s, start, l in segments:
        amount = max(0, x[j] - start)
        if l != INF:
            amount = min(amount, l)
        fill.append(amount)
    return fill


def _check_segments(segments, prices, budget, x, tol) -> bool:
    fill = _segment_fill(x, segments)
    spent = sum(pj * xj for pj, xj in zip(prices, x))
    if spent > budget + tol:
        return False
    bpb = [s / prices[j] for j, _, s, _, _ in segments]
    full = [l != INF and f >= l - tol for f, (_, _, _, _, l) in zip(fill, segments)]
    pos = [f > tol for f in fill]
    for i, seg in enumerate(segments):
        if seg[2] == 0 and pos[i]:
            return False  # zero-value segments are never bought
    for i in range(len(segments)):
        if not pos[i]:
            continue
        for k in range(len(segments)):
            if k != i and not full[k] and bpb[i] < bpb[k] - tol:
                return False
    if spent < budget - tol:
        # money left over: every segment with positive value must be full
        for i, seg in enumerate(segments):
            if seg[2] > 0 and not full[i]:
                return False
    return True


def kkt_check(cls: str, U, pb: PriceBudget, x: Sequence, tol=0, cap=1) -> bool:
    """True iff ``x`` satisfies the class's characterization of the optimal
    bundle (plus feasibility). Use ``tol=0`` for exact rational inputs."""
    x = tuple(x)
    if len(x) != pb.d:
        raise ValueError("dimension mismatch")
    if any(v < -tol for v in x):
        return False
    if cap is not None and any(v > cap + tol for v in x):
        return False
    if cls == "linear":
        a = _coeffs(U)
        segs = [(j, 0, aj, 0, INF if cap is None else cap) for j, aj in enumerate(a)]
        return _check_segments(segs, pb.prices, pb.budget, x, tol)
    if cls == "splc":
        return _check_segments(_segments(U.slopes, U.lengths, cap), pb.prices, pb.budget, x, tol)
    if cls == "ces":
        return _check_ces(U, pb, x, tol, cap)
    if cls == "leontief":
        ref = demand_leontief(U, pb).bundle
        return all(abs(xi - ri) <= tol for xi, ri in zip(x, ref))
    raise ValueError(f"unknown class {cls!r}")


def _check_ces(U: CESUtility, pb: PriceBudget, x, tol, cap) -> bool:
    if U.rho == 1:
        return kkt_check("linear", U.a, pb, x, tol, cap)
    rtol = max(tol, 1e-9)
    p = [float(v) for v in pb.prices]
    a = [float(v) for v in U.a]
    xf = [float(v) for v in x]
    budget = float(pb.budget)
    spent = sum(pj * xj for pj, xj in zip(p, xf))
    if spent > budget * (1 + rtol) + rtol:
        return False
    pos = [j for j in range(len(a)) if a[j] > 0]
    if any(xf[j] > rtol for j in range(len(a)) if a[j] == 0):
        return False
    if budget <= 0:
        return all(v <= rtol for v in xf)
    if any(xf[j] <= 0 for j in pos):
        return False  # marginal utility is unbounded at 0
    c = 1.0 if cap is None else float(cap)
    at_cap = [j for j in pos if cap is not None and xf[j] >= c * (1 - rtol)]
    interior = [j for j in pos if j not in at_cap]
    if interior and spent < budget * (1 - rtol) - rtol:
        return False
    # marginal utility per money, up to the common factor U^(1-rho)
    mu = {j: a[j] * xf[j] ** (U.rho - 1) / p[j] for j in pos}
    if interior:
        level = mu[interior[0]]
        if any(abs(mu[j] - level) > rtol * max(abs(level), abs(mu[j])) for j in interior):
            return False
        if any(mu[j] < level * (1 - rtol) for j in at_cap):
            return False
    return True
