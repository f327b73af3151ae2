"""Exact learning from revealed-preference queries: the oracle asks the
hidden buyer for her optimal bundle at chosen prices and budget."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from revpref.demand import demand
from revpref.numerics import bisection_steps, round_to_denominator
from revpref.utility import (
    INF,
    CESUtility,
    LeontiefUtility,
    LinearUtility,
    PriceBudget,
    SPLCUtility,
)


class ContractViolation(RuntimeError):
    """The oracle's answers are inconsistent with the assumed utility class."""


@dataclass
class RPOracle:
    """Wraps a hidden utility; every query returns its optimal bundle.

    ``cap`` bounds each good's amount: 1 for the [0,1]^d domain, None for the
    unbounded domain used when learning SPLC utilities.
    """

    U: object
    cap: object = 1
    query_count: int = 0

    def query(self, pb: PriceBudget) -> tuple:
        self.query_count += 1
        x = demand(self.U, pb, self.cap).bundle
        if pb.cost(x) > pb.budget * (1 + 1e-9):
            raise ContractViolation("oracle returned an unaffordable bundle")
        return x


def _prices(d: int, n: int, fixed: dict) -> list:
    """Every good priced out at 2^(10n) except the ones in ``fixed``."""
    far = Fraction(2) ** (10 * n)
    return [fixed.get(k, far) for k in range(d)]


def find_support_linear(oracle: RPOracle, d: int) -> set:
    """One query with unit prices and enough money for everything: a good is
    bought iff its coefficient is positive (zero-value goods are skipped by
    the cheapest-bundle rule)."""
    x = oracle.query(PriceBudget([Fraction(1)] * d, Fraction(d)))
    return {j for j in range(d) if x[j] > 0}


def alg1_ratio(
    oracle: RPOracle,
    j: int,
    H,
    q,
    x_extra,
    n: int,
    d: int,
    ref: int = 0,
    ref_price=Fraction(1),
    max_den: int | None = None,
    trace: list | None = None,
) -> Fraction:
    """Binary search on p_j for the price at which good j (beyond the amount
    ``x_extra`` already owed to it) and the reference good trade places.

    The budget x_extra * p_j + q * min(p_ref, p_j) is so small that only the
    most preferred good (segment) gets bought; ``q`` shrinks it. The answer is
    the price p_j with slope_j / p_j = slope_ref / p_ref, rounded to
    denominator ``max_den`` (default 2^n) once the bracket isolates it.
    """
    max_den = max_den or 2**n
    lo, hi = Fraction(0), Fraction(H)
    q, x_extra, ref_price = Fraction(q), Fraction(x_extra), Fraction(ref_price)
    flag = None
    pj = hi
    for _ in range(bisection_steps(hi, max_den)):
        pj = (lo + hi) / 2
        budget = x_extra * pj + q * min(ref_price, pj)
        x = oracle.query(PriceBudget(_prices(d, n, {ref: ref_price, j: pj}), budget))
        if x[j] > x_extra and x[ref] > 0:
            return pj  # indifferent between the two
        if x[j] > x_extra:
            lo, flag = pj, 1
        else:
            hi, flag = pj, 0
        if trace is not None:
            trace.append((lo, hi))
    return round_to_denominator(pj, max_den, "up" if flag == 1 else "down")


def learn_linear_rp(oracle: RPOracle, d: int, n: int, max_den: int | None = None) -> LinearUtility:
    """Support query, then one ratio search per supported good against the
    first supported good; at most 1 + (d-1)(4n+1) queries with the default
    max_den = 2^n."""
    support = sorted(find_support_linear(oracle, d))
    if not support:
        raise ContractViolation("no good is ever bought")
    ref = support[0]
    H = Fraction(2) ** (2 * n)
    ratio = {ref: Fraction(1)}
    for j in support[1:]:
        ratio[j] = alg1_ratio(oracle, j, H, 1, 0, n, d, ref=ref, max_den=max_den)
    total = sum(ratio.values())
    return LinearUtility(tuple(ratio.get(k, Fraction(0)) / total for k in range(d)), n_bits=n)


def alg2_length(
    oracle: RPOracle,
    j: int,
    p_j,
    p_ref,
    x_extra,
    n: int,
    d: int,
    ref: int = 0,
    trace: list | None = None,
):
    """Length of the segment of good j whose slope equals p_j, given that the
    earlier segments of j have total length ``x_extra``.

    Prices make that segment strictly better than the reference good's first
    segment, which in turn beats j's next segment; so the reference good is
    bought exactly when the money exceeds (x_extra + length) * p_j.
    """
    p_j, p_ref, x_extra = Fraction(p_j), Fraction(p_ref), Fraction(x_extra)
    prices = _prices(d, n, {ref: p_ref, j: p_j})
    lo, hi = Fraction(0), Fraction(2) ** (n + 1)
    x = oracle.query(PriceBudget(prices, (hi + x_extra) * p_j))
    if x[ref] == 0:
        return INF
    max_den = 2**n
    flag = None
    T = hi
    for _ in range(bisection_steps(hi, max_den)):
        T = (lo + hi) / 2
        x = oracle.query(PriceBudget(prices, (T + x_extra) * p_j))
        if x[ref] == 0:
            lo, flag = T, 1
        else:
            hi, flag = T, 0
        if trace is not None:
            trace.append((lo, hi))
    return round_to_denominator(T, max_den, "up" if flag == 1 else "down")


def slope_gap_epsilon(n: int) -> Fraction:
    return Fraction(1, 2 ** (2 * n + 1))


def learn_splc_rp(oracle: RPOracle, d: int, kappa: int, n: int) -> SPLCUtility:
    """Learn every slope and length, good by good, with a_11 = 1 as the unit.

    Each good starts from a hypothetical segment of slope 2^(n+1) and length
    0. The next slope comes from alg1_ratio bracketed by the previous slope,
    the next length from alg2_length with the reference good priced a factor
    (1 + eps) above its first slope, until a length comes back infinite.
    Good 1 is learned against good 2 once good 2's first slope is known.
    Queries: at most d * kappa * (6n + 5).
    """
    if d < 2:
        raise ValueError("SPLC query learning needs at least two goods")
    if oracle.cap is not None:
        raise ValueError("SPLC query learning needs an uncapped (R_+) oracle")
    eps = slope_gap_epsilon(n)
    q = Fraction(1, 2 ** (n + 1))
    slopes: dict = {}
    lengths: dict = {}

    def learn_good(j: int, ref: int, ref_slope: Fraction):
        prev = Fraction(2) ** (n + 1)
        acc = Fraction(0)
        s_row, l_row = [], []
        for _ in range(kappa):
            s = alg1_ratio(oracle, j, prev, q, acc, n, d, ref=ref, ref_price=ref_slope)
            l = alg2_length(oracle, j, s, ref_slope * (1 + eps), acc, n, d, ref=ref)
            s_row.append(s)
            l_row.append(l)
            if l == INF:
                break
            acc += l
            prev = s
        else:
            raise ContractViolation(f"good {j} has more than kappa={kappa} segments")
        slopes[j], lengths[j] = tuple(s_row), tuple(l_row)

    for j in range(1, d):
        learn_good(j, 0, Fraction(1))
    learn_good(0, 1, slopes[1][0])
    return SPLCUtility(
        tuple(slopes[j] for j in range(d)), tuple(lengths[j] for j in range(d)), n_bits=n
    )


def learn_ces_rp(oracle: RPOracle, d: int) -> CESUtility:
    """Two queries with budgets below every price (so no good hits the cap):
    unit prices and prices (1, 2, ..., d). Then x1_j / x1_1 = (a_j/a_1)^s and
    x2_j / x2_1 = (a_j / (j a_1))^s with s = 1/(1-rho), which pins down rho
    from good 2 and every ratio a_j/a_1."""
    if d < 2:
        raise ValueError("rho is unidentifiable with fewer than two goods")
    half = Fraction(1, 2)
    x1 = oracle.query(PriceBudget([Fraction(1)] * d, half))
    x2 = oracle.query(PriceBudget([Fraction(k + 1) for k in range(d)], half))
    if any(v <= 0 for v in x1) or any(v <= 0 for v in x2):
        raise ContractViolation("CES bundles at interior prices must buy every good")
    r1 = [float(x1[k]) / float(x1[0]) for k in range(d)]
    r2 = [float(x2[k]) / float(x2[0]) for k in range(d)]
    s = (math.log(r1[1]) - math.log(r2[1])) / math.log(2)
    if s <= 0:
        raise ContractViolation("observed bundles imply a non-positive elasticity")
    one_minus_rho = 1.0 / s
    rho = 1.0 - one_minus_rho
    if abs(rho) < 1e-12:
        raise ContractViolation("observed bundles imply rho = 0 (Cobb-Douglas)")
    ratios = [r ** one_minus_rho for r in r1]
    total = sum(ratios)
    a = tuple(Fraction(r / total) for r in ratios)
    a = a[:-1] + (1 - sum(a[:-1]),)
    return CESUtility(a, rho=rho)


def learn_leontief_rp_query(oracle: RPOracle, d: int) -> LeontiefUtility:
    """Unit prices, budget 1/2: x = a/2 since sum(a) = 1, so a = 2x."""
    x = oracle.query(PriceBudget([Fraction(1)] * d, Fraction(1, 2)))
    return LeontiefUtility(tuple(2 * Fraction(v) for v in x))


def splc_query_bound(d: int, kappa: int, n: int) -> int:
    """Worst-case query count of learn_splc_rp: per segment one slope search
    (at most 3n+2 queries), one last-segment probe and one length search
    (3n+2 queries); this is at most c * n * d * kappa with c = 11."""
    return d * kappa * (6 * n + 5)


SPLC_QUERY_CONSTANT = 11
