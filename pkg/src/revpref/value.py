"""Learning utilities from utility values: consistent learners for samples
(x, U(x)) and exact learners with a value-query oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from revpref.features import split
from revpref.numerics import as_rational, bisection_steps, round_to_denominator
from revpref.utility import (
    INF,
    CESUtility,
    LeontiefUtility,
    LinearUtility,
    SPLCUtility,
    evaluate,
    leontief_value,
)


class InconsistentSample(ValueError):
    """Labels cannot come from any function of the assumed class."""


@dataclass
class ValueOracle:
    U: object
    query_count: int = 0

    def query(self, x: Sequence):
        self.query_count += 1
        return evaluate(self.U, x)


# --- linear systems from samples ---------------------------------------------------


class LinearValueModel:
    """Incremental row reduction of the sample (x_i, y_i).

    Keeps a maximal linearly independent subset of the sample in reduced
    form, together with the correspondingly combined labels. A point in the
    span of the sample gets the unique value every consistent linear function
    assigns to it; outside the span the model abstains (returns None).
    ``tol=0`` gives exact rational elimination.
    """

    def __init__(self, d: int, tol: float = 0):
        self.d = d
        self.tol = tol
        self.rows: list = []  # (pivot, vector, label), vector[pivot] == 1
        self.size = 0

    def _zero(self, v) -> bool:
        return v == 0 if self.tol == 0 else abs(v) <= self.tol

    def _reduce(self, x, y):
        x = list(x)
        for piv, row, label in self.rows:
            c = x[piv]
            if not self._zero(c):
                x = [xi - c * ri for xi, ri in zip(x, row)]
                y = y - c * label
        return x, y

    def add(self, x: Sequence, y) -> bool:
        """Add one example; returns True if it extended the basis."""
        if len(x) != self.d:
            raise ValueError("dimension mismatch")
        self.size += 1
        if self.tol == 0:
            x, y = [as_rational(v) for v in x], as_rational(y)
        r, ry = self._reduce(x, y)
        nz = [k for k, v in enumerate(r) if not self._zero(v)]
        if not nz:
            scale = 1.0 if self.tol == 0 else max(1.0, abs(y))
            if not self._zero(ry / scale if self.tol else ry):
                raise InconsistentSample(f"label {y} contradicts earlier examples")
            return False
        piv = max(nz, key=lambda k: abs(r[k])) if self.tol else nz[0]
        inv = 1 / r[piv]
        r = [v * inv for v in r]
        ry = ry * inv
        # keep every stored row free of the new pivot (reduced echelon form)
        rows = []
        for p, row, label in self.rows:
            c = row[piv]
            if not self._zero(c):
                row = [a - c * b for a, b in zip(row, r)]
                label = label - c * ry
            rows.append((p, row, label))
        rows.append((piv, r, ry))
        self.rows = rows
        return True

    @property
    def rank(self) -> int:
        return len(self.rows)

    def predict(self, x: Sequence):
        """<a, x> for every a consistent with the sample, or None (abstain)
        when x lies outside the span of the sample."""
        total = 0
        rest = [as_rational(v) for v in x] if self.tol == 0 else list(x)
        for piv, row, label in self.rows:
            c = rest[piv]
            if not self._zero(c):
                rest = [a - c * b for a, b in zip(rest, row)]
                total = total + c * label
        if any(not self._zero(v) for v in rest):
            return None
        return total

    def weights(self):
        """The coefficient vector, once the sample spans R^d (else None)."""
        if self.rank < self.d:
            return None
        a = [0] * self.d
        for piv, row, label in self.rows:
            a[piv] = label
        return a


def learn_linear_values(sample: Sequence, d: int | None = None, tol: float = 0) -> LinearValueModel:
    sample = list(sample)
    if d is None:
        if not sample:
            raise ValueError("empty sample and no dimension given")
        d = len(sample[0][0])
    model = LinearValueModel(d, tol)
    for x, y in sample:
        model.add(x, y)
    return model


@dataclass
class MappedValueModel:
    """A linear value model on transformed features (and labels)."""

    inner: LinearValueModel
    feature: Callable
    label_out: Callable

    def predict(self, x):
        v = self.inner.predict(self.feature(x))
        return None if v is None else self.label_out(v)


def learn_splc_values_knownL(sample: Sequence, lengths) -> MappedValueModel:
    """Known segment lengths make U linear in the split of x, so this is
    linear value learning in kappa*d dimensions."""
    kappa = max(len(row) for row in lengths)
    feature = lambda x: split(x, lengths, kappa)
    inner = LinearValueModel(kappa * len(lengths))
    for x, y in sample:
        inner.add(feature(x), y)
    return MappedValueModel(inner, feature, lambda v: v)


def learn_ces_values_rho(sample: Sequence, rho: float, tol: float = 1e-9) -> MappedValueModel:
    """U(x)^rho = sum_j a_j x_j^rho: linear in z = x^rho with label y^rho."""
    feature = lambda x: [float(v) ** rho for v in x]
    sample = list(sample)
    inner = LinearValueModel(len(sample[0][0]) if sample else 0, tol)
    for x, y in sample:
        inner.add(feature(x), float(y) ** rho)
    return MappedValueModel(inner, feature, lambda v: v ** (1.0 / rho) if v > 0 else 0.0)


@dataclass
class LeontiefEstimate:
    """Running upper bounds b_j >= a_j, tightened by b_j <- min(b_j, x_j / y)."""

    d: int
    b: list = field(default_factory=list)
    skipped: int = 0
    updates: int = 0

    def __post_init__(self):
        if not self.b:
            self.b = [INF] * self.d

    def update(self, x: Sequence, y) -> None:
        if y == 0:
            self.skipped += 1  # a zero label bounds nothing
            return
        self.b = [min(bj, xj / y) for bj, xj in zip(self.b, x)]
        self.updates += 1

    def predict(self, x: Sequence):
        return leontief_value(self.b, x)


def learn_leontief_values(sample: Sequence, d: int | None = None) -> LeontiefEstimate:
    sample = list(sample)
    if d is None:
        d = len(sample[0][0])
    est = LeontiefEstimate(d)
    for x, y in sample:
        est.update(x, y)
    return est


def leontief_sample_size(d: int, eps: float, delta: float) -> int:
    """m = ceil(d ln(d/delta) / eps): enough examples to hit, for every good,
    the eps/d-probability interval above a_j."""
    return math.ceil(d * math.log(d / delta) / eps)


# --- value queries -----------------------------------------------------------------


def _unit(d: int, k: int, value=Fraction(1), rest=Fraction(0)) -> list:
    x = [rest] * d
    x[k] = value
    return x


def vq_linear(oracle: ValueOracle, d: int) -> LinearUtility:
    return LinearUtility(tuple(oracle.query(_unit(d, k)) for k in range(d)))


def vq_ces(oracle: ValueOracle, d: int, rho: float) -> CESUtility:
    """rho > 0: U(e_k) = a_k^(1/rho), so a_k = U(e_k)^rho. For rho < 0 a zero
    amount of any valued good sends U to 0, so query the all-ones bundle with
    x_k = 1/2 instead: U^rho = 1 - a_k + a_k (1/2)^rho."""
    if rho > 0:
        raw = [float(oracle.query(_unit(d, k))) ** rho for k in range(d)]
    else:
        t = 0.5
        raw = []
        for k in range(d):
            u = float(oracle.query(_unit(d, k, Fraction(1, 2), Fraction(1))))
            raw.append((u**rho - 1.0) / (t**rho - 1.0))
    raw = [max(v, 0.0) for v in raw]
    total = sum(raw)
    a = [Fraction(v / total) for v in raw]
    a[-1] = 1 - sum(a[:-1])
    return CESUtility(tuple(a), rho=rho)


def vq_leontief(oracle: ValueOracle, d: int, n: int) -> LeontiefUtility:
    """d zero tests (x_j = 0, all else 1: U > 0 iff a_j = 0), then for each
    valued good k one query with x_k = 1/2^(2n+1), all else 1, where good k
    is the bottleneck: a_k = x_k / U."""
    zero = [oracle.query(_unit(d, j, Fraction(0), Fraction(1))) > 0 for j in range(d)]
    tiny = Fraction(1, 2 ** (2 * n + 1))
    a = []
    for k in range(d):
        if zero[k]:
            a.append(Fraction(0))
        else:
            a.append(tiny / oracle.query(_unit(d, k, tiny, Fraction(1))))
    return LeontiefUtility(tuple(a))


def vq_splc(oracle: ValueOracle, d: int, n: int, max_segments: int = 64) -> SPLCUtility:
    """Learn each U_j from first segment to last, varying only x_j (the
    other goods sit at 0, where they contribute nothing).

    slope: one query at L + eps, eps = 1/2^(n+1) below every finite length;
    last-segment test: one query at L + 2^(n+1); otherwise bisection on the
    length (3n+2 queries) and rounding to denominator 2^n. Per good at most
    |U_j| (3n + 4) <= 7 n |U_j| queries.
    """
    eps = Fraction(1, 2 ** (n + 1))
    far = Fraction(2) ** (n + 1)
    max_den = 2**n
    slopes, lengths = [], []
    for j in range(d):
        at = lambda v: oracle.query(_unit(d, j, v))
        L, uL = Fraction(0), Fraction(0)
        s_row, l_row = [], []
        for _ in range(max_segments):
            a = (at(L + eps) - uL) / eps
            s_row.append(a)
            if at(L + far) == uL + a * far:
                l_row.append(INF)
                break
            lo, hi, flag = Fraction(0), far, None
            mid = hi
            for _ in range(bisection_steps(far, max_den)):
                mid = (lo + hi) / 2
                if at(L + mid) < uL + a * mid:
                    hi, flag = mid, 0
                else:
                    lo, flag = mid, 1
            length = round_to_denominator(mid, max_den, "up" if flag == 1 else "down")
            l_row.append(length)
            uL += a * length
            L += length
        else:
            raise RuntimeError(f"good {j}: no last segment within {max_segments} segments")
        slopes.append(tuple(s_row))
        lengths.append(tuple(l_row))
    return SPLCUtility(tuple(slopes), tuple(lengths), n_bits=n)


VQ_SPLC_CONSTANT = 7  # queries per good <= VQ_SPLC_CONSTANT * n * |U_j|
