"""Utility function classes (linear, SPLC, CES, Leontief), evaluation,
random generation and JSON serialization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence, Union

import numpy as np

from revpref.numerics import as_rational, bit_length, format_rational

INF = math.inf


@dataclass(frozen=True)
class PriceBudget:
    prices: tuple
    budget: Any

    def __post_init__(self):
        object.__setattr__(self, "prices", tuple(self.prices))
        if not self.prices:
            raise ValueError("need at least one good")
        if any(p <= 0 for p in self.prices):
            raise ValueError("prices must be strictly positive")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")

    @property
    def d(self) -> int:
        return len(self.prices)

    def cost(self, x: Sequence) -> Any:
        return sum(p * xi for p, xi in zip(self.prices, x))


def _check_coeffs(a: Sequence, name: str) -> tuple:
    a = tuple(as_rational(v) for v in a)
    if not a:
        raise ValueError(f"{name}: empty coefficient vector")
    if any(v < 0 for v in a):
        raise ValueError(f"{name}: coefficients must be non-negative")
    if sum(a) != 1:
        raise ValueError(f"{name}: coefficients must sum to 1, got {sum(a)}")
    return a


@dataclass(frozen=True)
class LinearUtility:
    a: tuple
    n_bits: int | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "a", _check_coeffs(self.a, "linear"))

    @property
    def d(self) -> int:
        return len(self.a)


@dataclass(frozen=True)
class LeontiefUtility:
    a: tuple
    n_bits: int | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "a", _check_coeffs(self.a, "leontief"))

    @property
    def d(self) -> int:
        return len(self.a)


@dataclass(frozen=True)
class CESUtility:
    a: tuple
    rho: float
    n_bits: int | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "a", _check_coeffs(self.a, "ces"))
        if self.rho == 0:
            raise ValueError("ces: rho = 0 (Cobb-Douglas) is not supported")
        if not (-math.inf < self.rho <= 1):
            raise ValueError("ces: rho must lie in (-inf, 1]")

    @property
    def d(self) -> int:
        return len(self.a)


@dataclass(frozen=True)
class SPLCUtility:
    """Separable piecewise-linear concave utility.

    ``slopes[j]`` lists the strictly decreasing slopes of good j's segments and
    ``lengths[j]`` their lengths; the last length of every good is ``INF``.
    Goods may have different segment counts, no padding is used.
    """

    slopes: tuple
    lengths: tuple
    n_bits: int | None = field(default=None, compare=False)

    def __post_init__(self):
        slopes = tuple(tuple(as_rational(s) for s in row) for row in self.slopes)
        lengths = tuple(
            tuple(INF if l == INF else as_rational(l) for l in row) for row in self.lengths
        )
        if not slopes or len(slopes) != len(lengths):
            raise ValueError("splc: slopes and lengths must have one row per good")
        for j, (s_row, l_row) in enumerate(zip(slopes, lengths)):
            if not s_row or len(s_row) != len(l_row):
                raise ValueError(f"splc: good {j} needs matching, non-empty slope/length rows")
            if any(s < 0 for s in s_row):
                raise ValueError(f"splc: good {j} has a negative slope")
            if any(s_row[k - 1] <= s_row[k] for k in range(1, len(s_row))):
                raise ValueError(f"splc: slopes of good {j} must be strictly decreasing")
            if l_row[-1] != INF:
                raise ValueError(f"splc: last segment of good {j} must have infinite length")
            if any(l == INF or l <= 0 for l in l_row[:-1]):
                raise ValueError(f"splc: finite segments of good {j} need positive length")
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "lengths", lengths)

    @property
    def d(self) -> int:
        return len(self.slopes)

    @property
    def kappa(self) -> int:
        return max(len(row) for row in self.slopes)

    def segment_counts(self) -> tuple:
        return tuple(len(row) for row in self.slopes)

    def good_value(self, j: int, xj) -> Any:
        total = 0
        start = 0
        for s, l in zip(self.slopes[j], self.lengths[j]):
            if xj <= start:
                break
            amount = xj - start if l == INF else min(l, xj - start)
            total += s * amount
            if l == INF:
                break
            start += l
        return total


UtilityFunction = Union[LinearUtility, SPLCUtility, CESUtility, LeontiefUtility]


def utility_class(U: UtilityFunction) -> str:
    if isinstance(U, LinearUtility):
        return "linear"
    if isinstance(U, SPLCUtility):
        return "splc"
    if isinstance(U, CESUtility):
        return "ces"
    if isinstance(U, LeontiefUtility):
        return "leontief"
    raise TypeError(f"not a utility function: {U!r}")


def ces_value(a: Sequence, rho: float, x: Sequence) -> float:
    """(sum_j a_j x_j^rho)^(1/rho) in floating point; for rho < 0 a zero amount
    of a good with a_j > 0 drives the utility to 0."""
    total = 0.0
    for aj, xj in zip(a, x):
        aj, xj = float(aj), float(xj)
        if aj == 0:
            continue
        if xj == 0:
            if rho < 0:
                return 0.0
            continue
        total += aj * xj**rho
    if total == 0:
        return 0.0
    return total ** (1.0 / rho)


def leontief_value(a: Sequence, x: Sequence):
    best = INF
    for aj, xj in zip(a, x):
        if aj == 0:
            continue  # x_j / 0 is +inf (and 0/0 is treated as +inf too)
        r = xj / aj if not isinstance(xj, float) else xj / float(aj)
        if r < best:
            best = r
    return best


def evaluate(U: UtilityFunction, x: Sequence):
    """U(x). Exact for linear/SPLC/Leontief on rational input, float for CES."""
    x = tuple(x)
    if len(x) != U.d:
        raise ValueError(f"dimension mismatch: utility has {U.d} goods, bundle has {len(x)}")
    if isinstance(U, LinearUtility):
        return sum(a * xi for a, xi in zip(U.a, x))
    if isinstance(U, SPLCUtility):
        return sum(U.good_value(j, xj) for j, xj in enumerate(x))
    if isinstance(U, CESUtility):
        return ces_value(U.a, U.rho, x)
    if isinstance(U, LeontiefUtility):
        return leontief_value(U.a, x)
    raise TypeError(f"not a utility function: {U!r}")


def lipschitz_bound(U: UtilityFunction) -> float:
    """Bound on sum_j sup |dU/dx_j| over [0,1]^d, so that |U(x) - U(y)| <=
    L * ||x - y||_inf. CES with 0 < rho < 1 has unbounded slope at the
    boundary and gets inf; for rho < 0, U <= a_j^(1/rho) x_j gives
    dU/dx_j <= a_j^(1/rho)."""
    if isinstance(U, LinearUtility):
        return float(sum(U.a))
    if isinstance(U, SPLCUtility):
        return float(sum(row[0] for row in U.slopes))
    if isinstance(U, CESUtility):
        if U.rho == 1:
            return float(sum(U.a))
        if U.rho > 0:
            return math.inf
        return sum(float(a) ** (1.0 / U.rho) for a in U.a if a > 0)
    positive = [float(v) for v in U.a if v > 0]
    return 1.0 / min(positive)  # a min of functions, each (1/a_j)-Lipschitz


def grid_allowance(U: UtilityFunction, step) -> float:
    """Upper bound on |U(x) - U(y)| for x, y in [0,1]^d with
    ||x - y||_inf <= step. Equal to lipschitz_bound * step except for CES
    with 0 < rho < 1, where t -> t^rho is rho-Hoelder and s -> s^(1/rho) has
    slope <= 1/rho on [0,1], giving step^rho / rho."""
    step = float(step)
    if isinstance(U, CESUtility) and 0 < U.rho < 1:
        return step**U.rho / U.rho
    return lipschitz_bound(U) * step


# --- random generation ------------------------------------------------------


def _random_fraction(rng: np.random.Generator, n: int, lo=None, hi=None) -> Fraction:
    """Uniform-ish rational p/q with 1 <= p, q < 2**n, optionally constrained to
    lo < value < hi (rejection)."""
    top = 2**n
    for _ in range(10_000):
        f = Fraction(int(rng.integers(1, top)), int(rng.integers(1, top)))
        if (lo is None or f > lo) and (hi is None or f < hi):
            return f
    raise ValueError(f"could not draw a {n}-bit rational in ({lo}, {hi})")


def _distinct_decreasing(rng, n: int, count: int, hi=None) -> list:
    values: set = set()
    for _ in range(10_000):
        if len(values) == count:
            break
        values.add(_random_fraction(rng, n, hi=hi))
    if len(values) < count:
        raise ValueError(f"cannot draw {count} distinct {n}-bit slopes")
    return sorted(values, reverse=True)


def random_utility(
    cls: str,
    d: int,
    kappa: int | None = None,
    n: int = 4,
    seed: int | np.random.Generator | None = None,
    *,
    rho: float | None = None,
    zero_prob: float = 0.0,
    normalize_first_slope: bool = True,
) -> UtilityFunction:
    """Draw a random utility of class ``cls`` on ``d`` goods.

    Linear, CES and Leontief coefficients are drawn as integer weights in
    [1, 2**n) and then normalized to sum 1, so every ratio a_i/a_j is a
    rational whose numerator and denominator fit in n bits. ``zero_prob``
    zeroes individual weights (at least one weight stays positive).

    SPLC slopes and finite lengths are rationals p/q with p, q < 2**n, so
    each has bit-length <= n; with ``normalize_first_slope`` good 0's first
    slope is fixed to 1 and its other slopes are drawn below 1.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    if cls in ("linear", "ces", "leontief"):
        w = [int(rng.integers(1, 2**n)) if n > 1 else 1 for _ in range(d)]
        if zero_prob > 0:
            keep = rng.random(d) >= zero_prob
            if not keep.any():
                keep[int(rng.integers(d))] = True
            w = [wi if k else 0 for wi, k in zip(w, keep)]
        total = sum(w)
        a = tuple(Fraction(wi, total) for wi in w)
        if cls == "linear":
            return LinearUtility(a, n_bits=n)
        if cls == "leontief":
            return LeontiefUtility(a, n_bits=n)
        if rho is None:
            rho = 0.0
            while abs(rho) < 0.05:
                rho = float(rng.uniform(-3.0, 0.9))
        return CESUtility(a, rho=rho, n_bits=n)

    if cls == "splc":
        if kappa is None or kappa < 1:
            raise ValueError("splc needs kappa >= 1")
        slopes, lengths = [], []
        for j in range(d):
            count = int(rng.integers(1, kappa + 1))
            if j == 0 and normalize_first_slope:
                row = [Fraction(1)] + _distinct_decreasing(rng, n, count - 1, hi=Fraction(1))
            else:
                row = _distinct_decreasing(rng, n, count)
            slopes.append(tuple(row))
            lengths.append(tuple(_random_fraction(rng, n) for _ in range(count - 1)) + (INF,))
        return SPLCUtility(tuple(slopes), tuple(lengths), n_bits=n)

    raise ValueError(f"unknown utility class {cls!r}")


# --- JSON -------------------------------------------------------------------


def _fmt_len(l) -> str:
    return "inf" if l == INF else format_rational(l)


def utility_to_json(U: UtilityFunction) -> dict:
    cls = utility_class(U)
    out: dict = {"class": cls, "n_bits": U.n_bits}
    if cls == "splc":
        out["A"] = [[format_rational(s) for s in row] for row in U.slopes]
        out["L"] = [[_fmt_len(l) for l in row] for row in U.lengths]
    else:
        out["a"] = [format_rational(v) for v in U.a]
    if cls == "ces":
        out["rho"] = U.rho
    return out


def utility_from_json(obj: dict) -> UtilityFunction:
    cls = obj["class"]
    n_bits = obj.get("n_bits")
    if cls == "splc":
        lengths = [[INF if l == "inf" else Fraction(l) for l in row] for row in obj["L"]]
        return SPLCUtility(
            tuple(tuple(Fraction(s) for s in row) for row in obj["A"]),
            tuple(tuple(row) for row in lengths),
            n_bits=n_bits,
        )
    a = tuple(Fraction(v) for v in obj["a"])
    if cls == "linear":
        return LinearUtility(a, n_bits=n_bits)
    if cls == "leontief":
        return LeontiefUtility(a, n_bits=n_bits)
    if cls == "ces":
        return CESUtility(a, rho=float(obj["rho"]), n_bits=n_bits)
    raise ValueError(f"unknown utility class {cls!r}")


def max_bit_length(U: UtilityFunction) -> int:
    if isinstance(U, SPLCUtility):
        vals = [s for row in U.slopes for s in row] + [
            l for row in U.lengths for l in row if l != INF
        ]
    else:
        vals = list(U.a)
    return max(bit_length(v) for v in vals)
