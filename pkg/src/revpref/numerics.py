"""Exact rational helpers: bit lengths, "p/q" serialization and
bounded-denominator rounding by Stern-Brocot mediant descent."""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Literal, Union

Rational = Fraction
Direction = Literal["up", "down"]
Number = Union[int, float, Fraction]


def as_rational(x: Number | str) -> Fraction:
    """Convert an int, Fraction, float or "p/q" string to a Fraction.

    Floats are converted exactly (binary expansion), not approximated.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return parse_rational(x)
    return Fraction(x)


def bit_length(r: Fraction) -> int:
    """max(bits(|numerator|), bits(denominator)) of a reduced fraction."""
    r = Fraction(r)
    return max(abs(r.numerator).bit_length(), r.denominator.bit_length())


def format_rational(r: Fraction) -> str:
    r = Fraction(r)
    return f"{r.numerator}/{r.denominator}"


def parse_rational(s: str) -> Fraction:
    s = s.strip()
    if s in ("inf", "+inf", "Infinity"):
        raise ValueError("infinity is not a rational")
    return Fraction(s)


def round_to_denominator(x: Number, max_den: int, direction: Direction) -> Fraction:
    """Nearest rational with denominator <= ``max_den`` on one side of ``x``.

    ``direction="down"`` gives the largest such q <= x, ``"up"`` the smallest
    q >= x. Exact: the search walks the Stern-Brocot tree, jumping several
    mediant steps at a time, and never touches floating point.
    """
    if max_den < 1:
        raise ValueError("max_den must be >= 1")
    if direction not in ("up", "down"):
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    x = as_rational(x)
    if x < 0:
        raise ValueError("x must be non-negative")
    if x.denominator <= max_den:
        return x

    fl = math.floor(x)
    # lo = a/b < x < c/d are Stern-Brocot neighbours (bc - ad = 1).
    a, b, c, d = fl, 1, fl + 1, 1
    while b + d <= max_den:
        if Fraction(a + c, b + d) < x:
            # advance lo towards hi: lo_k = (a + k c)/(b + k d) stays <= x
            k_x = math.floor((x * b - a) / (c - x * d))
            k = min(k_x, (max_den - b) // d)
            a, b = a + k * c, b + k * d
        else:
            k_x = math.floor((c - x * d) / (x * b - a))
            k = min(k_x, (max_den - d) // b)
            c, d = c + k * a, d + k * b
    if direction == "down":
        return Fraction(a, b)
    return Fraction(c, d)


def rational_from_binary_search(
    lo: Number, hi: Number, max_den: int, flag: int
) -> Fraction:
    """Round the midpoint of a finished bisection to a bounded denominator.

    ``flag == 1`` means the last step raised ``lo``, so the target lies at or
    above the midpoint and we round up; otherwise we round down.
    """
    lo, hi = as_rational(lo), as_rational(hi)
    if lo > hi:
        raise ValueError("lo must not exceed hi")
    mid = (lo + hi) / 2
    return round_to_denominator(mid, max_den, "up" if flag == 1 else "down")


def bisection_steps(width: Number, max_den: int) -> int:
    """Halvings of an interval of length ``width`` needed to isolate a rational
    with denominator <= ``max_den``: ceil(log2(width * max_den**2)) + 1.

    Two distinct such rationals differ by at least 1/max_den**2, so once the
    bracket is narrower than that, rounding recovers the target uniquely.
    """
    width = as_rational(width)
    if width <= 0:
        return 0
    target = width * max_den * max_den
    # exact ceil(log2(target)) for a positive rational
    e = target.numerator.bit_length() - target.denominator.bit_length()
    if Fraction(2) ** e < target:
        e += 1
    while e > 0 and Fraction(2) ** (e - 1) >= target:
        e -= 1
    return max(e, 0) + 1


def solve_linear_exact(A, b) -> list | None:
    """One exact solution of A x = b over the rationals (free variables set to
    zero), or None when the system is inconsistent."""
    rows = [[as_rational(v) for v in row] + [as_rational(bi)] for row, bi in zip(A, b)]
    n = len(rows[0]) - 1 if rows else 0
    pivots = []
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = 1 / rows[r][c]
        rows[r] = [v * inv for v in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [vi - f * vr for vi, vr in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    if any(row[-1] != 0 and all(v == 0 for v in row[:-1]) for row in rows[r:]):
        return None
    x = [Fraction(0)] * n
    for i, c in enumerate(pivots):
        x[c] = rows[i][-1]
    return x
