"""Exact-rational polynomials in p and sign-change isolation of Cov(A, B).

Root isolation scans a uniform rational grid for sign changes and refines each
one by bisection, evaluating signs in integer arithmetic. Zeros of even
multiplicity (no sign change) are not reported.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from itertools import zip_longest
from math import comb, lcm
from typing import List, Optional, Sequence, Tuple

from opl.exact import DEFAULT_CAP, CountsTable, enumerate_counts
from opl.graph import ParameterError

logger = logging.getLogger(__name__)

DEFAULT_GRID = 10_000
MAX_HALVINGS = 200


class RationalPolynomial:
    """Polynomial with Fraction coefficients, lowest degree first."""

    def __init__(self, coefs: Sequence = (0,)):
        coefs = [Fraction(c) for c in coefs] or [Fraction(0)]
        while len(coefs) > 1 and coefs[-1] == 0:
            coefs.pop()
        self.coefs = tuple(coefs)

    @property
    def degree(self) -> int:
        return len(self.coefs) - 1

    def __getitem__(self, d: int) -> Fraction:
        return self.coefs[d] if 0 <= d < len(self.coefs) else Fraction(0)

    def __call__(self, x) -> Fraction:
        x = Fraction(x)
        acc = Fraction(0)
        for c in reversed(self.coefs):
            acc = acc * x + c
        return acc

    def __add__(self, other: "RationalPolynomial") -> "RationalPolynomial":
        return RationalPolynomial(
            [a + b for a, b in zip_longest(self.coefs, other.coefs, fillvalue=Fraction(0))]
        )

    def __neg__(self) -> "RationalPolynomial":
        return RationalPolynomial([-c for c in self.coefs])

    def __sub__(self, other: "RationalPolynomial") -> "RationalPolynomial":
        return self + (-other)

    def __mul__(self, other: "RationalPolynomial") -> "RationalPolynomial":
        out = [Fraction(0)] * (len(self.coefs) + len(other.coefs) - 1)
        for i, a in enumerate(self.coefs):
            if a:
                for j, b in enumerate(other.coefs):
                    out[i + j] += a * b
        return RationalPolynomial(out)

    def __eq__(self, other) -> bool:
        return isinstance(other, RationalPolynomial) and self.coefs == other.coefs

    def __repr__(self) -> str:
        return f"RationalPolynomial({[str(c) for c in self.coefs]})"

    def integer_coefs(self) -> Tuple[int, ...]:
        """Coefficients scaled by the positive lcm of denominators."""
        scale = lcm(*(c.denominator for c in self.coefs))
        return tuple(int(c * scale) for c in self.coefs)


def sign_at(int_coefs: Sequence[int], x: Fraction) -> int:
    """Sign of sum c_i x^i for integer c_i, in integer arithmetic."""
    a, b = x.numerator, x.denominator
    d = len(int_coefs) - 1
    # Horner on the homogenised form: sum c_i a^i b^(d-i)
    acc = 0
    bpow = 1
    for i in range(d, -1, -1):
        acc = acc * a + int_coefs[i] * bpow
        bpow *= b
    return (acc > 0) - (acc < 0)


def event_polynomial(counts: Sequence[int], m: int) -> RationalPolynomial:
    """sum_k N[k] (p/2)^k (1-p)^(m-k) expanded in powers of p."""
    coefs = [Fraction(0)] * (m + 1)
    for k, count in enumerate(counts):
        if not count:
            continue
        scale = Fraction(count, 2**k)
        for t in range(m - k + 1):
            coefs[k + t] += scale * comb(m - k, t) * (-1) ** t
    return RationalPolynomial(coefs)


@dataclass(frozen=True)
class CovariancePolynomial:
    """Cov(p) = P_AB(p) - P_A(p) P_B(p) for fixed n."""

    n: int
    coefficients: Tuple[Fraction, ...]

    @property
    def polynomial(self) -> RationalPolynomial:
        return RationalPolynomial(self.coefficients)

    def __call__(self, p) -> Fraction:
        return self.polynomial(p)

    def to_dict(self) -> dict:
        return {"n": self.n, "coefficients": [f"{c.numerator}/{c.denominator}" for c in self.coefficients]}


def cov_polynomial(
    n: int,
    counts: Optional[CountsTable] = None,
    cap: int = DEFAULT_CAP,
    threads: int = 1,
) -> CovariancePolynomial:
    """Exact covariance polynomial of degree at most 2m."""
    if counts is None:
        counts = enumerate_counts(n, cap=cap, threads=threads)
    elif counts.n != n:
        raise ParameterError(f"Counts are for n={counts.n}, not n={n}")
    m = counts.m
    p_a = event_polynomial(counts.N_A, m)
    p_b = event_polynomial(counts.N_B, m)
    p_ab = event_polynomial(counts.N_AB, m)
    cov = p_ab - p_a * p_b
    coefs = list(cov.coefs) + [Fraction(0)] * (2 * m + 1 - len(cov.coefs))
    return CovariancePolynomial(n=n, coefficients=tuple(coefs))


@dataclass(frozen=True)
class CriticalBracket:
    """Interval [lo, hi] holding a sign change; ``root`` is set when a rational zero was hit."""

    lo: Fraction
    hi: Fraction
    root: Optional[Fraction] = None

    @property
    def exact(self) -> bool:
        return self.root is not None

    @property
    def midpoint(self) -> Fraction:
        if self.root is not None:
            return self.root
        return (self.lo + self.hi) / 2

    def to_dict(self) -> dict:
        return {
            "lo": f"{self.lo.numerator}/{self.lo.denominator}",
            "hi": f"{self.hi.numerator}/{self.hi.denominator}",
            "approx": float(self.midpoint),
            "root": None if self.root is None else f"{self.root.numerator}/{self.root.denominator}",
        }


def isolate_sign_changes(
    poly: RationalPolynomial,
    interval: Tuple = (0, 1),
    tol=Fraction(1, 10**12),
    grid: int = DEFAULT_GRID,
) -> List[CriticalBracket]:
    """Brackets of width <= tol around each sign change found on the grid, ascending."""
    lo, hi = Fraction(interval[0]), Fraction(interval[1])
    tol = Fraction(tol)
    if not lo < hi:
        raise ParameterError(f"Degenerate interval ({lo}, {hi})")
    if tol <= 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    if grid < 1:
        raise ParameterError(f"grid must be at least 1, got {grid}")

    coefs = poly.integer_coefs()
    if not any(coefs):
        return []

    brackets = []
    step = (hi - lo) / grid
    prev_x, prev_sign = None, 0
    zero_at = None
    zero_from = None
    for t in range(grid + 1):
        x = lo + step * t
        sign = sign_at(coefs, x)
        if sign == 0:
            if prev_sign and zero_at is None:
                zero_at, zero_from = x, prev_x
            continue
        if prev_sign and sign != prev_sign:
            if zero_at is not None:
                brackets.append(_around_zero(coefs, zero_at, zero_from, x, tol))
            else:
                brackets.append(_bisect(coefs, prev_x, x, prev_sign, tol))
        prev_x, prev_sign, zero_at = x, sign, None
    logger.debug("Isolated %d sign change(s) on (%s, %s)", len(brackets), lo, hi)
    return brackets


def _bisect(coefs: Sequence[int], lo: Fraction, hi: Fraction, sign_lo: int, tol: Fraction) -> CriticalBracket:
    while hi - lo > tol:
        mid = (lo + hi) / 2
        sign = sign_at(coefs, mid)
        if sign == 0:
            return _around_zero(coefs, mid, lo, hi, tol)
        if sign == sign_lo:
            lo = mid
        else:
            hi = mid
    return CriticalBracket(lo, hi)


def _around_zero(coefs: Sequence[int], x: Fraction, lo: Fraction, hi: Fraction, tol: Fraction) -> CriticalBracket:
    """Bracket of width <= tol about a zero x in (lo, hi) with opposite nonzero signs at its ends."""
    half = tol / 2
    left, right = max(lo, x - half), min(hi, x + half)
    for _ in range(MAX_HALVINGS):
        if sign_at(coefs, left) * sign_at(coefs, right) < 0:
            return CriticalBracket(left, right, root=x)
        half /= 2
        left, right = max(lo, x - half), min(hi, x + half)
    logger.warning("No sign change resolved around the zero at %s", x)
    return CriticalBracket(x, x, root=x)


def find_critical_exact(
    n: int,
    interval: Tuple = (0, 1),
    tol=Fraction(1, 10**12),
    grid: int = DEFAULT_GRID,
    counts: Optional[CountsTable] = None,
    cap: int = DEFAULT_CAP,
    threads: int = 1,
) -> List[CriticalBracket]:
    """Critical probabilities of Cov(A, B) for fixed n, as rational brackets."""
    lo, hi = Fraction(interval[0]), Fraction(interval[1])
    if not (0 <= lo < hi <= 1):
        raise ParameterError(f"Interval must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})")
    poly = cov_polynomial(n, counts=counts, cap=cap, threads=threads)
    return isolate_sign_changes(poly.polynomial, (lo, hi), tol=tol, grid=grid)
