"""Closed forms for Cov(A, B) at p = 2c/n, c < 1, and the critical constants."""

import logging
from dataclasses import dataclass
from math import comb
from typing import Tuple

from opl.graph import ParameterError

logger = logging.getLogger(__name__)

# 1 - (2-c)(1-c)^3 = -c^4 + 5c^3 - 9c^2 + 7c - 1, lowest degree first
QUARTIC = (-1, 7, -9, 5, -1)

C1_BRACKET = (0.0, 1.0)
C2_BRACKET = (2.0, 3.0)


def quartic(c: float) -> float:
    """1 - (2-c)(1-c)^3, evaluated in the expanded integer-coefficient form."""
    acc = 0.0
    for coef in reversed(QUARTIC):
        acc = acc * c + coef
    return acc


def quartic_factored(c: float) -> float:
    return 1.0 - (2.0 - c) * (1.0 - c) ** 3


def quartic_derivative(c: float) -> float:
    acc = 0.0
    for d in range(len(QUARTIC) - 1, 0, -1):
        acc = acc * c + d * QUARTIC[d]
    return acc


def quartic_discriminant() -> int:
    """Discriminant of the quartic, in integer arithmetic."""
    e, d, c, b, a = QUARTIC
    return (
        256 * a**3 * e**3
        - 192 * a**2 * b * d * e**2
        - 128 * a**2 * c**2 * e**2
        + 144 * a**2 * c * d**2 * e
        - 27 * a**2 * d**4
        + 144 * a * b**2 * c * e**2
        - 6 * a * b**2 * d**2 * e
        - 80 * a * b * c**2 * d * e
        + 18 * a * b * c * d**3
        + 16 * a * c**4 * e
        - 4 * a * c**3 * d**2
        - 27 * b**4 * e**2
        + 18 * b**3 * c * d * e
        - 4 * b**3 * d**3
        - 4 * b**2 * c**3 * e
        + b**2 * c**2 * d**2
    )


def _root(lo: float, hi: float, tol: float) -> float:
    """Bisection to 1e-12 (or tol), then two Newton polish steps."""
    f_lo = quartic(lo)
    if f_lo * quartic(hi) > 0:
        raise ParameterError(f"No sign change of the quartic on ({lo}, {hi})")
    width = min(tol, 1e-12)
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        f_mid = quartic(mid)
        if f_mid == 0.0:
            lo = hi = mid
            break
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(2):
        slope = quartic_derivative(x)
        if slope:
            x -= quartic(x) / slope
    return x


def find_c_roots(tol: float = 1e-12) -> Tuple[float, float]:
    """The two real roots c1 in (0, 1) and c2 in (2, 3) of the quartic."""
    if tol <= 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    c1 = _root(*C1_BRACKET, tol)
    c2 = _root(*C2_BRACKET, tol)
    logger.debug("Quartic roots c1=%.12f c2=%.12f", c1, c2)
    return c1, c2


def critical_p(n: int) -> float:
    """First critical probability estimate 2 c1 / n."""
    c1, _ = find_c_roots()
    return 2 * c1 / n


@dataclass(frozen=True)
class AsymptoticResult:
    c: float
    n: int
    value: float
    type1: float
    type2: float

    def to_dict(self) -> dict:
        return {"c": self.c, "n": self.n, "value": self.value, "type1": self.type1, "type2": self.type2}


def _check_c(c: float) -> None:
    if c < 0:
        raise ParameterError(f"c must be non-negative, got {c}")
    if c >= 1:
        raise ParameterError(f"The asymptotic formula needs c < 1, got {c}")


def type1_limit(c: float) -> float:
    """(2c^3 - c^4) / (1-c)^2."""
    return (2 * c**3 - c**4) / (1 - c) ** 2


def type2_limit(c: float) -> float:
    """c^3 / (1-c)^5."""
    return c**3 / (1 - c) ** 5


def main_formula(c: float, n: int) -> AsymptoticResult:
    """Leading n^-3 term of Cov(A, B) and its Type 1 / Type 2 split."""
    _check_c(c)
    if n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    scale = 1.0 / n**3
    value = quartic(c) * c**3 / (1 - c) ** 5 * scale
    return AsymptoticResult(
        c=c,
        n=n,
        value=value,
        type1=-type1_limit(c) * scale,
        type2=type2_limit(c) * scale,
    )


def pa_asymptotic(c: float, n: int) -> float:
    """Leading term c / ((1-c) n) of P(A)."""
    _check_c(c)
    return c / ((1 - c) * n)


def truncated_series(c: float, N: int) -> Tuple[float, float]:
    """Partial sums of the Type 1 and Type 2 series keeping the powers c^3 .. c^(N+2).

    Type 1 sums c^(i+j+2) over i, j >= 0 with i+j >= 1 (there are t+1 pairs
    with i+j = t); Type 2 sums c^(i+j+k+l+m) over i, j >= 0 and k, l, m >= 1
    (C(e+1, 4) tuples with total e).
    """
    if c >= 1:
        raise ParameterError(f"Series diverge for c >= 1, got {c}")
    if c < 0:
        raise ParameterError(f"c must be non-negative, got {c}")
    if N < 1:
        raise ParameterError(f"N must be at least 1, got {N}")
    type1 = 0.0
    type2 = 0.0
    for t in range(1, N + 1):
        type1 += (t + 1) * c ** (t + 2)
    for e in range(3, N + 3):
        type2 += comb(e + 1, 4) * c**e
    return type1, type2
