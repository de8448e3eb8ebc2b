"""Directed path pairs (gamma_a from a to s, gamma_b from s to b) in K_n.

Two enumeration routes produce the same census of classified pairs:

* ``concrete``: every pair of self-avoiding paths in K_n (small n only).
* ``pattern``: pairs up to relabeling of the n-3 vertices other than a, b, s.
  Those vertices are written 3, 4, ... in order of first appearance along
  gamma_a then gamma_b; a pattern using d of them stands for (n-3)_d concrete
  pairs. This route is exact for every n.

Edges are compared ignoring orientation; orientation only enters the class
variant and the covariance kernel.
"""

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Tuple

from opl.graph import (
    A,
    B,
    S,
    BudgetExceededError,
    ContractError,
    ParameterError,
    Path,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_N = 12


class PairVariant(str, Enum):
    DISJOINT = "Disjoint"
    TYPE1 = "Type1"
    TYPE2 = "Type2"
    OTHER_SAME = "OtherSame"
    OTHER_OPPOSITE = "OtherOpposite"


@dataclass(frozen=True)
class CutOff:
    """Maximum path length L."""

    L: int

    def __post_init__(self):
        if self.L < 1:
            raise ParameterError(f"Cut-off L must be at least 1, got {self.L}")


def default_cutoff(n: int) -> CutOff:
    """ceil(log^2 n), natural logarithm."""
    return CutOff(max(1, math.ceil(math.log(n) ** 2)))


def falling(x: int, k: int) -> int:
    """Falling factorial (x)_k; zero when k > x >= 0."""
    out = 1
    for t in range(k):
        out *= x - t
    return out


def _cutoff(L) -> int:
    return L.L if isinstance(L, CutOff) else CutOff(int(L)).L


def path_count(n: int, L: int) -> int:
    """Number of paths of length <= L between two fixed vertices: sum of (n-2)_(l-1)."""
    return sum(falling(n - 2, ell - 1) for ell in range(1, min(L, n - 1) + 1))


def enum_paths(n: int, u: int, v: int, L, max_n: int = DEFAULT_MAX_N) -> List[Path]:
    """All self-avoiding directed paths from u to v of length <= L."""
    L = _cutoff(L)
    if u == v:
        raise ParameterError("Path endpoints must differ")
    if not (0 <= u < n and 0 <= v < n):
        raise ParameterError(f"Invalid endpoints ({u}, {v}) for n={n}")
    if n > max_n:
        estimate = path_count(n, L)
        raise BudgetExceededError(
            f"Enumerating paths in K_{n} is refused above n={max_n} (about {estimate} paths)",
            required=estimate,
            cap=path_count(max_n, L),
        )
    paths: List[Path] = []
    others = [w for w in range(n) if w not in (u, v)]

    def extend(prefix: List[int], used: set) -> None:
        if len(prefix) <= L:
            paths.append(Path(tuple(prefix) + (v,)))
        if len(prefix) >= L:
            return
        for w in others:
            if w not in used:
                used.add(w)
                prefix.append(w)
                extend(prefix, used)
                prefix.pop()
                used.discard(w)

    extend([u], {u})
    paths.sort(key=lambda path: (path.length, path.vertices))
    return paths


@dataclass(frozen=True)
class Overlap:
    lambda_a: int
    lambda_b: int
    delta: int  # edges of gamma_b not in gamma_a
    mu: int  # maximal subpaths of gamma_b \ gamma_a meeting gamma_a only at endvertices

    @property
    def lambda_ab(self) -> int:
        return self.lambda_b - self.delta


@dataclass(frozen=True)
class PairClass:
    variant: PairVariant
    indices: Tuple[int, ...]  # (i, j) for Type1, (i, j, k, l, m) for Type2
    overlap: Overlap

    @property
    def params(self) -> Tuple[int, ...]:
        """Parameters that fix the class kernel."""
        o = self.overlap
        if self.variant in (PairVariant.TYPE1, PairVariant.TYPE2):
            return self.indices
        if self.variant == PairVariant.DISJOINT:
            return (o.lambda_a, o.lambda_b)
        return (o.lambda_a, o.lambda_b, o.delta, o.mu)

    @property
    def label(self) -> str:
        return f"{self.variant.value}({','.join(str(x) for x in self.params)})"


def _undirected(u: int, v: int) -> Tuple[int, int]:
    return (u, v) if u < v else (v, u)


def classify_vertices(va: Tuple[int, ...], vb: Tuple[int, ...]) -> PairClass:
    """Classify a pair given as vertex tuples (a ... s) and (s ... b)."""
    la, lb = len(va) - 1, len(vb) - 1
    on_a: Dict[Tuple[int, int], Tuple[int, bool]] = {}
    for t in range(la):
        on_a[_undirected(va[t], va[t + 1])] = (t, va[t] < va[t + 1])
    vertices_a = set(va)

    common = []  # (index in gamma_b, index in gamma_a, same orientation)
    is_common = [False] * lb
    mu = 0
    for t in range(lb):
        x, y = vb[t], vb[t + 1]
        hit = on_a.get(_undirected(x, y))
        if hit is not None:
            is_common[t] = True
            common.append((t, hit[0], hit[1] == (x < y)))
        elif t == 0 or is_common[t - 1] or x in vertices_a:
            mu += 1
    overlap = Overlap(lambda_a=la, lambda_b=lb, delta=lb - len(common), mu=mu)

    if not common:
        return PairClass(PairVariant.DISJOINT, (), overlap)

    if not all(same for _, _, same in common):
        if len(common) == 1 and common[0][0] == 0 and common[0][1] == la - 1:
            return PairClass(PairVariant.TYPE1, (la - 1, lb - 1), overlap)
        return PairClass(PairVariant.OTHER_OPPOSITE, (), overlap)

    k = len(common)
    q, p = common[0][0], common[0][1]
    contiguous = all(tb == q + r and ta == p + r for r, (tb, ta, _) in enumerate(common))
    # off the shared run, gamma_b may touch gamma_a only at s
    detour = vb[1:q] + vb[q + k + 1 :]
    if contiguous and vertices_a.isdisjoint(detour):
        i, l = p, la - p - k
        m, j = q, lb - q - k
        return PairClass(PairVariant.TYPE2, (i, j, k, l, m), overlap)
    return PairClass(PairVariant.OTHER_SAME, (), overlap)


def classify_pair(ga: Path, gb: Path) -> PairClass:
    """Unique class of (gamma_a, gamma_b) with its overlap statistics."""
    if ga.start != A or ga.end != S:
        raise ContractError(f"gamma_a must run from a={A} to s={S}, got {ga.vertices}")
    if gb.start != S or gb.end != B:
        raise ContractError(f"gamma_b must run from s={S} to b={B}, got {gb.vertices}")
    return classify_vertices(ga.vertices, gb.vertices)


def class_cov(variant: PairVariant, params: Tuple[int, ...], q: Fraction) -> Fraction:
    """Per-pair Cov(I_a, I_b) of a class, q = p/2 = c/n."""
    if variant == PairVariant.DISJOINT:
        return Fraction(0)
    if variant == PairVariant.TYPE1:
        i, j = params
        return -(q ** (i + j + 2))
    if variant == PairVariant.TYPE2:
        i, j, k, l, m = params
        la, lb = i + k + l, j + k + m
        return q ** (la + lb - k) - q ** (la + lb)
    la, lb, delta, _mu = params
    if variant == PairVariant.OTHER_SAME:
        return q ** (la + delta) - q ** (la + lb)
    return -(q ** (la + lb))


def pair_cov(ga: Path, gb: Path, p, n: Optional[int] = None) -> Fraction:
    """Exact Cov(I_gamma_a, I_gamma_b) at edge probability p."""
    if n is not None and max(ga.vertices + gb.vertices) >= n:
        raise ParameterError(f"Paths use vertices outside K_{n}")
    cls = classify_pair(ga, gb)
    return class_cov(cls.variant, cls.params, Fraction(p) / 2)


def expected_paths(n: int, p, L) -> Fraction:
    """E[X'_A] = sum_{l <= min(L, n-1)} (n-2)_(l-1) (p/2)^l."""
    L = _cutoff(L)
    q = Fraction(p) / 2
    return sum(
        (falling(n - 2, ell - 1) * q**ell for ell in range(1, min(L, n - 1) + 1)),
        Fraction(0),
    )


def expected_path_bound(c, n: int, L) -> Fraction:
    """sum_{l <= L} c^l / n, an upper bound on E[X'_A] at p = 2c/n."""
    L = _cutoff(L)
    c = Fraction(c)
    return sum((c**ell for ell in range(1, L + 1)), Fraction(0)) / n


def truncation_tail_bound(c: float, L) -> float:
    """sum_{l > L} c^l, bounding the chance that only paths longer than L realize a -> s."""
    L = _cutoff(L)
    if not 0 <= c < 1:
        raise ParameterError(f"Tail bound needs 0 <= c < 1, got {c}")
    return c ** (L + 1) / (1 - c)


# Pattern route


def _patterns_a(lengths: range) -> Iterator[Tuple[Tuple[int, ...], int]]:
    """Canonical gamma_a (a ... s) with the number of anonymous vertices used."""
    for ell in lengths:
        inner = ell - 1
        for b_at in [None] + list(range(inner)):
            label = 3
            vertices = [A]
            for t in range(inner):
                if t == b_at:
                    vertices.append(B)
                else:
                    vertices.append(label)
                    label += 1
            vertices.append(S)
            yield tuple(vertices), label - 3


def _patterns_b(
    used_a: int, max_len: int, max_anon: int, first: Optional[int] = None
) -> Iterator[Tuple[Tuple[int, ...], int]]:
    """Canonical gamma_b (s ... b) given the anonymous labels 3 .. 2+used_a of gamma_a."""
    prefix = [S]
    taken = {S}

    def step(fresh: int) -> Iterator[Tuple[Tuple[int, ...], int]]:
        depth = len(prefix)
        restrict = first if depth == 1 else None
        if restrict in (None, B):
            yield tuple(prefix) + (B,), fresh - 3
        if depth >= max_len or restrict == B:
            return
        options = [A] + list(range(3, fresh))
        if fresh - 3 < max_anon:
            options.append(fresh)
        for w in options:
            if w in taken or (restrict is not None and w != restrict):
                continue
            taken.add(w)
            prefix.append(w)
            yield from step(fresh + 1 if w == fresh else fresh)
            prefix.pop()
            taken.discard(w)

    yield from step(3 + used_a)


Census = Dict[Tuple[PairVariant, Tuple[int, ...]], int]


def _pattern_census(n: int, max_a: int, max_b: int, fix_first: bool = False) -> Census:
    census: Census = defaultdict(int)
    anon = n - 3
    for va, used in _patterns_a(range(1, max_a + 1)):
        if used > anon:
            continue
        first = va[-2] if fix_first else None
        for vb, total in _patterns_b(used, max_b, anon, first=first):
            cls = classify_vertices(va, vb)
            census[(cls.variant, cls.params)] += falling(anon, total)
    return census


def _concrete_census(n: int, L: int, max_n: int) -> Census:
    census: Census = defaultdict(int)
    gammas_a = enum_paths(n, A, S, L, max_n=max_n)
    gammas_b = enum_paths(n, S, B, L, max_n=max_n)
    for ga in gammas_a:
        for gb in gammas_b:
            cls = classify_vertices(ga.vertices, gb.vertices)
            census[(cls.variant, cls.params)] += 1
    return census


def pair_census(n: int, L, method: str = "pattern", max_n: int = DEFAULT_MAX_N) -> Census:
    """Number of pairs in Gamma^L_as x Gamma^L_sb per (variant, params)."""
    L = _cutoff(L)
    if n < 3:
        raise ParameterError(f"n must be at least 3, got {n}")
    longest = min(L, n - 1)
    if method == "pattern":
        census = _pattern_census(n, longest, longest)
    elif method == "concrete":
        census = _concrete_census(n, L, max_n)
    else:
        raise ParameterError(f"Unknown enumeration method: {method}")
    logger.debug("Census n=%d L=%d (%s): %d classes", n, L, method, len(census))
    return dict(census)


@dataclass(frozen=True)
class PairSumRow:
    variant: PairVariant
    params: Tuple[int, ...]
    pairs: int
    subtotal: Fraction


@dataclass(frozen=True)
class PairSum:
    """Cov(X'_A, X'_B) as a sum over classified path pairs."""

    n: int
    L: int
    p: Fraction
    total: Fraction
    by_class: Dict[PairVariant, Fraction]
    rows: Tuple[PairSumRow, ...]

    def to_dict(self) -> dict:
        def fmt(x: Fraction) -> str:
            return f"{x.numerator}/{x.denominator}"

        return {
            "n": self.n,
            "L": self.L,
            "p": fmt(self.p),
            "total": fmt(self.total),
            "by_class": {v.value: fmt(x) for v, x in self.by_class.items()},
        }

    def write_csv(self, handle) -> None:
        """variant, parameters, pair count, subtotal as num/den."""
        writer = csv.writer(handle)
        writer.writerow(["variant", "parameters", "pairs", "subtotal"])
        for row in self.rows:
            writer.writerow(
                [
                    row.variant.value,
                    " ".join(str(x) for x in row.params),
                    row.pairs,
                    f"{row.subtotal.numerator}/{row.subtotal.denominator}",
                ]
            )


def cov_pairsum(
    n: int,
    L,
    p,
    method: str = "pattern",
    census: Optional[Census] = None,
    max_n: int = DEFAULT_MAX_N,
) -> PairSum:
    """sum over gamma_a, gamma_b of Cov(I_gamma_a, I_gamma_b), split by class."""
    L = _cutoff(L)
    p = Fraction(p)
    if not (0 <= p <= 1):
        raise ParameterError(f"p must lie in [0, 1], got {p}")
    if census is None:
        census = pair_census(n, L, method=method, max_n=max_n)
    q = p / 2
    by_class = {variant: Fraction(0) for variant in PairVariant}
    rows = []
    for (variant, params), count in sorted(census.items(), key=lambda item: (item[0][0].value, item[0][1])):
        subtotal = count * class_cov(variant, params, q)
        by_class[variant] += subtotal
        rows.append(PairSumRow(variant, params, count, subtotal))
    total = sum(by_class.values(), Fraction(0))
    return PairSum(n=n, L=L, p=p, total=total, by_class=by_class, rows=tuple(rows))


def type1_counts(n: int, L) -> Dict[Tuple[int, int], int]:
    """R_{i,j} for all i+1, j+1 <= min(L, n-1)."""
    L = _cutoff(L)
    longest = min(L, n - 1)
    census = _pattern_census(n, longest, longest, fix_first=True)
    return {params: count for (variant, params), count in census.items() if variant == PairVariant.TYPE1}


def count_type1(n: int, i: int, j: int) -> int:
    """Number R_{i,j} of Type 1 pairs in K_n."""
    if i < 0 or j < 0:
        raise ParameterError(f"i, j must be non-negative, got ({i}, {j})")
    if i + j < 1:
        raise ParameterError("Type 1 needs i + j >= 1 since a != b")
    if max(i, j) + 1 > n - 1:
        return 0
    census = _pattern_census(n, i + 1, j + 1, fix_first=True)
    return census.get((PairVariant.TYPE1, (i, j)), 0)


def count_type2(n: int, i: int, j: int, k: int, l: int, m: int) -> int:
    """Number R_{i,j,k,l,m} of Type 2 pairs in K_n."""
    if min(i, j) < 0:
        raise ParameterError(f"i, j must be non-negative, got ({i}, {j})")
    if min(k, l, m) < 1:
        raise ParameterError(f"k, l, m must be at least 1, got ({k}, {l}, {m})")
    la, lb = i + k + l, j + k + m
    if max(la, lb) > n - 1:
        return 0
    census = _pattern_census(n, la, lb)
    return census.get((PairVariant.TYPE2, (i, j, k, l, m)), 0)


def type1_subtotal(n: int, L, p) -> Fraction:
    """Type 1 share of Cov(X'_A, X'_B): -sum R_{i,j} (p/2)^(i+j+2)."""
    q = Fraction(p) / 2
    return sum(
        (-count * q ** (i + j + 2) for (i, j), count in type1_counts(n, L).items()),
        Fraction(0),
    )


def type2_subtotal(n: int, L, p) -> Fraction:
    """Type 2 share of Cov(X'_A, X'_B)."""
    return cov_pairsum(n, L, p).by_class[PairVariant.TYPE2]
