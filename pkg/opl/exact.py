"""Exact finite-n probabilities by complete enumeration of oriented configurations.

Configurations are numbered by a mixed-radix base-3 counter over edge indices
(digit e is the state of pair e). The low ``INNER_EDGES`` digits are expanded
into one numpy table; the remaining high digits form the outer counter, whose
range is split into contiguous chunks for worker processes. Every chunk
returns integer tallies per present-edge count k; tallies merge by entrywise
addition, so the result is independent of the partition.
"""

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from opl.graph import (
    A,
    B,
    MAX_EXACT_N,
    S,
    BudgetExceededError,
    ParameterError,
    all_pairs,
    batch_has,
    batch_reach,
    mask_dtype,
    num_pairs,
)

logger = logging.getLogger(__name__)

INNER_EDGES = 10
DEFAULT_CAP = 3**15
DEEP_CAP = 3**21


def default_threads() -> int:
    return os.cpu_count() or 1


def required_budget(n: int, radix: int = 3) -> int:
    """Number of configurations a complete enumeration visits."""
    return radix ** num_pairs(n)


def check_budget(n: int, cap: int, radix: int = 3) -> int:
    """Return the required budget or refuse with it."""
    if n < 3:
        raise ParameterError(f"n must be at least 3, got {n}")
    m = num_pairs(n)
    required = radix**m
    if required > cap or n > MAX_EXACT_N:
        raise BudgetExceededError(
            f"n={n} needs {radix}^{m} = {required} configurations; budget is {cap}",
            required=required,
            cap=cap,
        )
    return required


@dataclass(frozen=True)
class CountsTable:
    """Counts of oriented configurations by present-edge count k = 0..m."""

    n: int
    N_A: Tuple[int, ...]
    N_B: Tuple[int, ...]
    N_AB: Tuple[int, ...]
    totals: Tuple[int, ...]

    @property
    def m(self) -> int:
        return num_pairs(self.n)

    def merge(self, other: "CountsTable") -> "CountsTable":
        if other.n != self.n:
            raise ParameterError(f"Cannot merge tables for n={self.n} and n={other.n}")
        return CountsTable(
            n=self.n,
            N_A=_add(self.N_A, other.N_A),
            N_B=_add(self.N_B, other.N_B),
            N_AB=_add(self.N_AB, other.N_AB),
            totals=_add(self.totals, other.totals),
        )

    def problems(self) -> List[str]:
        """Violated table invariants; empty when the table is sound."""
        found = []
        m = self.m
        for name in ("N_A", "N_B", "N_AB", "totals"):
            if len(getattr(self, name)) != m + 1:
                found.append(f"{name} has {len(getattr(self, name))} entries, expected {m + 1}")
        if found:
            return found
        if self.N_A[0] or self.N_B[0] or self.N_AB[0]:
            found.append("events counted with zero present edges")
        for k in range(m + 1):
            bound = comb(m, k) * 2**k
            if self.totals[k] != bound:
                found.append(f"totals[{k}] = {self.totals[k]}, expected C({m},{k})*2^{k} = {bound}")
            if not 0 <= self.N_AB[k] <= min(self.N_A[k], self.N_B[k]) <= bound:
                found.append(f"N_AB[{k}] <= min(N_A[{k}], N_B[{k}]) <= {bound} violated")
            if self.N_A[k] != self.N_B[k]:
                found.append(f"N_A[{k}] != N_B[{k}]")
        if sum(self.totals) != 3**m:
            found.append(f"sum of totals is {sum(self.totals)}, expected 3^{m}")
        return found

    def to_dict(self) -> dict:
        """JSON document with integers as decimal strings."""
        return {
            "n": self.n,
            "m": self.m,
            "N_A": [str(x) for x in self.N_A],
            "N_B": [str(x) for x in self.N_B],
            "N_AB": [str(x) for x in self.N_AB],
            "totals": [str(x) for x in self.totals],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CountsTable":
        table = cls(
            n=int(data["n"]),
            N_A=tuple(int(x) for x in data["N_A"]),
            N_B=tuple(int(x) for x in data["N_B"]),
            N_AB=tuple(int(x) for x in data["N_AB"]),
            totals=tuple(int(x) for x in data["totals"]),
        )
        if "m" in data and int(data["m"]) != table.m:
            raise ParameterError(f"Document m={data['m']} does not match n={table.n}")
        return table


@dataclass(frozen=True)
class PercolationCounts:
    """Edge subsets of K_n by size k, and those joining u and v."""

    n: int
    u: int
    v: int
    connected: Tuple[int, ...]
    totals: Tuple[int, ...]


def _add(x: Sequence[int], y: Sequence[int]) -> Tuple[int, ...]:
    return tuple(a + b for a, b in zip(x, y))


def _digit_table(n: int, edges: Sequence[Tuple[int, int]], radix: int):
    """Out-masks (n, radix^len(edges)) and present-edge counts for all digit vectors."""
    dtype = mask_dtype(n)
    kind = np.dtype(dtype).type
    size = radix ** len(edges)
    idx = np.arange(size, dtype=np.int64)
    out = np.zeros((n, size), dtype=dtype)
    present = np.zeros(size, dtype=np.int16)
    for e, (i, j) in enumerate(edges):
        digit = (idx // radix**e) % radix
        present += (digit != 0).astype(np.int16)
        forward = (digit == 1).astype(dtype)
        out[i] |= forward << kind(j)
        if radix == 3:
            out[j] |= (digit == 2).astype(dtype) << kind(i)
        else:
            out[j] |= forward << kind(i)
    return out, present


def _outer_masks(n: int, edges: Sequence[Tuple[int, int]], radix: int, index: int):
    """Out-masks and present-edge count of a single outer digit vector."""
    masks = [0] * n
    present = 0
    for i, j in edges:
        index, digit = divmod(index, radix)
        if digit == 0:
            continue
        present += 1
        if digit == 1:
            masks[i] |= 1 << j
            if radix == 2:
                masks[j] |= 1 << i
        else:
            masks[j] |= 1 << i
    return masks, present


def _blocks(n: int, radix: int, start: int, stop: int) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield (out, present) for every outer index in [start, stop)."""
    pairs = all_pairs(n)
    inner = pairs[:INNER_EDGES]
    outer = pairs[INNER_EDGES:]
    inner_out, inner_present = _digit_table(n, inner, radix)
    dtype = inner_out.dtype
    for index in range(start, stop):
        masks, present = _outer_masks(n, outer, radix, index)
        out = inner_out | np.asarray(masks, dtype=dtype)[:, None]
        yield out, inner_present + present


def _orientation_chunk(n: int, start: int, stop: int) -> Tuple[list, list, list, list]:
    """Tallies (totals, N_A, N_B, N_AB) over outer indices [start, stop)."""
    m = num_pairs(n)
    totals = np.zeros(m + 1, dtype=np.int64)
    n_a = np.zeros(m + 1, dtype=np.int64)
    n_b = np.zeros(m + 1, dtype=np.int64)
    n_ab = np.zeros(m + 1, dtype=np.int64)
    for out, present in _blocks(n, 3, start, stop):
        event_a = batch_has(batch_reach(out, A), S)
        event_b = batch_has(batch_reach(out, S), B)
        totals += np.bincount(present, minlength=m + 1)
        n_a += np.bincount(present[event_a], minlength=m + 1)
        n_b += np.bincount(present[event_b], minlength=m + 1)
        n_ab += np.bincount(present[event_a & event_b], minlength=m + 1)
    return totals.tolist(), n_a.tolist(), n_b.tolist(), n_ab.tolist()


def _percolation_chunk(n: int, u: int, v: int, start: int, stop: int) -> Tuple[list, list]:
    """Tallies (totals, connected) over outer indices [start, stop) of edge subsets."""
    m = num_pairs(n)
    totals = np.zeros(m + 1, dtype=np.int64)
    joined = np.zeros(m + 1, dtype=np.int64)
    for out, present in _blocks(n, 2, start, stop):
        connected = batch_has(batch_reach(out, u), v)
        totals += np.bincount(present, minlength=m + 1)
        joined += np.bincount(present[connected], minlength=m + 1)
    return totals.tolist(), joined.tolist()


def _ranges(total: int, parts: int) -> List[Tuple[int, int]]:
    parts = max(1, min(parts, total))
    step, extra = divmod(total, parts)
    ranges = []
    lo = 0
    for i in range(parts):
        hi = lo + step + (1 if i < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    return ranges


def _map_reduce(worker: Callable, head: tuple, total: int, threads: int) -> List[List[int]]:
    """Run ``worker(*head, lo, hi)`` over a partition of [0, total) and sum results entrywise."""
    threads = max(1, threads)
    ranges = _ranges(total, threads * 4 if threads > 1 else 1)
    if threads == 1 or len(ranges) == 1:
        parts = [worker(*head, lo, hi) for lo, hi in ranges]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(worker, *head, lo, hi) for lo, hi in ranges]
            parts = [f.result() for f in futures]
    merged = [list(x) for x in parts[0]]
    for part in parts[1:]:
        for acc, values in zip(merged, part):
            for k, value in enumerate(values):
                acc[k] += int(value)
    return [[int(x) for x in acc] for acc in merged]


def _outer_total(n: int, radix: int) -> int:
    return radix ** max(0, num_pairs(n) - INNER_EDGES)


def enumerate_counts(n: int, cap: int = DEFAULT_CAP, threads: int = 1) -> CountsTable:
    """Census of all 3^m oriented configurations of K_n by present-edge count."""
    required = check_budget(n, cap)
    started = time.monotonic()
    logger.debug("Enumerating %d configurations for n=%d on %d worker(s)", required, n, threads)
    totals, n_a, n_b, n_ab = _map_reduce(_orientation_chunk, (n,), _outer_total(n, 3), threads)
    table = CountsTable(n=n, N_A=tuple(n_a), N_B=tuple(n_b), N_AB=tuple(n_ab), totals=tuple(totals))
    logger.info("Enumerated n=%d (%d configurations) in %.2fs", n, required, time.monotonic() - started)
    return table


def _weights(m: int, q: Fraction, r: Fraction) -> List[Fraction]:
    """[q^k r^(m-k) for k = 0..m]."""
    return [q**k * r ** (m - k) for k in range(m + 1)]


def prob_from_counts(counts: CountsTable, p) -> Tuple[Fraction, Fraction, Fraction]:
    """(P_A, P_B, P_AB) at edge probability p, exact."""
    p = Fraction(p)
    if not (0 <= p <= 1):
        raise ParameterError(f"p must lie in [0, 1], got {p}")
    weights = _weights(counts.m, p / 2, 1 - p)
    p_a = sum((x * w for x, w in zip(counts.N_A, weights)), Fraction(0))
    p_b = sum((x * w for x, w in zip(counts.N_B, weights)), Fraction(0))
    p_ab = sum((x * w for x, w in zip(counts.N_AB, weights)), Fraction(0))
    return p_a, p_b, p_ab


def cov_exact(
    n: int,
    p,
    cap: int = DEFAULT_CAP,
    threads: int = 1,
    counts: Optional[CountsTable] = None,
) -> Fraction:
    """Cov(A, B) = P_AB - P_A * P_B, exact."""
    if counts is None:
        counts = enumerate_counts(n, cap=cap, threads=threads)
    elif counts.n != n:
        raise ParameterError(f"Counts are for n={counts.n}, not n={n}")
    p_a, p_b, p_ab = prob_from_counts(counts, p)
    return p_ab - p_a * p_b


def percolation_counts(
    n: int, u: int = A, v: int = S, cap: int = DEFAULT_CAP, threads: int = 1
) -> PercolationCounts:
    """Census of all 2^m edge subsets by size, and those joining u and v."""
    check_budget(n, cap, radix=2)
    if not (0 <= u < n and 0 <= v < n):
        raise ParameterError(f"Invalid vertices ({u}, {v}) for n={n}")
    totals, joined = _map_reduce(_percolation_chunk, (n, u, v), _outer_total(n, 2), threads)
    return PercolationCounts(n=n, u=u, v=v, connected=tuple(joined), totals=tuple(totals))


def percolation_prob(
    n: int, q, u: int = A, v: int = S, cap: int = DEFAULT_CAP, threads: int = 1
) -> Fraction:
    """P(u <-> v) in undirected bond percolation on K_n with edge probability q."""
    q = Fraction(q)
    if not (0 <= q <= 1):
        raise ParameterError(f"q must lie in [0, 1], got {q}")
    counts = percolation_counts(n, u, v, cap=cap, threads=threads)
    weights = _weights(num_pairs(n), q, 1 - q)
    return sum((x * w for x, w in zip(counts.connected, weights)), Fraction(0))


@dataclass(frozen=True)
class ConsistencyRow:
    n: int
    p: Fraction
    cov: Fraction
    scaled: float  # n^3 * cov


def consistency_table(
    c,
    ns: Sequence[int],
    cap: int = DEFAULT_CAP,
    threads: int = 1,
    counts_for: Optional[Callable[[int], CountsTable]] = None,
) -> Tuple[List[ConsistencyRow], float]:
    """n^3 * cov_exact(n, 2c/n) for each n, next to the asymptotic F(c)."""
    from opl.asymptotics import main_formula

    c = Fraction(c)
    rows = []
    for n in ns:
        counts = counts_for(n) if counts_for else enumerate_counts(n, cap=cap, threads=threads)
        p = c * 2 / n
        cov = cov_exact(n, p, counts=counts)
        rows.append(ConsistencyRow(n=n, p=p, cov=cov, scaled=float(cov * n**3)))
    limit = main_formula(float(c), 1).value
    return rows, limit
