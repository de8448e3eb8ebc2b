"""Complete graph K_n, oriented configurations and directed reachability."""

from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

# Vertex roles are fixed by convention.
A = 0
B = 1
S = 2

# Exact routes pack out-neighbours of a vertex into one machine word.
MAX_EXACT_N = 16


class ParameterError(ValueError):
    """Invalid parameter or constraint violation."""

    pass


class ContractError(ValueError):
    """Arguments violate an operation's contract."""

    pass


class BudgetExceededError(Exception):
    """Requested work exceeds the configured budget."""

    def __init__(self, message: str, required: int, cap: int):
        super().__init__(message)
        self.required = required
        self.cap = cap


class EdgeState(IntEnum):
    """State of an unordered vertex pair {i, j} with i < j."""

    ABSENT = 0
    FORWARD = 1  # i -> j
    BACKWARD = 2  # j -> i


def num_pairs(n: int) -> int:
    """Number of unordered pairs m = n(n-1)/2."""
    return n * (n - 1) // 2


def edge_index(i: int, j: int, n: int) -> int:
    """Canonical flat index of the pair (i, j), i < j < n."""
    if not (0 <= i < j < n):
        raise ParameterError(f"Invalid pair ({i}, {j}) for n={n}")
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def edge_pair(index: int, n: int) -> Tuple[int, int]:
    """Inverse of edge_index."""
    m = num_pairs(n)
    if not (0 <= index < m):
        raise ParameterError(f"Invalid edge index {index} for n={n}")
    i = 0
    row = n - 1
    while index >= row:
        index -= row
        i += 1
        row -= 1
    return i, i + 1 + index


def all_pairs(n: int) -> list:
    """All pairs (i, j) in canonical index order."""
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


@dataclass(frozen=True)
class Params:
    """Vertex count and edge probability; a=0, b=1, s=2."""

    n: int
    p: Fraction
    c: Optional[Fraction] = None

    def __post_init__(self):
        if self.n < 3:
            raise ParameterError(f"n must be at least 3, got {self.n}")
        p = Fraction(self.p)
        if not (0 <= p <= 1):
            raise ParameterError(f"p must lie in [0, 1], got {p}")
        object.__setattr__(self, "p", p)
        if self.c is not None and Fraction(self.c) * 2 / self.n != p:
            raise ParameterError(f"c={self.c} is inconsistent with p={p}")

    @classmethod
    def from_c(cls, n: int, c) -> "Params":
        """Build params from the scaled parameter, p = 2c/n exactly."""
        c = Fraction(c)
        if c < 0:
            raise ParameterError(f"c must be non-negative, got {c}")
        if n < 3:
            raise ParameterError(f"n must be at least 3, got {n}")
        return cls(n=n, p=c * 2 / n, c=c)

    @property
    def a(self) -> int:
        return A

    @property
    def b(self) -> int:
        return B

    @property
    def s(self) -> int:
        return S


@dataclass(frozen=True)
class OrientedConfiguration:
    """One of three states per unordered pair of K_n."""

    n: int
    states: Tuple[int, ...]
    _out: Tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        states = tuple(int(x) for x in self.states)
        if len(states) != num_pairs(self.n):
            raise ParameterError(
                f"Expected {num_pairs(self.n)} states for n={self.n}, got {len(states)}"
            )
        if any(x not in (0, 1, 2) for x in states):
            raise ParameterError("Edge states must be 0 (absent), 1 (forward) or 2 (backward)")
        object.__setattr__(self, "states", states)

        out = [0] * self.n
        for (i, j), state in zip(all_pairs(self.n), states):
            if state == EdgeState.FORWARD:
                out[i] |= 1 << j
            elif state == EdgeState.BACKWARD:
                out[j] |= 1 << i
        object.__setattr__(self, "_out", tuple(out))

    @classmethod
    def empty(cls, n: int) -> "OrientedConfiguration":
        return cls(n=n, states=(0,) * num_pairs(n))

    @classmethod
    def from_arcs(cls, n: int, arcs: Iterable[Tuple[int, int]]) -> "OrientedConfiguration":
        """Build from directed arcs (u, v) meaning u -> v."""
        states = [0] * num_pairs(n)
        for u, v in arcs:
            if u == v:
                raise ParameterError(f"Loop at vertex {u}")
            idx = edge_index(min(u, v), max(u, v), n)
            if states[idx]:
                raise ParameterError(f"Pair {{{u}, {v}}} given twice")
            states[idx] = EdgeState.FORWARD if u < v else EdgeState.BACKWARD
        return cls(n=n, states=tuple(states))

    @classmethod
    def from_index(cls, n: int, index: int) -> "OrientedConfiguration":
        """Decode a mixed-radix base-3 counter value; edge e is digit e."""
        m = num_pairs(n)
        if not (0 <= index < 3**m):
            raise ParameterError(f"Configuration index {index} out of range for n={n}")
        states = []
        for _ in range(m):
            index, digit = divmod(index, 3)
            states.append(digit)
        return cls(n=n, states=tuple(states))

    @property
    def index(self) -> int:
        value = 0
        for digit in reversed(self.states):
            value = value * 3 + digit
        return value

    @property
    def num_present(self) -> int:
        return sum(1 for x in self.states if x != EdgeState.ABSENT)

    @property
    def out_masks(self) -> Tuple[int, ...]:
        """Per-vertex out-neighbour bitmasks."""
        return self._out

    def reversed(self) -> "OrientedConfiguration":
        """Swap Forward and Backward on every pair."""
        flip = {0: 0, 1: 2, 2: 1}
        return OrientedConfiguration(n=self.n, states=tuple(flip[x] for x in self.states))

    def has_arc(self, u: int, v: int) -> bool:
        return bool(self._out[u] >> v & 1)


@dataclass(frozen=True)
class Path:
    """Self-avoiding path v0, v1, ..., v_l in K_n."""

    vertices: Tuple[int, ...]

    def __post_init__(self):
        vertices = tuple(self.vertices)
        if len(vertices) < 2:
            raise ParameterError("A path needs at least one edge")
        if len(set(vertices)) != len(vertices):
            raise ParameterError(f"Path {vertices} repeats a vertex")
        object.__setattr__(self, "vertices", vertices)

    @property
    def length(self) -> int:
        return len(self.vertices) - 1

    @property
    def start(self) -> int:
        return self.vertices[0]

    @property
    def end(self) -> int:
        return self.vertices[-1]

    def arcs(self) -> list:
        return list(zip(self.vertices, self.vertices[1:]))

    def is_realized(self, config: OrientedConfiguration) -> bool:
        """True iff every arc of the path is present with this orientation."""
        return all(config.has_arc(u, v) for u, v in self.arcs())


def _check_vertex(v: int, n: int) -> None:
    if not (0 <= v < n):
        raise ParameterError(f"Invalid vertex {v} for n={n}")


def reach_mask(out_masks: Sequence[int], u: int) -> int:
    """Bitmask of vertices reachable from u by frontier expansion."""
    seen = 1 << u
    frontier = seen
    while frontier:
        nxt = 0
        f = frontier
        while f:
            low = f & -f
            nxt |= out_masks[low.bit_length() - 1]
            f ^= low
        frontier = nxt & ~seen
        seen |= frontier
    return seen


def reaches(config: OrientedConfiguration, u: int, v: int) -> bool:
    """True iff a directed path from u to v exists."""
    _check_vertex(u, config.n)
    _check_vertex(v, config.n)
    return bool(reach_mask(config.out_masks, u) >> v & 1)


def events(config: OrientedConfiguration, params: Params) -> Tuple[bool, bool]:
    """(A, B) = (a -> s, s -> b)."""
    if config.n != params.n:
        raise ParameterError(f"Configuration has n={config.n}, params have n={params.n}")
    return reaches(config, A, S), reaches(config, S, B)


# Vectorized routes: many configurations at once, one column per configuration.


def batch_reach(out: np.ndarray, u: int) -> np.ndarray:
    """Reachability masks from u for a batch of out-neighbour tables.

    ``out`` has shape (n, size); row v holds the out-neighbour bitmask of
    vertex v in every configuration of the batch.
    """
    n, size = out.shape
    kind = out.dtype.type
    one = kind(1)
    reach = np.full(size, one << kind(u), dtype=out.dtype)
    for _ in range(n - 1):
        nxt = reach.copy()
        for v in range(n):
            nxt |= out[v] * ((reach >> kind(v)) & one)
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    return reach


def batch_has(masks: np.ndarray, v: int) -> np.ndarray:
    """Boolean array: bit v set in each mask."""
    kind = masks.dtype.type
    return ((masks >> kind(v)) & kind(1)).astype(bool)


def mask_dtype(n: int):
    """Smallest unsigned dtype holding an n-bit vertex mask."""
    if n <= 16:
        return np.uint16
    if n <= 32:
        return np.uint32
    if n <= 64:
        return np.uint64
    raise ParameterError(f"Vectorized reachability supports n <= 64, got {n}")
