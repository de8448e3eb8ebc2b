"""Seeded, reproducible sampling of randomly oriented G(n,p).

Generator family: numpy ``PCG64`` seeded through ``SeedSequence(entropy=seed,
spawn_key=key)``. A stream is identified by its seed and a key tuple whose
first entry is the stream id; sub-streams (scan points, batches) extend the
key. Distinct keys never share generator state.

Each pair consumes exactly one double per configuration: u < p/2 is Forward,
p/2 <= u < p is Backward, otherwise Absent. The draw count is therefore
independent of p and of the outcomes.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from opl.graph import (
    OrientedConfiguration,
    ParameterError,
    Params,
    all_pairs,
    mask_dtype,
    num_pairs,
)

SEED_MASK = (1 << 64) - 1


@dataclass
class RngStream:
    """A (seed, stream-id) generator; not to be shared across threads."""

    seed: int
    key: Tuple[int, ...] = (0,)
    _generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.key, int):
            self.key = (self.key,)
        self.key = tuple(int(k) for k in self.key)
        if not self.key or any(k < 0 for k in self.key):
            raise ParameterError(f"Stream key must be non-empty and non-negative: {self.key}")
        self.seed = int(self.seed) & SEED_MASK
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    @property
    def stream_id(self) -> int:
        return self.key[0]

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream, fresh state."""
        return RngStream(seed=self.seed, key=self.key + (int(index),))

    def with_stream(self, stream_id: int) -> "RngStream":
        """Same seed, different stream id, fresh state."""
        return RngStream(seed=self.seed, key=(int(stream_id),) + self.key[1:])


def _check_probability(p: float) -> None:
    if not (0 <= p <= 1):
        raise ParameterError(f"p must lie in [0, 1], got {p}")


def sample_states(n: int, p: float, size: int, rng: RngStream) -> np.ndarray:
    """Draw ``size`` configurations as a (size, m) uint8 array of edge states."""
    p = float(p)
    _check_probability(p)
    m = num_pairs(n)
    u = rng.generator.random((size, m))
    states = np.zeros((size, m), dtype=np.uint8)
    states[u < p] = 2
    states[u < p / 2] = 1
    return states


def sample_oriented(params: Params, rng: RngStream) -> OrientedConfiguration:
    """One configuration: each pair Absent w.p. 1-p, Forward/Backward w.p. p/2."""
    states = sample_states(params.n, float(params.p), 1, rng)[0]
    return OrientedConfiguration(n=params.n, states=tuple(int(x) for x in states))


def out_masks_from_states(states: np.ndarray, n: int) -> np.ndarray:
    """(n, size) out-neighbour bitmasks for a (size, m) state array."""
    dtype = mask_dtype(n)
    kind = np.dtype(dtype).type
    size = states.shape[0]
    out = np.zeros((n, size), dtype=dtype)
    for e, (i, j) in enumerate(all_pairs(n)):
        col = states[:, e]
        out[i] |= (col == 1).astype(dtype) << kind(j)
        out[j] |= (col == 2).astype(dtype) << kind(i)
    return out

