"""Monte Carlo estimation of P(A), P(B), P(A and B) and Cov(A, B).

A and B are read from the same sampled configuration. Samples are split into
batches; batch b of a run on stream key K draws from sub-stream K + (b,), and
each batch reduces to integer tallies. Estimates are a pure function of the
tallies, so they do not depend on how batches are spread over processes.
The standard error is the batch-means error of the covariance estimate.
"""

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from opl.graph import (
    A,
    B,
    S,
    ParameterError,
    Params,
    all_pairs,
    batch_has,
    batch_reach,
    num_pairs,
    reach_mask,
)
from opl.sampling import RngStream, out_masks_from_states, sample_states

logger = logging.getLogger(__name__)

BATCHES = 50
MIN_SAMPLES = 1000
MIN_LOCATE_BUDGET = 100_000
SIGNIFICANCE = 3.0
VECTOR_MAX_N = 64
# Upper bound on uniforms held in memory at once per batch.
DRAW_BLOCK = 4_000_000


@dataclass(frozen=True)
class BatchTally:
    size: int
    n_a: int
    n_b: int
    n_ab: int

    def merge(self, other: "BatchTally") -> "BatchTally":
        return BatchTally(
            self.size + other.size,
            self.n_a + other.n_a,
            self.n_b + other.n_b,
            self.n_ab + other.n_ab,
        )


def tally_indicators(event_a: np.ndarray, event_b: np.ndarray) -> BatchTally:
    """Tally jointly observed boolean indicators."""
    event_a = np.asarray(event_a, dtype=bool)
    event_b = np.asarray(event_b, dtype=bool)
    return BatchTally(
        size=int(event_a.size),
        n_a=int(event_a.sum()),
        n_b=int(event_b.sum()),
        n_ab=int((event_a & event_b).sum()),
    )


def tally_states(states: np.ndarray, n: int) -> BatchTally:
    """Evaluate A and B on every row of a (size, m) state array."""
    if n <= VECTOR_MAX_N:
        out = out_masks_from_states(states, n)
        event_a = batch_has(batch_reach(out, A), S)
        event_b = batch_has(batch_reach(out, S), B)
        return tally_indicators(event_a, event_b)

    pairs = all_pairs(n)
    event_a = np.zeros(states.shape[0], dtype=bool)
    event_b = np.zeros(states.shape[0], dtype=bool)
    for row, config in enumerate(states):
        masks = [0] * n
        for e in np.flatnonzero(config):
            i, j = pairs[e]
            if config[e] == 1:
                masks[i] |= 1 << j
            else:
                masks[j] |= 1 << i
        event_a[row] = bool(reach_mask(masks, A) >> S & 1)
        event_b[row] = bool(reach_mask(masks, S) >> B & 1)
    return tally_indicators(event_a, event_b)


def _tally_batch(n: int, p: float, seed: int, key: Tuple[int, ...], size: int) -> BatchTally:
    rng = RngStream(seed=seed, key=key)
    block = max(1, DRAW_BLOCK // max(1, num_pairs(n)))
    total = BatchTally(0, 0, 0, 0)
    remaining = size
    while remaining > 0:
        rows = min(block, remaining)
        total = total.merge(tally_states(sample_states(n, p, rows, rng), n))
        remaining -= rows
    return total


def batch_sizes(samples: int, batches: int = BATCHES) -> List[int]:
    """Split samples into near-equal batches, larger ones first."""
    batches = min(batches, samples)
    step, extra = divmod(samples, batches)
    return [step + (1 if b < extra else 0) for b in range(batches)]


def _fmt(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class McEstimate:
    n: int
    p: Fraction
    samples: int
    seed: int
    stream: Tuple[int, ...]
    stream_count: int
    pA_hat: float
    pB_hat: float
    pAB_hat: float
    cov_hat: float
    std_err: float
    wall_time: float = field(default=0.0, compare=False)

    @property
    def z(self) -> float:
        return self.cov_hat / self.std_err if self.std_err > 0 else 0.0

    def significant(self, threshold: float = SIGNIFICANCE) -> bool:
        return self.std_err > 0 and abs(self.cov_hat) > threshold * self.std_err

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p": _fmt(self.p),
            "samples": self.samples,
            "seed": self.seed,
            "stream": list(self.stream),
            "stream_count": self.stream_count,
            "pA_hat": self.pA_hat,
            "pB_hat": self.pB_hat,
            "pAB_hat": self.pAB_hat,
            "cov_hat": self.cov_hat,
            "std_err": self.std_err,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "McEstimate":
        data = dict(data)
        data["p"] = Fraction(data["p"])
        data["stream"] = tuple(data["stream"])
        return cls(**data)


def summarize(
    n: int,
    p,
    tallies: Sequence[BatchTally],
    seed: int,
    stream: Tuple[int, ...],
    wall_time: float = 0.0,
) -> McEstimate:
    """Point estimates from the merged tallies, batch-means standard error."""
    total = BatchTally(0, 0, 0, 0)
    for t in tallies:
        total = total.merge(t)
    if total.size == 0:
        raise ParameterError("No samples to summarize")
    p_a = total.n_a / total.size
    p_b = total.n_b / total.size
    p_ab = total.n_ab / total.size
    cov = p_ab - p_a * p_b

    batch_covs = np.array([t.n_ab / t.size - (t.n_a / t.size) * (t.n_b / t.size) for t in tallies])
    if len(batch_covs) >= 2:
        std_err = float(np.std(batch_covs, ddof=1) / math.sqrt(len(batch_covs)))
    else:
        std_err = 0.0
    return McEstimate(
        n=n,
        p=Fraction(p),
        samples=total.size,
        seed=seed,
        stream=tuple(stream),
        stream_count=len(tallies),
        pA_hat=p_a,
        pB_hat=p_b,
        pAB_hat=p_ab,
        cov_hat=cov,
        std_err=std_err,
        wall_time=wall_time,
    )


def mc_estimate(
    params: Params,
    samples: int,
    rng: RngStream,
    threads: int = 1,
    batches: int = BATCHES,
) -> McEstimate:
    """Estimate the event probabilities and Cov(A, B) from ``samples`` configurations."""
    if samples < MIN_SAMPLES:
        raise ParameterError(f"samples must be at least {MIN_SAMPLES}, got {samples}")
    started = time.monotonic()
    p = float(params.p)
    sizes = batch_sizes(samples, batches)
    tasks = [(params.n, p, rng.seed, rng.key + (b,), size) for b, size in enumerate(sizes)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            tallies = list(pool.map(_tally_batch, *zip(*tasks)))
    else:
        tallies = [_tally_batch(*task) for task in tasks]
    estimate = summarize(params.n, params.p, tallies, rng.seed, rng.key, time.monotonic() - started)
    logger.debug(
        "MC n=%d p=%s samples=%d cov=%.3e se=%.3e",
        params.n,
        params.p,
        samples,
        estimate.cov_hat,
        estimate.std_err,
    )
    return estimate


CSV_COLUMNS = ["n", "p", "samples", "pA_hat", "pB_hat", "pAB_hat", "cov_hat", "std_err", "seed"]


def write_estimates_csv(handle, estimates: Sequence[McEstimate]) -> None:
    writer = csv.writer(handle)
    writer.writerow(CSV_COLUMNS)
    for e in estimates:
        writer.writerow(
            [e.n, float(e.p), e.samples, e.pA_hat, e.pB_hat, e.pAB_hat, e.cov_hat, e.std_err, e.seed]
        )


@dataclass(frozen=True)
class ScanCurve:
    n: int
    rows: Tuple[Tuple[Fraction, McEstimate], ...]

    def to_dict(self) -> dict:
        return {"n": self.n, "rows": [e.to_dict() for _, e in self.rows]}

    def write_csv(self, handle) -> None:
        write_estimates_csv(handle, [e for _, e in self.rows])


def mc_scan(
    n: int,
    grid: Sequence,
    samples: int,
    rng: RngStream,
    threads: int = 1,
) -> ScanCurve:
    """One estimate per grid point, each on its own sub-stream."""
    grid = [Fraction(p) for p in grid]
    if not grid:
        raise ParameterError("Scan grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ParameterError("Scan grid must be strictly ascending")
    rows = []
    for index, p in enumerate(grid):
        estimate = mc_estimate(Params(n=n, p=p), samples, rng.child(index), threads=threads)
        rows.append((p, estimate))
        logger.info("scan n=%d p=%s cov=%.3e ± %.1e", n, p, estimate.cov_hat, estimate.std_err)
    return ScanCurve(n=n, rows=tuple(rows))


Estimator = Callable[[Params, int, RngStream], McEstimate]


@dataclass(frozen=True)
class SignChange:
    """Result of a sign-change search; bracket is None when undetermined."""

    n: int
    bracket: Optional[Tuple[Fraction, Fraction]]
    confidence: Optional[float]
    samples_used: int
    budget: int
    evaluations: Tuple[McEstimate, ...]

    @property
    def determined(self) -> bool:
        return self.bracket is not None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "status": "bracketed" if self.determined else "undetermined",
            "bracket": [_fmt(x) for x in self.bracket] if self.bracket else None,
            "confidence": self.confidence,
            "samples_used": self.samples_used,
            "budget": self.budget,
        }


def locate_sign_change(
    n: int,
    lo,
    hi,
    budget: int,
    rng: RngStream,
    estimator: Optional[Estimator] = None,
    max_depth: int = 8,
    threads: int = 1,
    threshold: float = SIGNIFICANCE,
) -> SignChange:
    """Adaptive bisection on p for a significant sign change of the covariance."""
    lo, hi = Fraction(lo), Fraction(hi)
    if not (0 <= lo < hi <= 1):
        raise ParameterError(f"Need 0 <= lo < hi <= 1, got ({lo}, {hi})")
    if budget < MIN_LOCATE_BUDGET:
        raise ParameterError(f"budget must be at least {MIN_LOCATE_BUDGET}, got {budget}")
    if estimator is None:

        def estimator(params: Params, samples: int, stream: RngStream) -> McEstimate:
            return mc_estimate(params, samples, stream, threads=threads)

    share = budget // (2 + max_depth)
    first = max(MIN_SAMPLES, share // 16)
    used = 0
    evaluations: List[McEstimate] = []

    def evaluate(p: Fraction, point: int) -> Optional[McEstimate]:
        nonlocal used
        spent, size, attempt = 0, first, 0
        last = None
        while spent + size <= share:
            last = estimator(Params(n=n, p=p), size, rng.child(point).child(attempt))
            spent += size
            evaluations.append(last)
            if last.significant(threshold):
                break
            attempt += 1
            size *= 2
        used += spent
        logger.debug("locate p=%s spent=%d significant=%s", p, spent, bool(last and last.significant(threshold)))
        return last if last is not None and last.significant(threshold) else None

    def undetermined() -> SignChange:
        return SignChange(n, None, None, used, budget, tuple(evaluations))

    at_lo = evaluate(lo, 0)
    at_hi = evaluate(hi, 1)
    if at_lo is None or at_hi is None or (at_lo.cov_hat > 0) == (at_hi.cov_hat > 0):
        return undetermined()

    for depth in range(max_depth):
        mid = (lo + hi) / 2
        at_mid = evaluate(mid, depth + 2)
        if at_mid is None:
            break
        if (at_mid.cov_hat > 0) == (at_lo.cov_hat > 0):
            lo, at_lo = mid, at_mid
        else:
            hi, at_hi = mid, at_mid

    confidence = float(norm.cdf(abs(at_lo.z)) * norm.cdf(abs(at_hi.z)))
    return SignChange(n, (lo, hi), confidence, used, budget, tuple(evaluations))
