"""Shared primitives for the distributed experts simulator.

Payoff vectors are tuples of floats in [0, 1], one entry per expert, and
expert indices are 1-based everywhere in the public interface. All
randomness flows through RngStream so that any run can be replayed from its
(seed, stream_id) pairs alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ADVERSARY_STREAM",
    "FORECASTER_STREAM",
    "JITTER_STREAM",
    "site_stream",
    "scheduler_stream",
    "tree_node_stream",
    "RngStream",
    "ProtocolError",
    "check_payoff_vector",
    "argmax_selector",
    "best_expert",
    "uniform_noise",
    "CumulativePayoff",
    "CommLedger",
    "RegretSummary",
    "RunResult",
    "compute_regret",
]

# Stream ids, one per logical actor. Site i (1-based) draws from stream i,
# so the lone site of a k=1 run shares stream 1 with the coordinator-side
# forecaster; single-site runs then coincide exactly, per seed, with their
# centralized counterparts.
ADVERSARY_STREAM = 0
FORECASTER_STREAM = 1
JITTER_STREAM = 1 << 20


def site_stream(site: int) -> int:
    """Stream id of site `site` (1-based)."""
    if site < 1:
        raise ValueError(f"site index must be >= 1, got {site}")
    return site


def scheduler_stream(k: int) -> int:
    """Stream id of the sync scheduler in a k-site run."""
    return k + 1


def tree_node_stream(k: int, node: int) -> int:
    """Stream id of meta-tree node `node` (root is node 0).

    The root reuses the primary forecaster stream so a 2-expert tree is
    draw-for-draw identical to the flat algorithm.
    """
    if node == 0:
        return FORECASTER_STREAM
    return k + 2 + node


class ProtocolError(RuntimeError):
    """Raised when choose/observe are driven out of the per-step order."""


class RngStream:
    """Uniform-double stream for one logical actor, keyed by (seed, stream_id).

    Every draw is derived from the iid U[0, 1) doubles the underlying
    generator yields, consumed strictly in order: a scalar ``random()`` and
    the corresponding element of a later ``doubles()`` array produced by a
    fresh stream with the same key are bit-identical. That property lets
    batch code pre-draw noise arrays without changing any replayed run.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence((self.seed, self.stream_id))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def random(self) -> float:
        """Next double in [0, 1)."""
        return float(self._gen.random())

    def doubles(self, shape) -> np.ndarray:
        """Array of the next doubles in [0, 1), consumed in row-major order."""
        return self._gen.random(shape)

    def pair(self, scale: float) -> tuple[float, float]:
        """Two consecutive doubles scaled to [0, scale]."""
        return scale * self.random(), scale * self.random()

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def shuffled(self, items: Sequence) -> list:
        """Fisher-Yates permutation driven by the double stream (len-1 draws)."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = int(self.random() * (i + 1))  # random() < 1 so j <= i
            out[i], out[j] = out[j], out[i]
        return out


def check_payoff_vector(p: Sequence[float], n: int | None = None) -> tuple[float, ...]:
    """Validate a payoff vector: length n (>= 2), every entry finite in [0, 1]."""
    vec = tuple(float(x) for x in p)
    if n is not None and len(vec) != n:
        raise ValueError(f"payoff vector has length {len(vec)}, expected {n}")
    if len(vec) < 2:
        raise ValueError("payoff vector needs at least 2 experts")
    for x in vec:
        if not math.isfinite(x) or x < 0.0 or x > 1.0:
            raise ValueError(f"payoff entries must lie in [0, 1], got {x!r}")
    return vec


def argmax_selector(v: Sequence[float]) -> int:
    """Two-expert selector M: 1 iff v1 > v2 strictly, else 2 (ties to 2)."""
    if len(v) != 2:
        raise ValueError(f"selector is defined for 2 experts, got {len(v)}")
    a, b = float(v[0]), float(v[1])
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError(f"selector input must be finite, got {v!r}")
    return 1 if a > b else 2


def best_expert(totals: Sequence[float]) -> int:
    """1-based index of the largest total; ties go to the lowest index."""
    if len(totals) < 1:
        raise ValueError("empty totals")
    best_i = 0
    best_v = float(totals[0])
    for i in range(1, len(totals)):
        v = float(totals[i])
        if v > best_v:
            best_i, best_v = i, v
    return best_i + 1


def uniform_noise(eta: float, dim: int, rng: RngStream) -> tuple[float, ...]:
    """dim iid draws from U[0, eta]; eta = 0 yields exact zeros."""
    if eta < 0:
        raise ValueError(f"noise scale must be >= 0, got {eta}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if eta == 0:
        return (0.0,) * dim
    return tuple(eta * rng.random() for _ in range(dim))


class CumulativePayoff:
    """Running per-expert totals; add() accumulates left-to-right in doubles."""

    __slots__ = ("totals",)

    def __init__(self, n: int):
        if n < 2:
            raise ValueError("need at least 2 experts")
        self.totals = [0.0] * n

    def add(self, p: Sequence[float]) -> None:
        t = self.totals
        if len(p) != len(t):
            raise ValueError("payoff dimension mismatch")
        for i, x in enumerate(p):
            t[i] += x

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(self.totals)


@dataclass
class CommLedger:
    """Message and payload counters for one run. Never decreases."""

    messages: int = 0
    reals_sent: int = 0

    def record(self, messages: int, reals: int) -> None:
        if messages < 0 or reals < 0:
            raise ValueError("ledger increments must be non-negative")
        self.messages += messages
        self.reals_sent += reals

    def snapshot(self) -> tuple[int, int]:
        return (self.messages, self.reals_sent)


@dataclass(frozen=True)
class RegretSummary:
    """regret = best_expert_payoff - algorithm_payoff, computed exactly."""

    regret: float
    best_expert_payoff: float
    algorithm_payoff: float


@dataclass(frozen=True)
class RunResult:
    """Outcome of one simulated run."""

    regret: float
    best_expert_payoff: float
    algorithm_payoff: float
    messages: int
    reals_sent: int
    seed: int


def compute_regret(
    payoffs: Iterable[Sequence[float]], actions: Sequence[int]
) -> RegretSummary:
    """Regret of an action sequence against the best fixed expert.

    Sums accumulate left-to-right in double precision, matching the live
    run loop exactly, so replaying a stored trace reproduces the recorded
    result bit-for-bit.
    """
    actions = np.asarray(actions)
    rows = payoffs if isinstance(payoffs, (list, tuple)) else list(payoffs)
    if len(rows) != len(actions):
        raise ValueError(
            f"got {len(rows)} payoff rows for {len(actions)} actions"
        )
    if len(rows) == 0:
        raise ValueError("empty run")
    n = len(rows[0])
    cols = [0.0] * n
    algo = 0.0
    for p, a in zip(rows, actions):
        if len(p) != n:
            raise ValueError("ragged payoff rows")
        a = int(a)
        if a < 1 or a > n:
            raise ValueError(f"action {a} outside [1, {n}]")
        for i in range(n):
            cols[i] += p[i]
        algo += p[a - 1]
    best = cols[best_expert(cols) - 1]
    return RegretSummary(regret=best - algo, best_expert_payoff=best, algorithm_payoff=algo)
