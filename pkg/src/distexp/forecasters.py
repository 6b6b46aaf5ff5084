"""Non-distributed forecasters over two experts, plus the n-ary weighted one.

The follow-the-perturbed-leader rule draws fresh uniform noise every step:
action^t = M(C^{t-1} + r^t) with r^t ~ U[0, eta]^2 and M the strict
comparator (ties to expert 2). Its per-step choice law depends only on the
cumulative payoff gap, which `fpl_choice_probability` gives in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import RngStream, argmax_selector

__all__ = [
    "FplState",
    "fpl_choose",
    "fpl_update",
    "fpl_run",
    "difference_transform",
    "fpl_choice_probability",
    "EwfState",
    "ewf_choose",
    "ewf_update",
    "default_ewf_learning_rate",
]


@dataclass
class FplState:
    """Cumulative payoffs and noise scale of a two-expert FPL forecaster."""

    eta: float
    rng: RngStream
    cumulative: list[float] = field(default_factory=lambda: [0.0, 0.0])

    def __post_init__(self):
        if not (self.eta > 0) or not math.isfinite(self.eta):
            raise ValueError(f"noise scale must be positive, got {self.eta}")
        if len(self.cumulative) != 2:
            raise ValueError("two experts only; wider problems go through the tree")


def fpl_choose(state: FplState) -> int:
    """One perturbed-leader choice; draws fresh noise, mutates nothing else."""
    r1, r2 = state.rng.pair(state.eta)
    c = state.cumulative
    return argmax_selector((c[0] + r1, c[1] + r2))


def fpl_update(state: FplState, payoff: Sequence[float]) -> FplState:
    """Absorb one payoff vector into the cumulative totals."""
    if len(payoff) != 2:
        raise ValueError("two-expert payoff expected")
    state.cumulative[0] += payoff[0]
    state.cumulative[1] += payoff[1]
    return state


def fpl_run(payoffs: np.ndarray, eta: float, rng: RngStream) -> np.ndarray:
    """Whole-run FPL actions, vectorized.

    Bit-identical to the choose/update loop on the same stream: the noise
    block consumes the stream in the same row-major order the per-step pair
    draws would, and the comparison reproduces the strict tie rule.
    """
    payoffs = np.asarray(payoffs, dtype=float)
    if payoffs.ndim != 2 or payoffs.shape[1] != 2:
        raise ValueError("payoffs must have shape (T, 2)")
    if not (eta > 0):
        raise ValueError(f"noise scale must be positive, got {eta}")
    T = payoffs.shape[0]
    noise = rng.doubles((T, 2)) * eta
    cum = np.zeros((T, 2))
    np.cumsum(payoffs[:-1], axis=0, out=cum[1:])  # C^{t-1}, zero at t=1
    perturbed = cum + noise
    return np.where(perturbed[:, 0] > perturbed[:, 1], 1, 2).astype(np.int8)


def difference_transform(payoff: Sequence[float]) -> tuple[float, float]:
    """Shift a two-expert payoff so the smaller coordinate is exactly 0.

    Preserves the payoff gap, hence the entire FPL choice distribution,
    while halving the magnitude FPL's regret bound charges for.
    """
    if len(payoff) != 2:
        raise ValueError("two-expert payoff expected")
    a, b = float(payoff[0]), float(payoff[1])
    m = a if a < b else b
    return (a - m, b - m)


def fpl_choice_probability(gap: float, eta: float) -> float:
    """P[choose expert 1] as a function of gap = C1 - C2 under U[0, eta]^2 noise.

    Piecewise quadratic: 0 below -eta, (1/2)(1 + gap/eta)^2 on [-eta, 0],
    1 - (1/2)(1 - gap/eta)^2 on [0, eta], and 1 above eta.
    """
    if not (eta > 0):
        raise ValueError(f"noise scale must be positive, got {eta}")
    x = gap / eta
    if x <= -1.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    if x < 0.0:
        return 0.5 * (1.0 + x) ** 2
    return 1.0 - 0.5 * (1.0 - x) ** 2


# ------------------------------------------------------------------- EWF

@dataclass
class EwfState:
    """Exponentially weighted forecaster over n experts."""

    weights: np.ndarray
    learning_rate: float

    @classmethod
    def uniform(cls, n: int, learning_rate: float) -> "EwfState":
        if n < 2:
            raise ValueError("need at least 2 experts")
        if not (learning_rate > 0) or not math.isfinite(learning_rate):
            raise ValueError(f"learning rate must be positive, got {learning_rate}")
        return cls(weights=np.full(n, 1.0 / n), learning_rate=learning_rate)

    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum()


def default_ewf_learning_rate(n: int, expected_rounds: float) -> float:
    """sqrt(8 ln n / E[number of observed rounds])."""
    if expected_rounds <= 0:
        raise ValueError("expected rounds must be positive")
    return math.sqrt(8.0 * math.log(n) / expected_rounds)


def ewf_choose(state: EwfState, rng: RngStream) -> int:
    """Sample a 1-based expert from the current weight distribution."""
    probs = state.probabilities()
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i + 1
    return len(probs)  # u landed in the last cell's rounding slack


def ewf_update(
    state: EwfState, payoff: Sequence[float], importance_weight: float = 1.0
) -> EwfState:
    """Multiply weights by exp(lr * iw * payoff) and renormalize.

    Raises OverflowError if the exponentials leave double range before the
    renormalization can absorb them.
    """
    if importance_weight < 1.0:
        raise ValueError("importance weight is an inverse probability, must be >= 1")
    p = np.asarray(payoff, dtype=float)
    if p.shape != state.weights.shape:
        raise ValueError("payoff dimension mismatch")
    scaled = np.exp(state.learning_rate * importance_weight * p)
    w = state.weights * scaled
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0 or not np.all(np.isfinite(w)):
        raise OverflowError("weight update left double range")
    state.weights = w / total
    return state
