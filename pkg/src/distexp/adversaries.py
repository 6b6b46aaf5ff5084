"""Payoff/site sequence generators: periodic, Markov, blockwise-random,
communication-adaptive, permutation, and the prefix family used by the
lower-bound constructions.

Every generator streams one (site, payoff) pair per step, so horizons up to
10^7 need no precomputed storage. Oblivious generators are pure functions
of (spec, seed); the adaptive one additionally reads a boolean view of
whether any message has been sent since a given step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import RngStream, check_payoff_vector

__all__ = [
    "ADVERSARY_KINDS",
    "SITE_ALLOCATIONS",
    "AdversarySpec",
    "CommObservation",
    "Adversary",
    "Zigzag",
    "Markov",
    "BlockCoin",
    "AdaptiveBlock",
    "CounterPermutation",
    "AppendixSequence",
    "BernoulliFeed",
    "make_adversary",
    "payoff_sequence",
]

ADVERSARY_KINDS = (
    "zigzag",
    "markov",
    "block_coin",
    "adaptive_block",
    "counter_permutation",
    "appendix_d",
)
SITE_ALLOCATIONS = ("cyclic", "single_site", "permutation_per_block")

_UP = (1.0, 0.0)
_DOWN = (0.0, 1.0)

# Default site allocation per kind; None means the kind fixes its own and
# callers may not override it.
_DEFAULT_ALLOCATION = {
    "zigzag": "cyclic",
    "markov": "cyclic",
    "block_coin": "cyclic",
    "adaptive_block": "cyclic",
    "counter_permutation": "permutation_per_block",
    "appendix_d": "single_site",
}
_FIXED_ALLOCATION = {
    "adaptive_block": "cyclic",
    "counter_permutation": "permutation_per_block",
    "appendix_d": "single_site",
}
_KNOWN_PARAMS = {
    "zigzag": {"mu"},
    "markov": {"lambda"},
    "block_coin": {"block"},
    "adaptive_block": set(),
    "counter_permutation": set(),
    "appendix_d": {"i", "lambda"},
}


class CommObservation:
    """Boolean view of the channel for adaptive adversaries.

    Exposes only "was any message sent at or after step t_from"; nothing
    else from the ledger is reachable through this interface.
    """

    __slots__ = ("_last_send_step",)

    def __init__(self, last_send_step: Callable[[], int]):
        self._last_send_step = last_send_step

    def any_since(self, t_from: int) -> bool:
        return self._last_send_step() >= t_from


@dataclass(frozen=True)
class AdversarySpec:
    """Declarative description of an adversary, expressible in CLI configs."""

    kind: str
    params: dict = field(default_factory=dict)
    site_allocation: str | None = None

    def __post_init__(self):
        if self.kind not in ADVERSARY_KINDS:
            raise ValueError(
                f"unknown adversary kind {self.kind!r}; expected one of {ADVERSARY_KINDS}"
            )
        unknown = set(self.params) - _KNOWN_PARAMS[self.kind]
        if unknown:
            raise ValueError(
                f"unknown parameter(s) {sorted(unknown)} for adversary {self.kind!r}"
            )
        alloc = self.site_allocation
        if alloc is not None:
            if alloc not in SITE_ALLOCATIONS:
                raise ValueError(f"unknown site allocation {alloc!r}")
            fixed = _FIXED_ALLOCATION.get(self.kind)
            if fixed is not None and alloc != fixed:
                raise ValueError(
                    f"adversary {self.kind!r} requires {fixed!r} site allocation"
                )

    def allocation(self) -> str:
        return self.site_allocation or _DEFAULT_ALLOCATION[self.kind]


class Adversary:
    """Base generator: bind once per run, then step(t) for t = 1..T."""

    oblivious = True

    def __init__(self, site_allocation: str):
        if site_allocation not in SITE_ALLOCATIONS:
            raise ValueError(f"unknown site allocation {site_allocation!r}")
        self.site_allocation = site_allocation
        self.T = 0
        self.k = 0
        self.rng: RngStream | None = None
        self._perm: list[int] = []

    def bind(self, T: int, k: int, rng: RngStream) -> None:
        if T < 1 or k < 1:
            raise ValueError("T and k must be >= 1")
        self.T = T
        self.k = k
        self.rng = rng
        self._perm = []
        self._on_bind()

    def _on_bind(self) -> None:
        pass

    def _site(self, t: int) -> int:
        alloc = self.site_allocation
        if alloc == "cyclic":
            return (t - 1) % self.k + 1
        if alloc == "single_site":
            return 1
        # permutation_per_block: fresh uniform order every k steps
        j = (t - 1) % self.k
        if j == 0:
            self._perm = self.rng.shuffled(range(1, self.k + 1))
        return self._perm[j]

    def step(self, t: int) -> tuple[int, tuple[float, float]]:
        return self._site(t), self._payoff(t)

    def _payoff(self, t: int) -> tuple[float, float]:
        raise NotImplementedError


class Zigzag(Adversary):
    """mu steps of (1,0), then alternating runs of 2*mu: (0,1), (1,0), ..."""

    def __init__(self, mu: int, site_allocation: str = "cyclic"):
        super().__init__(site_allocation)
        if mu < 1 or int(mu) != mu:
            raise ValueError(f"run length mu must be an integer >= 1, got {mu}")
        self.mu = int(mu)

    def _payoff(self, t: int) -> tuple[float, float]:
        mu = self.mu
        if t <= mu:
            return _UP
        phase = (t - mu - 1) // (2 * mu)
        return _UP if phase % 2 == 1 else _DOWN


class Markov(Adversary):
    """Symmetric 2-state chain, switch probability 1/(2*lambda), uniform start."""

    def __init__(self, lam: float, site_allocation: str = "cyclic"):
        super().__init__(site_allocation)
        if not (lam >= 0.5):
            raise ValueError(f"lambda must be >= 1/2, got {lam}")
        self.lam = float(lam)
        self._state = 1

    def _on_bind(self) -> None:
        self._state = 1 if self.rng.random() < 0.5 else 2

    def _payoff(self, t: int) -> tuple[float, float]:
        if t > 1 and self.rng.random() < 1.0 / (2.0 * self.lam):
            self._state = 3 - self._state
        return _UP if self._state == 1 else _DOWN


class BlockCoin(Adversary):
    """One fair coin per block of `block` steps; constant payoff inside a block."""

    def __init__(self, block: int, site_allocation: str = "cyclic"):
        super().__init__(site_allocation)
        if block < 1 or int(block) != block:
            raise ValueError(f"block size must be an integer >= 1, got {block}")
        self.block = int(block)
        self._current = _UP

    def _payoff(self, t: int) -> tuple[float, float]:
        if (t - 1) % self.block == 0:
            self._current = _UP if self.rng.random() < 0.5 else _DOWN
        return self._current


class AdaptiveBlock(Adversary):
    """Blockwise coin that re-tosses per step once the block saw communication.

    Blocks have length k and each site is queried once per block (cyclic
    order). The default payoff is fixed by a coin at block start; any step
    after some message was sent earlier in the same block gets a fresh
    independent coin instead.
    """

    oblivious = False

    def __init__(self, site_allocation: str = "cyclic"):
        super().__init__(site_allocation)
        if site_allocation != "cyclic":
            raise ValueError("the adaptive block adversary queries sites cyclically")
        self.comm: CommObservation | None = None
        self._default = _UP
        self._block_start = 1

    def bind(self, T: int, k: int, rng: RngStream, comm: CommObservation = None) -> None:
        if comm is None:
            raise ValueError(
                "adaptive adversary needs a communication view; run it in adaptive mode"
            )
        if T % k != 0:
            raise ValueError(f"T={T} must be divisible by k={k}")
        self.comm = comm
        super().bind(T, k, rng)

    def _payoff(self, t: int) -> tuple[float, float]:
        if (t - 1) % self.k == 0:
            self._block_start = t
            self._default = _UP if self.rng.random() < 0.5 else _DOWN
            return self._default
        if self.comm.any_since(self._block_start):
            return _UP if self.rng.random() < 0.5 else _DOWN
        return self._default


class CounterPermutation(Adversary):
    """All-units stream: one increment per step, every coordinate counts.

    Within each block of k steps the sites are visited in a fresh uniform
    permutation order; the payoff is the counting stress pattern (1, 1).
    """

    def __init__(self, site_allocation: str = "permutation_per_block"):
        super().__init__(site_allocation)
        if site_allocation != "permutation_per_block":
            raise ValueError(
                "the counter stress adversary allocates sites by per-block permutation"
            )

    def bind(self, T: int, k: int, rng: RngStream) -> None:
        if T % k != 0:
            raise ValueError(f"T={T} must be divisible by k={k}")
        super().bind(T, k, rng)

    def _payoff(self, t: int) -> tuple[float, float]:
        return (1.0, 1.0)


class AppendixSequence(Adversary):
    """The deterministic single-site prefix family p_(i).

    p_(0) walks lambda-sized blocks of constant sign g = p[1] - p[2] in the
    order -,+,+,-,-,+,+,-,...: block j (0-based) carries -1 when j mod 4 is
    0 or 3. Each group of 4 blocks cancels, and a (4m+3)-block horizon ends
    on the signs -,+,+ whose sum makes the final gap walk G(T) = +lambda.

    p_(i) for i >= 1 copies p_(0) through t = (2i-1)*lambda and is constant
    afterwards: (1,0) for even i, (0,1) for odd i.
    """

    def __init__(self, i: int, lam: int, site_allocation: str = "single_site"):
        super().__init__(site_allocation)
        if site_allocation != "single_site":
            raise ValueError("the prefix family queries a single site")
        if i < 0 or int(i) != i:
            raise ValueError(f"index i must be an integer >= 0, got {i}")
        if lam < 1 or int(lam) != lam:
            raise ValueError(f"lambda must be an integer >= 1, got {lam}")
        self.i = int(i)
        self.lam = int(lam)

    def bind(self, T: int, k: int, rng: RngStream) -> None:
        lam = self.lam
        if self.i == 0:
            # valid horizons are (4m+3)*lambda
            if T % lam != 0 or (T // lam) % 4 != 3:
                m = max(0, round((T / lam - 3) / 4))
                below = (4 * m + 3) * lam
                above = (4 * (m + 1) + 3) * lam
                nearest = below if abs(T - below) <= abs(T - above) else above
                raise ValueError(
                    f"T={T} is not (4m+3)*lambda for lambda={lam}; nearest valid T is {nearest}"
                )
        else:
            if (2 * self.i - 1) * lam >= T:
                raise ValueError(
                    f"prefix length (2i-1)*lambda = {(2 * self.i - 1) * lam} must be < T={T}"
                )
        super().bind(T, k, rng)

    def _base_sign(self, t: int) -> int:
        j = (t - 1) // self.lam
        return -1 if j % 4 in (0, 3) else 1

    def _payoff(self, t: int) -> tuple[float, float]:
        if self.i > 0 and t > (2 * self.i - 1) * self.lam:
            return _UP if self.i % 2 == 0 else _DOWN
        return _UP if self._base_sign(t) > 0 else _DOWN


class BernoulliFeed(Adversary):
    """Custom iid feed: coordinate j pays 1 with probability means[j].

    Not one of the named kinds; available as a library-level feed for
    stochastic-environment tests (values stay inside [0,1]^n).
    """

    def __init__(self, means: Sequence[float] = (0.6, 0.4), site_allocation: str = "cyclic"):
        super().__init__(site_allocation)
        means = tuple(float(m) for m in means)
        if len(means) < 2 or any(not (0.0 <= m <= 1.0) for m in means):
            raise ValueError("means must be >= 2 probabilities in [0, 1]")
        self.means = means

    def _payoff(self, t: int):
        draws = self.rng.doubles(len(self.means))
        return tuple(1.0 if u < m else 0.0 for u, m in zip(draws, self.means))


def make_adversary(spec: AdversarySpec) -> Adversary:
    """Instantiate the generator an AdversarySpec describes (unbound)."""
    p = spec.params
    alloc = spec.allocation()
    if spec.kind == "zigzag":
        if "mu" not in p:
            raise ValueError("zigzag needs parameter 'mu'")
        return Zigzag(mu=p["mu"], site_allocation=alloc)
    if spec.kind == "markov":
        if "lambda" not in p:
            raise ValueError("markov needs parameter 'lambda'")
        return Markov(lam=p["lambda"], site_allocation=alloc)
    if spec.kind == "block_coin":
        if "block" not in p:
            raise ValueError("block_coin needs parameter 'block'")
        return BlockCoin(block=p["block"], site_allocation=alloc)
    if spec.kind == "adaptive_block":
        return AdaptiveBlock()
    if spec.kind == "counter_permutation":
        return CounterPermutation()
    if spec.kind == "appendix_d":
        if "i" not in p or "lambda" not in p:
            raise ValueError("appendix_d needs parameters 'i' and 'lambda'")
        return AppendixSequence(i=p["i"], lam=p["lambda"])
    raise AssertionError(f"unhandled kind {spec.kind}")


def payoff_sequence(
    spec: AdversarySpec, T: int, k: int, seed: int, comm: CommObservation | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Materialize (sites, payoffs) for an adversary; test convenience.

    Adaptive kinds need a comm view; with a view that always reports no
    communication they reduce to their oblivious branch.
    """
    from .core import ADVERSARY_STREAM

    adv = make_adversary(spec)
    rng = RngStream(seed, ADVERSARY_STREAM)
    if adv.oblivious:
        adv.bind(T, k, rng)
    else:
        adv.bind(T, k, rng, comm if comm is not None else CommObservation(lambda: 0))
    sites = np.empty(T, dtype=np.int32)
    payoffs = np.empty((T, 2))
    for t in range(1, T + 1):
        site, pv = adv.step(t)
        sites[t - 1] = site
        payoffs[t - 1] = pv
    check_payoff_vector(tuple(payoffs[0]))
    return sites, payoffs
