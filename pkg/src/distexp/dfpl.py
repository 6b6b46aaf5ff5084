"""Block-structured distributed FPL for two experts, its parameter
schedule, and the recursive tree lifting it to n experts.

The horizon is split into b = T/ell blocks. Each block independently flips
a Bernoulli(q) coin Y_i: on heads ("step phase") the block is played by a
fresh FPL(eta') forecaster starting from a zero cumulative vector, with
per-step synchronization; on tails ("block phase") one action
a_i = M(Q_i + r), r ~ U[0, eta]^2, is played for the whole block and only
the block totals are synchronized. Q accumulates exact payoff sums across
blocks. The schedule eta = ell^(5/12) sqrt(T), eta' = sqrt(ell),
q = min(1, 2 ell^3 T^2 / eta^5) balances the two phases.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .core import (
    FORECASTER_STREAM,
    ProtocolError,
    RngStream,
    argmax_selector,
    tree_node_stream,
)

__all__ = [
    "DfplParams",
    "DfplState",
    "derive_params",
    "params_for_block_length",
    "dfpl_on_block_start",
    "dfpl_choose",
    "dfpl_on_payoff",
    "expected_messages",
    "run_dfpl",
    "DfplAlgorithm",
    "MetaTree",
    "meta_run",
    "MetaTreeAlgorithm",
    "jittered_lengths",
]


@dataclass(frozen=True)
class DfplParams:
    """Schedule of one run: horizon, block shape, noise scales, phase rate.

    The factory functions keep q tied to the schedule formula; direct
    construction permits degenerate q (0 or 1) for forced-phase tests.
    """

    T: int
    ell: int
    eta: float
    eta_prime: float
    q: float
    b: int

    def __post_init__(self):
        if self.T < 1 or self.ell < 1:
            raise ValueError("T and ell must be >= 1")
        if self.b * self.ell != self.T:
            raise ValueError(
                f"b*ell must equal T exactly, got {self.b}*{self.ell} != {self.T}"
            )
        if not math.isclose(self.eta_prime, math.sqrt(self.ell), rel_tol=1e-12):
            raise ValueError("eta_prime must equal sqrt(ell)")
        if not (self.eta > 0):
            raise ValueError("eta must be positive")
        if not (0.0 <= self.q <= 1.0):
            raise ValueError("q must lie in [0, 1]")


def params_for_block_length(T: int, ell: int) -> DfplParams:
    """Schedule for an explicit block length; T must be a multiple of ell."""
    if ell < 1:
        raise ValueError(f"ell must be >= 1, got {ell}")
    if T < ell:
        raise ValueError(f"T={T} is smaller than the block length {ell}")
    if T % ell != 0:
        raise ValueError(f"T={T} is not divisible by ell={ell}")
    eta = ell ** (5.0 / 12.0) * math.sqrt(T)
    raw_q = 2.0 * ell**3 * T**2 / eta**5
    if raw_q > 1.0:
        warnings.warn(
            f"phase probability formula gives {raw_q:.3f} > 1 at T={T}, ell={ell}; "
            "clamped to 1 (outside the intended horizon regime)",
            stacklevel=2,
        )
    return DfplParams(
        T=T,
        ell=ell,
        eta=eta,
        eta_prime=math.sqrt(ell),
        q=min(1.0, raw_q),
        b=T // ell,
    )


def derive_params(T: int, k: int, epsilon: float) -> DfplParams:
    """Schedule from the number of sites: ell targets k^(1+epsilon).

    The block length becomes the largest divisor of T at most the target;
    if no divisor lands within 25% of it, the target is rounded and T is
    truncated to a multiple (with a warning). Outside the regime
    T >= 2 k^2.3 a warning flags that the guarantees are not in force.
    """
    if k < 2:
        raise ValueError(f"need at least 2 sites, got k={k}")
    if not (0.0 < epsilon < 0.2):
        raise ValueError(f"epsilon must lie in (0, 1/5), got {epsilon}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if T < 2.0 * k**2.3:
        warnings.warn(
            f"T={T} is below the 2*k^2.3 ~ {2.0 * k ** 2.3:.0f} regime for k={k}; "
            "regret guarantees are not in force",
            stacklevel=2,
        )
    target = k ** (1.0 + epsilon)
    if T < target:
        raise ValueError(f"T={T} is smaller than the target block length {target:.1f}")
    divisor = 1
    for d in range(int(target), 0, -1):
        if T % d == 0:
            divisor = d
            break
    if divisor >= 0.75 * target:
        return params_for_block_length(T, divisor)
    ell = max(1, round(target))
    T_adj = ell * (T // ell)
    warnings.warn(
        f"no divisor of T={T} within 25% of the target block length {target:.1f}; "
        f"using ell={ell} and truncating the scheduled horizon to {T_adj}",
        stacklevel=2,
    )
    return params_for_block_length(T_adj, ell)


def expected_messages(params: DfplParams, k: int) -> float:
    """E[messages] = 2k b + q b 2 ell: block syncs plus step-phase traffic."""
    return 2.0 * k * params.b + params.q * params.b * 2.0 * params.ell


def jittered_lengths(ell: int, relative_slack: float, rng: RngStream) -> Iterator[int]:
    """Block lengths ell*(1+u), u ~ U[-slack, +slack], rounded and clamped
    into the integer window of the slack band (never empty: it contains ell)."""
    if not (0.0 <= relative_slack < 1.0):
        raise ValueError("relative slack must lie in [0, 1)")
    lo = math.ceil((1.0 - relative_slack) * ell)
    hi = math.floor((1.0 + relative_slack) * ell)
    while True:
        u = (2.0 * rng.random() - 1.0) * relative_slack
        yield min(hi, max(lo, round(ell * (1.0 + u))))


class DfplState:
    """Executable per-block state machine over two experts.

    Drive it with dfpl_on_block_start / dfpl_choose / dfpl_on_payoff in
    that per-step order; it raises ProtocolError on any other order. One
    block draws, in stream order: the phase coin, then either the pair r
    (block phase) or the full step-noise panel (step phase).
    """

    __slots__ = (
        "params",
        "rng",
        "Q",
        "block_payoff",
        "current_block",
        "in_step_phase",
        "block_action",
        "horizon",
        "_lengths",
        "_remaining",
        "_steps_done",
        "_awaiting_payoff",
        "_noise",
        "_noise_i",
        "_step_cum",
        "block_just_ended",
    )

    def __init__(
        self,
        params: DfplParams,
        rng: RngStream,
        block_lengths: Iterable[int] | None = None,
        horizon: int | None = None,
    ):
        self.params = params
        self.rng = rng
        self.Q = [0.0, 0.0]
        self.block_payoff = [0.0, 0.0]
        self.current_block = 0
        self.in_step_phase = False
        self.block_action: int | None = None
        self.horizon = params.T if horizon is None else int(horizon)
        self._lengths = iter(block_lengths) if block_lengths is not None else None
        self._remaining = 0
        self._steps_done = 0
        self._awaiting_payoff = False
        self._noise: np.ndarray | None = None
        self._noise_i = 0
        self._step_cum = [0.0, 0.0]
        self.block_just_ended = False

    @property
    def block_open(self) -> bool:
        return self._remaining > 0

    @property
    def done(self) -> bool:
        return self._steps_done >= self.horizon

    def _next_length(self) -> int:
        nominal = self.params.ell
        if self._lengths is not None:
            nominal = next(self._lengths)
        return max(1, min(nominal, self.horizon - self._steps_done))


def dfpl_on_block_start(state: DfplState) -> DfplState:
    """Open the next block: draw the phase coin and the phase's noise."""
    if state.block_open:
        raise ProtocolError("previous block not finalized")
    if state.done:
        raise ProtocolError("horizon exhausted")
    L = state._next_length()
    state._remaining = L
    state.current_block += 1
    state.block_just_ended = False
    state.in_step_phase = state.rng.bernoulli(state.params.q)
    if state.in_step_phase:
        # fresh forecaster: zero cumulative, eta' noise, whole panel up front
        state._noise = state.rng.doubles((L, 2)) * state.params.eta_prime
        state._noise_i = 0
        state._step_cum = [0.0, 0.0]
        state.block_action = None
    else:
        r1, r2 = state.rng.pair(state.params.eta)
        state.block_action = argmax_selector((state.Q[0] + r1, state.Q[1] + r2))
    return state


def dfpl_choose(state: DfplState) -> int:
    if not state.block_open:
        raise ProtocolError("choose called with no open block")
    if state._awaiting_payoff:
        raise ProtocolError("choose called twice in one step")
    state._awaiting_payoff = True
    if state.in_step_phase:
        r = state._noise[state._noise_i]
        c = state._step_cum
        return 1 if c[0] + r[0] > c[1] + r[1] else 2
    return state.block_action


def dfpl_on_payoff(state: DfplState, p: Sequence[float]) -> bool:
    """Absorb the step's payoff; returns True when this closed the block."""
    if not state._awaiting_payoff:
        raise ProtocolError("payoff delivered before a choice was made")
    if len(p) != 2:
        raise ValueError("two-expert payoff expected")
    state._awaiting_payoff = False
    state.block_just_ended = False
    p1, p2 = float(p[0]), float(p[1])
    state.block_payoff[0] += p1
    state.block_payoff[1] += p2
    if state.in_step_phase:
        state._step_cum[0] += p1
        state._step_cum[1] += p2
        state._noise_i += 1
    state._remaining -= 1
    state._steps_done += 1
    if state._remaining == 0:
        state.Q[0] += state.block_payoff[0]
        state.Q[1] += state.block_payoff[1]
        state.block_payoff = [0.0, 0.0]
        state.block_just_ended = True
        return True
    return False


def run_dfpl(
    payoffs: Sequence[Sequence[float]],
    params: DfplParams,
    rng: RngStream,
    block_lengths: Iterable[int] | None = None,
) -> np.ndarray:
    """Drive one full non-distributed run; returns the action sequence."""
    T = len(payoffs)
    state = DfplState(params, rng, block_lengths=block_lengths, horizon=T)
    actions = np.empty(T, dtype=np.int8)
    for t in range(T):
        if not state.block_open:
            dfpl_on_block_start(state)
        actions[t] = dfpl_choose(state)
        dfpl_on_payoff(state, payoffs[t])
    return actions


class DfplAlgorithm:
    """Distributed wrapper: one DfplState at the coordinator plus the
    message charging convention (2k per block sync, 2 per step-phase step).
    """

    model = "site"

    def __init__(
        self,
        epsilon: float | None = None,
        ell: int | None = None,
        params: DfplParams | None = None,
    ):
        if sum(x is not None for x in (epsilon, ell, params)) > 1:
            raise ValueError("give at most one of epsilon, ell, params")
        self.epsilon = epsilon
        self.ell = ell
        self.params = params
        self.state: DfplState | None = None
        self._channel = None

    def resolve_params(self, T: int, k: int) -> DfplParams:
        if self.params is not None:
            return self.params
        if self.ell is not None:
            return params_for_block_length(T, self.ell)
        return derive_params(T, k, self.epsilon if self.epsilon is not None else 0.1)

    def begin(self, ctx) -> None:
        if ctx.n != 2:
            raise ValueError("two experts here; wider problems use the meta tree")
        params = self.resolve_params(ctx.T, ctx.k)
        lengths = None
        if ctx.jitter is not None and ctx.jitter.enabled:
            lengths = jittered_lengths(
                params.ell, ctx.jitter.relative_slack, ctx.stream_for_jitter()
            )
        self.state = DfplState(
            params, ctx.stream(FORECASTER_STREAM), block_lengths=lengths, horizon=ctx.T
        )
        self._channel = ctx.channel

    def choose(self, t: int, site: int) -> int:
        state = self.state
        if not state.block_open:
            dfpl_on_block_start(state)
            self._channel.broadcast()  # push Q / the block action to all sites
        if state.in_step_phase:
            self._channel.coordinator_to_site(site)  # current step-FPL state down
        return dfpl_choose(state)

    def observe(self, t: int, site: int, p: Sequence[float]) -> None:
        state = self.state
        in_step = state.in_step_phase
        ended = dfpl_on_payoff(state, p)
        if in_step:
            self._channel.site_to_coordinator(site)  # payoff report up
        if ended:
            self._channel.gather()  # block-end collection of local shares


# ------------------------------------------------------------ meta tree

class MetaTree:
    """Balanced binary tree of independent two-expert DFPL nodes.

    Leaves are experts 1..n padded with always-zero virtual experts to the
    next power of two. A node whose right subtree holds no real expert is a
    pass-through (it routes left, consumes no randomness, and sends no
    messages), so a played action is always a real expert and exactly n-1
    nodes are active. Internal node payoffs at step t are the payoffs of
    the experts its two subtrees selected this step.
    """

    def __init__(
        self,
        n: int,
        params: DfplParams,
        stream_for_node: Callable[[int], RngStream],
        lengths_for_node: Callable[[], Iterable[int] | None] | None = None,
        horizon: int | None = None,
    ):
        if n < 2:
            raise ValueError("need at least 2 experts")
        self.n = n
        self.params = params
        leaves = 1 << math.ceil(math.log2(n))
        self.leaves = leaves
        self.leaf_base = leaves - 1
        self.depth = math.ceil(math.log2(n))
        self.states: dict[int, DfplState] = {}
        for j in range(self.leaf_base):
            if self._leftmost_pos(2 * j + 2) < n:  # right subtree has a real expert
                lengths = lengths_for_node() if lengths_for_node is not None else None
                self.states[j] = DfplState(
                    params, stream_for_node(j), block_lengths=lengths, horizon=horizon
                )
        self._sel = [0] * (2 * leaves - 1)
        self._chosen = False

    def _leftmost_pos(self, j: int) -> int:
        while j < self.leaf_base:
            j = 2 * j + 1
        return j - self.leaf_base

    @property
    def active_nodes(self) -> list[int]:
        return sorted(self.states)

    def choose(self, t: int, hooks=None) -> int:
        """Select this step's expert; resolves all node choices bottom-up."""
        if self._chosen:
            raise ProtocolError("choose called twice in one step")
        self._chosen = True
        sel = self._sel
        for i in range(self.leaves):
            pos = self.leaf_base + i
            sel[pos] = i + 1 if i < self.n else 0  # 0 marks a virtual leaf
        for j in range(self.leaf_base - 1, -1, -1):
            state = self.states.get(j)
            if state is None:
                sel[j] = sel[2 * j + 1]  # pass-through: right side is virtual
                continue
            if not state.block_open:
                dfpl_on_block_start(state)
                if hooks is not None:
                    hooks.block_start(j)
            if state.in_step_phase and hooks is not None:
                hooks.step_down(j)
            a = dfpl_choose(state)
            sel[j] = sel[2 * j + 1] if a == 1 else sel[2 * j + 2]
        return sel[0]

    def observe(self, t: int, payoff: Sequence[float], hooks=None) -> None:
        """Feed every active node the payoffs of its subtrees' selections."""
        if not self._chosen:
            raise ProtocolError("payoff delivered before a choice was made")
        self._chosen = False
        sel = self._sel

        def leaf_pay(expert: int) -> float:
            return float(payoff[expert - 1]) if expert >= 1 else 0.0

        for j, state in self.states.items():
            pv = (leaf_pay(sel[2 * j + 1]), leaf_pay(sel[2 * j + 2]))
            in_step = state.in_step_phase
            ended = dfpl_on_payoff(state, pv)
            if hooks is not None:
                if in_step:
                    hooks.step_up(j)
                if ended:
                    hooks.block_end(j)


def meta_run(
    n: int, base: DfplParams, payoffs: Sequence[Sequence[float]], seed: int
) -> np.ndarray:
    """Pure n-expert run of the tree over a payoff feed; returns actions.

    Node j draws from stream tree_node_stream(0, j), so for n=2 the single
    node is the primary forecaster stream and the actions coincide with a
    flat two-expert run under the same seed.
    """
    T = len(payoffs)
    tree = MetaTree(
        n,
        base,
        stream_for_node=lambda j: RngStream(seed, tree_node_stream(0, j)),
        horizon=T,
    )
    actions = np.empty(T, dtype=np.int32)
    for t in range(1, T + 1):
        a = tree.choose(t)
        actions[t - 1] = a
        tree.observe(t, payoffs[t - 1])
    return actions


class _ChannelHooks:
    """Maps tree node events onto the distributed charging convention."""

    __slots__ = ("channel", "site")

    def __init__(self, channel):
        self.channel = channel
        self.site = 1

    def block_start(self, node: int) -> None:
        self.channel.broadcast()

    def step_down(self, node: int) -> None:
        self.channel.coordinator_to_site(self.site)

    def step_up(self, node: int) -> None:
        self.channel.site_to_coordinator(self.site)

    def block_end(self, node: int) -> None:
        self.channel.gather()


class MetaTreeAlgorithm:
    """Distributed n-expert wrapper; per-node charging mirrors DfplAlgorithm."""

    model = "site"

    def __init__(
        self,
        epsilon: float | None = None,
        ell: int | None = None,
        params: DfplParams | None = None,
    ):
        self._base = DfplAlgorithm(epsilon=epsilon, ell=ell, params=params)
        self.tree: MetaTree | None = None
        self._hooks: _ChannelHooks | None = None

    def begin(self, ctx) -> None:
        params = self._base.resolve_params(ctx.T, ctx.k)
        if ctx.jitter is not None and ctx.jitter.enabled:
            # one realized schedule shared by every node, so blocks align
            lengths: list[int] = []
            gen = jittered_lengths(
                params.ell, ctx.jitter.relative_slack, ctx.stream_for_jitter()
            )
            total = 0
            while total < ctx.T:
                L = next(gen)
                lengths.append(L)
                total += L
            lengths_for_node = lambda: iter(lengths)  # noqa: E731
        else:
            lengths_for_node = None
        self.tree = MetaTree(
            ctx.n,
            params,
            stream_for_node=lambda j: ctx.stream(tree_node_stream(ctx.k, j)),
            lengths_for_node=lengths_for_node,
            horizon=ctx.T,
        )
        self._hooks = _ChannelHooks(ctx.channel)

    def choose(self, t: int, site: int) -> int:
        self._hooks.site = site
        return self.tree.choose(t, hooks=self._hooks)

    def observe(self, t: int, site: int, p: Sequence[float]) -> None:
        self._hooks.site = site
        self.tree.observe(t, p, hooks=self._hooks)
