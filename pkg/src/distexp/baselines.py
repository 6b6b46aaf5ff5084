"""Comparison algorithms: full communication, no communication, mini-batch
sync, the threshold drift counter, and the label-efficient forecaster.

All the full-information baselines decide with FPL(sqrt(T)) noise; they
differ only in which cumulative-payoff view the queried site holds and in
what the view maintenance costs on the channel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .core import (
    FORECASTER_STREAM,
    ProtocolError,
    RngStream,
    scheduler_stream,
    site_stream,
)
from .forecasters import EwfState, default_ewf_learning_rate, ewf_choose, ewf_update

__all__ = [
    "FullComm",
    "NoComm",
    "MiniBatch",
    "CounterForecaster",
    "ApproxCounterState",
    "LefConfig",
    "Lef",
    "full_comm_run",
    "no_comm_run",
    "minibatch_run",
    "counter_forecaster_run",
    "lef_run",
    "counter_staleness_violation_rate",
]


def _two_experts_only(n: int) -> None:
    if n != 2:
        raise ValueError(
            "this baseline decides with a two-expert perturbation; "
            "wider problems go through the tree algorithm or the label-efficient path"
        )


def _noise_panel(ctx, eta: float) -> list[list[float]]:
    """Pre-drawn per-step noise pairs from the primary forecaster stream.

    Same doubles, in the same order, as per-step scalar draws would use.
    """
    return (ctx.stream(FORECASTER_STREAM).doubles((ctx.T, 2)) * eta).tolist()


class FullComm:
    """Every step: fetch the global cumulative (1 message down), choose by
    FPL(sqrt(T)), report the payoff (1 message up). Exactly 2T messages."""

    model = "site"

    def begin(self, ctx) -> None:
        _two_experts_only(ctx.n)
        self._channel = ctx.channel
        self._cum = [0.0, 0.0]
        self._noise = _noise_panel(ctx, math.sqrt(ctx.T))

    def choose(self, t: int, site: int) -> int:
        self._channel.coordinator_to_site(site)  # the fetched view
        r = self._noise[t - 1]
        c = self._cum
        return 1 if c[0] + r[0] > c[1] + r[1] else 2

    def observe(self, t: int, site: int, p: Sequence[float]) -> None:
        self._cum[0] += p[0]
        self._cum[1] += p[1]
        self._channel.site_to_coordinator(site)


class NoComm:
    """k isolated FPL(sqrt(T)) forecasters, one per site; zero messages."""

    model = "site"

    def begin(self, ctx) -> None:
        _two_experts_only(ctx.n)
        self._eta = math.sqrt(ctx.T)
        self._cums = [[0.0, 0.0] for _ in range(ctx.k)]
        self._streams = [ctx.stream(site_stream(s)) for s in range(1, ctx.k + 1)]

    def choose(self, t: int, site: int) -> int:
        rng = self._streams[site - 1]
        r1 = rng.random() * self._eta
        r2 = rng.random() * self._eta
        c = self._cums[site - 1]
        return 1 if c[0] + r1 > c[1] + r2 else 2

    def observe(self, t: int, site: int, p: Sequence[float]) -> None:
        c = self._cums[site - 1]
        c[0] += p[0]
        c[1] += p[1]


class MiniBatch:
    """Coordinator-initiated random syncs: with probability p_sync per step,
    collect every site's pending payoffs and broadcast the global sum
    (k + k = 2k messages). Sites choose on last-synced global + own pending.
    """

    model = "site"

    def __init__(self, p_sync: float):
        if not (0.0 <= p_sync <= 1.0):
            raise ValueError(f"sync probability must lie in [0, 1], got {p_sync}")
        self.p_sync = p_sync

    def begin(self, ctx) -> None:
        _two_experts_only(ctx.n)
        self._channel = ctx.channel
        self._global = [0.0, 0.0]
        self._pend = [[0.0, 0.0] for _ in range(ctx.k)]
        self._noise = _noise_panel(ctx, math.sqrt(ctx.T))
        self._coins = ctx.stream(scheduler_stream(ctx.k)).doubles(ctx.T).tolist()

    def choose(self, t: int, site: int) -> int:
        if self._coins[t - 1] < self.p_sync:
            self._channel.gather()
            self._channel.broadcast()
            g = self._global
            for pend in self._pend:
                g[0] += pend[0]
                g[1] += pend[1]
                pend[0] = pend[1] = 0.0
        g = self._global
        own = self._pend[site - 1]
        r = self._noise[t - 1]
        return 1 if g[0] + own[0] + r[0] > g[1] + own[1] + r[1] else 2

    def observe(self, t: int, site: int, p: Sequence[float]) -> None:
        own = self._pend[site - 1]
        own[0] += p[0]
        own[1] += p[1]


@dataclass
class ApproxCounterState:
    """Committed totals plus per-site pending drift, bounded by the threshold."""

    committed: list[float]
    pending: list[list[float]]
    flush_threshold: float


class CounterForecaster:
    """Threshold drift counter: a site flushes an expert's pending delta at
    its own next query once the delta has reached beta/k, costing 1 message
    plus a k-message broadcast of the new committed totals. Choices are
    FPL(sqrt(T)) on the committed view.

    The drift contract |true - committed| <= beta per coordinate is checked
    inline at every decision point; for beta below k on unit-payoff streams
    no flush schedule can hold it, and the run fails fast rather than
    report a vacuous ledger.
    """

    model = "site"

    def __init__(self, beta: float):
        if not (beta > 0):
            raise ValueError(f"beta must be positive, got {beta}")
        self.beta = beta

    def begin(self, ctx) -> None:
        _two_experts_only(ctx.n)
        self._channel = ctx.channel
        self.counter = ApproxCounterState(
            committed=[0.0, 0.0],
            pending=[[0.0, 0.0] for _ in range(ctx.k)],
            flush_threshold=self.beta / ctx.k,
        )
        self._true = [0.0, 0.0]
        self._noise = _noise_panel(ctx, math.sqrt(ctx.T))

    def choose(self, t: int, site: int) -> int:
        state = self.counter
        pend = state.pending[site - 1]
        committed = state.committed
        flushed = False
        for a in (0, 1):
            if pend[a] >= state.flush_threshold - 1e-12:
                committed[a] += pend[a]
                pend[a] = 0.0
                self._channel.site_to_coordinator(site)
                flushed = True
        if flushed:
            self._channel.broadcast()
        for a in (0, 1):
            if abs(self._true[a] - committed[a]) > self.beta + 1e-9:
                raise ProtocolError(
                    f"step {t}: committed total drifted {self._true[a] - committed[a]:.3f} "
                    f"beyond beta={self.beta} on expert {a + 1}"
                )
        r = self._noise[t - 1]
        return 1 if committed[0] + r[0] > committed[1] + r[1] else 2

    def observe(self, t: int, site: int, p: Sequence[float]) -> None:
        self._true[0] += p[0]
        self._true[1] += p[1]
        pend = self.counter.pending[site - 1]
        pend[0] += p[0]
        pend[1] += p[1]


@dataclass(frozen=True)
class LefConfig:
    """Label-efficient sampling plan: C forwarded payoffs expected over T."""

    budget: int
    forecaster: str = "ewf"
    learning_rate: float | None = None

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if self.forecaster not in ("ewf", "fpl"):
            raise ValueError(f"forecaster must be 'ewf' or 'fpl', got {self.forecaster!r}")


class Lef:
    """Coordinator-prediction label-efficient forecaster.

    The coordinator predicts every step from its forecaster; the queried
    site forwards its observed payoff with probability p = C/T (1 message),
    and forwarded payoffs update the forecaster with importance weight 1/p.
    """

    model = "coordinator"

    def __init__(
        self,
        budget: int,
        forecaster: str = "ewf",
        learning_rate: float | None = None,
    ):
        self.config = LefConfig(budget, forecaster, learning_rate)

    def begin(self, ctx) -> None:
        cfg = self.config
        if cfg.budget > ctx.T:
            raise ValueError(f"budget {cfg.budget} exceeds the horizon {ctx.T}")
        self.p = cfg.budget / ctx.T
        self._channel = ctx.channel
        self._rng = ctx.stream(FORECASTER_STREAM)
        # send coins are communication-scheduling events; keeping them off
        # the forecaster stream (aliased to site 1) keeps sampling clean
        self._coin_rng = ctx.stream(scheduler_stream(ctx.k))
        if cfg.forecaster == "ewf":
            lr = cfg.learning_rate
            if lr is None:
                lr = default_ewf_learning_rate(ctx.n, float(cfg.budget))
            self._ewf = EwfState.uniform(ctx.n, lr)
            self._cum = None
        else:
            _two_experts_only(ctx.n)
            self._ewf = None
            self._cum = [0.0, 0.0]
            self._eta = math.sqrt(ctx.T)

    def choose(self, t: int, site: int) -> int:
        if self._ewf is not None:
            return ewf_choose(self._ewf, self._rng)
        c = self._cum
        r1 = self._rng.random() * self._eta
        r2 = self._rng.random() * self._eta
        return 1 if c[0] + r1 > c[1] + r2 else 2

    def observe(self, t: int, site: int, p: Sequence[float]) -> None:
        if self._coin_rng.random() < self.p:
            self._channel.site_to_coordinator(site)
            iw = 1.0 / self.p
            if self._ewf is not None:
                ewf_update(self._ewf, p, importance_weight=iw)
            else:
                self._cum[0] += p[0] * iw
                self._cum[1] += p[1] * iw


# --------------------------------------------------------- run wrappers

def _run(algorithm, T, k, n, adversary, seed):
    from .simulator import run_once

    return run_once(algorithm, adversary, T=T, k=k, n=n, seed=seed).result


def full_comm_run(T, k, n, adversary, seed):
    return _run(FullComm(), T, k, n, adversary, seed)


def no_comm_run(T, k, n, adversary, seed):
    return _run(NoComm(), T, k, n, adversary, seed)


def minibatch_run(T, k, n, p_sync, adversary, seed):
    return _run(MiniBatch(p_sync), T, k, n, adversary, seed)


def counter_forecaster_run(T, k, n, beta, adversary, seed):
    return _run(CounterForecaster(beta), T, k, n, adversary, seed)


def lef_run(T, k, n, config: LefConfig, adversary, seed):
    return _run(
        Lef(config.budget, config.forecaster, config.learning_rate),
        T, k, n, adversary, seed,
    )


def counter_staleness_violation_rate(T: int, k: int, beta: float, seed: int) -> float:
    """Fraction of site queries whose freshest possible committed count is
    stale by more than beta, on the all-units permutation stress stream,
    when no flush may happen between a site's consecutive queries.

    At site s's query at step t, the best estimate frozen at s's previous
    query (step t_prev) is t_prev units; the true pre-step count is t - 1.
    """
    from .adversaries import AdversarySpec, payoff_sequence

    sites, _ = payoff_sequence(AdversarySpec("counter_permutation"), T=T, k=k, seed=seed)
    last_query = [None] * (k + 1)
    violations = 0
    counted = 0
    for t, site in enumerate(sites, start=1):
        prev = last_query[site]
        if prev is not None:
            counted += 1
            if (t - 1) - prev > beta:
                violations += 1
        last_query[site] = t
    return violations / counted if counted else 0.0
