"""Baseline algorithm tests: exact ledgers, trace equivalences to their
non-distributed counterparts, drift-contract enforcement, and the
communication-starved lower bounds."""
from __future__ import annotations

import math

import numpy as np
import pytest

from distexp.adversaries import AdversarySpec, BernoulliFeed
from distexp.baselines import (
    CounterForecaster,
    LefConfig,
    counter_forecaster_run,
    counter_staleness_violation_rate,
    full_comm_run,
    lef_run,
    minibatch_run,
    no_comm_run,
)
from distexp.core import ProtocolError, RngStream
from distexp.forecasters import (
    EwfState,
    default_ewf_learning_rate,
    ewf_choose,
    ewf_update,
    fpl_run,
)
from distexp.simulator import Channel, RunContext, run_once

MARKOV = AdversarySpec("markov", {"lambda": 10.0})
CONSTANT = AdversarySpec("zigzag", {"mu": 1 << 30})  # (1,0) forever
COIN16 = AdversarySpec("block_coin", {"block": 16})


# ------------------------------------------------------------- full comm

@pytest.mark.parametrize("T,k", [(100, 1), (1000, 7), (4096, 16)])
def test_full_comm_messages_exactly_2T(T, k):
    r = full_comm_run(T, k, 2, MARKOV, seed=3)
    assert r.messages == 2 * T
    assert r.reals_sent == 2 * T * 2


def test_full_comm_equals_centralized_fpl_trace():
    T, k, seed = 1500, 5, 11
    trace = run_once("full", MARKOV, T=T, k=k, seed=seed, record_trace=True)
    centralized = fpl_run(trace.payoffs, math.sqrt(T), RngStream(seed, 1))
    assert np.array_equal(trace.actions, centralized)


def test_full_comm_constant_sequence_regret_bound():
    T = 4096
    regrets = [full_comm_run(T, 4, 2, CONSTANT, seed=s).regret for s in range(1, 51)]
    assert np.mean(regrets) <= 2 * math.sqrt(T)
    assert min(regrets) >= 0.0  # cannot beat the constant best expert


# --------------------------------------------------------------- no comm

def test_no_comm_sends_nothing():
    r = no_comm_run(2000, 8, 2, MARKOV, seed=5)
    assert r.messages == 0
    assert r.reals_sent == 0


def test_no_comm_single_site_collapses_to_full_comm():
    T, seed = 1200, 9
    a = run_once("none", MARKOV, T=T, k=1, seed=seed, record_trace=True)
    b = run_once("full", MARKOV, T=T, k=1, seed=seed, record_trace=True)
    assert np.array_equal(a.actions, b.actions)
    assert a.result.regret == b.result.regret
    assert a.result.messages == 0 and b.result.messages == 2 * T


def test_no_comm_pays_for_isolation_on_block_coins():
    # k sites each see a 1/k-thinned, effectively iid slice of the coin
    # blocks and keep guessing; the pooled view would track the drift
    T, k = 16384, 16
    regrets = [no_comm_run(T, k, 2, COIN16, seed=s).regret for s in range(1, 41)]
    assert np.mean(regrets) >= 0.1 * math.sqrt(k * T)


# -------------------------------------------------------------- minibatch

def test_minibatch_never_syncs_at_zero_probability():
    r = minibatch_run(3000, 6, 2, 0.0, MARKOV, seed=2)
    assert r.messages == 0


def test_minibatch_always_sync_equals_full_comm():
    T, k = 2000, 4
    for seed in range(1, 11):
        mb = minibatch_run(T, k, 2, 1.0, MARKOV, seed=seed)
        fc = full_comm_run(T, k, 2, MARKOV, seed=seed)
        assert mb.regret == fc.regret
        assert mb.messages == 2 * k * T


def test_minibatch_sync_count_in_binomial_band():
    T, k, p = 20000, 20, 0.01
    for seed in range(1, 11):
        r = minibatch_run(T, k, 2, p, MARKOV, seed=seed)
        syncs = r.messages // (2 * k)
        assert r.messages == syncs * 2 * k
        assert abs(syncs - T * p) <= 45


def test_minibatch_probability_validation():
    from distexp.baselines import MiniBatch

    with pytest.raises(ValueError):
        MiniBatch(-0.1)
    with pytest.raises(ValueError):
        MiniBatch(1.5)


# ---------------------------------------------------------------- counter

def test_counter_hand_walk_first_flush_and_cost():
    # k=4, beta=4 (threshold 1), constant (1,0), cyclic queries:
    # sites 1..4 absorb one unit each in steps 1..4 with nothing to flush;
    # from step 5 on every queried site flushes its single expert-1 unit,
    # costing 1 upload + a 4-site broadcast = 5 messages per step.
    T, k, beta = 32, 4, 4.0
    trace = run_once(("counter", {"beta": beta}), CONSTANT, T=T, k=k, seed=1,
                     record_trace=True)
    msgs = trace.messages_per_step
    assert list(msgs[:4]) == [0, 0, 0, 0]
    assert all(m == 5 for m in msgs[4:])
    assert trace.result.messages == 5 * (T - 4)


def test_counter_committed_totals_lag_is_k_minus_one():
    T, k, beta = 24, 4, 4.0
    channel = Channel(k, 2)
    ctx = RunContext(T, k, 2, seed=1, channel=channel)
    algo = CounterForecaster(beta)
    algo.begin(ctx)
    for t in range(1, T + 1):
        channel.begin_step(t)
        site = (t - 1) % k + 1
        algo.choose(t, site)
        committed = algo.counter.committed[0]
        # after the flush at the decision point the committed count trails
        # the true pre-step count (t-1 units) by exactly min(t-1, k-1)
        assert committed == max(0, t - k)
        assert algo.counter.pending[site - 1][0] == 0.0
        algo.observe(t, site, (1.0, 0.0))


def test_counter_huge_beta_sends_nothing_and_plays_pure_noise():
    T, k, seed = 1024, 4, 13
    beta = float(T * k)
    trace = run_once(("counter", {"beta": beta}), MARKOV, T=T, k=k, seed=seed,
                     record_trace=True)
    assert trace.result.messages == 0
    noise_only = fpl_run(np.zeros((T, 2)), math.sqrt(T), RngStream(seed, 1))
    assert np.array_equal(trace.actions, noise_only)


def test_counter_pays_for_staleness_on_block_coins():
    T, k = 16384, 16
    beta = float(k)
    regrets = [
        counter_forecaster_run(T, k, 2, beta, COIN16, seed=s).regret
        for s in range(1, 41)
    ]
    assert np.mean(regrets) >= 0.1 * math.sqrt(beta * T)


def test_counter_drift_contract_enforced_inline():
    # beta below the reachable drift on the all-units stress stream: the
    # first foreign query already sees a unit of untracked drift
    with pytest.raises(ProtocolError, match="step 2"):
        counter_forecaster_run(64, 4, 2, 0.5, AdversarySpec("counter_permutation"), seed=3)


def test_counter_beta_validation():
    with pytest.raises(ValueError):
        CounterForecaster(0.0)
    with pytest.raises(ValueError):
        CounterForecaster(-1.0)


def test_counter_staleness_rate_high_below_k():
    rates = [counter_staleness_violation_rate(3200, 16, 1.6, seed=s) for s in range(5)]
    assert all(r >= 0.5 for r in rates)
    assert counter_staleness_violation_rate(3200, 16, 1.6, seed=0) == rates[0]


def test_counter_staleness_rate_zero_when_beta_covers_blocks():
    # consecutive queries of a site are at most 2k-1 steps apart
    assert counter_staleness_violation_rate(3200, 16, 2 * 16.0, seed=1) == 0.0


# -------------------------------------------------------------------- lef

def test_lef_full_budget_matches_plain_ewf():
    T, k, n, seed = 800, 3, 2, 17
    trace = run_once(("lef", {"budget": T}), BernoulliFeed(), T=T, k=k, n=n,
                     seed=seed, record_trace=True)
    assert trace.result.messages == T

    lr = default_ewf_learning_rate(n, float(T))
    state = EwfState.uniform(n, lr)
    rng = RngStream(seed, 1)
    for t in range(T):
        assert ewf_choose(state, rng) == trace.actions[t]
        ewf_update(state, trace.payoffs[t], importance_weight=1.0)


def test_lef_fpl_full_budget_matches_full_comm():
    T, k, seed = 1000, 4, 23
    lef = run_once(("lef", {"budget": T, "forecaster": "fpl"}), MARKOV,
                   T=T, k=k, seed=seed, record_trace=True)
    full = run_once("full", MARKOV, T=T, k=k, seed=seed, record_trace=True)
    assert np.array_equal(lef.actions, full.actions)
    assert lef.result.messages == T  # uploads only, no fetches


def test_lef_message_count_tracks_budget():
    T, C = 10000, 400
    counts = [
        lef_run(T, 8, 2, LefConfig(budget=C), MARKOV, seed=s).messages
        for s in range(1, 51)
    ]
    assert abs(np.mean(counts) - C) <= 3 * math.sqrt(C)


def test_lef_regret_scales_with_budget():
    T, C, n = 10000, 2500, 2
    bound = 4 * T * math.sqrt(n / C)
    regrets = [
        lef_run(T, 4, n, LefConfig(budget=C), BernoulliFeed((0.6, 0.4)), seed=s).regret
        for s in range(1, 21)
    ]
    assert np.mean(regrets) <= bound


def test_lef_three_experts_with_ewf():
    trace = run_once(("lef", {"budget": 100}), BernoulliFeed((0.7, 0.5, 0.3)),
                     T=1000, k=4, n=3, seed=5, record_trace=True)
    assert set(np.unique(trace.actions)) <= {1, 2, 3}


def test_lef_fpl_rejects_wide_problems():
    with pytest.raises(ValueError):
        run_once(("lef", {"budget": 100, "forecaster": "fpl"}),
                 BernoulliFeed((0.7, 0.5, 0.3)), T=1000, k=4, n=3, seed=5)


def test_lef_config_validation():
    with pytest.raises(ValueError):
        LefConfig(budget=0)
    with pytest.raises(ValueError):
        LefConfig(budget=10, forecaster="hedge2")
    with pytest.raises(ValueError, match="exceeds the horizon"):
        lef_run(100, 2, 2, LefConfig(budget=101), MARKOV, seed=1)


# ------------------------------------------------------------ shared edges

@pytest.mark.parametrize("algo", ["full", "none",
                                  ("minibatch", {"p_sync": 0.1}),
                                  ("counter", {"beta": 4.0})])
def test_two_expert_baselines_reject_wider_problems(algo):
    with pytest.raises(ValueError):
        run_once(algo, BernoulliFeed((0.7, 0.5, 0.3)), T=100, k=2, n=3, seed=1)
