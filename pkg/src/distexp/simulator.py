"""Simulation harness: star-topology channel with exact message accounting,
the per-step event loop, seeded batch runs, and worst-case sweeps.

Event order within a step is fixed: the channel opens the step, the
adversary names the queried site and the payoff vector, the algorithm
chooses (messages allowed), then observes the queried entry (messages
allowed). Delivery is instantaneous; sites never talk to each other.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .adversaries import Adversary, AdversarySpec, CommObservation, make_adversary
from .baselines import CounterForecaster, FullComm, Lef, MiniBatch, NoComm
from .core import JITTER_STREAM, CommLedger, ProtocolError, RngStream, RunResult
from .dfpl import DfplAlgorithm, MetaTreeAlgorithm

__all__ = [
    "SITE_PREDICTION",
    "COORDINATOR_PREDICTION",
    "MODEL_KINDS",
    "Channel",
    "JitterConfig",
    "RunContext",
    "RunTrace",
    "ExperimentConfig",
    "RunRow",
    "BatchResult",
    "SweepRow",
    "SweepResult",
    "ALGORITHM_NAMES",
    "make_algorithm",
    "run_once",
    "run_batch",
    "worst_case_sweep",
]

SITE_PREDICTION = "site"
COORDINATOR_PREDICTION = "coordinator"
MODEL_KINDS = (SITE_PREDICTION, COORDINATOR_PREDICTION)


class Channel:
    """Star network around the coordinator with zero-delay delivery.

    Every message carries one n-vector of reals, so the ledger charges
    n reals per message. A broadcast or gather touches all k sites and
    costs k messages.
    """

    def __init__(self, k: int, n: int):
        self.k = k
        self.n = n
        self.ledger = CommLedger()
        self._step = 0
        self._last_send_step = 0

    def begin_step(self, t: int) -> None:
        self._step = t

    def _send(self, count: int) -> None:
        self.ledger.record(count, count * self.n)
        self._last_send_step = self._step

    def site_to_coordinator(self, site: int | None = None) -> None:
        self._send(1)

    def coordinator_to_site(self, site: int | None = None) -> None:
        self._send(1)

    def broadcast(self) -> None:
        self._send(self.k)

    def gather(self) -> None:
        self._send(self.k)

    @property
    def last_send_step(self) -> int:
        return self._last_send_step

    def observation(self) -> CommObservation:
        """Read-only view for adaptive adversaries: completed traffic only."""
        return CommObservation(lambda: self._last_send_step)


@dataclass(frozen=True)
class JitterConfig:
    """Block-length perturbation switch for block-structured algorithms."""

    enabled: bool = False
    relative_slack: float = 0.01

    def __post_init__(self):
        if not (0.0 <= self.relative_slack < 1.0):
            raise ValueError(
                f"relative slack must lie in [0, 1), got {self.relative_slack}"
            )


class RunContext:
    """Per-run wiring handed to an algorithm's begin(): problem sizes, the
    channel, and seed-derived random streams (one generator per stream id,
    cached so repeated lookups share state)."""

    def __init__(self, T: int, k: int, n: int, seed: int, channel: Channel,
                 jitter: JitterConfig | None = None):
        self.T = T
        self.k = k
        self.n = n
        self.seed = seed
        self.channel = channel
        self.jitter = jitter
        self._streams: dict[int, RngStream] = {}

    def stream(self, stream_id: int) -> RngStream:
        rng = self._streams.get(stream_id)
        if rng is None:
            rng = RngStream(self.seed, stream_id)
            self._streams[stream_id] = rng
        return rng

    def stream_for_jitter(self) -> RngStream:
        return self.stream(JITTER_STREAM)


@dataclass(frozen=True)
class RunTrace:
    """Outcome of one run; per-step arrays are populated only on request."""

    result: RunResult
    sites: np.ndarray | None = None
    actions: np.ndarray | None = None
    payoffs: np.ndarray | None = None
    messages_per_step: np.ndarray | None = None


ALGORITHM_NAMES = ("full", "none", "minibatch", "counter", "dfpl", "lef")

_REQUIRED = object()


def make_algorithm(name: str, params: Mapping | None, n: int):
    """Build a fresh single-use algorithm instance from its registry name."""
    opts = dict(params or {})

    def take(key, default=_REQUIRED):
        if key in opts:
            return opts.pop(key)
        if default is _REQUIRED:
            raise ValueError(f"algorithm {name!r} requires parameter {key!r}")
        return default

    if name == "full":
        algo = FullComm()
    elif name == "none":
        algo = NoComm()
    elif name == "minibatch":
        algo = MiniBatch(p_sync=take("p_sync"))
    elif name == "counter":
        algo = CounterForecaster(beta=take("beta"))
    elif name == "lef":
        algo = Lef(
            budget=take("budget"),
            forecaster=take("forecaster", "ewf"),
            learning_rate=take("learning_rate", None),
        )
    elif name == "dfpl":
        cls = DfplAlgorithm if n == 2 else MetaTreeAlgorithm
        algo = cls(
            epsilon=take("epsilon", None),
            ell=take("ell", None),
            params=take("params", None),
        )
    else:
        raise ValueError(f"unknown algorithm {name!r}; known: {ALGORITHM_NAMES}")
    if opts:
        raise ValueError(f"unknown parameters for algorithm {name!r}: {sorted(opts)}")
    return algo


def _resolve_algorithm(algorithm, n: int):
    if isinstance(algorithm, str):
        return make_algorithm(algorithm, {}, n)
    if isinstance(algorithm, tuple) and len(algorithm) == 2:
        return make_algorithm(algorithm[0], algorithm[1], n)
    if callable(algorithm) and not hasattr(algorithm, "choose"):
        return algorithm()
    return algorithm


def run_once(
    algorithm,
    adversary,
    model: str | None = None,
    *,
    T: int,
    k: int,
    n: int = 2,
    seed: int = 0,
    jitter: JitterConfig | None = None,
    record_trace: bool = False,
    adversary_seed: int | None = None,
) -> RunTrace:
    """Simulate one seeded run and return its trace.

    `algorithm` is a registry name, a (name, params) pair, a zero-argument
    factory, or a fresh instance. `adversary` is an AdversarySpec or a
    fresh Adversary instance. Protocol violations surface as ProtocolError
    tagged with the offending step.
    """
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    if k < 1:
        raise ValueError(f"need at least one site, got k={k}")
    if n < 2:
        raise ValueError(f"need at least two experts, got n={n}")
    if model is not None and model not in MODEL_KINDS:
        raise ValueError(f"unknown model {model!r}; known: {MODEL_KINDS}")

    algo = _resolve_algorithm(algorithm, n)
    if model is not None and getattr(algo, "model", model) != model:
        raise ValueError(
            f"algorithm runs in the {algo.model!r} model, not {model!r}"
        )

    channel = Channel(k, n)
    ctx = RunContext(T, k, n, seed, channel, jitter)

    adv = adversary if isinstance(adversary, Adversary) else make_adversary(adversary)
    adv_rng = RngStream(adversary_seed if adversary_seed is not None else seed, 0)
    if adv.oblivious:
        adv.bind(T, k, adv_rng)
    else:
        adv.bind(T, k, adv_rng, comm=channel.observation())

    algo.begin(ctx)

    if record_trace:
        sites_arr = np.zeros(T, dtype=np.int32)
        actions_arr = np.zeros(T, dtype=np.int32)
        payoffs_arr = np.zeros((T, n), dtype=np.float64)
        msgs_arr = np.zeros(T, dtype=np.int64)

    cols = [0.0] * n
    algo_total = 0.0
    prev_msgs = 0
    ledger = channel.ledger

    for t in range(1, T + 1):
        channel.begin_step(t)
        site, payoff = adv.step(t)
        try:
            action = algo.choose(t, site)
            if not (1 <= action <= n):
                raise ProtocolError(f"action {action} outside 1..{n}")
            algo.observe(t, site, payoff)
        except ProtocolError as exc:
            raise ProtocolError(f"step {t}: {exc}") from exc
        for i in range(n):
            cols[i] += payoff[i]
        algo_total += payoff[action - 1]
        if record_trace:
            sites_arr[t - 1] = site
            actions_arr[t - 1] = action
            payoffs_arr[t - 1] = payoff
            msgs_arr[t - 1] = ledger.messages - prev_msgs
            prev_msgs = ledger.messages

    best = 0
    for i in range(1, n):
        if cols[i] > cols[best]:
            best = i
    result = RunResult(
        regret=cols[best] - algo_total,
        best_expert_payoff=cols[best],
        algorithm_payoff=algo_total,
        messages=ledger.messages,
        reals_sent=ledger.reals_sent,
        seed=seed,
    )
    if record_trace:
        return RunTrace(result, sites_arr, actions_arr, payoffs_arr, msgs_arr)
    return RunTrace(result)


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete, picklable description of a batch experiment."""

    algorithm: str
    adversary: AdversarySpec
    algo_params: Mapping = field(default_factory=dict)
    model: str | None = None
    T: int = 20000
    k: int = 20
    n: int = 2
    seeds: int = 100
    seed_base: int = 1
    seed_list: tuple[int, ...] | None = None
    jitter: JitterConfig | None = None
    threads: int = 1

    def validate(self) -> None:
        if self.algorithm not in ALGORITHM_NAMES:
            raise ValueError(
                f"unknown algorithm {self.algorithm!r}; known: {ALGORITHM_NAMES}"
            )
        if self.model is not None and self.model not in MODEL_KINDS:
            raise ValueError(f"unknown model {self.model!r}; known: {MODEL_KINDS}")
        if self.T < 1 or self.k < 1 or self.n < 2:
            raise ValueError(
                f"need T >= 1, k >= 1, n >= 2; got T={self.T}, k={self.k}, n={self.n}"
            )
        if self.seed_list is None and self.seeds < 1:
            raise ValueError(f"need at least one seed, got {self.seeds}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    def resolved_seeds(self) -> list[int]:
        if self.seed_list is not None:
            return list(self.seed_list)
        return list(range(self.seed_base, self.seed_base + self.seeds))


@dataclass(frozen=True)
class RunRow:
    seed: int
    regret: float
    best_expert_payoff: float
    algorithm_payoff: float
    messages: int
    reals_sent: int


@dataclass(frozen=True)
class BatchResult:
    rows: tuple[RunRow, ...]
    mean_regret: float
    std_regret: float
    mean_messages: float
    std_messages: float


def _run_seed(config: ExperimentConfig, seed: int) -> RunRow:
    try:
        trace = run_once(
            (config.algorithm, dict(config.algo_params)),
            config.adversary,
            config.model,
            T=config.T,
            k=config.k,
            n=config.n,
            seed=seed,
            jitter=config.jitter,
        )
    except Exception as exc:
        raise RuntimeError(f"run failed for seed {seed}: {exc}") from exc
    r = trace.result
    return RunRow(
        seed=seed,
        regret=r.regret,
        best_expert_payoff=r.best_expert_payoff,
        algorithm_payoff=r.algorithm_payoff,
        messages=r.messages,
        reals_sent=r.reals_sent,
    )


def _aggregate(rows: Sequence[RunRow]) -> BatchResult:
    rows = tuple(sorted(rows, key=lambda r: r.seed))
    regrets = np.array([r.regret for r in rows], dtype=np.float64)
    msgs = np.array([r.messages for r in rows], dtype=np.float64)
    std = lambda x: float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
    return BatchResult(
        rows=rows,
        mean_regret=float(np.mean(regrets)),
        std_regret=std(regrets),
        mean_messages=float(np.mean(msgs)),
        std_messages=std(msgs),
    )


def run_batch(config: ExperimentConfig) -> BatchResult:
    """Run one seed per row and aggregate; any failing seed aborts the batch
    with its seed named. Aggregation order is by seed regardless of the
    execution order, so threaded and serial batches agree exactly."""
    config.validate()
    seeds = config.resolved_seeds()
    if config.threads > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            rows = list(pool.map(_run_seed, [config] * len(seeds), seeds))
    else:
        rows = [_run_seed(config, seed) for seed in seeds]
    return _aggregate(rows)


@dataclass(frozen=True)
class SweepRow:
    label: str
    adversary: AdversarySpec
    mean_regret: float
    std_regret: float
    mean_messages: float
    std_messages: float


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]

    def worst(self, label: str) -> tuple[float, float]:
        """(max mean regret, max mean messages) over the grid for one entry."""
        mine = [r for r in self.rows if r.label == label]
        if not mine:
            raise KeyError(f"no sweep rows for {label!r}")
        return (
            max(r.mean_regret for r in mine),
            max(r.mean_messages for r in mine),
        )

    def labels(self) -> list[str]:
        seen: list[str] = []
        for r in self.rows:
            if r.label not in seen:
                seen.append(r.label)
        return seen


def worst_case_sweep(
    algorithms: Sequence[tuple[str, str, Mapping]],
    grid: Sequence[AdversarySpec],
    config: ExperimentConfig,
) -> SweepResult:
    """Batch every (algorithm, adversary) pair and keep per-pair summaries.

    `algorithms` rows are (label, registry name, params); `config` supplies
    the shared sizes, seeds, and threading (its own algorithm/adversary
    fields are ignored).
    """
    if not algorithms or not grid:
        raise ValueError("need at least one algorithm and one grid point")
    rows = []
    for label, name, params in algorithms:
        for spec in grid:
            batch = run_batch(
                replace(config, algorithm=name, algo_params=dict(params), adversary=spec)
            )
            rows.append(
                SweepRow(
                    label=label,
                    adversary=spec,
                    mean_regret=batch.mean_regret,
                    std_regret=batch.std_regret,
                    mean_messages=batch.mean_messages,
                    std_messages=batch.std_messages,
                )
            )
    return SweepResult(tuple(rows))
