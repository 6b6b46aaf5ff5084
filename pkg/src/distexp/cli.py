"""Command-line front end: single experiments, the two figure recipes,
and parameter sweeps, all emitting deterministic commented CSV.

Config is a flat key=value file plus command-line overrides; every knob
has a default except the algorithm and the adversary. Exit codes: 0 on
success, 2 for configuration errors, 1 for runtime failures.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .adversaries import ADVERSARY_KINDS, AdversarySpec, make_adversary
from .simulator import (
    ALGORITHM_NAMES,
    ExperimentConfig,
    JitterConfig,
    make_algorithm,
    run_batch,
    worst_case_sweep,
)

__all__ = ["main", "console_main", "ConfigError"]

RUNS_SCHEMA = "distexp-runs-v1"
FIG_A_SCHEMA = "distexp-fig-a-v1"
FIG_B_SCHEMA = "distexp-fig-b-v1"
SWEEP_SCHEMA = "distexp-sweep-v1"

FIG_A_LAMBDAS = (5.0, 10.0, 20.0, 40.0, 80.0)
FIG_B_ZIGZAG_MUS = (10, 50, 250, 1250)
FIG_B_MARKOV_LAMBDAS = (5.0, 20.0, 80.0)


class ConfigError(ValueError):
    """Invalid configuration; converts to exit code 2."""


_INT_KEYS = {"T", "k", "n", "seeds", "seed_base", "threads",
             "mu", "block", "i", "budget", "ell"}
_FLOAT_KEYS = {"epsilon", "lambda", "beta", "p_sync", "learning_rate",
               "jitter_slack"}
_BOOL_KEYS = {"jitter"}
_STR_KEYS = {"algorithm", "adversary", "model", "forecaster"}
KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS

# which knobs each adversary kind / algorithm actually consumes
_ADVERSARY_KNOBS = {
    "zigzag": ("mu",),
    "markov": ("lambda",),
    "block_coin": ("block",),
    "adaptive_block": (),
    "counter_permutation": (),
    "appendix_d": ("i", "lambda"),
}
_ALGO_KNOBS = {
    "full": (),
    "none": (),
    "minibatch": ("p_sync",),
    "counter": ("beta",),
    "dfpl": ("epsilon", "ell"),
    "lef": ("budget", "forecaster", "learning_rate"),
}


def _coerce(key: str, raw, where: str = "config"):
    if key not in KNOWN_KEYS:
        raise ConfigError(f"unknown {where} key {key!r}")
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _BOOL_KEYS:
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("true", "1", "yes", "on"):
                return True
            if text in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from exc


def parse_config_file(path: str) -> dict:
    """Flat key=value lines; '#' comments and blank lines are skipped."""
    conf: dict = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        conf[key] = _coerce(key, raw, where=f"{path}:{lineno}")
    return conf


def _resolve_threads(conf: dict) -> int:
    if conf.get("threads") is not None:
        return conf["threads"]
    env = os.environ.get("DISTEXP_THREADS")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"bad DISTEXP_THREADS value {env!r}") from exc
    return 1


def assemble_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit command-line flags."""
    conf: dict = {}
    if getattr(args, "config", None):
        conf.update(parse_config_file(args.config))
    for key in KNOWN_KEYS:
        attr = "lam" if key == "lambda" else key
        value = getattr(args, attr, None)
        if value is not None:
            conf[key] = _coerce(key, value, where="flag")
    conf["threads"] = _resolve_threads(conf)
    conf.setdefault("T", 20000)
    conf.setdefault("k", 20)
    conf.setdefault("n", 2)
    conf.setdefault("seeds", 100)
    conf.setdefault("seed_base", 1)
    conf.setdefault("jitter", False)
    conf.setdefault("jitter_slack", 0.01)
    return conf


def build_experiment(conf: dict) -> ExperimentConfig:
    """Validate the merged config and lower it to an ExperimentConfig.

    Rejects knobs that the chosen algorithm or adversary does not take,
    so typos fail before any run starts.
    """
    algorithm = conf.get("algorithm")
    if not algorithm:
        raise ConfigError("missing required field 'algorithm'")
    if algorithm not in ALGORITHM_NAMES:
        raise ConfigError(
            f"unknown algorithm {algorithm!r}; known: {', '.join(ALGORITHM_NAMES)}"
        )
    adversary = conf.get("adversary")
    if not adversary:
        raise ConfigError("missing required field 'adversary'")
    if adversary not in ADVERSARY_KINDS:
        raise ConfigError(
            f"unknown adversary {adversary!r}; known: {', '.join(ADVERSARY_KINDS)}"
        )

    algo_knobs = _ALGO_KNOBS[algorithm]
    adv_knobs = _ADVERSARY_KNOBS[adversary]
    all_knobs = {k for knobs in _ALGO_KNOBS.values() for k in knobs}
    all_knobs |= {k for knobs in _ADVERSARY_KNOBS.values() for k in knobs}
    for key in sorted(all_knobs & set(conf)):
        if conf[key] is None:
            continue
        if key not in algo_knobs and key not in adv_knobs:
            raise ConfigError(
                f"field {key!r} does not apply to algorithm {algorithm!r} "
                f"with adversary {adversary!r}"
            )

    algo_params = {k: conf[k] for k in algo_knobs if conf.get(k) is not None}
    adv_params = {k: conf[k] for k in adv_knobs if conf.get(k) is not None}

    try:
        spec = AdversarySpec(adversary, adv_params)
        make_adversary(spec)
        make_algorithm(algorithm, algo_params, conf["n"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    jitter = None
    if conf["jitter"]:
        jitter = JitterConfig(enabled=True, relative_slack=conf["jitter_slack"])

    exp = ExperimentConfig(
        algorithm=algorithm,
        adversary=spec,
        algo_params=algo_params,
        model=conf.get("model"),
        T=conf["T"],
        k=conf["k"],
        n=conf["n"],
        seeds=conf["seeds"],
        seed_base=conf["seed_base"],
        jitter=jitter,
        threads=conf["threads"],
    )
    try:
        exp.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return exp


# ------------------------------------------------------------ CSV output

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _cell(value) -> str:
    text = _fmt(value)
    if "," in text or '"' in text:
        return '"' + text.replace('"', '""') + '"'
    return text


def write_csv(path: str, schema: str, echo: dict, header: list[str], rows) -> None:
    lines = [f"# schema={schema}"]
    lines += [f"# {key}={_fmt(val)}" for key, val in sorted(echo.items())]
    lines.append(",".join(header))
    lines += [",".join(_cell(v) for v in row) for row in rows]
    out = Path(path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")


def _params_string(exp: ExperimentConfig) -> str:
    merged = dict(exp.algo_params)
    merged.update(exp.adversary.params)
    return ";".join(f"{k}={_fmt(v)}" for k, v in sorted(merged.items()))


def _echo_from(conf: dict, extra: dict | None = None) -> dict:
    echo = {k: v for k, v in conf.items() if v is not None}
    if extra:
        echo.update(extra)
    return echo


# ------------------------------------------------------------ subcommands

def cmd_run(args: argparse.Namespace) -> int:
    conf = assemble_config(args)
    exp = build_experiment(conf)
    batch = run_batch(exp)
    params = _params_string(exp)
    rows = [
        (exp.algorithm, exp.adversary.kind, params, exp.T, exp.k, exp.n,
         r.seed, r.regret, r.messages, r.reals_sent)
        for r in batch.rows
    ]
    out = args.out or "runs.csv"
    write_csv(out, RUNS_SCHEMA, _echo_from(conf),
              ["algo", "adversary", "params", "T", "k", "n", "seed",
               "regret", "messages", "reals_sent"], rows)
    print(
        f"{exp.algorithm} on {exp.adversary.kind}: "
        f"regret {batch.mean_regret:.6g} ± {batch.std_regret:.6g}, "
        f"messages {batch.mean_messages:.6g} ± {batch.std_messages:.6g} "
        f"({len(batch.rows)} seeds) -> {out}"
    )
    return 0


def _calibrated_knobs(conf: dict, worst_dfpl_messages: float) -> tuple[float, float]:
    """Match the baselines' communication budget to the measured DFPL cost:
    sync probability spends it on 2k-message syncs, and the counter budget
    spends it on (1+k)-message flush rounds."""
    T, k = conf["T"], conf["k"]
    p_sync = conf.get("p_sync")
    if p_sync is None:
        p_sync = min(1.0, worst_dfpl_messages / (2 * k * T))
    beta = conf.get("beta")
    if beta is None:
        flushes = max(1, round((1 + k) * T / worst_dfpl_messages))
        beta = float(k * flushes)
    return p_sync, beta


def cmd_figure(args: argparse.Namespace) -> int:
    conf = assemble_config(args)
    name = args.name
    base = ExperimentConfig(
        algorithm="full",
        adversary=AdversarySpec("markov", {"lambda": 10.0}),
        T=conf["T"], k=conf["k"], n=conf["n"],
        seeds=conf["seeds"], seed_base=conf["seed_base"],
        threads=conf["threads"],
    )
    try:
        base.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    epsilon = conf.get("epsilon", 0.1)

    if name == "fig_a":
        rows, echo = _figure_a(conf, base, epsilon)
        schema, header = FIG_A_SCHEMA, [
            "algo", "lambda", "T", "k", "n", "seeds",
            "mean_regret", "std_regret", "mean_messages", "std_messages",
        ]
    else:
        rows, echo = _figure_b(conf, base, epsilon)
        schema, header = FIG_B_SCHEMA, [
            "algo", "comm_setting", "T", "k", "n", "seeds",
            "worst_regret", "worst_messages",
        ]
    out = args.out or f"{name}.csv"
    write_csv(out, schema, echo, header, rows)
    print(f"{name}: {len(rows)} rows -> {out}")
    return 0


def _figure_a(conf: dict, base: ExperimentConfig, epsilon: float):
    """Mean regret per correlation level for every algorithm, with the
    baselines' communication knobs matched to DFPL's measured worst cost."""
    from dataclasses import replace

    T, k, n, seeds = base.T, base.k, base.n, base.seeds
    lambdas = FIG_A_LAMBDAS
    grids = {lam: AdversarySpec("markov", {"lambda": lam}) for lam in lambdas}

    dfpl_batches = {
        lam: run_batch(replace(base, algorithm="dfpl",
                               algo_params={"epsilon": epsilon},
                               adversary=spec))
        for lam, spec in grids.items()
    }
    worst_msgs = max(b.mean_messages for b in dfpl_batches.values())
    p_sync, beta = _calibrated_knobs(conf, worst_msgs)

    plans = [
        ("full", "full", {}),
        ("none", "none", {}),
        ("minibatch", "minibatch", {"p_sync": p_sync}),
        ("counter", "counter", {"beta": beta}),
    ]
    rows = []
    for label, algo, params in plans:
        for lam in lambdas:
            batch = run_batch(replace(base, algorithm=algo, algo_params=params,
                                      adversary=grids[lam]))
            rows.append((label, lam, T, k, n, seeds,
                         batch.mean_regret, batch.std_regret,
                         batch.mean_messages, batch.std_messages))
    for lam in lambdas:
        batch = dfpl_batches[lam]
        rows.append(("dfpl", lam, T, k, n, seeds,
                     batch.mean_regret, batch.std_regret,
                     batch.mean_messages, batch.std_messages))
    echo = _echo_from(conf, {
        "figure": "fig_a",
        "epsilon": epsilon,
        "p_sync": p_sync,
        "beta": beta,
        "lambdas": ";".join(_fmt(l) for l in lambdas),
    })
    return rows, echo


def _worst_grid() -> list[AdversarySpec]:
    grid = [AdversarySpec("zigzag", {"mu": mu}) for mu in FIG_B_ZIGZAG_MUS]
    grid += [AdversarySpec("markov", {"lambda": lam}) for lam in FIG_B_MARKOV_LAMBDAS]
    return grid


def cli_worst_grid() -> list[AdversarySpec]:
    """The figure grid of hostile sequences; exposed for reuse in tests."""
    return _worst_grid()


def _figure_b(conf: dict, base: ExperimentConfig, epsilon: float):
    """Worst-case regret vs worst-case communication over the hostile grid.

    DFPL contributes its single schedule point; each baseline contributes
    a small ladder of communication settings around the matched budget.
    """
    T, k, n, seeds = base.T, base.k, base.n, base.seeds
    grid = _worst_grid()

    dfpl_sweep = worst_case_sweep(
        [("dfpl", "dfpl", {"epsilon": epsilon})], grid, base)
    worst_r, worst_m = dfpl_sweep.worst("dfpl")
    p_sync, beta = _calibrated_knobs(conf, worst_m)

    entries = [("dfpl", f"epsilon={_fmt(epsilon)}", worst_r, worst_m)]
    ladder: list[tuple[str, str, dict]] = []
    seen: set[str] = set()
    for scale in (0.5, 1.0, 2.0):
        p = min(1.0, p_sync * scale)
        setting = f"p_sync={_fmt(p)}"
        if setting not in seen:  # scaling can clamp two rungs together
            seen.add(setting)
            ladder.append(("minibatch", setting, {"p_sync": p}))
    for scale in (2.0, 1.0, 0.5):
        b = max(float(k), beta * scale)
        setting = f"beta={_fmt(b)}"
        if setting not in seen:
            seen.add(setting)
            ladder.append(("counter", setting, {"beta": b}))
    swept = worst_case_sweep(
        [(setting, algo, params) for algo, setting, params in ladder],
        grid, base)
    for algo, setting, _params in ladder:
        wr, wm = swept.worst(setting)
        entries.append((algo, setting, wr, wm))

    rows = [(algo, setting, T, k, n, seeds, wr, wm)
            for algo, setting, wr, wm in entries]
    echo = _echo_from(conf, {
        "figure": "fig_b",
        "epsilon": epsilon,
        "p_sync": p_sync,
        "beta": beta,
        "grid": ";".join(f"{s.kind}:{_params_suffix(s)}" for s in grid),
    })
    return rows, echo


def _params_suffix(spec: AdversarySpec) -> str:
    return ",".join(f"{k}={_fmt(v)}" for k, v in sorted(spec.params.items()))


SWEEPABLE = ("T", "k", "epsilon", "mu", "lambda", "budget", "beta", "p_sync")


def cmd_sweep(args: argparse.Namespace) -> int:
    param = args.param
    if param == "C":
        param = "budget"
    if param not in SWEEPABLE:
        raise ConfigError(
            f"unknown sweep parameter {args.param!r}; known: {', '.join(SWEEPABLE)}"
        )
    raw_values = [v for v in (args.values or "").split(",") if v.strip()]
    if not raw_values:
        raise ConfigError("sweep needs a nonempty comma-separated --values list")
    values = [_coerce(param, v.strip(), where="--values") for v in raw_values]

    conf = assemble_config(args)
    rows = []
    for value in values:
        point = dict(conf)
        point[param] = value
        exp = build_experiment(point)
        batch = run_batch(exp)
        params = _params_string(exp)
        for r in batch.rows:
            rows.append((param, value, exp.algorithm, exp.adversary.kind, params,
                         exp.T, exp.k, exp.n, r.seed, r.regret, r.messages,
                         r.reals_sent))
    out = args.out or "sweep.csv"
    write_csv(out, SWEEP_SCHEMA, _echo_from(conf, {"sweep_param": param}),
              ["param", "value", "algo", "adversary", "params", "T", "k", "n",
               "seed", "regret", "messages", "reals_sent"], rows)
    print(f"sweep {param} over {len(values)} values -> {out}")
    return 0


# ----------------------------------------------------------------- parser

def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--out", help="output CSV path")
    sub.add_argument("--seeds", type=int)
    sub.add_argument("--seed-base", dest="seed_base", type=int)
    sub.add_argument("--threads", type=int)
    sub.add_argument("--T", type=int)
    sub.add_argument("--k", type=int)
    sub.add_argument("--n", type=int)
    sub.add_argument("--epsilon", type=float)
    sub.add_argument("--ell", type=int)
    sub.add_argument("--mu", type=int)
    sub.add_argument("--lambda", dest="lam", type=float)
    sub.add_argument("--block", type=int)
    sub.add_argument("--i", type=int)
    sub.add_argument("--budget", type=int)
    sub.add_argument("--beta", type=float)
    sub.add_argument("--p-sync", dest="p_sync", type=float)
    sub.add_argument("--forecaster")
    sub.add_argument("--learning-rate", dest="learning_rate", type=float)
    sub.add_argument("--model")
    sub.add_argument("--jitter", action="store_true", default=None)
    sub.add_argument("--jitter-slack", dest="jitter_slack", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distexp",
        description="Distributed expert-prediction simulator",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="one experiment over a seed batch")
    p_run.add_argument("--algorithm")
    p_run.add_argument("--adversary")
    _add_common_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_fig = subs.add_parser("figure", help="the two standard figure datasets")
    p_fig.add_argument("name", choices=("fig_a", "fig_b"))
    _add_common_flags(p_fig)
    p_fig.set_defaults(func=cmd_figure)

    p_sweep = subs.add_parser("sweep", help="vary one knob over a value list")
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values")
    p_sweep.add_argument("--algorithm")
    p_sweep.add_argument("--adversary")
    _add_common_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
