"""Rendering of experiment figures from distexp CSV datasets.

The simulator CLI emits self-describing CSV files: a ``# schema=<name>``
line, a block of ``# key=value`` configuration echo lines, then a header
row and data rows.  This module consumes those files and draws the two
figure kinds without recomputing any statistics; every number plotted
comes straight out of a CSV cell.

Determinism: rendering is pixel-identical across reruns of the same
inputs.  The backend is pinned to Agg, figure geometry and DPI are
fixed, and PNG metadata that would embed a writer version is stripped.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

# Schema names the simulator CLI stamps on its figure datasets.  These are
# part of the CSV file contract, deliberately restated here rather than
# imported: the two packages share files, not code.
FIG_A_SCHEMA = "distexp-fig-a-v1"
FIG_B_SCHEMA = "distexp-fig-b-v1"

SCHEMA_BY_KIND = {"a": FIG_A_SCHEMA, "b": FIG_B_SCHEMA}

FIGSIZE = (7.0, 4.5)
DPI = 120

# Stable color assignment so a given algorithm keeps its color across
# figures and across overlaid inputs.
ALGO_COLORS = {
    "full": "C0",
    "none": "C1",
    "minibatch": "C2",
    "counter": "C3",
    "dfpl": "C4",
    "lef": "C5",
}

_SCALES = ("linear", "log")


class PlotError(ValueError):
    """Raised for malformed figure specs or unusable input files."""


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: figure kind, input dataset(s), output path, axis scales."""

    kind: str
    inputs: tuple[str, ...]
    out: str
    xscale: str = "linear"
    yscale: str = "linear"

    def __post_init__(self) -> None:
        if self.kind not in SCHEMA_BY_KIND:
            raise PlotError(f"unknown figure kind {self.kind!r}; expected one of "
                            + ", ".join(sorted(SCHEMA_BY_KIND)))
        if not self.inputs:
            raise PlotError("at least one input CSV is required")
        for scale, axis in ((self.xscale, "xscale"), (self.yscale, "yscale")):
            if scale not in _SCALES:
                raise PlotError(f"{axis} must be one of {_SCALES}, got {scale!r}")


@dataclass(frozen=True)
class Table:
    """A parsed dataset: config echo, column names, and rows as dicts."""

    path: str
    echo: dict[str, str] = field(default_factory=dict)
    header: tuple[str, ...] = ()
    rows: tuple[dict[str, str], ...] = ()

    @property
    def label(self) -> str:
        return Path(self.path).stem


def load_table(path: str, expected_schema: str) -> Table:
    """Parse one CSV dataset, checking its schema stamp.

    The first line must be ``# schema=<expected_schema>``; a mismatch or a
    dataset with no data rows is an error (an empty dataset cannot anchor
    a figure, and silently drawing nothing would hide upstream failures).
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise PlotError(f"cannot read {path}: {exc}") from exc

    lines = text.splitlines()
    if not lines or not lines[0].startswith("# schema="):
        found = lines[0] if lines else "<empty file>"
        raise PlotError(
            f"{path}: expected schema {expected_schema}, found no schema line "
            f"(first line: {found!r})")
    schema = lines[0][len("# schema="):]
    if schema != expected_schema:
        raise PlotError(
            f"{path}: expected schema {expected_schema}, found {schema}")

    echo: dict[str, str] = {}
    data_lines: list[str] = []
    for line in lines[1:]:
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, val = body.partition("=")
                echo[key.strip()] = val
            continue
        if line.strip():
            data_lines.append(line)

    if not data_lines:
        raise PlotError(f"{path}: dataset has no header row")
    parsed = list(csv.reader(io.StringIO("\n".join(data_lines))))
    header = tuple(parsed[0])
    rows = tuple(dict(zip(header, row)) for row in parsed[1:])
    if not rows:
        raise PlotError(f"{path}: dataset has no data rows")
    return Table(path=path, echo=echo, header=header, rows=rows)


def _column(table: Table, row: dict[str, str], name: str) -> float:
    try:
        return float(row[name])
    except KeyError as exc:
        raise PlotError(f"{table.path}: missing column {name!r}") from exc
    except ValueError as exc:
        raise PlotError(
            f"{table.path}: column {name!r} holds {row[name]!r}, not a number"
        ) from exc


def _series_label(algo: str, table: Table, multi: bool) -> str:
    return f"{algo} ({table.label})" if multi else algo


def _algo_order(tables: list[Table]) -> list[str]:
    """Algorithms in first-appearance order across all inputs."""
    seen: list[str] = []
    for table in tables:
        for row in table.rows:
            algo = row.get("algo", "")
            if algo not in seen:
                seen.append(algo)
    return seen


def _draw_fig_a(ax, tables: list[Table]) -> None:
    multi = len(tables) > 1
    for algo in _algo_order(tables):
        for table in tables:
            points = [
                (
                    _column(table, row, "lambda"),
                    _column(table, row, "mean_regret"),
                    _column(table, row, "std_regret"),
                )
                for row in table.rows
                if row.get("algo") == algo
            ]
            if not points:
                continue
            points.sort(key=lambda p: p[0])
            xs = [p[0] for p in points]
            ys = [p[1] for p in points]
            stds = [p[2] for p in points]
            color = ALGO_COLORS.get(algo)
            line, = ax.plot(xs, ys, marker="o", color=color,
                            label=_series_label(algo, table, multi))
            ax.fill_between(xs, [y - s for y, s in zip(ys, stds)],
                            [y + s for y, s in zip(ys, stds)],
                            color=line.get_color(), alpha=0.2, linewidth=0)
    ticks = sorted({_column(t, row, "lambda") for t in tables for row in t.rows})
    ax.set_xticks(ticks)
    ax.set_xlabel("correlation lambda")
    ax.set_ylabel("mean regret")
    ax.legend()


def _draw_fig_b(ax, tables: list[Table]) -> None:
    multi = len(tables) > 1
    for algo in _algo_order(tables):
        for table in tables:
            rows = [row for row in table.rows if row.get("algo") == algo]
            if not rows:
                continue
            xs = [_column(table, row, "worst_messages") for row in rows]
            ys = [_column(table, row, "worst_regret") for row in rows]
            ax.scatter(xs, ys, color=ALGO_COLORS.get(algo),
                       label=_series_label(algo, table, multi), zorder=3)
            for row, x, y in zip(rows, xs, ys):
                ax.annotate(row.get("comm_setting", ""), (x, y),
                            textcoords="offset points", xytext=(5, 5),
                            fontsize=8)
    ax.set_xlabel("worst-case messages")
    ax.set_ylabel("worst-case regret")
    ax.legend()


def build_figure(spec: FigureSpec):
    """Load the requested inputs and draw the figure; returns the Figure.

    Split from render() so structure (lines, ticks, collections) can be
    inspected without touching the filesystem.
    """
    expected = SCHEMA_BY_KIND[spec.kind]
    tables = [load_table(path, expected) for path in spec.inputs]
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    # scales first: changing scale later would reset the explicit ticks
    ax.set_xscale(spec.xscale)
    ax.set_yscale(spec.yscale)
    if spec.kind == "a":
        _draw_fig_a(ax, tables)
    else:
        _draw_fig_b(ax, tables)
    fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> str:
    """Draw the figure and write it to spec.out; returns the output path.

    The PNG is byte-identical across reruns: fixed geometry, fixed DPI,
    and the Software metadata field (which would otherwise embed the
    matplotlib version) suppressed.
    """
    fig = build_figure(spec)
    out = Path(spec.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.savefig(out, metadata={"Software": None})
    finally:
        plt.close(fig)
    return str(out)
