"""Figure rendering for distexp CSV experiment datasets."""
from .render import (
    FIG_A_SCHEMA,
    FIG_B_SCHEMA,
    FigureSpec,
    PlotError,
    Table,
    build_figure,
    load_table,
    render,
)

__all__ = [
    "FIG_A_SCHEMA",
    "FIG_B_SCHEMA",
    "FigureSpec",
    "PlotError",
    "Table",
    "build_figure",
    "load_table",
    "render",
]
