"""Figure rendering for experiment-sweep result CSVs."""

from .render import FigureSpec, SchemaError, aggregate, build_figure, read_table, render

__version__ = "0.1.0"

__all__ = [
    "FigureSpec",
    "SchemaError",
    "aggregate",
    "build_figure",
    "read_table",
    "render",
    "__version__",
]
