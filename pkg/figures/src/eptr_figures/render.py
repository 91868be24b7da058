"""Render experiment-sweep CSVs into panel figures.

Input is the flat results schema written by the simulation harness
(``problem,method,sweep_var,sweep_value,rep,seed,metric,value,released``).
Each figure is a grid of panels, one row per metric and one column per sweep
variable; every panel shows the mean metric over replications with one line
per method and +-1 standard-error bars.  Output is deterministic: identical
input and tool versions give a byte-identical image.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Iterable

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "SchemaError",
    "FigureSpec",
    "ResultTable",
    "read_table",
    "aggregate",
    "build_figure",
    "render",
    "EXPECTED_COLUMNS",
]

EXPECTED_COLUMNS = (
    "problem",
    "method",
    "sweep_var",
    "sweep_value",
    "rep",
    "seed",
    "metric",
    "value",
    "released",
)

# sweep variables plotted on a log axis (the rest stay linear)
LOG_X = {"epsilon", "n"}


class SchemaError(ValueError):
    """Input CSV does not match the results schema."""


@dataclass(frozen=True)
class FigureSpec:
    """What to render: input CSV, filters, output path.

    ``metrics`` and ``sweep_vars`` default to everything present in the file
    (sorted).  ``errorbar`` currently supports only "se" (standard error over
    replications).
    """

    csv_path: str
    out_path: str
    problem: str | None = None
    metrics: tuple[str, ...] | None = None
    sweep_vars: tuple[str, ...] | None = None
    errorbar: str = "se"
    dpi: int = 120

    def __post_init__(self) -> None:
        if self.errorbar != "se":
            raise ValueError(f"unsupported errorbar mode {self.errorbar!r}")


@dataclass(frozen=True)
class ResultTable:
    """Parsed rows of the results schema (column arrays, equal length)."""

    problem: np.ndarray
    method: np.ndarray
    sweep_var: np.ndarray
    sweep_value: np.ndarray
    metric: np.ndarray
    value: np.ndarray

    @property
    def n(self) -> int:
        return self.problem.shape[0]


def read_table(csv_path: str) -> ResultTable:
    """Parse and validate a results CSV.

    Raises :class:`SchemaError` naming the offending column when the header
    does not match, a field fails to parse, or the file holds no data rows.
    """
    try:
        fh = open(csv_path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise SchemaError(f"cannot read {csv_path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file: missing header") from None
        if tuple(header) != EXPECTED_COLUMNS:
            missing = [c for c in EXPECTED_COLUMNS if c not in header]
            extra = [c for c in header if c not in EXPECTED_COLUMNS]
            raise SchemaError(
                f"header mismatch: missing columns {missing}, unexpected {extra}"
            )
        cols: dict[str, list] = {c: [] for c in EXPECTED_COLUMNS}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(EXPECTED_COLUMNS):
                raise SchemaError(f"line {line_no}: expected {len(EXPECTED_COLUMNS)} fields")
            for name, field in zip(EXPECTED_COLUMNS, row):
                cols[name].append(field)
    if not cols["problem"]:
        raise SchemaError("no data rows")

    def floats(name: str) -> np.ndarray:
        try:
            return np.array([float(v) for v in cols[name]])
        except ValueError as exc:
            raise SchemaError(f"column {name!r}: non-numeric value") from exc

    return ResultTable(
        problem=np.array(cols["problem"]),
        method=np.array(cols["method"]),
        sweep_var=np.array(cols["sweep_var"]),
        sweep_value=floats("sweep_value"),
        metric=np.array(cols["metric"]),
        value=floats("value"),
    )


def aggregate(
    table: ResultTable, metric: str, sweep_var: str, problem: str | None = None
) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Per-method (sweep values, means, standard errors) for one panel."""
    mask = (table.metric == metric) & (table.sweep_var == sweep_var)
    if problem is not None:
        mask &= table.problem == problem
    out: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    for method in sorted(set(table.method[mask])):
        mmask = mask & (table.method == method)
        xs = np.unique(table.sweep_value[mmask])
        means = np.empty(xs.shape)
        errs = np.empty(xs.shape)
        for i, x in enumerate(xs):
            vals = table.value[mmask & (table.sweep_value == x)]
            means[i] = float(np.mean(vals))
            errs[i] = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        out[method] = (xs, means, errs)
    return out


def _method_order(methods: Iterable[str]) -> list[str]:
    preferred = ["nonprivate", "eptr"]
    ordered = [m for m in preferred if m in methods]
    ordered += sorted(m for m in methods if m not in preferred)
    return ordered


def _legend_label(method: str) -> str:
    if method.endswith("_simplified"):
        return method[: -len("_simplified")].replace("_", "-") + " (simplified)"
    return method


def build_figure(spec: FigureSpec):
    """Assemble the panel grid; returns (figure, panel descriptors)."""
    table = read_table(spec.csv_path)
    if spec.problem is not None:
        if not np.any(table.problem == spec.problem):
            raise SchemaError(f"no rows for problem {spec.problem!r}")
    metrics = spec.metrics or tuple(sorted(set(table.metric)))
    sweep_vars = spec.sweep_vars or tuple(sorted(set(table.sweep_var)))
    for metric in metrics:
        if not np.any(table.metric == metric):
            raise SchemaError(f"column 'metric' never takes value {metric!r}")
    for var in sweep_vars:
        if not np.any(table.sweep_var == var):
            raise SchemaError(f"column 'sweep_var' never takes value {var!r}")

    n_rows, n_cols = len(metrics), len(sweep_vars)
    fig, axes = plt.subplots(
        n_rows, n_cols, figsize=(4.2 * n_cols, 3.2 * n_rows), squeeze=False
    )
    panels = []
    for i, metric in enumerate(metrics):
        for j, var in enumerate(sweep_vars):
            ax = axes[i][j]
            series = aggregate(table, metric, var, spec.problem)
            for method in _method_order(series):
                xs, means, errs = series[method]
                ax.errorbar(
                    xs, means, yerr=errs, marker="o", markersize=3,
                    capsize=2, linewidth=1.2, label=_legend_label(method),
                )
            ax.set_yscale("log")
            if var in LOG_X:
                ax.set_xscale("log")
            ax.set_xlabel(var)
            ax.set_ylabel(metric)
            ax.grid(True, which="both", alpha=0.25)
            if i == 0 and j == 0:
                ax.legend(fontsize=8)
            panels.append({"metric": metric, "sweep_var": var, "methods": list(series)})
    fig.tight_layout()
    return fig, panels


def render(spec: FigureSpec) -> str:
    """Render the figure to ``spec.out_path`` (atomic replace) and return the path."""
    fig, _ = build_figure(spec)
    tmp = f"{spec.out_path}.tmp"
    try:
        fig.savefig(tmp, dpi=spec.dpi, format=_format_of(spec.out_path))
    finally:
        plt.close(fig)
    os.replace(tmp, spec.out_path)
    return spec.out_path


def _format_of(path: str) -> str:
    ext = os.path.splitext(path)[1].lstrip(".").lower()
    return ext if ext else "png"
