"""Monte-Carlo experiment harness: generators, sweeps, metrics, CSV output.

Each experiment sweeps one variable (privacy budget, sample size, class
imbalance, or design concentration) over a grid, runs every configured method
on freshly generated data for each replication, and emits one flat CSV row
per (method, replication, metric).  All randomness derives from the master
seed through fixed stream paths, so results are identical for any thread
count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .baselines import noisy_gd_linreg, noisy_ratio_kernel, noisy_stats_bayes
from .bayes import (
    BayesConfig,
    BayesParams,
    LabeledDataset,
    balanced_error,
    bayes_eptr,
    fit_bayes,
    flatten_params,
    predict_labels,
)
from .kernelreg import KernelRegConfig, gaussian_kernel, nw_eptr, nw_estimate
from .linreg import LinRegConfig, RegressionDataset, linreg_eptr, ols_fit
from .mechanisms import BotPolicy, PrivacyBudget, stream_tag, substream

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "ResultRow",
    "CSV_HEADER",
    "target_curve",
    "linreg_coefficients",
    "gen_bayes",
    "gen_linreg",
    "gen_kernel",
    "make_spec",
    "preset_spec",
    "spec_from_dict",
    "run_experiment",
    "write_rows",
    "DEFAULTS",
    "DEFAULT_GRIDS",
    "METHODS",
    "PRESET_REPS",
]

CSV_HEADER = "problem,method,sweep_var,sweep_value,rep,seed,metric,value,released"


class ConfigError(ValueError):
    """Experiment specification is inconsistent or incomplete."""


DEFAULTS: dict[str, dict[str, Any]] = {
    "bayes": {
        "n": 2000,
        "epsilon": 1.0,
        "delta": 0.01,
        "k": 3,
        "p": 10,
        "delta_sep": 3.0,
        "mu": (0.75, 0.15, 0.10),
        "r_x": 8.0,
        "c0": 0.05,
    },
    "linreg": {
        "n": 2000,
        "epsilon": 2.0,
        "delta": 0.01,
        "p": 5,
        "noise_std": 1.0,
        "r_x": 4.0,
        "r_theta": 1.0,
        "c0": 0.25,
        "t_steps": 20,
        "eta": 0.1,
    },
    "kernel": {
        "n": 5000,
        "epsilon": 1.0,
        "delta": 0.01,
        "design": "uniform",
        "a": 3.0,
        "noise_std": 0.2,
        "x0": 0.5,
        "r_f": 2.0,
        "c0": 0.1,
        "bandwidth_coef": 0.2,
    },
}

DEFAULT_GRIDS: dict[str, tuple[float, ...]] = {
    "epsilon": (0.25, 0.5, 1.0, 2.0, 4.0, 8.0),
    "n": (250, 500, 1000, 2000, 4000),
    "pi_min": (0.02, 0.05, 0.1, 0.2, 0.3),
    "a": (0.5, 1.0, 2.0, 4.0, 8.0),
}

METHODS: dict[str, tuple[str, ...]] = {
    "bayes": ("nonprivate", "eptr", "noisy_stats_simplified"),
    "linreg": ("nonprivate", "eptr", "noisy_gd_simplified"),
    "kernel": ("nonprivate", "eptr", "noisy_ratio_simplified"),
}

_SWEEPS: dict[str, tuple[str, ...]] = {
    "bayes": ("epsilon", "n", "pi_min"),
    "linreg": ("epsilon", "n"),
    "kernel": ("epsilon", "n", "a"),
}

# replication presets: full-scale runs vs continuous-integration scale
PRESET_REPS: dict[str, int] = {"paper": 500, "ci": 100}


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative sweep description; see :func:`make_spec` for defaults."""

    problem: str
    vary: str
    grid: tuple
    fixed: dict = field(default_factory=dict)
    reps: int = 100
    test_size: int = 100_000
    methods: tuple = ()
    master_seed: int = 0


@dataclass(frozen=True)
class ResultRow:
    """One metric observation: flat record mirroring the CSV schema."""

    problem: str
    method: str
    sweep_var: str
    sweep_value: float
    rep: int
    seed: int
    metric: str
    value: float
    released: bool

    def csv_line(self) -> str:
        sweep = repr(self.sweep_value)
        return (
            f"{self.problem},{self.method},{self.sweep_var},{sweep},{self.rep},"
            f"{self.seed},{self.metric},{self.value!r},{int(self.released)}"
        )


def target_curve(x: np.ndarray | float) -> np.ndarray | float:
    """Regression target for the kernel experiments."""
    return np.sin(2.0 * np.pi * x) + 0.5 * np.cos(4.0 * np.pi * x)


def linreg_coefficients(p: int) -> np.ndarray:
    """Unit-norm coefficient vector proportional to (1, 1/2, ..., 1/p)."""
    v = 1.0 / np.arange(1, p + 1)
    return v / np.linalg.norm(v)


def gen_bayes(
    n: int,
    k: int,
    p: int,
    mu: np.ndarray,
    means: np.ndarray,
    rng: np.random.Generator,
) -> LabeledDataset:
    """Labels drawn from the prior, features unit-variance Gaussian per class.

    Draw order is fixed: all labels first, then the feature block.
    """
    mu = np.asarray(mu, dtype=float)
    means = np.asarray(means, dtype=float)
    if mu.shape != (k,) or abs(float(mu.sum()) - 1.0) > 1e-12:
        raise ValueError("mu must be a length-k probability vector")
    if means.shape != (k, p):
        raise ValueError("means must be (k, p)")
    labels = rng.choice(k, size=n, p=mu) + 1
    features = means[labels - 1] + rng.standard_normal((n, p))
    return LabeledDataset(features, labels, k)


def gen_linreg(
    n: int,
    p: int,
    theta: np.ndarray,
    noise_std: float,
    rng: np.random.Generator,
) -> RegressionDataset:
    """Standard-normal covariates with linear responses plus Gaussian noise."""
    theta = np.asarray(theta, dtype=float)
    x = rng.standard_normal((n, p))
    y = x @ theta + noise_std * rng.standard_normal(n)
    return RegressionDataset(x, y)


def gen_kernel(
    n: int,
    design: str,
    noise_std: float,
    rng: np.random.Generator,
    a: float | None = None,
) -> RegressionDataset:
    """Scalar design on [0, 1] (uniform or symmetric beta) with noisy curve values."""
    if design == "uniform":
        x = rng.uniform(0.0, 1.0, n)
    elif design == "beta":
        if a is None or a <= 0:
            raise ValueError("beta design needs a positive concentration parameter")
        x = rng.beta(a, a, n)
    else:
        raise ValueError(f"unknown design {design!r}")
    y = target_curve(x) + noise_std * rng.standard_normal(n)
    return RegressionDataset(x[:, None], y)


def make_spec(
    problem: str,
    vary: str,
    grid=None,
    reps: int = 100,
    test_size: int = 100_000,
    methods=None,
    master_seed: int = 0,
    **fixed_overrides,
) -> ExperimentSpec:
    """Experiment spec with per-problem defaults filled in."""
    if problem not in DEFAULTS:
        raise ConfigError(f"unknown problem {problem!r}")
    if grid is None:
        grid = DEFAULT_GRIDS.get(vary)
        if grid is None:
            raise ConfigError(f"unknown sweep variable {vary!r}")
    if methods is None:
        methods = METHODS[problem]
    spec = ExperimentSpec(
        problem=problem,
        vary=vary,
        grid=tuple(grid),
        fixed=dict(fixed_overrides),
        reps=reps,
        test_size=test_size,
        methods=tuple(methods),
        master_seed=master_seed,
    )
    validate_spec(spec)
    return spec


def preset_spec(problem: str, vary: str, preset: str = "ci", **kwargs) -> ExperimentSpec:
    """Spec with the preset replication count ("paper" = 500, "ci" = 100)."""
    if preset not in PRESET_REPS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESET_REPS)}")
    kwargs.setdefault("reps", PRESET_REPS[preset])
    return make_spec(problem, vary, **kwargs)


def spec_from_dict(doc: dict) -> ExperimentSpec:
    """Build a spec from a JSON-style document mirroring the field names."""
    known = {"problem", "vary", "grid", "fixed", "reps", "test_size", "methods", "master_seed"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown spec fields: {sorted(unknown)}")
    if "problem" not in doc or "vary" not in doc:
        raise ConfigError("spec requires 'problem' and 'vary'")
    return make_spec(
        doc["problem"],
        doc["vary"],
        grid=doc.get("grid"),
        reps=int(doc.get("reps", 100)),
        test_size=int(doc.get("test_size", 100_000)),
        methods=doc.get("methods"),
        master_seed=int(doc.get("master_seed", 0)),
        **doc.get("fixed", {}),
    )


def validate_spec(spec: ExperimentSpec) -> None:
    if spec.problem not in DEFAULTS:
        raise ConfigError(f"unknown problem {spec.problem!r}")
    if spec.vary not in _SWEEPS[spec.problem]:
        raise ConfigError(
            f"sweep variable {spec.vary!r} not supported for {spec.problem!r}"
        )
    if not spec.grid:
        raise ConfigError("sweep grid must be non-empty")
    if spec.reps < 1:
        raise ConfigError("reps must be at least 1")
    if spec.test_size < 1:
        raise ConfigError("test_size must be at least 1")
    for m in spec.methods:
        if m not in METHODS[spec.problem]:
            raise ConfigError(f"unknown method {m!r} for problem {spec.problem!r}")
    unknown = set(spec.fixed) - set(DEFAULTS[spec.problem])
    if unknown:
        raise ConfigError(f"unknown fixed parameters: {sorted(unknown)}")
    if spec.vary == "pi_min":
        for v in spec.grid:
            if not (0.0 < v < 0.7):
                raise ConfigError("pi_min grid values must lie in (0, 0.7)")
    if spec.vary == "n":
        for v in spec.grid:
            if int(v) != v or v < 1:
                raise ConfigError("n grid values must be positive integers")


def _resolve_params(spec: ExperimentSpec, value) -> dict:
    params = dict(DEFAULTS[spec.problem])
    params.update(spec.fixed)
    if spec.vary == "epsilon":
        params["epsilon"] = float(value)
    elif spec.vary == "n":
        params["n"] = int(value)
    elif spec.vary == "pi_min":
        params["mu"] = (0.7 - float(value), 0.3, float(value))
    elif spec.vary == "a":
        params["design"] = "beta"
        params["a"] = float(value)
    return params


def _bayes_rep(spec, params, gi, ri):
    n, k, p = params["n"], params["k"], params["p"]
    if p < k:
        raise ConfigError("feature dimension must be at least the class count")
    mu = np.asarray(params["mu"], dtype=float)
    means = params["delta_sep"] * np.eye(k, p)
    seed = spec.master_seed
    train = gen_bayes(n, k, p, mu, means, substream(seed, gi, ri, 0))
    test = gen_bayes(spec.test_size, k, p, mu, means, substream(seed, gi, ri, 1))
    budget = PrivacyBudget(params["epsilon"], params["delta"])
    config = BayesConfig(params["r_x"], params["c0"], budget)
    fallback = BotPolicy.point_mass(
        flatten_params(np.full(k, 1.0 / k), np.zeros((k, p)))
    )
    out = []
    for method in spec.methods:
        rng = substream(seed, gi, ri, 2, stream_tag(method))
        released = True
        if method == "nonprivate":
            bp = BayesParams(*fit_bayes(train))
        elif method == "eptr":
            outcome = bayes_eptr(train, config, rng, bot=fallback)
            bp = outcome.value
            released = outcome.released
        else:
            bp = noisy_stats_bayes(train, params["r_x"], budget, rng, c0=params["c0"])
        err = balanced_error(test.y, predict_labels(bp, test.x), k)
        out.append((method, "balanced_error", err, released))
    return out


def _linreg_rep(spec, params, gi, ri):
    n, p = params["n"], params["p"]
    theta = linreg_coefficients(p)
    seed = spec.master_seed
    train = gen_linreg(n, p, theta, params["noise_std"], substream(seed, gi, ri, 0))
    test = gen_linreg(
        spec.test_size, p, theta, params["noise_std"], substream(seed, gi, ri, 1)
    )
    budget = PrivacyBudget(params["epsilon"], params["delta"])
    config = LinRegConfig(params["r_x"], params["r_theta"], params["c0"], budget)
    out = []
    for method in spec.methods:
        rng = substream(seed, gi, ri, 2, stream_tag(method))
        released = True
        if method == "nonprivate":
            theta_hat = ols_fit(train, math.inf)
        elif method == "eptr":
            outcome = linreg_eptr(train, config, rng, bot=BotPolicy.point_mass(np.zeros(p)))
            theta_hat = np.asarray(outcome.value, dtype=float)
            released = outcome.released
        else:
            theta_hat = noisy_gd_linreg(
                train, config, params["t_steps"], params["eta"], budget, rng
            )
        param_error = float(np.sum((theta_hat - theta) ** 2))
        test_mse = float(np.mean((test.x @ theta_hat - test.y) ** 2))
        out.append((method, "param_error", param_error, released))
        out.append((method, "test_mse", test_mse, released))
    return out


def _kernel_rep(spec, params, gi, ri):
    n = params["n"]
    sigma = params["bandwidth_coef"] * n ** (-0.2)
    kernel = gaussian_kernel(sigma, dim=1)
    seed = spec.master_seed
    train = gen_kernel(
        n, params["design"], params["noise_std"], substream(seed, gi, ri, 0),
        a=params.get("a"),
    )
    budget = PrivacyBudget(params["epsilon"], params["delta"])
    x0 = np.array([params["x0"]])
    config = KernelRegConfig(x0, params["r_f"], params["c0"], sigma, budget)
    truth = float(target_curve(params["x0"]))
    out = []
    for method in spec.methods:
        rng = substream(seed, gi, ri, 2, stream_tag(method))
        released = True
        if method == "nonprivate":
            estimate = nw_estimate(x0, train, kernel, params["r_f"])
        elif method == "eptr":
            outcome = nw_eptr(
                train, config, kernel, rng, bot=BotPolicy.point_mass(np.array([0.0]))
            )
            estimate = float(outcome.value)
            released = outcome.released
        else:
            estimate = noisy_ratio_kernel(train, config, kernel, budget, rng)
        out.append((method, "sq_error_x0", (estimate - truth) ** 2, released))
    return out


_REP_RUNNERS = {"bayes": _bayes_rep, "linreg": _linreg_rep, "kernel": _kernel_rep}


def _rep_seed(spec: ExperimentSpec, gi: int, ri: int) -> int:
    ss = np.random.SeedSequence(spec.master_seed, spawn_key=(gi, ri))
    return int(ss.generate_state(1)[0])


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> list[ResultRow]:
    """Run the full sweep and return rows sorted into canonical order.

    Replications are independent tasks over a work queue; their streams
    derive from (master seed, grid index, rep index), so any thread count
    produces identical rows.
    """
    validate_spec(spec)
    runner = _REP_RUNNERS[spec.problem]
    tasks = [(gi, value, ri) for gi, value in enumerate(spec.grid) for ri in range(spec.reps)]

    def run_task(task):
        gi, value, ri = task
        params = _resolve_params(spec, value)
        sweep_value = int(value) if spec.vary == "n" else float(value)
        seed = _rep_seed(spec, gi, ri)
        rows = []
        for method, metric, metric_value, released in runner(spec, params, gi, ri):
            if not math.isfinite(metric_value):
                raise ConfigError(
                    f"non-finite metric {metric}={metric_value} for {method} at "
                    f"{spec.vary}={value}, rep {ri}"
                )
            rows.append(
                ResultRow(
                    problem=spec.problem,
                    method=method,
                    sweep_var=spec.vary,
                    sweep_value=sweep_value,
                    rep=ri,
                    seed=seed,
                    metric=metric,
                    value=float(metric_value),
                    released=bool(released),
                )
            )
        return rows

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run_task, tasks))
    else:
        chunks = [run_task(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r.problem, r.method, r.sweep_var, r.sweep_value, r.rep, r.metric))
    return rows


def write_rows(rows: list[ResultRow], path: str) -> None:
    """Write the CSV (exact schema header, atomic replace)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.csv_line() + "\n")
    os.replace(tmp, path)
