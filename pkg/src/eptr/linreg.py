"""Ordinary least squares with a gated private release.

The private estimator is projected OLS; the release is gated on the smallest
eigenvalue of the Gram matrix through :func:`gamma_ols`.  A deterministic
cyclic Jacobi sweep computes that eigenvalue so results do not depend on the
linear-algebra backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mechanisms import (
    AdapterFailure,
    BotPolicy,
    EstimatorAdapter,
    PrivacyBudget,
    ReleaseOutcome,
    SensitivityLevel,
    eptr_release,
    project_ball,
    substream,
)

__all__ = [
    "NonSymmetric",
    "SingularGram",
    "TooLarge",
    "RegressionDataset",
    "LinRegConfig",
    "gram_and_moment",
    "min_eigenvalue",
    "ols_fit",
    "gamma_ols",
    "alpha_ols",
    "clip_xy",
    "linreg_adapter",
    "linreg_eptr",
    "local_sensitivity_oracle",
]


class NonSymmetric(ValueError):
    """Matrix handed to the symmetric eigensolver is not symmetric."""


class SingularGram(AdapterFailure):
    """Gram matrix is numerically singular, so the OLS solution is undefined."""


class TooLarge(ValueError):
    """Problem size exceeds the brute-force oracle's guard."""


@dataclass(frozen=True)
class RegressionDataset:
    """Fixed-size regression sample: covariates ``x`` (n, p), responses ``y`` (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError("x must be a non-empty (n, p) array")
        if y.shape != (x.shape[0],):
            raise ValueError("y must be a length-n vector")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def replace(self, index: int, x_new: np.ndarray, y_new: float) -> "RegressionDataset":
        x = self.x.copy()
        y = self.y.copy()
        x[index] = np.asarray(x_new, dtype=float)
        y[index] = float(y_new)
        return RegressionDataset(x, y)


@dataclass(frozen=True)
class LinRegConfig:
    """Release configuration: covariate bound, parameter bound, eigenvalue floor, budget."""

    r_x: float
    r_theta: float
    c0: float
    budget: PrivacyBudget

    def __post_init__(self) -> None:
        for name in ("r_x", "r_theta", "c0"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be positive")


def gram_and_moment(data: RegressionDataset) -> tuple[np.ndarray, np.ndarray]:
    """Gram matrix ``sum x_i x_i^T`` and moment vector ``sum y_i x_i``.

    Accumulated in record order via einsum so the result is exactly symmetric
    and reproducible.
    """
    gram = np.einsum("ni,nj->ij", data.x, data.x, optimize=False)
    moment = np.einsum("n,ni->i", data.y, data.x, optimize=False)
    return gram, moment


def min_eigenvalue(matrix: np.ndarray, tol: float = 1e-12) -> float:
    """Smallest eigenvalue of a dense symmetric matrix.

    Cyclic Jacobi rotations, iterated until the off-diagonal Frobenius norm
    drops below ``tol`` times the matrix norm.  Deterministic: the sweep
    order is fixed and no external solver is involved.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSymmetric("matrix must be square")
    p = a.shape[0]
    norm = float(np.linalg.norm(a))
    if not np.allclose(a, a.T, atol=max(tol * max(norm, 1.0), 1e-300), rtol=0.0):
        raise NonSymmetric("matrix is not symmetric within tolerance")
    if p == 1:
        return float(a[0, 0])
    if norm == 0.0:
        return 0.0
    m = a.tolist()
    threshold = tol * norm
    for _ in range(100):
        off = math.sqrt(
            sum(m[i][j] ** 2 for i in range(p) for j in range(p) if i != j)
        )
        if off < threshold:
            break
        for r in range(p - 1):
            for q in range(r + 1, p):
                if m[r][q] == 0.0:
                    continue
                tau = (m[q][q] - m[r][r]) / (2.0 * m[r][q])
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(p):
                    mkr, mkq = m[k][r], m[k][q]
                    m[k][r] = c * mkr - s * mkq
                    m[k][q] = s * mkr + c * mkq
                for k in range(p):
                    mrk, mqk = m[r][k], m[q][k]
                    m[r][k] = c * mrk - s * mqk
                    m[q][k] = s * mrk + c * mqk
    return min(m[i][i] for i in range(p))


def _cholesky_solve(gram: np.ndarray, moment: np.ndarray) -> np.ndarray:
    # Solve gram @ theta = moment through the lower-triangular factor.
    lower = np.linalg.cholesky(gram)
    p = gram.shape[0]
    z = np.empty(p)
    for i in range(p):
        z[i] = (moment[i] - lower[i, :i] @ z[:i]) / lower[i, i]
    theta = np.empty(p)
    for i in range(p - 1, -1, -1):
        theta[i] = (z[i] - lower[i + 1 :, i] @ theta[i + 1 :]) / lower[i, i]
    return theta


def _solve_projected(gram: np.ndarray, moment: np.ndarray, r_theta: float) -> np.ndarray:
    return project_ball(_cholesky_solve(gram, moment), r_theta)


def ols_fit(data: RegressionDataset, r_theta: float) -> np.ndarray:
    """Projected least squares: solve the normal equations, then project.

    Raises :class:`SingularGram` when the smallest Gram eigenvalue is at or
    below ``1e-10 * trace / p``; callers on the gated release path never hit
    this once the sub-distance is positive.
    """
    gram, moment = gram_and_moment(data)
    smallest = min_eigenvalue(gram)
    if smallest <= 1e-10 * float(np.trace(gram)) / data.p:
        raise SingularGram(f"smallest Gram eigenvalue {smallest:.3e} is numerically zero")
    return _solve_projected(gram, moment, r_theta)


def gamma_ols(data: RegressionDataset, config: LinRegConfig) -> float:
    """Sub-distance for the OLS release (covariates assumed already clipped).

    ``(lambda_min(Gram) - c0*n - 2*r_x^2)_+ / (2*r_x^2)``.  Replacing one
    record moves the smallest eigenvalue by at most ``2*r_x^2`` (eigenvalue
    perturbation under a rank-one swap), so this is 1-Lipschitz.
    """
    gram, _ = gram_and_moment(data)
    slack = min_eigenvalue(gram) - config.c0 * data.n - 2.0 * config.r_x**2
    return max(0.0, slack / (2.0 * config.r_x**2))


def alpha_ols(n: int, config: LinRegConfig) -> SensitivityLevel:
    """Sensitivity level for projected OLS: ``8 * r_x^2 * r_theta / (n * c0)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return SensitivityLevel(8.0 * config.r_x**2 * config.r_theta / (n * config.c0))


def clip_xy(data: RegressionDataset, r_x: float, r_theta: float) -> RegressionDataset:
    """Project covariates into the ``r_x`` ball and clamp responses to ``r_x * r_theta``."""
    norms = np.linalg.norm(data.x, axis=1)
    factors = np.where(norms > r_x, r_x / np.maximum(norms, 1e-300), 1.0)
    r_y = r_x * r_theta
    return RegressionDataset(data.x * factors[:, None], np.clip(data.y, -r_y, r_y))


def linreg_adapter(
    config: LinRegConfig, n: int, bot: BotPolicy | None = None
) -> EstimatorAdapter:
    """Adapter releasing the projected OLS coefficient vector.

    Both the estimate and the sub-distance act on the clipped dataset, so the
    release is private end to end regardless of the raw data's range.
    """

    def estimate(data: RegressionDataset) -> np.ndarray:
        return ols_fit(clip_xy(data, config.r_x, config.r_theta), config.r_theta)

    def gamma(data: RegressionDataset) -> float:
        return gamma_ols(clip_xy(data, config.r_x, config.r_theta), config)

    return EstimatorAdapter(
        estimate=estimate,
        gamma=gamma,
        alpha=alpha_ols(n, config),
        bot=bot if bot is not None else BotPolicy.null(),
    )


def linreg_eptr(
    data: RegressionDataset,
    config: LinRegConfig,
    rng: np.random.Generator,
    bot: BotPolicy | None = None,
) -> ReleaseOutcome:
    """Private release of the projected OLS coefficients."""
    adapter = linreg_adapter(config, data.n, bot)
    return eptr_release(adapter, data, config.budget, rng)


def local_sensitivity_oracle(
    data: RegressionDataset, config: LinRegConfig, grid_resolution: int = 6
) -> float:
    """Brute-force lower bound on the replace-one sensitivity of projected OLS.

    Sweeps every record index against candidate replacements: directions on
    the sphere times magnitudes up to ``r_x`` (both ``grid_resolution`` many),
    crossed with responses in ``{-r_x*r_theta, 0, +r_x*r_theta}``.  Candidate
    directions are drawn from a fixed stream keyed by the resolution, so the
    oracle is deterministic.  Covariates are assumed already clipped.

    A replacement that makes the Gram matrix singular is skipped (the
    estimate is undefined there).  Guarded to ``n * p <= 500``.
    """
    n, p = data.n, data.p
    if n * p > 500:
        raise TooLarge(f"oracle guard: n*p = {n * p} exceeds 500")
    gram, moment = gram_and_moment(data)
    if min_eigenvalue(gram) <= 1e-10 * float(np.trace(gram)) / p:
        raise SingularGram("oracle base estimate is undefined")
    base = _solve_projected(gram, moment, config.r_theta)

    if p == 1:
        directions = np.array([[1.0], [-1.0]])
    else:
        draw = substream(1_234_567, grid_resolution, p).standard_normal(
            (grid_resolution, p)
        )
        directions = draw / np.linalg.norm(draw, axis=1, keepdims=True)
    magnitudes = np.linspace(0.0, config.r_x, grid_resolution)
    candidates = (directions[:, None, :] * magnitudes[None, :, None]).reshape(-1, p)
    r_y = config.r_x * config.r_theta
    responses = (-r_y, 0.0, r_y)

    worst = 0.0
    for i in range(n):
        gram_i = gram - np.outer(data.x[i], data.x[i])
        moment_i = moment - data.y[i] * data.x[i]
        for xc in candidates:
            gram_c = gram_i + np.outer(xc, xc)
            for yc in responses:
                try:
                    theta_c = _solve_projected(gram_c, moment_i + yc * xc, config.r_theta)
                except np.linalg.LinAlgError:
                    continue
                worst = max(worst, float(np.linalg.norm(base - theta_c)))
    return worst
