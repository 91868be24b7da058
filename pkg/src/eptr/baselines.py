"""Simplified private baselines used for comparison runs.

These are transparent stand-ins, not reproductions of any published method:
noisy sufficient statistics for the classifier, noisy projected gradient
descent for regression, and a noisy numerator/denominator ratio for kernel
regression.  Each splits its budget across the quantities it releases and
calibrates every release with the package's Gaussian mechanism, so the
overall guarantee follows from basic composition.  They are labeled
"simplified" wherever their output appears.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bayes import (
    BayesParams,
    LabeledDataset,
    class_counts,
    clip_features,
    normalize_prior,
)
from .kernelreg import KernelRegConfig, RadialKernel, kernel_weights
from .linreg import LinRegConfig, RegressionDataset
from .mechanisms import (
    PrivacyBudget,
    SensitivityLevel,
    gaussian_release,
    project_ball,
)

__all__ = [
    "BaselineConfig",
    "noisy_stats_bayes",
    "noisy_gd_linreg",
    "noisy_ratio_kernel",
]


@dataclass(frozen=True)
class BaselineConfig:
    """Knobs shared by the simplified baselines.

    ``split`` is the budget fraction given to each of the two releases a
    baseline makes (counts/sums or numerator/denominator); the fractions must
    sum to one.  ``t_steps`` and ``eta`` drive the gradient-descent baseline.
    """

    budget: PrivacyBudget
    split: tuple[float, float] = (0.5, 0.5)
    t_steps: int = 20
    eta: float = 0.1

    def __post_init__(self) -> None:
        if abs(sum(self.split) - 1.0) > 1e-12 or min(self.split) <= 0:
            raise ValueError("split fractions must be positive and sum to 1")
        if self.t_steps < 1:
            raise ValueError("t_steps must be at least 1")


def _split_budget(budget: PrivacyBudget, fraction: float) -> PrivacyBudget:
    return PrivacyBudget(budget.epsilon * fraction, budget.delta * fraction)


def _means_from_noisy(noisy_sums: np.ndarray, noisy_counts: np.ndarray) -> np.ndarray:
    """Per-class means from noisy sums and counts.

    A class whose noisy count is nonpositive gets the zero vector; otherwise
    the divisor is floored at one.
    """
    means = np.zeros_like(noisy_sums)
    positive = noisy_counts > 0
    means[positive] = noisy_sums[positive] / np.maximum(noisy_counts[positive], 1.0)[:, None]
    return means


def noisy_stats_bayes(
    data: LabeledDataset,
    r_x: float,
    budget: PrivacyBudget,
    rng: np.random.Generator,
    *,
    c0: float = 0.05,
    split: tuple[float, float] = (0.5, 0.5),
) -> BayesParams:
    """Classifier from independently noised class counts and feature sums.

    Counts are released with replace-one sensitivity ``sqrt(2)`` and the
    concatenated per-class sums with ``2*sqrt(2)*r_x``, each consuming its
    share of the budget.  Priors come from the noisy counts, floored at
    ``c0`` and renormalized; means default to zero where the noisy count is
    nonpositive.
    """
    clipped = clip_features(data, r_x)
    counts = class_counts(clipped).astype(float)
    k, p = clipped.n_classes, clipped.p
    sums = np.zeros((k, p))
    np.add.at(sums, clipped.y - 1, clipped.x)

    counts_budget = _split_budget(budget, split[0])
    sums_budget = _split_budget(budget, split[1])
    noisy_counts = gaussian_release(
        counts, SensitivityLevel(math.sqrt(2.0)), counts_budget, rng
    )
    noisy_sums = gaussian_release(
        sums.ravel(), SensitivityLevel(2.0 * math.sqrt(2.0) * r_x), sums_budget, rng
    ).reshape(k, p)

    mu = normalize_prior(noisy_counts / clipped.n, c0)
    means = _means_from_noisy(noisy_sums, noisy_counts)
    return BayesParams(mu, means)


def _gradient_step(
    theta: np.ndarray,
    data: RegressionDataset,
    clip_norm: float,
) -> np.ndarray:
    # Average of per-record squared-loss gradients, each clipped to clip_norm.
    residuals = data.x @ theta - data.y
    grads = data.x * residuals[:, None]
    norms = np.linalg.norm(grads, axis=1)
    factors = np.where(norms > clip_norm, clip_norm / np.maximum(norms, 1e-300), 1.0)
    return (grads * factors[:, None]).sum(axis=0) / data.n


def noisy_gd_linreg(
    data: RegressionDataset,
    config: LinRegConfig,
    t_steps: int,
    eta: float,
    budget: PrivacyBudget,
    rng: np.random.Generator,
) -> np.ndarray:
    """Projected gradient descent with per-step Gaussian noise.

    Per-record gradients are clipped to ``4 * r_x^2 * r_theta``; each of the
    ``t_steps`` steps consumes a ``1/t_steps`` share of the budget against the
    averaged gradient's replace-one sensitivity, and iterates are projected
    back into the ``r_theta`` ball.  Starts from the zero vector.
    """
    if t_steps < 1:
        raise ValueError("t_steps must be at least 1")
    clip_norm = 2.0 * config.r_x * (config.r_x * config.r_theta + config.r_x * config.r_theta)
    step_budget = PrivacyBudget(budget.epsilon / t_steps, budget.delta / t_steps)
    step_level = SensitivityLevel(2.0 * clip_norm / data.n)
    theta = np.zeros(data.p)
    for _ in range(t_steps):
        grad = _gradient_step(theta, data, clip_norm)
        noisy_grad = gaussian_release(grad, step_level, step_budget, rng)
        theta = project_ball(theta - eta * noisy_grad, config.r_theta)
    return theta


def noisy_ratio_kernel(
    data: RegressionDataset,
    config: KernelRegConfig,
    kernel: RadialKernel,
    budget: PrivacyBudget,
    rng: np.random.Generator,
    *,
    split: tuple[float, float] = (0.5, 0.5),
) -> float:
    """Kernel-ratio estimate from independently noised numerator and degree.

    The weighted-response numerator has replace-one sensitivity
    ``2 * c_k * sigma^-dim * r_f`` (responses clamped first) and the degree
    ``2 * c_k * sigma^-dim``; each is released with its budget share.  The
    noisy degree is floored at ``c0 * n / 2`` and the ratio clamped to
    ``+-r_f``.
    """
    y = np.clip(data.y, -config.r_f, config.r_f)
    w = kernel_weights(kernel, config.x0, data.x)
    numerator = float(w @ y)
    den = float(w.sum())

    unit = 2.0 * kernel.c_k * kernel.sigma ** (-float(kernel.dim))
    num_budget = _split_budget(budget, split[0])
    den_budget = _split_budget(budget, split[1])
    noisy_num = float(
        gaussian_release(
            np.array([numerator]), SensitivityLevel(unit * config.r_f), num_budget, rng
        )[0]
    )
    noisy_den = float(
        gaussian_release(np.array([den]), SensitivityLevel(unit), den_budget, rng)[0]
    )
    floored = max(noisy_den, config.c0 * data.n / 2.0)
    return float(np.clip(noisy_num / floored, -config.r_f, config.r_f))
