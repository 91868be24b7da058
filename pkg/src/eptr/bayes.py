"""Gaussian naive-Bayes classification with a gated private release.

The private estimator releases the class priors and class means jointly:
covariates are projected into a ball, the sample frequencies and means are
flattened into one vector, and the release is gated on the smallest class
count through :func:`gamma_bayes`.  Released priors are floored and
renormalized; released means are used as-is.
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
)

__all__ = [
    "EmptyClass",
    "LabeledDataset",
    "BayesParams",
    "BayesConfig",
    "class_counts",
    "clip_features",
    "fit_bayes",
    "gamma_bayes",
    "alpha_bayes",
    "normalize_prior",
    "flatten_params",
    "split_params",
    "bayes_adapter",
    "bayes_eptr",
    "bayes_predict",
    "predict_labels",
    "balanced_error",
]


class EmptyClass(AdapterFailure):
    """Some class has no records, so its sample mean is undefined."""

    def __init__(self, label: int):
        super().__init__(f"class {label} has no records")
        self.label = label


@dataclass(frozen=True)
class LabeledDataset:
    """Fixed-size classification sample: features ``x`` (n, p), labels ``y`` in 1..K."""

    x: np.ndarray
    y: np.ndarray
    n_classes: int

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError("x must be a non-empty (n, p) array")
        if y.shape != (x.shape[0],):
            raise ValueError("y must be a length-n label vector")
        if self.n_classes < 1:
            raise ValueError("n_classes must be at least 1")
        if y.min() < 1 or y.max() > self.n_classes:
            raise ValueError("labels must lie in 1..n_classes")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def replace(self, index: int, x_new: np.ndarray, y_new: int) -> "LabeledDataset":
        """New dataset with record ``index`` replaced."""
        x = self.x.copy()
        y = self.y.copy()
        x[index] = np.asarray(x_new, dtype=float)
        y[index] = int(y_new)
        return LabeledDataset(x, y, self.n_classes)


@dataclass(frozen=True)
class BayesParams:
    """Classifier parameters: priors ``mu`` (K,) and class means ``m`` (K, p)."""

    mu: np.ndarray
    m: np.ndarray

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=float)
        m = np.asarray(self.m, dtype=float)
        if mu.ndim != 1 or m.ndim != 2 or m.shape[0] != mu.shape[0]:
            raise ValueError("mu must be (K,) and m must be (K, p)")
        if np.any(mu < 0) or abs(float(mu.sum()) - 1.0) > 1e-12:
            raise ValueError("mu must be a probability vector")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "m", m)


@dataclass(frozen=True)
class BayesConfig:
    """Release configuration: feature-norm bound, prior floor, privacy budget."""

    r_x: float
    c0: float
    budget: PrivacyBudget

    def __post_init__(self) -> None:
        if not (self.r_x > 0):
            raise ValueError(f"r_x must be positive, got {self.r_x}")
        if not (0.0 < self.c0 < 1.0):
            raise ValueError(f"c0 must be in (0, 1), got {self.c0}")


def class_counts(data: LabeledDataset) -> np.ndarray:
    """Record count per class, length K."""
    return np.bincount(data.y, minlength=data.n_classes + 1)[1:]


def clip_features(data: LabeledDataset, r_x: float) -> LabeledDataset:
    """Project every feature vector onto the ball of radius ``r_x``."""
    norms = np.linalg.norm(data.x, axis=1)
    factors = np.where(norms > r_x, r_x / np.maximum(norms, 1e-300), 1.0)
    return LabeledDataset(data.x * factors[:, None], data.y, data.n_classes)


def fit_bayes(data: LabeledDataset) -> tuple[np.ndarray, np.ndarray]:
    """Sample class frequencies and class means.

    Raises :class:`EmptyClass` when some class has no records.  The gated
    release never reaches that state: a positive sub-distance forces every
    class count above ``c0 * n + 1``.
    """
    counts = class_counts(data)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyClass(int(empty[0]) + 1)
    k, p = data.n_classes, data.p
    mu_hat = counts / data.n
    m_hat = np.zeros((k, p))
    np.add.at(m_hat, data.y - 1, data.x)
    m_hat /= counts[:, None]
    return mu_hat, m_hat


def gamma_bayes(data: LabeledDataset, c0: float) -> float:
    """Sub-distance for the joint prior/mean release.

    ``(min_k count_k - c0*n - 1)_+``.  Replacing one record moves at most two
    class counts by one each, and the minimum count by at most one, so this is
    1-Lipschitz under record replacement; when positive it equals the exact
    number of replacements needed to push some class count to ``c0*n + 1``.
    """
    counts = class_counts(data)
    return max(0.0, float(counts.min()) - c0 * data.n - 1.0)


def alpha_bayes(n: int, config: BayesConfig) -> SensitivityLevel:
    """Sensitivity level for the flattened (priors, means) vector.

    ``(2/n) * sqrt(2 * r_x^2 / c0^2 + 2)``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    return SensitivityLevel(
        (2.0 / n) * math.sqrt(2.0 * config.r_x**2 / config.c0**2 + 2.0)
    )


def normalize_prior(mu_tilde: np.ndarray, c0: float) -> np.ndarray:
    """Floor noisy prior entries at ``c0`` and renormalize to a probability vector."""
    floored = np.maximum(np.asarray(mu_tilde, dtype=float), c0)
    return floored / floored.sum()


def flatten_params(mu: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Fixed release layout: priors first, then means row by row."""
    return np.concatenate([np.asarray(mu, float), np.asarray(m, float).ravel()])


def split_params(vector: np.ndarray, n_classes: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`flatten_params`."""
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (n_classes + n_classes * p,):
        raise ValueError("flattened vector has wrong length")
    return vector[:n_classes], vector[n_classes:].reshape(n_classes, p)


def bayes_adapter(
    config: BayesConfig, n: int, bot: BotPolicy | None = None
) -> EstimatorAdapter:
    """Adapter releasing the flattened (priors, means) vector.

    The estimate clips features before fitting; the sub-distance depends on
    labels only, so it needs no clipping.
    """

    def estimate(data: LabeledDataset) -> np.ndarray:
        mu_hat, m_hat = fit_bayes(clip_features(data, config.r_x))
        return flatten_params(mu_hat, m_hat)

    def gamma(data: LabeledDataset) -> float:
        return gamma_bayes(data, config.c0)

    return EstimatorAdapter(
        estimate=estimate,
        gamma=gamma,
        alpha=alpha_bayes(n, config),
        bot=bot if bot is not None else BotPolicy.null(),
    )


def bayes_eptr(
    data: LabeledDataset,
    config: BayesConfig,
    rng: np.random.Generator,
    bot: BotPolicy | None = None,
) -> ReleaseOutcome:
    """Private classifier release.

    Clips features, fits frequencies and means, and runs the gated release on
    the flattened vector.  On release, the noisy priors are floored at ``c0``
    and renormalized; the noisy means are used without re-projection.  The
    outcome's ``value`` is a :class:`BayesParams` (fallback vectors from a
    point-mass or sampling policy are decoded the same way; a plain null
    policy leaves ``value`` as ``None``).
    """
    if not (config.c0 < 1.0 / data.n_classes):
        raise ValueError("c0 must be below 1/K for the prior floor to be feasible")
    adapter = bayes_adapter(config, data.n, bot)
    outcome = eptr_release(adapter, data, config.budget, rng)
    if outcome.value is None:
        return outcome
    mu_raw, m = split_params(outcome.value, data.n_classes, data.p)
    params = BayesParams(normalize_prior(mu_raw, config.c0), m)
    return ReleaseOutcome(outcome.released, params)


def _log_posterior(params: BayesParams, x: np.ndarray) -> np.ndarray:
    # Unnormalized log-scores; -inf where the prior weight is exactly zero.
    sq = np.sum((x[None, :] - params.m) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        return np.where(params.mu > 0, np.log(params.mu), -np.inf) - 0.5 * sq


def bayes_predict(params: BayesParams, x: np.ndarray) -> tuple[np.ndarray, int]:
    """Posterior class probabilities and the maximum-posterior label.

    Scores are normalized by log-sum-exp, so adding a constant to all
    log-scores cannot change the result.  Ties go to the smallest label.
    """
    scores = _log_posterior(params, np.asarray(x, dtype=float))
    shift = scores.max()
    weights = np.exp(scores - shift)
    posterior = weights / weights.sum()
    return posterior, int(np.argmax(scores)) + 1


def predict_labels(params: BayesParams, x: np.ndarray) -> np.ndarray:
    """Vectorized maximum-posterior labels for a batch of query points."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        log_mu = np.where(params.mu > 0, np.log(params.mu), -np.inf)
    # scores[i, k] = log mu_k - 0.5 ||x_i - m_k||^2, expanded to avoid (n, K, p) temporaries
    cross = x @ params.m.T
    sq_m = np.sum(params.m**2, axis=1)
    scores = log_mu[None, :] + cross - 0.5 * sq_m[None, :]
    return np.argmax(scores, axis=1).astype(np.int64) + 1


def balanced_error(true_labels: np.ndarray, predicted: np.ndarray, n_classes: int) -> float:
    """Mean over classes of the per-class misclassification rate.

    Classes absent from ``true_labels`` are skipped.
    """
    true_labels = np.asarray(true_labels)
    predicted = np.asarray(predicted)
    rates = []
    for k in range(1, n_classes + 1):
        mask = true_labels == k
        if mask.any():
            rates.append(float(np.mean(predicted[mask] != k)))
    return float(np.mean(rates))
