"""Pointwise kernel regression with a gated private release.

The private estimator is the clamped Nadaraya-Watson ratio at a single query
point; the release is gated on the degree (total kernel weight reaching the
query point) through :func:`gamma_kernel`.  Radial kernels are Gaussian
mixtures; :func:`build_higher_order_kernel` constructs mixtures whose low
moments vanish, for use on smoother targets.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .mechanisms import (
    AdapterFailure,
    BotPolicy,
    EstimatorAdapter,
    PrivacyBudget,
    ReleaseOutcome,
    SensitivityLevel,
    eptr_release,
)
from .linreg import RegressionDataset

__all__ = [
    "ZeroDegree",
    "IllConditioned",
    "RadialKernel",
    "KernelRegConfig",
    "gaussian_kernel",
    "kernel_eval",
    "kernel_weights",
    "degree",
    "degree_lipschitz",
    "nw_estimate",
    "gamma_kernel",
    "alpha_kernel",
    "kernel_adapter",
    "nw_eptr",
    "build_higher_order_kernel",
    "kernel_moment",
    "kernel_moment_quadrature",
]


class ZeroDegree(AdapterFailure):
    """No kernel weight reaches the query point, so the ratio is undefined."""


class IllConditioned(RuntimeError):
    """Mixture-coefficient solve left a residual above tolerance."""


@dataclass(frozen=True)
class RadialKernel:
    """Gaussian-mixture radial kernel.

    Component ``i`` is the ``dim``-dimensional Gaussian density with scale
    ``scales[i] * sigma``, weighted by ``weights[i]``; weights sum to one.
    ``c_k`` is an upper bound on ``sigma^dim * |kernel|``, computed from the
    component peaks, and is what all sensitivity formulas use.
    """

    weights: np.ndarray
    scales: np.ndarray
    sigma: float
    dim: int
    c_k: float

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=float)
        scales = np.asarray(self.scales, dtype=np.int64)
        if weights.ndim != 1 or scales.shape != weights.shape:
            raise ValueError("weights and scales must be equal-length vectors")
        if abs(float(weights.sum()) - 1.0) > 1e-10:
            raise ValueError("mixture weights must sum to 1")
        if np.any(scales < 1):
            raise ValueError("scale multipliers must be positive integers")
        if not (self.sigma > 0):
            raise ValueError("sigma must be positive")
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "scales", scales)


def _peak_bound(weights: np.ndarray, scales: np.ndarray, dim: int) -> float:
    # Each component's sup is at its center; the bound sums absolute peaks.
    return float(
        np.sum(np.abs(weights) * (2.0 * math.pi) ** (-dim / 2.0) * scales ** (-float(dim)))
    )


def gaussian_kernel(sigma: float, dim: int = 1) -> RadialKernel:
    """Single-component Gaussian kernel with the given bandwidth."""
    weights = np.array([1.0])
    scales = np.array([1])
    return RadialKernel(weights, scales, sigma, dim, _peak_bound(weights, scales, dim))


@dataclass(frozen=True)
class KernelRegConfig:
    """Release configuration: query point, response bound, degree floor, bandwidth, budget."""

    x0: np.ndarray
    r_f: float
    c0: float
    sigma: float
    budget: PrivacyBudget

    def __post_init__(self) -> None:
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if not (self.r_f > 0 and self.c0 > 0 and self.sigma > 0):
            raise ValueError("r_f, c0 and sigma must be positive")
        object.__setattr__(self, "x0", x0)


def kernel_eval(kernel: RadialKernel, x: np.ndarray, x_prime: np.ndarray) -> float:
    """Kernel value between two points (symmetric in its arguments)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != x_prime.shape:
        raise ValueError("points must share a dimension")
    r2 = float(np.sum((x - x_prime) ** 2))
    d = kernel.dim
    total = 0.0
    for a, i in zip(kernel.weights, kernel.scales):
        s = float(i) * kernel.sigma
        total += a * (2.0 * math.pi * s * s) ** (-d / 2.0) * math.exp(-r2 / (2.0 * s * s))
    return total


def kernel_weights(kernel: RadialKernel, x0: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Vector of kernel values from the query point to each row of ``points``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    points = np.asarray(points, dtype=float)
    r2 = np.sum((points - x0[None, :]) ** 2, axis=1)
    d = kernel.dim
    out = np.zeros(points.shape[0])
    for a, i in zip(kernel.weights, kernel.scales):
        s = float(i) * kernel.sigma
        out += a * (2.0 * math.pi * s * s) ** (-d / 2.0) * np.exp(-r2 / (2.0 * s * s))
    return out


def degree(x0: np.ndarray, data: RegressionDataset, kernel: RadialKernel) -> float:
    """Total kernel weight from the query point to the sample.

    Summed with exact compensated accumulation, so the value does not depend
    on record order.
    """
    return math.fsum(kernel_weights(kernel, x0, data.x).tolist())


def degree_lipschitz(kernel: RadialKernel) -> float:
    """Bound on the degree change under one record replacement: ``2 * c_k / sigma^dim``."""
    return 2.0 * kernel.c_k * kernel.sigma ** (-float(kernel.dim))


def nw_estimate(
    x0: np.ndarray, data: RegressionDataset, kernel: RadialKernel, r_f: float
) -> float:
    """Clamped Nadaraya-Watson estimate at the query point.

    ``clamp(sum w_i y_i / sum w_i, +-r_f)`` with exact compensated sums, so
    permuting records cannot change the result even in the last bit.  Raises
    :class:`ZeroDegree` when all weights underflow to zero; a positive
    sub-distance rules that out on the release path.
    """
    w = kernel_weights(kernel, x0, data.x)
    den = math.fsum(w.tolist())
    if den == 0.0:
        raise ZeroDegree("all kernel weights underflowed to zero")
    num = math.fsum((w * data.y).tolist())
    return float(np.clip(num / den, -r_f, r_f))


def gamma_kernel(
    data: RegressionDataset, config: KernelRegConfig, kernel: RadialKernel
) -> float:
    """Sub-distance for the kernel-ratio release.

    ``(degree - c0*n - L)_+ / L`` where ``L`` is the one-replacement degree
    bound from :func:`degree_lipschitz`; 1-Lipschitz by construction.
    """
    lip = degree_lipschitz(kernel)
    slack = degree(config.x0, data, kernel) - config.c0 * data.n - lip
    return max(0.0, slack / lip)


def alpha_kernel(n: int, config: KernelRegConfig, kernel: RadialKernel) -> SensitivityLevel:
    """Sensitivity level for the clamped ratio: ``4 * r_f * c_k / (sigma^dim * c0 * n)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return SensitivityLevel(
        4.0
        * config.r_f
        * kernel.c_k
        / (kernel.sigma ** float(kernel.dim) * config.c0 * n)
    )


def _clip_responses(data: RegressionDataset, r_f: float) -> RegressionDataset:
    return RegressionDataset(data.x, np.clip(data.y, -r_f, r_f))


def kernel_adapter(
    config: KernelRegConfig,
    kernel: RadialKernel,
    n: int,
    bot: BotPolicy | None = None,
) -> EstimatorAdapter:
    """Adapter releasing the scalar ratio estimate (as a length-one vector)."""
    if abs(config.sigma - kernel.sigma) > 1e-12:
        raise ValueError(
            f"config bandwidth {config.sigma} disagrees with the kernel's {kernel.sigma}"
        )

    def estimate(data: RegressionDataset) -> np.ndarray:
        clipped = _clip_responses(data, config.r_f)
        return np.array([nw_estimate(config.x0, clipped, kernel, config.r_f)])

    def gamma(data: RegressionDataset) -> float:
        return gamma_kernel(data, config, kernel)

    return EstimatorAdapter(
        estimate=estimate,
        gamma=gamma,
        alpha=alpha_kernel(n, config, kernel),
        bot=bot if bot is not None else BotPolicy.null(),
    )


def nw_eptr(
    data: RegressionDataset,
    config: KernelRegConfig,
    kernel: RadialKernel,
    rng: np.random.Generator,
    bot: BotPolicy | None = None,
    domain: tuple[float, float] | None = None,
) -> ReleaseOutcome:
    """Private release of the pointwise kernel-regression estimate.

    Responses are clamped to ``+-r_f`` inside the adapter.  Covariates are
    expected to lie in the estimation domain already; pass ``domain`` to
    clamp each coordinate into a box first (the one-dimensional experiments
    use ``(0, 1)``).  The outcome ``value`` is a scalar.
    """
    if domain is not None:
        lo, hi = domain
        data = RegressionDataset(np.clip(data.x, lo, hi), data.y)
    adapter = kernel_adapter(config, kernel, data.n, bot)
    outcome = eptr_release(adapter, data, config.budget, rng)
    if outcome.value is None:
        return outcome
    return ReleaseOutcome(outcome.released, float(np.ravel(outcome.value)[0]))


def _solve_partial_pivot(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    a = np.array(matrix, dtype=float)
    b = np.array(rhs, dtype=float)
    size = a.shape[0]
    for col in range(size):
        pivot = col + int(np.argmax(np.abs(a[col:, col])))
        if a[pivot, col] == 0.0:
            raise IllConditioned("singular coefficient matrix")
        if pivot != col:
            a[[col, pivot]] = a[[pivot, col]]
            b[[col, pivot]] = b[[pivot, col]]
        for row in range(col + 1, size):
            factor = a[row, col] / a[col, col]
            a[row, col:] -= factor * a[col, col:]
            b[row] -= factor * b[col]
    x = np.zeros(size)
    for row in range(size - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1 :] @ x[row + 1 :]) / a[row, row]
    return x


def build_higher_order_kernel(s: int, sigma: float, dim: int = 1) -> RadialKernel:
    """Gaussian mixture whose radial-profile moments 1..2s-1 all vanish.

    Solves the s-by-s system ``sum_i a_i = 1`` and ``sum_i a_i i^(2k) = 0``
    for ``k = 1..s-1`` by partial-pivot elimination with row equilibration.
    Odd moments vanish by symmetry, so the result integrates to one with
    ``2s - 1`` vanishing moments.  Raises :class:`IllConditioned` when the
    equilibrated residual exceeds ``1e-8``.
    """
    if not (1 <= s <= 12):
        raise ValueError(f"order parameter s must be in 1..12, got {s}")
    idx = np.arange(1, s + 1, dtype=float)
    matrix = np.ones((s, s))
    for k in range(1, s):
        matrix[k] = idx ** (2 * k)
    rhs = np.zeros(s)
    rhs[0] = 1.0
    row_scale = np.max(np.abs(matrix), axis=1)
    weights = _solve_partial_pivot(matrix / row_scale[:, None], rhs / row_scale)
    residual = float(np.max(np.abs(matrix @ weights - rhs) / row_scale))
    if residual > 1e-8:
        raise IllConditioned(f"equilibrated residual {residual:.3e} exceeds 1e-8")
    scales = np.arange(1, s + 1)
    return RadialKernel(weights, scales, sigma, dim, _peak_bound(weights, scales, dim))


def _double_factorial_odd(j: int) -> float:
    # (j-1)!! for even j: product of odd numbers up to j-1.
    out = 1.0
    for v in range(1, j, 2):
        out *= v
    return out


def kernel_moment(kernel: RadialKernel, j: int) -> float:
    """Closed-form ``j``-th moment of the unit-bandwidth radial profile.

    The profile is the mixture of one-dimensional Gaussian densities with
    scales ``scales[i]``; its even moments are ``sum_i a_i * i^j * (j-1)!!``
    and its odd moments are exactly zero.
    """
    if j < 0:
        raise ValueError("moment order must be nonnegative")
    if j % 2 == 1:
        return 0.0
    dfac = _double_factorial_odd(j) if j > 0 else 1.0
    return float(np.sum(kernel.weights * kernel.scales.astype(float) ** j) * dfac)


def kernel_moment_quadrature(kernel: RadialKernel, j: int) -> float:
    """Adaptive-quadrature check of :func:`kernel_moment`.

    Integrates ``u^j`` against the unit-bandwidth profile over
    ``[-50 * max_scale, 50 * max_scale]``.
    """
    scales = kernel.scales.astype(float)
    weights = kernel.weights

    def profile(u: float) -> float:
        total = 0.0
        for a, s in zip(weights, scales):
            total += a * math.exp(-u * u / (2.0 * s * s)) / (s * math.sqrt(2.0 * math.pi))
        return u**j * total

    limit = 50.0 * float(scales.max())
    with warnings.catch_warnings():
        # Roundoff warnings at tolerances far below the 1e-8 gate are benign.
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, _ = integrate.quad(
            profile, -limit, limit, limit=400, epsabs=1e-10, epsrel=1e-10
        )
    return float(value)
