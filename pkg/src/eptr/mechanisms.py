"""Core (epsilon, delta)-DP release primitives.

This module implements the generic gate-then-noise machinery shared by all
estimators in the package:

* the efficient propose-test-release gate (``eptr_release``), which tests a
  cheap 1-Lipschitz "sub-distance" statistic instead of an exact distance to
  the high-sensitivity region,
* the classical propose-test-release gate (``ptr_release``) driven by an
  exact distance supplied by the caller,
* the Gaussian mechanism (``gaussian_release``) and its noise calibration,
* Euclidean ball projection (``project_ball``),
* reproducible random-stream derivation (``substream``).

Everything here is pure given an explicit random stream, so all operations
are safe to call concurrently as long as each thread owns its stream.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

__all__ = [
    "AdapterFailure",
    "ContractViolation",
    "InvalidProbability",
    "PrivacyBudget",
    "SensitivityLevel",
    "ReleaseOutcome",
    "BotPolicy",
    "EstimatorAdapter",
    "PreparedRelease",
    "compute_M",
    "release_probability",
    "gaussian_noise_scale",
    "gaussian_release",
    "prepare_release",
    "release_from_prepared",
    "eptr_release",
    "ptr_pass_probability",
    "ptr_release",
    "project_ball",
    "substream",
    "stream_tag",
]


class AdapterFailure(Exception):
    """The point estimate is undefined on this dataset (e.g. singular Gram).

    Estimator adapters raise subclasses of this from their ``estimate``
    callable.  The adapter contract requires the sub-distance to be 0 on any
    dataset where this happens, so the release gate almost always resolves to
    the fallback outcome instead.
    """


class ContractViolation(Exception):
    """The release coin succeeded while the estimate was undefined.

    A correct adapter keeps its sub-distance at 0 wherever the estimate is
    undefined, which caps the probability of this event at roughly delta.
    Seeing it raised therefore signals a buggy adapter; it is never swallowed.
    """


class InvalidProbability(Exception):
    """A pass-probability formula produced a value outside [0, 1]."""


@dataclass(frozen=True)
class PrivacyBudget:
    """Privacy tolerance pair: multiplicative bound ``epsilon``, slack ``delta``."""

    epsilon: float
    delta: float

    def __post_init__(self) -> None:
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class SensitivityLevel:
    """Proposed bound on the replace-one sensitivity of an estimate vector.

    ``alpha`` is strictly positive for any real adapter; zero is tolerated so
    tests can exercise the degenerate noiseless release.
    """

    alpha: float

    def __post_init__(self) -> None:
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be nonnegative and finite, got {self.alpha}")


@dataclass(frozen=True)
class ReleaseOutcome:
    """Result of a gated release: a value, or the null response.

    ``released`` tags the branch taken.  ``value`` is the noised estimate on
    the release branch; on the fallback branch it is whatever the
    :class:`BotPolicy` produced (``None`` for the plain null policy).  Modules
    that post-process releases (e.g. the Bayes classifier) may carry a richer
    object in ``value``.
    """

    released: bool
    value: Any

    @staticmethod
    def release(vector: np.ndarray) -> "ReleaseOutcome":
        vector = np.asarray(vector, dtype=float)
        if not np.all(np.isfinite(vector)):
            raise ValueError("released estimate must be finite in every coordinate")
        return ReleaseOutcome(True, vector)

    @staticmethod
    def bot(value: Any = None) -> "ReleaseOutcome":
        return ReleaseOutcome(False, value)


@dataclass(frozen=True)
class BotPolicy:
    """What to emit when the release test fails.

    ``null``       -- emit ``None`` (a bare "no reply").
    ``point_mass`` -- emit a fixed vector.
    ``sampler``    -- draw from a named distribution ("uniform" box or
                      "gaussian"), consuming the caller's stream.

    Whatever the policy produces must stay inside the error bound declared by
    the experiment using it; that is checked by the experiment, not here.
    """

    kind: str = "null"
    value: np.ndarray | None = None
    sampler: str | None = None
    params: tuple = ()

    @staticmethod
    def null() -> "BotPolicy":
        return BotPolicy(kind="null")

    @staticmethod
    def point_mass(value: np.ndarray | float) -> "BotPolicy":
        return BotPolicy(kind="point", value=np.asarray(value, dtype=float))

    @staticmethod
    def uniform(low: float, high: float, dim: int) -> "BotPolicy":
        return BotPolicy(kind="sampler", sampler="uniform", params=(low, high, dim))

    @staticmethod
    def gaussian(dim: int) -> "BotPolicy":
        return BotPolicy(kind="sampler", sampler="gaussian", params=(dim,))

    def draw(self, rng: np.random.Generator) -> np.ndarray | None:
        if self.kind == "null":
            return None
        if self.kind == "point":
            return self.value
        if self.sampler == "uniform":
            low, high, dim = self.params
            return rng.uniform(low, high, int(dim))
        if self.sampler == "gaussian":
            (dim,) = self.params
            return rng.standard_normal(int(dim))
        raise ValueError(f"unknown bot policy {self.kind}/{self.sampler}")


@dataclass(frozen=True)
class EstimatorAdapter:
    """Bundle plugging an estimator into the generic release gate.

    ``estimate``  maps a dataset to the point estimate vector (may raise
                  :class:`AdapterFailure` where undefined).
    ``gamma``     maps a dataset to the nonnegative sub-distance; it must be
                  1-Lipschitz under single-record replacement and must vanish
                  wherever the replace-one sensitivity of ``estimate`` can
                  exceed ``alpha``.  Both properties are verified by tests,
                  never assumed.
    ``alpha``     the proposed sensitivity level used to scale release noise.
    ``bot``       fallback policy when the release test fails.
    """

    estimate: Callable[[Any], np.ndarray]
    gamma: Callable[[Any], float]
    alpha: SensitivityLevel
    bot: BotPolicy = field(default_factory=BotPolicy.null)


def compute_M(budget: PrivacyBudget) -> float:
    """Sub-distance value at which the release coin becomes fair.

    Returns ``1 + (2/epsilon) * ln(max(1/delta, 1/epsilon))``.  Natural
    logarithm throughout.
    """
    eps, delta = budget.epsilon, budget.delta
    return 1.0 + (2.0 / eps) * math.log(max(1.0 / delta, 1.0 / eps))


def _stable_logistic(x: float) -> float:
    # Exponentiate non-positive arguments only, so large |x| cannot overflow.
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def release_probability(gamma_value: float, budget: PrivacyBudget) -> float:
    """Probability that the gate releases, given the sub-distance value.

    Logistic in ``0.5 * epsilon * (gamma - M)``: exactly 0.5 at ``gamma = M``
    and strictly increasing in ``gamma``.  Saturates to 0/1 without overflow
    for extreme arguments.
    """
    if gamma_value < 0:
        raise ValueError(f"gamma_value must be nonnegative, got {gamma_value}")
    m = compute_M(budget)
    return _stable_logistic(0.5 * budget.epsilon * (gamma_value - m))


def gaussian_noise_scale(level: SensitivityLevel, budget: PrivacyBudget) -> float:
    """Per-coordinate noise deviation used by the gated release.

    ``(2 * alpha / epsilon) * sqrt(2 * ln(1.25 / delta))``.
    """
    return (2.0 * level.alpha / budget.epsilon) * math.sqrt(
        2.0 * math.log(1.25 / budget.delta)
    )


def gaussian_release(
    theta_hat: np.ndarray,
    level: SensitivityLevel,
    budget: PrivacyBudget,
    rng: np.random.Generator,
) -> np.ndarray:
    """Add isotropic Gaussian noise calibrated to the sensitivity level.

    Bit-reproducible given the same stream: consumes exactly one standard
    normal draw per coordinate (also when ``alpha`` is zero).
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    scale = gaussian_noise_scale(level, budget)
    return theta_hat + scale * rng.standard_normal(theta_hat.shape)


@dataclass(frozen=True)
class PreparedRelease:
    """Data-dependent, deterministic half of a gated release.

    Separating this from the random half lets callers that release many times
    from the same dataset (the privacy auditor) compute the estimate and
    sub-distance once.  ``estimate`` is ``None`` when the adapter's estimate
    was undefined, with the originating failure kept for diagnostics.
    """

    gamma_value: float
    release_prob: float
    estimate: np.ndarray | None
    failure: AdapterFailure | None
    alpha: SensitivityLevel
    budget: PrivacyBudget
    bot: BotPolicy


def prepare_release(
    adapter: EstimatorAdapter, dataset: Any, budget: PrivacyBudget
) -> PreparedRelease:
    """Evaluate the adapter once (one gamma call, one estimate call)."""
    gamma_value = float(adapter.gamma(dataset))
    prob = release_probability(gamma_value, budget)
    estimate: np.ndarray | None
    failure: AdapterFailure | None
    try:
        estimate = np.asarray(adapter.estimate(dataset), dtype=float)
        failure = None
    except AdapterFailure as exc:
        estimate = None
        failure = exc
    return PreparedRelease(
        gamma_value=gamma_value,
        release_prob=prob,
        estimate=estimate,
        failure=failure,
        alpha=adapter.alpha,
        budget=budget,
        bot=adapter.bot,
    )


def release_from_prepared(
    prep: PreparedRelease, rng: np.random.Generator
) -> ReleaseOutcome:
    """Randomized half of a gated release.

    Draw order is fixed: one uniform for the coin first, then (on success)
    one normal per coordinate, then (for sampling fallback policies) the
    fallback draw.  This makes outcomes reproducible across platforms.
    """
    coin = rng.random()
    if coin < prep.release_prob:
        if prep.estimate is None:
            raise ContractViolation(
                "release coin succeeded but the estimate is undefined "
                f"(adapter reported: {prep.failure!r})"
            )
        return ReleaseOutcome.release(
            gaussian_release(prep.estimate, prep.alpha, prep.budget, rng)
        )
    return ReleaseOutcome.bot(prep.bot.draw(rng))


def eptr_release(
    adapter: EstimatorAdapter,
    dataset: Any,
    budget: PrivacyBudget,
    rng: np.random.Generator,
) -> ReleaseOutcome:
    """Gated release driven by the adapter's sub-distance.

    Computes the sub-distance, flips a coin with the logistic release
    probability, and on success releases the Gaussian-noised estimate;
    otherwise emits the fallback outcome.  The adapter's ``gamma`` and
    ``estimate`` are each evaluated exactly once per call.
    """
    return release_from_prepared(prepare_release(adapter, dataset, budget), rng)


def ptr_pass_probability(distance: float, budget: PrivacyBudget) -> float:
    """Two-branch pass probability of the classical gate.

    ``p = delta/2 * exp(eps*D/2)``          when ``ln(1/delta) > eps*D/2``,
    ``p = 1 - 1/(2*delta) * exp(-eps*D/2)`` otherwise;

    the branches agree (both give one half) at the crossover.  Raises
    :class:`InvalidProbability` if the value leaves [0, 1], which signals a
    caller bug (for instance a NaN distance); clamping is deliberately not
    done.
    """
    eps, delta = budget.epsilon, budget.delta
    half = 0.5 * eps * float(distance)
    if math.log(1.0 / delta) > half:
        prob = 0.5 * delta * math.exp(half)
    else:
        prob = 1.0 - (0.5 / delta) * math.exp(-half)
    if not (0.0 <= prob <= 1.0):
        raise InvalidProbability(
            f"pass probability {prob} outside [0, 1] for distance {distance}"
        )
    return prob


def ptr_release(
    adapter: EstimatorAdapter,
    exact_distance: Callable[[Any], float],
    dataset: Any,
    budget: PrivacyBudget,
    rng: np.random.Generator,
) -> ReleaseOutcome:
    """Classical gated release driven by an exact replacement distance.

    ``exact_distance(dataset)`` must be the number of records that would have
    to be replaced before the proposed sensitivity level fails; the pass
    probability comes from :func:`ptr_pass_probability`.  Noise on the
    release branch is scaled by ``alpha/epsilon * sqrt(2 ln(1.25/delta))``
    (half the gated release's multiplier -- the two procedures are
    intentionally kept with their own constants).
    """
    eps, delta = budget.epsilon, budget.delta
    prob = ptr_pass_probability(exact_distance(dataset), budget)
    coin = rng.random()
    if coin < prob:
        try:
            estimate = np.asarray(adapter.estimate(dataset), dtype=float)
        except AdapterFailure as exc:
            raise ContractViolation(
                f"release coin succeeded but the estimate is undefined: {exc!r}"
            ) from exc
        scale = (adapter.alpha.alpha / eps) * math.sqrt(2.0 * math.log(1.25 / delta))
        return ReleaseOutcome.release(estimate + scale * rng.standard_normal(estimate.shape))
    return ReleaseOutcome.bot(adapter.bot.draw(rng))


def project_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Project a vector onto the Euclidean ball of the given radius.

    Returns ``v * min(1, radius / ||v||)``; vectors already inside the ball
    (including the zero vector) come back unchanged in value.
    """
    if not (radius > 0):
        raise ValueError(f"radius must be positive, got {radius}")
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm <= radius:
        return v.copy()
    out = v * (radius / norm)
    # Rounding can leave the scaled norm an ulp above the radius; nudge it
    # back so the projection is exactly idempotent.
    norm = float(np.linalg.norm(out))
    while norm > radius:
        out = out * (radius / norm)
        norm = float(np.linalg.norm(out))
    return out


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Derive an independent random stream from a master seed and an index path.

    Streams for distinct paths are statistically independent and do not
    depend on creation order, so work parallelized over path components
    reproduces serial results exactly.  The derivation is
    ``PCG64(SeedSequence(master_seed, spawn_key=path))``.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def stream_tag(name: str) -> int:
    """Stable 32-bit path component for a string label (CRC-32)."""
    return zlib.crc32(name.encode("utf-8")) & 0xFFFFFFFF
