"""Empirical privacy verification on adversarial adjacent dataset pairs.

For a mechanism and a pair of datasets differing in one record, the auditor
estimates event probabilities under both datasets by Monte Carlo and checks
the privacy inequality with exact binomial confidence bounds in both
directions.  A statistical PASS is evidence of compliance, not proof; a FAIL
is a confirmed violation up to the stated confidence and always indicates an
implementation bug.

Two mechanism forms are accepted:

* a plain closure ``mechanism(dataset, rng) -> ReleaseOutcome``, run once per
  trial on a per-trial stream derived from (master seed, dataset tag, trial
  index);
* a batch mechanism (``prepare``/``sample`` pair), run on blocks of trials
  whose streams derive from (master seed, dataset tag, block index).  Blocks
  make audits roughly twenty times faster and remain schedule-independent;
  a batch of one reproduces the sequential draw order exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import stats

from .bayes import (
    BayesConfig,
    BayesParams,
    LabeledDataset,
    bayes_adapter,
    gamma_bayes,
)
from .kernelreg import (
    KernelRegConfig,
    RadialKernel,
    gaussian_kernel,
    kernel_adapter,
    kernel_weights,
)
from .linreg import LinRegConfig, RegressionDataset, linreg_adapter
from .mechanisms import (
    ContractViolation,
    EstimatorAdapter,
    PreparedRelease,
    PrivacyBudget,
    gaussian_noise_scale,
    prepare_release,
    substream,
)

__all__ = [
    "AdjacentPair",
    "EventFamily",
    "EventResult",
    "AuditReport",
    "clopper_pearson",
    "audit_mechanism",
    "adversarial_pairs",
    "audit_config",
    "BatchMechanism",
    "GatedBatch",
    "batch_mechanisms",
    "broken_mechanism",
    "write_reports_csv",
    "BLOCK_SIZE",
]

BLOCK_SIZE = 20_000

REPORT_HEADER = (
    "Empirical privacy audit: a statistical PASS is evidence of compliance, "
    "not a proof; a FAIL is a confirmed violation at the report's confidence."
)


@dataclass(frozen=True)
class AdjacentPair:
    """Two equal-length datasets differing in exactly one record."""

    x: Any
    x_prime: Any
    description: str
    check: bool = True

    def __post_init__(self) -> None:
        if not self.check:
            return
        a, b = self.x, self.x_prime
        if type(a) is not type(b):
            raise ValueError("pair members must share a dataset type")
        if a.n != b.n:
            raise ValueError("pair members must have equal length")
        joint = int(np.sum(np.any(a.x != b.x, axis=1) | (a.y != b.y)))
        if joint != 1:
            raise ValueError(f"pair must differ in exactly one record, differs in {joint}")


@dataclass(frozen=True)
class EventFamily:
    """Output events to audit: release/fallback indicators plus half-lines.

    Thresholds define events of the form "released and first coordinate at
    most t"; the fallback outcome is its own atom and never enters them.
    """

    thresholds: np.ndarray = field(default_factory=lambda: np.array([]))
    include_release: bool = True
    include_bot: bool = True

    def __post_init__(self) -> None:
        thresholds = np.sort(np.asarray(self.thresholds, dtype=float))
        object.__setattr__(self, "thresholds", thresholds)

    @staticmethod
    def from_released_values(values: np.ndarray, n_thresholds: int = 20) -> "EventFamily":
        """Quantile cuts of the pooled released values (empty if none released)."""
        values = np.asarray(values, dtype=float)
        values = values[np.isfinite(values)]
        if values.size == 0 or n_thresholds < 1:
            return EventFamily()
        qs = np.linspace(0.0, 1.0, n_thresholds + 2)[1:-1]
        return EventFamily(thresholds=np.unique(np.quantile(values, qs)))

    def names_and_counts(
        self, released: np.ndarray, values: np.ndarray
    ) -> list[tuple[str, int]]:
        out: list[tuple[str, int]] = []
        if self.include_release:
            out.append(("release", int(released.sum())))
        if self.include_bot:
            out.append(("bot", int((~released).sum())))
        for t in self.thresholds:
            count = int(np.sum(released & (values <= t)))
            out.append((f"value<={t:.6g}", count))
        return out


def clopper_pearson(k: int, n: int, confidence: float) -> tuple[float, float]:
    """Exact binomial confidence bounds for a proportion."""
    alpha = 1.0 - confidence
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2.0, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1.0 - alpha / 2.0, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class EventResult:
    """One audited event: empirical rates, bounds, slack and verdict.

    ``slack`` is the smaller of the two directed margins
    ``exp(eps) * upper(other) + delta - lower(this)``; the event fails when
    the slack is negative in either direction.
    """

    name: str
    trials: int
    count_x: int
    count_xp: int
    lo_x: float
    hi_x: float
    lo_xp: float
    hi_xp: float
    slack: float
    failed: bool

    @property
    def p_x(self) -> float:
        return self.count_x / self.trials

    @property
    def p_xp(self) -> float:
        return self.count_xp / self.trials


@dataclass(frozen=True)
class AuditReport:
    """Per-event results for one (mechanism, pair) audit plus the verdict."""

    mechanism: str
    pair_description: str
    budget: PrivacyBudget
    trials: int
    confidence: float
    events: tuple[EventResult, ...]
    header: str = REPORT_HEADER

    @property
    def passed(self) -> bool:
        return not any(e.failed for e in self.events)

    def summary(self) -> str:
        lines = [
            self.header,
            f"mechanism={self.mechanism} pair={self.pair_description!r} "
            f"epsilon={self.budget.epsilon} delta={self.budget.delta} "
            f"trials={self.trials} events={len(self.events)} "
            f"confidence={self.confidence:.6f}",
        ]
        for e in self.events:
            verdict = "FAIL" if e.failed else "ok"
            lines.append(
                f"  {e.name:<18} p_x={e.p_x:.5f} p_x'={e.p_xp:.5f} "
                f"slack={e.slack:+.5f} {verdict}"
            )
        lines.append(f"verdict: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _first_coordinate(value: Any) -> float:
    if value is None:
        return math.nan
    if isinstance(value, BayesParams):
        return float(value.mu[0])
    arr = np.ravel(np.asarray(value, dtype=float))
    return float(arr[0]) if arr.size else math.nan


def _run_closure(
    mechanism: Callable, dataset: Any, trials: int, master_seed: int, tag: int
) -> tuple[np.ndarray, np.ndarray]:
    released = np.zeros(trials, dtype=bool)
    values = np.full(trials, math.nan)
    for t in range(trials):
        outcome = mechanism(dataset, substream(master_seed, tag, t))
        released[t] = outcome.released
        if outcome.released:
            values[t] = _first_coordinate(outcome.value)
    return released, values


def _run_batch(
    mechanism: "BatchMechanism", dataset: Any, trials: int, master_seed: int, tag: int
) -> tuple[np.ndarray, np.ndarray]:
    prep = mechanism.prepare(dataset)
    released = np.zeros(trials, dtype=bool)
    values = np.full(trials, math.nan)
    start = 0
    block = 0
    while start < trials:
        m = min(BLOCK_SIZE, trials - start)
        rel, val = mechanism.sample(prep, substream(master_seed, tag, block), m)
        released[start : start + m] = rel
        values[start : start + m] = val
        start += m
        block += 1
    return released, values


def audit_mechanism(
    mechanism: Any,
    pair: AdjacentPair,
    budget: PrivacyBudget,
    trials: int,
    master_seed: int,
    events: EventFamily | None = None,
    name: str | None = None,
) -> AuditReport:
    """Estimate event probabilities under both datasets and test the inequality.

    Runs the mechanism ``trials`` times on each dataset of the pair with
    independent derived streams.  Confidence bounds are exact binomial at a
    familywise 99% level (Bonferroni across the report's events), and every
    event is tested in both orderings of the pair.
    """
    if trials < 10_000:
        raise ValueError(f"trials must be at least 10000, got {trials}")
    runner = _run_batch if hasattr(mechanism, "sample") else _run_closure
    rel_x, val_x = runner(mechanism, pair.x, trials, master_seed, 0)
    rel_y, val_y = runner(mechanism, pair.x_prime, trials, master_seed, 1)

    if events is None:
        pooled = np.concatenate([val_x[rel_x], val_y[rel_y]])
        events = EventFamily.from_released_values(pooled)

    counts_x = events.names_and_counts(rel_x, val_x)
    counts_y = events.names_and_counts(rel_y, val_y)
    n_events = len(counts_x)
    confidence = 1.0 - 0.01 / max(n_events, 1)

    grow = math.exp(budget.epsilon)
    results = []
    for (event_name, k_x), (_, k_y) in zip(counts_x, counts_y):
        lo_x, hi_x = clopper_pearson(k_x, trials, confidence)
        lo_y, hi_y = clopper_pearson(k_y, trials, confidence)
        slack_xy = grow * hi_y + budget.delta - lo_x
        slack_yx = grow * hi_x + budget.delta - lo_y
        slack = min(slack_xy, slack_yx)
        results.append(
            EventResult(
                name=event_name,
                trials=trials,
                count_x=k_x,
                count_xp=k_y,
                lo_x=lo_x,
                hi_x=hi_x,
                lo_xp=lo_y,
                hi_xp=hi_y,
                slack=slack,
                failed=slack < 0.0,
            )
        )
    label = name if name is not None else getattr(mechanism, "name", "mechanism")
    return AuditReport(
        mechanism=label,
        pair_description=pair.description,
        budget=budget,
        trials=trials,
        confidence=confidence,
        events=tuple(results),
    )


def write_reports_csv(reports: list[AuditReport], path: str) -> None:
    """Serialize reports as CSV, one row per audited event (atomic write)."""
    import os

    lines = [
        "mechanism,pair,epsilon,delta,trials,event,count_x,count_xp,p_x,p_xp,"
        "lo_x,hi_x,lo_xp,hi_xp,slack,failed,verdict"
    ]
    for r in reports:
        verdict = "PASS" if r.passed else "FAIL"
        for e in r.events:
            lines.append(
                f"{r.mechanism},{r.pair_description},{r.budget.epsilon!r},"
                f"{r.budget.delta!r},{r.trials},{e.name},{e.count_x},{e.count_xp},"
                f"{e.p_x!r},{e.p_xp!r},{e.lo_x!r},{e.hi_x!r},{e.lo_xp!r},{e.hi_xp!r},"
                f"{e.slack!r},{int(e.failed)},{verdict}"
            )
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Batch mechanisms
# ---------------------------------------------------------------------------


class BatchMechanism:
    """Prepare-once / sample-many mechanism wrapper for fast audits.

    ``prepare`` performs all data-dependent deterministic work; ``sample``
    draws a block of independent trials from one stream, returning the
    release flags and the first coordinate of each released output (NaN on
    fallback trials).  A block of one consumes the stream exactly like the
    sequential mechanism.
    """

    name = "mechanism"

    def prepare(self, dataset: Any) -> Any:
        raise NotImplementedError

    def sample(
        self, prep: Any, rng: np.random.Generator, m: int
    ) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


class GatedBatch(BatchMechanism):
    def __init__(
        self,
        name: str,
        budget: PrivacyBudget,
        adapter_builder: Callable[[Any], EstimatorAdapter],
        value1: Callable[[np.ndarray], np.ndarray] | None = None,
    ):
        self.name = name
        self.budget = budget
        self.adapter_builder = adapter_builder
        self.value1 = value1 if value1 is not None else (lambda mat: mat[:, 0])

    def prepare(self, dataset: Any) -> PreparedRelease:
        return prepare_release(self.adapter_builder(dataset), dataset, self.budget)

    def sample(
        self, prep: PreparedRelease, rng: np.random.Generator, m: int
    ) -> tuple[np.ndarray, np.ndarray]:
        released = rng.random(m) < prep.release_prob
        values = np.full(m, math.nan)
        k = int(released.sum())
        if k:
            if prep.estimate is None:
                raise ContractViolation(
                    f"release coin succeeded but the estimate is undefined: {prep.failure!r}"
                )
            scale = gaussian_noise_scale(prep.alpha, prep.budget)
            noise = rng.standard_normal((k, prep.estimate.shape[0]))
            values[released] = self.value1(prep.estimate[None, :] + scale * noise)
        return released, values


class _StatsBayesBatch(BatchMechanism):
    name = "noisy_stats_simplified"

    def __init__(self, config: BayesConfig):
        self.config = config

    def prepare(self, dataset: LabeledDataset):
        from .bayes import class_counts, clip_features

        clipped = clip_features(dataset, self.config.r_x)
        counts = class_counts(clipped).astype(float)
        return counts, clipped.n, clipped.n_classes, clipped.p

    def sample(self, prep, rng, m):
        counts, n, k, p = prep
        cfg = self.config
        half = PrivacyBudget(cfg.budget.epsilon / 2, cfg.budget.delta / 2)
        counts_scale = gaussian_noise_scale(_level(math.sqrt(2.0)), half)
        sums_scale = gaussian_noise_scale(_level(2.0 * math.sqrt(2.0) * cfg.r_x), half)
        # Matches noisy_stats_bayes draw order: counts noise, then sums noise
        # (the sums release feeds the means, which the value events ignore).
        noisy_counts = counts[None, :] + counts_scale * rng.standard_normal((m, k))
        _ = sums_scale * rng.standard_normal((m, k * p))
        floored = np.maximum(noisy_counts / n, cfg.c0)
        values = floored[:, 0] / floored.sum(axis=1)
        return np.ones(m, dtype=bool), values


class _GdBatch(BatchMechanism):
    name = "noisy_gd_simplified"

    def __init__(self, config: LinRegConfig, t_steps: int = 5, eta: float = 0.1):
        self.config = config
        self.t_steps = t_steps
        self.eta = eta

    def prepare(self, dataset: RegressionDataset) -> RegressionDataset:
        return dataset

    def sample(self, prep, rng, m):
        cfg = self.config
        clip_norm = 2.0 * cfg.r_x * (cfg.r_x * cfg.r_theta + cfg.r_x * cfg.r_theta)
        step_budget = PrivacyBudget(
            cfg.budget.epsilon / self.t_steps, cfg.budget.delta / self.t_steps
        )
        # replace-one sensitivity of the averaged clipped gradient
        scale = gaussian_noise_scale(_level(2.0 * clip_norm / prep.n), step_budget)
        theta = np.zeros((m, prep.p))
        for _ in range(self.t_steps):
            residuals = theta @ prep.x.T - prep.y[None, :]
            grads = residuals[:, :, None] * prep.x[None, :, :]
            norms = np.linalg.norm(grads, axis=2)
            factors = np.where(norms > clip_norm, clip_norm / np.maximum(norms, 1e-300), 1.0)
            avg = (grads * factors[:, :, None]).sum(axis=1) / prep.n
            noisy = avg + scale * rng.standard_normal((m, prep.p))
            theta = theta - self.eta * noisy
            norms_t = np.linalg.norm(theta, axis=1)
            shrink = np.where(
                norms_t > cfg.r_theta, cfg.r_theta / np.maximum(norms_t, 1e-300), 1.0
            )
            theta = theta * shrink[:, None]
        return np.ones(m, dtype=bool), theta[:, 0].copy()


class _RatioBatch(BatchMechanism):
    name = "noisy_ratio_simplified"

    def __init__(self, config: KernelRegConfig, kernel: RadialKernel):
        self.config = config
        self.kernel = kernel

    def prepare(self, dataset: RegressionDataset):
        y = np.clip(dataset.y, -self.config.r_f, self.config.r_f)
        w = kernel_weights(self.kernel, self.config.x0, dataset.x)
        return float(w @ y), float(w.sum()), dataset.n

    def sample(self, prep, rng, m):
        numerator, den, n = prep
        cfg, kernel = self.config, self.kernel
        unit = 2.0 * kernel.c_k * kernel.sigma ** (-float(kernel.dim))
        num_budget = PrivacyBudget(cfg.budget.epsilon / 2, cfg.budget.delta / 2)
        den_budget = num_budget
        num_scale = gaussian_noise_scale(_level(unit * cfg.r_f), num_budget)
        den_scale = gaussian_noise_scale(_level(unit), den_budget)
        # Matches noisy_ratio_kernel draw order: numerator noise, then degree noise.
        noisy_num = numerator + num_scale * rng.standard_normal(m)
        noisy_den = den + den_scale * rng.standard_normal(m)
        floored = np.maximum(noisy_den, cfg.c0 * n / 2.0)
        values = np.clip(noisy_num / floored, -cfg.r_f, cfg.r_f)
        return np.ones(m, dtype=bool), values


def _level(alpha: float):
    from .mechanisms import SensitivityLevel

    return SensitivityLevel(alpha)


# ---------------------------------------------------------------------------
# Standard audit fixtures
# ---------------------------------------------------------------------------


def audit_config(problem: str, budget: PrivacyBudget):
    """Small fixed configurations matching the adversarial pairs' scales."""
    if problem == "bayes":
        return BayesConfig(r_x=1.0, c0=0.1, budget=budget)
    if problem == "linreg":
        return LinRegConfig(r_x=1.0, r_theta=1.0, c0=0.1, budget=budget)
    if problem == "kernel":
        return KernelRegConfig(
            x0=np.array([0.5]), r_f=1.0, c0=0.1, sigma=0.5, budget=budget
        )
    raise ValueError(f"unknown problem {problem!r}")


def _bayes_value1(config: BayesConfig, n_classes: int = 2) -> Callable[[np.ndarray], np.ndarray]:
    def value1(matrix: np.ndarray) -> np.ndarray:
        # First coordinate of the floored, renormalized prior block.
        floored = np.maximum(matrix[:, :n_classes], config.c0)
        return floored[:, 0] / floored.sum(axis=1)

    return value1


def batch_mechanisms(problem: str, budget: PrivacyBudget) -> dict[str, BatchMechanism]:
    """The problem's gated mechanism and simplified baseline, in batch form."""
    config = audit_config(problem, budget)
    if problem == "bayes":
        return {
            "eptr_bayes": GatedBatch(
                "eptr_bayes",
                budget,
                lambda ds: bayes_adapter(config, ds.n),
                _bayes_value1(config),
            ),
            "noisy_stats_simplified": _StatsBayesBatch(config),
        }
    if problem == "linreg":
        return {
            "eptr_linreg": GatedBatch(
                "eptr_linreg", budget, lambda ds: linreg_adapter(config, ds.n)
            ),
            "noisy_gd_simplified": _GdBatch(config),
        }
    if problem == "kernel":
        kernel = gaussian_kernel(config.sigma, dim=1)
        return {
            "eptr_kernel": GatedBatch(
                "eptr_kernel", budget, lambda ds: kernel_adapter(config, kernel, ds.n)
            ),
            "noisy_ratio_simplified": _RatioBatch(config, kernel),
        }
    raise ValueError(f"unknown problem {problem!r}")


def broken_mechanism(budget: PrivacyBudget) -> BatchMechanism:
    """Deliberately unsafe gate: the count sub-distance inflated tenfold.

    The inflated statistic moves by up to 10 under one replacement, so the
    release probabilities on a boundary pair differ far more than the privacy
    inequality allows; the audit must flag it.
    """
    config = audit_config("bayes", budget)

    def builder(ds: LabeledDataset) -> EstimatorAdapter:
        good = bayes_adapter(config, ds.n)
        return EstimatorAdapter(
            estimate=good.estimate,
            gamma=lambda d: 10.0 * gamma_bayes(d, config.c0),
            alpha=good.alpha,
            bot=good.bot,
        )

    return GatedBatch("broken_lipschitz", budget, builder, _bayes_value1(config))


def _labeled(x_vals: list[float], labels: list[int]) -> LabeledDataset:
    return LabeledDataset(np.array(x_vals, dtype=float)[:, None], np.array(labels), 2)


def adversarial_pairs(problem: str) -> list[AdjacentPair]:
    """Hard adjacent pairs for the given problem, scaled to ``audit_config``.

    Each problem gets an atypical pair on which the non-private estimator is
    wildly unstable (the gate must hold the release probability near zero), a
    pair straddling the boundary where the sub-distance first turns positive,
    and a comfortably-releasing pair that exercises the released-value events.
    """
    if problem == "bayes":
        extreme_x = _labeled([1.0] + [0.0] * 19, [1] + [2] * 19)
        extreme_y = _labeled([-1.0] + [0.0] * 19, [1] + [2] * 19)
        bnd_x = _labeled([0.5] * 16 + [-0.5] * 4, [1] * 16 + [2] * 4)
        bnd_y = _labeled([0.5] * 16 + [-0.5] * 3 + [0.5], [1] * 16 + [2] * 3 + [1])
        rr_feats = [1.0] * 39 + [-1.0] * 38 + [-1.0] * 23
        rr_labels = [1] * 77 + [2] * 23
        rr_x = _labeled(rr_feats, rr_labels)
        rr_y = _labeled(rr_feats[:-1] + [1.0], rr_labels[:-1] + [1])
        return [
            AdjacentPair(extreme_x, extreme_y, "single-extreme-point"),
            AdjacentPair(bnd_x, bnd_y, "count-gate-boundary"),
            AdjacentPair(rr_x, rr_y, "release-region"),
        ]
    if problem == "linreg":
        def reg(xv, yv):
            return RegressionDataset(np.array(xv, dtype=float)[:, None], np.array(yv, dtype=float))

        u = 0.01
        atyp_x = reg([u] + [0.0] * 19, [1.0] + [0.0] * 19)
        atyp_y = reg([-u] + [0.0] * 19, [1.0] + [0.0] * 19)
        c = 0.389
        bnd_x = reg([c] * 40, [0.2] * 40)
        bnd_y = reg([0.0] + [c] * 39, [0.0] + [0.2] * 39)
        rr_x = reg([0.6] * 100, [0.3] * 100)
        rr_y = reg([0.6] * 100, [-0.3] + [0.3] * 99)
        return [
            AdjacentPair(atyp_x, atyp_y, "rank-deficient-flip"),
            AdjacentPair(bnd_x, bnd_y, "eigenvalue-gate-boundary"),
            AdjacentPair(rr_x, rr_y, "release-region"),
        ]
    if problem == "kernel":
        def reg(xv, yv):
            return RegressionDataset(np.array(xv, dtype=float)[:, None], np.array(yv, dtype=float))

        far = 6.5
        atyp_x = reg([far] * 20, [1.0] + [0.0] * 19)
        atyp_y = reg([0.5] + [far] * 19, [1.0] + [0.0] * 19)
        bnd_x = reg([0.5] * 8 + [far] * 32, [1.0] * 8 + [0.0] * 32)
        bnd_y = reg([0.5] * 7 + [far] * 33, [1.0] * 7 + [0.0] * 33)
        rr_x = reg([0.5] * 39 + [far] * 61, [0.5] * 39 + [0.0] * 61)
        rr_y = reg([0.5] * 39 + [far] * 61, [-0.5] + [0.5] * 38 + [0.0] * 61)
        return [
            AdjacentPair(atyp_x, atyp_y, "empty-neighborhood"),
            AdjacentPair(bnd_x, bnd_y, "degree-gate-boundary"),
            AdjacentPair(rr_x, rr_y, "release-region"),
        ]
    raise ValueError(f"unknown problem {problem!r}")
