"""Differentially private estimation behind an efficient propose-test-release gate.

The package gates classical estimators (naive-Bayes fitting, least squares,
pointwise kernel regression) behind a cheap 1-Lipschitz test statistic: when
the data sit comfortably inside a low-sensitivity region the noised estimate
is released, otherwise a null response comes back.  Simplified noisy
baselines, an empirical privacy auditor, and a reproducible Monte-Carlo
harness round out the toolkit.
"""

from .mechanisms import (
    AdapterFailure,
    BotPolicy,
    ContractViolation,
    EstimatorAdapter,
    InvalidProbability,
    PrivacyBudget,
    ReleaseOutcome,
    SensitivityLevel,
    compute_M,
    eptr_release,
    gaussian_release,
    project_ball,
    ptr_release,
    release_probability,
    substream,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterFailure",
    "BotPolicy",
    "ContractViolation",
    "EstimatorAdapter",
    "InvalidProbability",
    "PrivacyBudget",
    "ReleaseOutcome",
    "SensitivityLevel",
    "compute_M",
    "eptr_release",
    "gaussian_release",
    "project_ball",
    "ptr_release",
    "release_probability",
    "substream",
    "__version__",
]
