"""Command-line entry point.

Subcommands:

* ``sim``          run a Monte-Carlo sweep and write the results CSV;
* ``audit``        run the empirical privacy audit for one problem;
* ``release``      privatize a user-supplied CSV dataset once;
* ``kernel-build`` print higher-order kernel mixture coefficients.

Exit codes: 0 success, 1 audit failure, 2 usage or configuration error.
Every subcommand is deterministic given its full flag set including the seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import audit as audit_mod
from . import sim as sim_mod
from .bayes import BayesConfig, LabeledDataset, bayes_eptr
from .kernelreg import (
    KernelRegConfig,
    build_higher_order_kernel,
    gaussian_kernel,
    kernel_moment,
    kernel_moment_quadrature,
    nw_eptr,
)
from .linreg import LinRegConfig, RegressionDataset, linreg_eptr
from .mechanisms import PrivacyBudget, substream
from .sim import ConfigError

__all__ = ["main"]


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise ConfigError(f"bad numeric list {text!r}") from exc


def _cmd_sim(args: argparse.Namespace) -> int:
    doc: dict = {}
    if args.spec:
        try:
            with open(args.spec, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            return _fail(f"cannot read spec file: {exc}")
    if args.problem:
        doc["problem"] = args.problem
    if args.vary:
        doc["vary"] = args.vary
    if args.grid:
        doc["grid"] = _parse_float_list(args.grid)
    if args.preset:
        doc["reps"] = sim_mod.PRESET_REPS[args.preset]
    if args.reps is not None:
        doc["reps"] = args.reps
    if args.test_size is not None:
        doc["test_size"] = args.test_size
    if args.methods:
        doc["methods"] = [m for m in args.methods.split(",") if m]
    if args.seed is not None:
        doc["master_seed"] = args.seed
    fixed = dict(doc.get("fixed", {}))
    for key in ("n", "epsilon", "delta"):
        value = getattr(args, key)
        if value is not None:
            fixed[key] = value
    doc["fixed"] = fixed

    if "master_seed" not in doc:
        return _fail("--seed is required (or master_seed in the spec file)")
    if not args.out:
        return _fail("--out is required")
    spec = sim_mod.spec_from_dict(doc)
    rows = sim_mod.run_experiment(spec, threads=args.threads)
    sim_mod.write_rows(rows, args.out)

    for value in spec.grid:
        sweep_value = int(value) if spec.vary == "n" else float(value)
        subset = [r for r in rows if r.sweep_value == sweep_value]
        parts = []
        for method in spec.methods:
            mrows = [r for r in subset if r.method == method]
            metric = mrows[0].metric
            mean = float(np.mean([r.value for r in mrows if r.metric == metric]))
            parts.append(f"{method} {metric}={mean:.4g}")
        eptr_rows = [r for r in subset if r.method == "eptr"]
        if eptr_rows:
            frac = float(np.mean([r.released for r in eptr_rows]))
            parts.append(f"eptr released {100 * frac:.1f}%")
        print(f"{spec.problem} {spec.vary}={sweep_value}: " + "; ".join(parts))
    return 0


def _cmd_audit(args: argparse.Namespace) -> int:
    if args.trials < 10_000:
        return _fail(f"--trials must be at least 10000, got {args.trials}")
    budget = PrivacyBudget(args.epsilon, args.delta)
    pairs = audit_mod.adversarial_pairs(args.problem)
    if args.break_lipschitz:
        mechanisms = {"broken_lipschitz": audit_mod.broken_mechanism(budget)}
        if args.problem != "bayes":
            return _fail("--break-lipschitz is defined on the bayes pairs")
    else:
        mechanisms = audit_mod.batch_mechanisms(args.problem, budget)

    jobs = [
        (name, mech, pair)
        for name, mech in sorted(mechanisms.items())
        for pair in pairs
    ]

    def run_job(job):
        name, mech, pair = job
        return audit_mod.audit_mechanism(
            mech, pair, budget, args.trials, args.seed, name=name
        )

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            reports = list(pool.map(run_job, jobs))
    else:
        reports = [run_job(j) for j in jobs]
    reports.sort(key=lambda r: (r.mechanism, r.pair_description))

    audit_mod.write_reports_csv(reports, args.out)
    for report in reports:
        print(report.summary())
        print()
    failed = [r for r in reports if not r.passed]
    print(f"overall: {'FAIL' if failed else 'PASS'} ({len(reports)} reports)")
    return 1 if failed else 0


def _read_numeric_csv(path: str) -> np.ndarray:
    rows: list[list[float]] = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rows.append([float(v) for v in line.split(",")])
                except ValueError as exc:
                    raise ConfigError(f"line {line_no}: non-numeric field") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ConfigError("input CSV is empty")
    width = len(rows[0])
    if width < 2 or any(len(r) != width for r in rows):
        raise ConfigError("input CSV rows must all have the same width (>= 2 columns)")
    return np.array(rows, dtype=float)


def _cmd_release(args: argparse.Namespace) -> int:
    print(
        "warning: every invocation on the same data consumes additional "
        "privacy budget; budgets add up across releases",
        file=sys.stderr,
    )
    try:
        table = _read_numeric_csv(args.input)
    except ConfigError as exc:
        return _fail(str(exc))
    budget = PrivacyBudget(args.epsilon, args.delta)
    rng = substream(args.seed, 0)

    if args.problem == "bayes":
        labels = table[:, 0]
        if np.any(labels != np.round(labels)) or labels.min() < 1:
            return _fail("bayes labels must be integers starting at 1")
        y = labels.astype(np.int64)
        data = LabeledDataset(table[:, 1:], y, int(y.max()))
        config = BayesConfig(args.r_x, args.c0, budget)
        outcome = bayes_eptr(data, config, rng)
        if not outcome.released:
            print("BOT")
            return 0
        params = outcome.value
        values = np.concatenate([params.mu, params.m.ravel()])
    elif args.problem == "linreg":
        data = RegressionDataset(table[:, 1:], table[:, 0])
        config = LinRegConfig(args.r_x, args.r_theta, args.c0, budget)
        outcome = linreg_eptr(data, config, rng)
        if not outcome.released:
            print("BOT")
            return 0
        values = np.asarray(outcome.value)
    elif args.problem == "kernel":
        if table.shape[1] != 2:
            return _fail("kernel CSV must have exactly two columns: y,x")
        data = RegressionDataset(table[:, 1:], table[:, 0])
        sigma = args.sigma if args.sigma is not None else 0.2 * data.n ** (-0.2)
        kernel = gaussian_kernel(sigma, dim=1)
        config = KernelRegConfig(np.array([args.x0]), args.r_f, args.c0, sigma, budget)
        outcome = nw_eptr(data, config, kernel, rng)
        if not outcome.released:
            print("BOT")
            return 0
        values = np.array([outcome.value])
    else:  # pragma: no cover - argparse restricts choices
        return _fail(f"unknown problem {args.problem!r}")

    print(",".join(repr(float(v)) for v in values))
    return 0


def _cmd_kernel_build(args: argparse.Namespace) -> int:
    if not (1 <= args.order <= 12):
        return _fail(f"--order must be in 1..12, got {args.order}")
    kernel = build_higher_order_kernel(args.order, args.sigma, args.dim)
    coeffs = ",".join(
        np.format_float_positional(a, precision=12, unique=False, fractional=False)
        for a in kernel.weights
    )
    print(coeffs)
    print("j,closed_form,quadrature")
    for j in range(0, 2 * args.order):
        closed = kernel_moment(kernel, j)
        quad = kernel_moment_quadrature(kernel, j)
        print(f"{j},{closed!r},{quad!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eptr",
        description="Gated differentially private estimation: simulations, audits, releases.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("sim", help="run a Monte-Carlo sweep, write a results CSV")
    p_sim.add_argument("--spec", help="JSON experiment spec (flags override its values)")
    p_sim.add_argument("--problem", choices=("bayes", "linreg", "kernel"))
    p_sim.add_argument("--vary", choices=("epsilon", "n", "pi_min", "a"))
    p_sim.add_argument("--grid", help="comma-separated sweep values")
    p_sim.add_argument("--n", type=int, help="fixed training-set size")
    p_sim.add_argument("--epsilon", type=float, help="fixed privacy-loss bound")
    p_sim.add_argument("--delta", type=float, help="privacy failure probability")
    p_sim.add_argument(
        "--preset", choices=tuple(sim_mod.PRESET_REPS),
        help="replication preset: paper (500) or ci (100); --reps overrides",
    )
    p_sim.add_argument("--reps", type=int, help="Monte-Carlo replications per grid point")
    p_sim.add_argument("--test-size", type=int, dest="test_size")
    p_sim.add_argument("--methods", help="comma-separated method subset")
    p_sim.add_argument("--seed", type=int, help="master seed (required)")
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.add_argument("--threads", type=int, default=1)
    p_sim.set_defaults(func=_cmd_sim)

    p_audit = sub.add_parser("audit", help="empirically audit the privacy guarantee")
    p_audit.add_argument("--problem", required=True, choices=("bayes", "linreg", "kernel"))
    p_audit.add_argument("--epsilon", type=float, default=1.0)
    p_audit.add_argument("--delta", type=float, default=0.01)
    p_audit.add_argument("--trials", type=int, default=200_000)
    p_audit.add_argument("--seed", type=int, required=True)
    p_audit.add_argument("--out", required=True, help="report CSV path")
    p_audit.add_argument("--threads", type=int, default=1)
    p_audit.add_argument(
        "--break-lipschitz",
        action="store_true",
        help="audit a deliberately unsafe gate instead (expected to FAIL)",
    )
    p_audit.set_defaults(func=_cmd_audit)

    p_rel = sub.add_parser("release", help="privatize one estimate from a CSV dataset")
    p_rel.add_argument("--problem", required=True, choices=("bayes", "linreg", "kernel"))
    p_rel.add_argument("--input", required=True, help="CSV: bayes=label,x1..xp; linreg=y,x1..xp; kernel=y,x")
    p_rel.add_argument("--seed", type=int, required=True)
    p_rel.add_argument("--epsilon", type=float, default=1.0)
    p_rel.add_argument("--delta", type=float, default=0.01)
    p_rel.add_argument("--r-x", type=float, default=4.0, dest="r_x")
    p_rel.add_argument("--r-theta", type=float, default=1.0, dest="r_theta")
    p_rel.add_argument("--c0", type=float, default=0.1)
    p_rel.add_argument("--x0", type=float, default=0.5)
    p_rel.add_argument("--sigma", type=float, default=None)
    p_rel.add_argument("--r-f", type=float, default=2.0, dest="r_f")
    p_rel.set_defaults(func=_cmd_release)

    p_kb = sub.add_parser("kernel-build", help="print higher-order kernel coefficients")
    p_kb.add_argument("--order", type=int, required=True, help="mixture size s (1..12)")
    p_kb.add_argument("--sigma", type=float, default=1.0)
    p_kb.add_argument("--dim", type=int, default=1)
    p_kb.set_defaults(func=_cmd_kernel_build)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(str(exc))
    except ValueError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
