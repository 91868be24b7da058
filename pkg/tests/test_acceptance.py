"""Acceptance suite: one test per criterion, one printed verdict line each.

Run with ``pytest -s tests/test_acceptance.py`` to see the verdict lines.
Statistical criteria use fixed seeds; frozen tolerances are module constants.
"""

import hashlib
import math
from contextlib import contextmanager

import numpy as np

from eptr.audit import (
    GatedBatch,
    adversarial_pairs,
    audit_mechanism,
    batch_mechanisms,
    broken_mechanism,
)
from eptr.bayes import BayesConfig, alpha_bayes, bayes_adapter, gamma_bayes
from eptr.cli import main as cli_main
from eptr.kernelreg import (
    KernelRegConfig,
    alpha_kernel,
    build_higher_order_kernel,
    gamma_kernel,
    gaussian_kernel,
    kernel_adapter,
    kernel_moment,
    kernel_moment_quadrature,
)
from eptr.linreg import (
    LinRegConfig,
    alpha_ols,
    clip_xy,
    gamma_ols,
    linreg_adapter,
    local_sensitivity_oracle,
)
from eptr.mechanisms import (
    PrivacyBudget,
    compute_M,
    project_ball,
    ptr_pass_probability,
    release_probability,
    substream,
)
from eptr.sim import gen_bayes, gen_kernel, gen_linreg, make_spec, run_experiment

MASTER_SEED = 20260809

# Frozen from the pre-build pilot at the acceptance seed (observed medians:
# gated kernel release 0.117, non-private 0.0023); generous regression margin.
KERNEL_PILOT_TOLERANCE = 0.25
KERNEL_NONPRIVATE_TOLERANCE = 0.02


@contextmanager
def criterion(cid: str, description: str):
    try:
        yield
    except BaseException:
        print(f"[acceptance] {cid} FAIL - {description}")
        raise
    print(f"[acceptance] {cid} PASS - {description}")


def ball_point(rng, radius, dim):
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    return direction * radius * rng.random() ** (1.0 / dim)


def test_A1_closed_form_constants():
    with criterion("A1", "closed-form constants and branch continuity"):
        budget = PrivacyBudget(1.0, 0.01)
        assert abs(compute_M(budget) - 10.210340) <= 1e-6
        assert release_probability(compute_M(budget), budget) == 0.5
        for eps, delta in [(1.0, 0.01), (2.0, 0.05), (0.5, 0.001)]:
            b = PrivacyBudget(eps, delta)
            boundary = (2.0 / eps) * math.log(1.0 / delta)
            assert abs(ptr_pass_probability(boundary, b) - 0.5) <= 1e-12
            eps_lo = ptr_pass_probability(np.nextafter(boundary, -np.inf), b)
            eps_hi = ptr_pass_probability(np.nextafter(boundary, np.inf), b)
            assert abs(eps_lo - eps_hi) <= 1e-12


def test_A2_gamma_lipschitz_suite():
    with criterion("A2", "sub-distance 1-Lipschitz over 1000 adjacent pairs per adapter"):
        budget = PrivacyBudget(1.0, 0.01)
        rng = substream(MASTER_SEED, 2)

        bconfig = BayesConfig(4.0, 0.05, budget)
        bdata = gen_bayes(500, 3, 4, np.array([0.5, 0.3, 0.2]), np.zeros((3, 4)), rng)
        base = gamma_bayes(bdata, bconfig.c0)
        for _ in range(1000):
            idx = int(rng.integers(bdata.n))
            other = bdata.replace(idx, ball_point(rng, bconfig.r_x, 4), int(rng.integers(1, 4)))
            assert abs(gamma_bayes(other, bconfig.c0) - base) <= 1.0 + 1e-12

        lconfig = LinRegConfig(3.0, 1.0, 0.1, budget)
        ldata = clip_xy(gen_linreg(300, 3, np.zeros(3), 1.0, rng), 3.0, 1.0)
        base = gamma_ols(ldata, lconfig)
        r_y = lconfig.r_x * lconfig.r_theta
        for _ in range(1000):
            idx = int(rng.integers(ldata.n))
            other = ldata.replace(idx, ball_point(rng, lconfig.r_x, 3), rng.uniform(-r_y, r_y))
            assert abs(gamma_ols(other, lconfig) - base) <= 1.0 + 1e-12

        sigma = 0.1
        kernel = gaussian_kernel(sigma, 1)
        kconfig = KernelRegConfig(np.array([0.5]), 2.0, 0.1, sigma, budget)
        kdata = gen_kernel(1000, "uniform", 0.2, rng)
        base = gamma_kernel(kdata, kconfig, kernel)
        for _ in range(1000):
            idx = int(rng.integers(kdata.n))
            other = kdata.replace(idx, np.array([rng.uniform(0, 1)]), rng.uniform(-2, 2))
            assert abs(gamma_kernel(other, kconfig, kernel) - base) <= 1.0 + 1e-12


def test_A3_sensitivity_gate():
    with criterion("A3", "sampled replace-one sensitivity never exceeds alpha when the gate is open"):
        budget = PrivacyBudget(1.0, 0.01)
        rng = substream(MASTER_SEED, 3)

        # classifier: label x 26-point feature grid per sampled record
        config = BayesConfig(4.0, 0.05, budget)
        r = config.r_x
        p = 10
        corners = [sign * r * np.eye(p)[j] for j in range(p) for sign in (1.0, -1.0)]
        diag = r / math.sqrt(p) * np.ones(p)
        fixed = corners + [np.zeros(p), diag, -diag]
        extra = [ball_point(substream(MASTER_SEED, 3, 1, i), r, p) for i in range(3)]
        candidates = fixed + extra
        assert len(candidates) == 26
        checked = 0
        while checked < 50:
            data = gen_bayes(
                400, 3, p, np.array([0.5, 0.3, 0.2]), 3.0 * np.eye(3, p),
                substream(MASTER_SEED, 3, 2, checked),
            )
            if gamma_bayes(data, config.c0) <= 0:
                continue
            adapter = bayes_adapter(config, data.n)
            alpha = alpha_bayes(data.n, config).alpha
            base = adapter.estimate(data)
            for idx in rng.integers(0, data.n, size=8):
                for label in (1, 2, 3):
                    for cand in candidates:
                        moved = adapter.estimate(data.replace(int(idx), cand, label))
                        assert float(np.linalg.norm(base - moved)) <= alpha
            checked += 1

        # least squares: brute-force oracle
        config_l = LinRegConfig(3.0, 1.0, 0.1, budget)
        checked = 0
        attempt = 0
        while checked < 50:
            raw = gen_linreg(120, 3, np.zeros(3), 1.0, substream(MASTER_SEED, 3, 3, attempt))
            attempt += 1
            data = clip_xy(raw, config_l.r_x, config_l.r_theta)
            if gamma_ols(data, config_l) <= 0:
                continue
            oracle = local_sensitivity_oracle(data, config_l, grid_resolution=5)
            assert oracle <= alpha_ols(data.n, config_l).alpha
            checked += 1

        # kernel ratio: 200 replacement candidates per sampled record
        sigma = 0.2 * 300 ** (-0.2)
        kernel = gaussian_kernel(sigma, 1)
        config_k = KernelRegConfig(np.array([0.5]), 2.0, 0.1, sigma, budget)
        x_grid = np.linspace(0.0, 1.0, 100)
        checked = 0
        while checked < 50:
            data = gen_kernel(300, "uniform", 0.2, substream(MASTER_SEED, 3, 4, checked))
            if gamma_kernel(data, config_k, kernel) <= 0:
                continue
            adapter = kernel_adapter(config_k, kernel, data.n)
            alpha = alpha_kernel(data.n, config_k, kernel).alpha
            base = float(adapter.estimate(data)[0])
            for idx in rng.integers(0, data.n, size=10):
                for xc in x_grid:
                    for yc in (-config_k.r_f, config_k.r_f):
                        moved = float(
                            adapter.estimate(data.replace(int(idx), np.array([xc]), yc))[0]
                        )
                        assert abs(base - moved) <= alpha
            checked += 1


def test_A4_projection_contraction():
    with criterion("A4", "projection contraction bound over 1e4 pairs at three scales"):
        rng = substream(MASTER_SEED, 4)
        for radius in (0.1, 1.0, 10.0):
            for _ in range(10_000):
                v = rng.standard_normal(3) * rng.uniform(0, 4 * radius)
                v_prime = v + rng.standard_normal(3) * rng.uniform(0, 2 * radius)
                lhs = float(np.linalg.norm(project_ball(v, radius) - project_ball(v_prime, radius)))
                factor = 2.0 / max(float(np.linalg.norm(v)) / radius, 1.0)
                assert lhs <= factor * float(np.linalg.norm(v - v_prime)) + 1e-12


def test_A5_privacy_audit():
    with criterion(
        "A5",
        "no audit FAIL for any real mechanism; the 10-Lipschitz gate FAILs, "
        "2e5 trials at eps in {0.5, 1, 2}",
    ):
        trials = 200_000
        for eps in (0.5, 1.0, 2.0):
            budget = PrivacyBudget(eps, 0.01)
            for problem in ("bayes", "linreg", "kernel"):
                pairs = adversarial_pairs(problem)
                for name, mech in batch_mechanisms(problem, budget).items():
                    for pair in pairs:
                        report = audit_mechanism(
                            mech, pair, budget, trials, MASTER_SEED, name=name
                        )
                        assert report.passed, report.summary()
            broken_reports = [
                audit_mechanism(broken_mechanism(budget), pair, budget, trials, MASTER_SEED)
                for pair in adversarial_pairs("bayes")
            ]
            assert any(not r.passed for r in broken_reports)


def test_A6_kernel_construction():
    with criterion("A6", "higher-order mixtures: exact coefficients and vanishing moments"):
        two = build_higher_order_kernel(2, 1.0, 1)
        assert abs(two.weights[0] - 4.0 / 3.0) <= 1e-10
        assert abs(two.weights[1] + 1.0 / 3.0) <= 1e-10
        assert abs(kernel_moment(two, 4) + 12.0) <= 1e-6
        assert abs(kernel_moment_quadrature(two, 4) + 12.0) <= 1e-6
        for s in (1, 2, 3, 4):
            kernel = build_higher_order_kernel(s, 1.0, 1)
            assert abs(kernel_moment(kernel, 0) - 1.0) <= 1e-10
            for j in range(1, 2 * s):
                assert abs(kernel_moment_quadrature(kernel, j)) < 1e-8


def test_A7_statistical_rates():
    with criterion("A7", "desk-scale statistical rates at 100 reps"):
        # (a) least squares over n at eps = 2
        spec = make_spec(
            "linreg", "n", grid=[500, 1000, 2000, 4000], reps=100,
            test_size=100_000, master_seed=MASTER_SEED,
        )
        rows = run_experiment(spec, threads=4)

        def medians(rows, method, metric="param_error"):
            out = {}
            for row in rows:
                if row.method == method and row.metric == metric:
                    out.setdefault(row.sweep_value, []).append(row.value)
            return {k: float(np.median(v)) for k, v in out.items()}

        gated = medians(rows, "eptr")
        assert gated[2000] < gated[500]  # strict decrease over {500, 2000}
        assert gated[500] >= gated[1000] >= gated[2000] >= gated[4000]
        nonpriv = [
            r.value
            for r in rows
            if r.method == "nonprivate" and r.metric == "param_error" and r.sweep_value == 2000
        ]
        mean_err = float(np.mean(nonpriv))
        assert 0.5 * 5 / 2000 <= mean_err <= 2.0 * 5 / 2000

        # (b) classifier over eps at n = 2000
        spec_b = make_spec(
            "bayes", "epsilon", grid=[0.5, 2.0, 8.0], reps=100,
            test_size=100_000, master_seed=MASTER_SEED,
        )
        rows_b = run_experiment(spec_b, threads=4)
        gated_b = medians(rows_b, "eptr", metric="balanced_error")
        nonpriv_b = medians(rows_b, "nonprivate", metric="balanced_error")
        assert abs(gated_b[8.0] - nonpriv_b[8.0]) <= 0.02
        assert gated_b[8.0] <= gated_b[2.0] <= gated_b[0.5]

        # (c) kernel pointwise error at n = 5000 against the pilot tolerance
        spec_k = make_spec(
            "kernel", "epsilon", grid=[0.5, 2.0, 8.0], reps=100, test_size=100,
            master_seed=MASTER_SEED,
        )
        rows_k = run_experiment(spec_k, threads=4)
        gated_k = [r.value for r in rows_k if r.method == "eptr" and r.sweep_value == 2.0]
        nonpriv_k = [
            r.value for r in rows_k if r.method == "nonprivate" and r.sweep_value == 2.0
        ]
        assert float(np.median(gated_k)) <= KERNEL_PILOT_TOLERANCE
        assert float(np.median(nonpriv_k)) <= KERNEL_NONPRIVATE_TOLERANCE

        # mean metric improves from the smallest to the largest budget on the grid
        spec_l = make_spec(
            "linreg", "epsilon", grid=[0.5, 8.0], reps=100, test_size=1000,
            master_seed=MASTER_SEED, methods=["eptr"],
        )
        rows_l = run_experiment(spec_l, threads=4)

        def mean_at(rows, eps, metric):
            return float(np.mean([
                r.value for r in rows
                if r.method == "eptr" and r.sweep_value == eps and r.metric == metric
            ]))

        assert mean_at(rows_l, 8.0, "param_error") <= mean_at(rows_l, 0.5, "param_error")
        assert mean_at(rows_k, 8.0, "sq_error_x0") <= mean_at(rows_k, 0.5, "sq_error_x0")
        gated_means_b = {
            eps: float(np.mean([
                r.value for r in rows_b if r.method == "eptr" and r.sweep_value == eps
            ]))
            for eps in (0.5, 8.0)
        }
        assert gated_means_b[8.0] <= gated_means_b[0.5]


def test_A8_release_probability_behavior():
    with criterion(
        "A8", "release fraction >= 0.99 at default configurations, <= 0.0075 on gate-closed data"
    ):
        trials_per_dataset = 20_000

        def release_fraction(batch, datasets, budget):
            released = 0
            for j, data in enumerate(datasets):
                prep = batch.prepare(data)
                for block in range(trials_per_dataset // 10_000):
                    rel, _ = batch.sample(
                        prep, substream(MASTER_SEED, 8, j, block), 10_000
                    )
                    released += int(rel.sum())
            return released / (trials_per_dataset * len(datasets))

        # comfortable defaults: five datasets x 2e4 trials = 1e5 trials each problem
        budget_b = PrivacyBudget(1.0, 0.01)
        config_b = BayesConfig(8.0, 0.05, budget_b)
        data_b = [
            gen_bayes(2000, 3, 10, np.array([0.75, 0.15, 0.10]), 3.0 * np.eye(3, 10),
                      substream(MASTER_SEED, 8, 10, i))
            for i in range(5)
        ]
        batch_b = GatedBatch("bayes", budget_b, lambda ds: bayes_adapter(config_b, ds.n))
        assert release_fraction(batch_b, data_b, budget_b) >= 0.99

        budget_l = PrivacyBudget(2.0, 0.01)
        config_l = LinRegConfig(4.0, 1.0, 0.25, budget_l)
        theta = np.zeros(5)
        data_l = [
            gen_linreg(2000, 5, theta, 1.0, substream(MASTER_SEED, 8, 11, i))
            for i in range(5)
        ]
        batch_l = GatedBatch("linreg", budget_l, lambda ds: linreg_adapter(config_l, ds.n))
        assert release_fraction(batch_l, data_l, budget_l) >= 0.99

        budget_k = PrivacyBudget(1.0, 0.01)
        sigma = 0.2 * 5000 ** (-0.2)
        config_k = KernelRegConfig(np.array([0.5]), 2.0, 0.1, sigma, budget_k)
        kern = gaussian_kernel(sigma, 1)
        data_k = [
            gen_kernel(5000, "uniform", 0.2, substream(MASTER_SEED, 8, 12, i))
            for i in range(5)
        ]
        batch_k = GatedBatch("kernel", budget_k, lambda ds: kernel_adapter(config_k, kern, ds.n))
        assert release_fraction(batch_k, data_k, budget_k) >= 0.99

        # gate closed: the atypical adversarial datasets, 1e5 trials each
        budget = PrivacyBudget(1.0, 0.01)
        for problem in ("bayes", "linreg", "kernel"):
            pair = adversarial_pairs(problem)[0]
            mech = [m for name, m in batch_mechanisms(problem, budget).items() if "eptr" in name][0]
            prep = mech.prepare(pair.x)
            released = 0
            for block in range(10):
                rel, _ = mech.sample(prep, substream(MASTER_SEED, 8, 13, block), 10_000)
                released += int(rel.sum())
            assert released / 100_000 <= 0.0075


def test_A9_determinism(tmp_path, capsys):
    with criterion("A9", "byte-identical outputs across reruns and thread counts {1, 4}"):
        def sha(path):
            return hashlib.sha256(path.read_bytes()).hexdigest()

        sim_out = []
        for i, threads in enumerate((1, 4, 1)):
            out = tmp_path / f"sim{i}.csv"
            code = cli_main([
                "sim", "--problem", "bayes", "--vary", "epsilon", "--grid", "1,4",
                "--n", "400", "--reps", "3", "--test-size", "500",
                "--seed", "77", "--threads", str(threads), "--out", str(out),
            ])
            assert code == 0
            sim_out.append(sha(out))
        assert len(set(sim_out)) == 1

        audit_out = []
        for i, threads in enumerate((1, 4)):
            out = tmp_path / f"audit{i}.csv"
            code = cli_main([
                "audit", "--problem", "linreg", "--trials", "10000", "--seed", "77",
                "--threads", str(threads), "--out", str(out),
            ])
            assert code == 0
            audit_out.append(sha(out))
        assert len(set(audit_out)) == 1

        csv = tmp_path / "data.csv"
        rng = substream(77, 0)
        x = np.where(rng.random(200) < 0.5, -1.0, 1.0)
        y = 0.5 * x + 0.1 * rng.standard_normal(200)
        csv.write_text("\n".join(f"{float(a)!r},{float(b)!r}" for a, b in zip(y, x)))
        capsys.readouterr()  # drain the sim/audit output first
        outputs = []
        for _ in range(2):
            code = cli_main([
                "release", "--problem", "linreg", "--input", str(csv),
                "--seed", "5", "--r-x", "1.5", "--c0", "0.2",
            ])
            assert code == 0
            outputs.append(capsys.readouterr().out)
        assert outputs[0] == outputs[1]
