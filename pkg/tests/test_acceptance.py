"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with the measured quantities.  Scaled Monte-Carlo checks run
at the desk-scale defaults; tolerances are fixed here, not tuned elsewhere."""

import time

import numpy as np
import pytest

from ris_alloc.channel import (
    RisConfig,
    SystemConstants,
    generate_scenario,
    noise_power,
    sample_fading,
)
from ris_alloc.estimation import (
    build_stacked_system,
    estimate_ls,
    generate_pilot_book,
    generate_training_configs,
    nmse,
    simulate_training,
)
from ris_alloc.harness import ExperimentConfig, run_experiment
from ris_alloc.multi_user import (
    RisConfig as _RisConfig,
    allocate,
    associate_users,
    grad_g,
    objective_g,
    optimize_phases,
    optimize_powers,
    a_coefficients,
    uniform_powers,
)
from ris_alloc.single_user import optimize_am


def report(name, passed, detail):
    print(f"ACCEPTANCE {name}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, f"{name}: {detail}"


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_mu_instance(rng, k, n_r, jt, n_b=3):
    cascade = crandn(rng, 2, k, n_b, n_r)
    direct = crandn(rng, 2, k, n_b)
    assoc = np.zeros((2, k), dtype=int)
    assoc[rng.integers(0, 2, k), np.arange(k)] = 1
    if jt:
        assoc[:, rng.integers(0, k)] = 1
    powers = uniform_powers(assoc, [1.0, 1.0])
    return cascade, direct, assoc, powers


def test_noiseless_ls_exactness():
    start = time.time()
    c = SystemConstants(bs_antennas=4, ris_elements=8, users=2)
    scenario = generate_scenario(c, 0)
    channels = sample_fading(scenario, c, np.random.default_rng(1))
    pilots = generate_pilot_book(2, 2, 0.1)
    configs = generate_training_configs(8, 9, 1.0)
    worst = 0.0
    for bs in (0, 1):
        obs = simulate_training(channels, pilots, configs, 0.0,
                                np.random.default_rng(2), bs=bs)
        est = estimate_ls(build_stacked_system(obs, pilots))
        worst = max(worst, nmse(channels, bs, est))
    elapsed = time.time() - start
    report("noiseless-ls-exactness", worst < 1e-10 and elapsed < 1.0,
           f"worst NMSE {worst:.3e}, {elapsed:.2f}s")


def test_estimator_ordering():
    start = time.time()
    cfg = ExperimentConfig(experiment="nmse-vs-nr", trials=200, seed=2,
                           n_r_list=(16,))
    table = run_experiment(cfg)
    means = {est: float(np.mean(table.samples("nmse", estimator=est)))
             for est in ("LS", "MMSE1", "MMSEQ")}
    elapsed = time.time() - start
    ok = means["MMSEQ"] < means["MMSE1"] and means["MMSEQ"] < means["LS"]
    report("estimator-ordering", ok and elapsed < 60.0,
           f"mean NMSE LS {means['LS']:.3g}, MMSE1 {means['MMSE1']:.3g}, "
           f"MMSEQ {means['MMSEQ']:.3g}, {elapsed:.1f}s")


def test_single_user_nr_gain():
    start = time.time()
    cfg = ExperimentConfig(experiment="su-vs-nr", trials=100, seed=11,
                           bs_antennas=64, n_r_list=(8, 128), methods=("am",))
    table = run_experiment(cfg)
    lo = np.mean(table.samples("snr_db", method="am", n_r=8))
    hi = np.mean(table.samples("snr_db", method="am", n_r=128))
    gain = float(hi - lo)
    elapsed = time.time() - start
    report("single-user-nr-gain", 12.0 <= gain <= 18.0 and elapsed < 600.0,
           f"average SNR gain 8->128 elements: {gain:.2f} dB, {elapsed:.1f}s")


def test_optimization_ordering():
    start = time.time()
    cfg = ExperimentConfig(experiment="su-cdf", trials=200, seed=3)
    table = run_experiment(cfg)
    med = {m: float(np.median(table.samples("snr_db", method=m)))
           for m in ("am", "cf-ub", "cf-lb", "no-opt")}
    gaps = {m: med[m] - med["no-opt"] for m in ("am", "cf-ub", "cf-lb")}
    elapsed = time.time() - start
    ok = med["am"] >= med["cf-lb"] and all(g >= 3.0 for g in gaps.values())
    report("optimization-ordering", ok and elapsed < 60.0,
           "median gains over random phases: "
           + ", ".join(f"{m} {g:.2f} dB" for m, g in gaps.items())
           + f", {elapsed:.1f}s")


def test_gradient_oracle():
    start = time.time()
    rng = np.random.default_rng(13)
    worst = 0.0
    count = 0
    while count < 100:
        for k in (1, 2, 4):
            for n_r in (2, 8, 16):
                for jt in (False, True):
                    if jt and k == 1:
                        continue
                    cascade, direct, assoc, powers = random_mu_instance(rng, k, n_r, jt)
                    phases = rng.uniform(-np.pi, np.pi, n_r)
                    noise_var = 0.3
                    cfg = _RisConfig(1.0, phases)
                    analytic = grad_g(cfg, cascade, direct, powers, assoc, noise_var)
                    fd = np.zeros(n_r)
                    for n in range(n_r):
                        up, down = phases.copy(), phases.copy()
                        up[n] += 1e-6
                        down[n] -= 1e-6
                        fd[n] = (objective_g(_RisConfig(1.0, up), cascade, direct,
                                             powers, assoc, noise_var)
                                 - objective_g(_RisConfig(1.0, down), cascade, direct,
                                               powers, assoc, noise_var)) / 2e-6
                    err = np.max(np.abs(analytic - fd)) / (1.0 + np.max(np.abs(analytic)))
                    worst = max(worst, err)
                    count += 1
    elapsed = time.time() - start
    report("gradient-oracle", worst < 1e-5 and elapsed < 60.0,
           f"{count} instances, worst relative error {worst:.2e}, {elapsed:.1f}s")


def test_monotonicity_suite():
    start = time.time()
    rng = np.random.default_rng(21)
    worst_drop = 0.0
    for _ in range(50):
        k = int(rng.integers(2, 4))
        n_r = 6
        cascade, direct, assoc, powers = random_mu_instance(rng, k, n_r, jt=True)
        noise_var = 0.2

        sol = optimize_am(cascade[0, 0], direct[0, 0], 1.0)
        worst_drop = max(worst_drop, float(np.max(-np.diff(sol.trace), initial=0.0)))

        _, g_trace = optimize_phases(_RisConfig(1.0, rng.uniform(-np.pi, np.pi, n_r)),
                                     cascade, direct, powers, assoc, noise_var)
        worst_drop = max(worst_drop, float(np.max(-np.diff(g_trace), initial=0.0)))

        a = a_coefficients(cascade, direct, _RisConfig(1.0, np.zeros(n_r)))
        _, p_trace = optimize_powers(powers, a, assoc, [1.0, 1.0], noise_var)
        worst_drop = max(worst_drop, float(np.max(-np.diff(p_trace), initial=0.0)))

        res = allocate(cascade, direct, assoc, [1.0, 1.0], noise_var)
        worst_drop = max(worst_drop, float(np.max(-np.diff(res.trace), initial=0.0)))
    elapsed = time.time() - start
    report("monotonicity-suite", worst_drop <= 1e-9,
           f"50 instances x 4 traces, worst decrease {worst_drop:.2e}, {elapsed:.1f}s")


def test_multi_user_ordering():
    start = time.time()
    cfg = ExperimentConfig(experiment="mu-cdf", trials=100, seed=5, p_jt=(0.25,))
    table = run_experiment(cfg)
    med = {m: float(np.median(table.samples("gm_sinr_db", method=m)))
           for m in ("joint", "only-ris", "only-powers", "no-opt")}
    elapsed = time.time() - start
    ok = (med["joint"] >= med["only-ris"] >= med["no-opt"]
          and med["joint"] >= med["only-powers"] >= med["no-opt"])
    report("multi-user-ordering", ok and elapsed < 600.0,
           "median gm-SINR dB: "
           + ", ".join(f"{m} {v:.2f}" for m, v in med.items()) + f", {elapsed:.0f}s")


def test_random_ris_degradation():
    start = time.time()
    cfg = ExperimentConfig(experiment="mu-sinr-vs-nr", trials=300, seed=8,
                           n_r_list=(8, 64), methods=("no-opt",))
    table = run_experiment(cfg)
    small = float(np.mean(table.samples("sinr_db", method="no-opt", n_r=8)))
    large = float(np.mean(table.samples("sinr_db", method="no-opt", n_r=64)))
    elapsed = time.time() - start
    report("random-ris-degradation", large <= small + 0.5,
           f"average SINR {small:.2f} dB at 8 elements vs {large:.2f} dB at 64, "
           f"{elapsed:.1f}s")


def test_small_instance_global_optimum():
    start = time.time()
    rng = np.random.default_rng(77)
    grid = np.linspace(-np.pi, np.pi, 72, endpoint=False)
    p1, p2 = np.meshgrid(grid, grid, indexing="ij")
    phase_grid = np.exp(1j * np.stack([p1.ravel(), p2.ravel()]))
    worst = -np.inf
    for _ in range(50):
        cascade = crandn(rng, 2, 2)
        direct = crandn(rng, 2)
        comp = cascade @ phase_grid + direct[:, None]
        best = np.max(np.sum(np.abs(comp) ** 2, axis=0))

        am = optimize_am(cascade, direct, 1.0)
        gap_am = 10.0 * np.log10(best / am.objective)

        cascade4 = np.zeros((2, 1, 2, 2), dtype=complex)
        direct4 = np.zeros((2, 1, 2), dtype=complex)
        cascade4[0, 0], direct4[0, 0] = cascade, direct
        assoc = np.array([[1], [0]])
        powers = np.array([[1.0], [0.0]])
        _, trace = optimize_phases(_RisConfig(1.0, np.zeros(2)), cascade4, direct4,
                                   powers, assoc, 1.0)
        gap_grad = 10.0 * np.log10(best / 2.0 ** trace[-1])
        worst = max(worst, gap_am, gap_grad)
    elapsed = time.time() - start
    report("small-instance-global", worst < 0.1,
           f"worst gap to 72x72 grid optimum {worst:.4f} dB over 50 instances, "
           f"{elapsed:.1f}s")
