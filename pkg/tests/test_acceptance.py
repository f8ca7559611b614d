"""Acceptance criteria 1-10 at the stated sizes and tolerances.

Each test prints one ``criterion N: PASS|FAIL`` line; the lines are repeated
in the terminal summary.
"""
import time
from dataclasses import replace

import numpy as np
import pytest

from hjm_longterm.cli import main
from hjm_longterm.config import LONGBOND_CONDITION, apply_overrides, load_config, validate
from hjm_longterm.curve_space import ExponentialWeight, PowerWeight, long_forward_rate
from hjm_longterm.diagnostics import l1_convergence, lemma_suite, simulate, weak_error_study
from hjm_longterm.hjm_engine import EulerMaruyama, ExactGaussian, HJMEngine
from hjm_longterm.measures import P
from hjm_longterm.montecarlo import Model, simulate_paths
from hjm_longterm.vasicek import forward_curve_Q_values, params_with_curve, VasicekParams, vasicek_initial_curve
from hjm_longterm.vol_model import ConstantMPR, DeterministicVol

from conftest import scenario_path

SIGMA, KAPPA, THETA_Q, R0, GAMMA = 0.02, 0.5, 0.05, 0.02, 0.2


@pytest.fixture(scope="module")
def scalar_cfg():
    return load_config(scenario_path("scalar_gaussian"))


@pytest.fixture(scope="module")
def martingale_run(scalar_cfg):
    cfg = apply_overrides(scalar_cfg, paths=50_000, dt=1 / 250)
    cfg = replace(cfg, run=replace(cfg.run, measure=P, output_times=(1.0, 5.0), rollover=(20.0,), scheme="euler"))
    start = time.perf_counter()
    rep = simulate(cfg)
    return rep, time.perf_counter() - start


def _check(rep, prefix):
    return [c for c in rep.checks if c.name.startswith(prefix)]


def test_criterion_1_long_forward_rate(scalar_cfg, verdict):
    start = time.perf_counter()
    curve = vasicek_initial_curve(THETA_Q, KAPPA, SIGMA, R0, scalar_cfg.grid)
    got = long_forward_rate(curve)
    elapsed = time.perf_counter() - start
    target = THETA_Q - SIGMA**2 / (2 * KAPPA)
    ok = abs(got - target) <= 1e-6 and scalar_cfg.grid.x_max == 60 and elapsed < 1.0
    verdict(1, ok, f"long rate {got:.10f} vs {target:.10f} (diff {abs(got - target):.2e}), {elapsed:.3f}s")
    assert ok


def test_criterion_2_long_rate_invariance(scalar_cfg, verdict):
    model = Model(scalar_cfg.grid, scalar_cfg.vol, scalar_cfg.mpr, scalar_cfg.f0)
    start = time.perf_counter()
    # every step asserts f_t(x_max) == f_0(x_max) exactly and raises otherwise
    res = simulate_paths(model, EulerMaruyama(1 / 250), P, 1000, 2024, [float(t) for t in range(1, 11)])
    elapsed = time.perf_counter() - start
    dev = res.stats["max_longrate_dev"]
    ok = dev == 0.0 and res.stats["n_steps"] == 2500 and elapsed < 10.0
    verdict(2, ok, f"max |f_t(x_max) - f_0(x_max)| = {dev} over 2500 steps, {elapsed:.1f}s")
    assert ok


def test_criterion_3_martingale_means(martingale_run, verdict):
    rep, elapsed = martingale_run
    checks = [c for c in rep.checks if c.name.startswith("martingale ")]
    names = {c.name for c in checks}
    expected = {f"martingale {label} at t={t}" for t in (1, 5)
                for label in ("M (Q density)", "M_inf (QInf density)", "M^T T=20")}
    ok = expected <= names and all(c.passed for c in checks) and elapsed < 120
    rows = [r for r in rep.tables["martingale_means"]["rows"] if not r[1].startswith("curve")]
    worst = max(abs(r[4]) for r in rows)
    verdict(3, ok, f"max |z| = {worst:.2f} over {len(rows)} means at N=50000, {elapsed:.0f}s")
    assert ok


def test_criterion_4_factorization_identity(martingale_run, verdict):
    rep, _ = martingale_run
    (c,) = _check(rep, "factorization identity")
    ok = c.passed and c.value < 1e-10
    verdict(4, ok, f"max relative residual {c.value:.2e}")
    assert ok


def test_criterion_5_gamma_decomposition(martingale_run, verdict):
    rep, _ = martingale_run
    (c,) = _check(rep, "gamma = long-bond vol + gamma_inf")
    ok = c.passed and c.value == 0.0
    verdict(5, ok, f"max component residual {c.value}")
    assert ok


def test_criterion_6_l1_convergence_slope(scalar_cfg, verdict):
    cfg = apply_overrides(scalar_cfg, dt=1 / 250)
    cfg = replace(cfg, converge=replace(cfg.converge, paths=50_000, t=1.0, maturities=(5.0, 10.0, 20.0, 40.0)))
    start = time.perf_counter()
    rep = l1_convergence(cfg, 1.0, (5.0, 10.0, 20.0, 40.0))
    elapsed = time.perf_counter() - start
    slope = rep.info["slope"]
    rel = abs(slope + KAPPA) / KAPPA
    ok = rel <= 0.2 and elapsed < 300
    verdict(6, ok, f"slope {slope:.4f} vs -kappa = {-KAPPA} (rel {rel:.1e}), {elapsed:.0f}s")
    assert ok


def test_criterion_7_oracle_equivalence_and_weak_order(scalar_cfg, verdict):
    grid = scalar_cfg.grid
    tab = params_with_curve(VasicekParams(SIGMA, KAPPA, theta_Q=THETA_Q, gamma=GAMMA, r0=R0), grid)
    engine = HJMEngine(grid, DeterministicVol.exponential(SIGMA, KAPPA), ConstantMPR(GAMMA), tab.f0,
                       ExactGaussian(1 / 50))
    rng = np.random.default_rng(7)
    n, dt = 200, 1 / 50
    values, ou, t = np.tile(tab.f0.values, (n, 1)), np.zeros((n, 1)), 0.0
    worst = 0.0
    for _ in range(250):
        c = engine.coefficients(t, values, P)
        dW, xi = engine.exact_noise(dt, rng.standard_normal((n, 1)), rng.standard_normal((n, 1)))
        values, ou = engine.advance(values, t, dt, c, dW, xi, ou, P)
        t += dt
        oracle = forward_curve_Q_values(tab, grid, t, ou[:, 0])
        worst = max(worst, float(np.max(np.abs(values - oracle) / np.abs(oracle))))
    rep = weak_error_study(scalar_cfg, (1 / 50, 1 / 100, 1 / 200))
    ratios = [c.value for c in _check(rep, "weak error ratio")]
    ok = worst <= 1e-12 and len(ratios) == 2 and all(1.6 <= r <= 2.4 for r in ratios)
    verdict(7, ok, f"oracle max rel diff {worst:.1e}; weak error ratios {', '.join(f'{r:.3f}' for r in ratios)}")
    assert ok


@pytest.mark.parametrize("scenario", ["scalar_gaussian", "two_factor"])
def test_criterion_8_lemma_margins(scenario, verdict):
    cfg = load_config(scenario_path(scenario))
    cfg = replace(cfg, lemmas=replace(cfg.lemmas, times=(1.0, 5.0), maturities=(5.0, 10.0, 20.0)))
    rep = lemma_suite(cfg)
    margins = [row[5] for row in rep.tables["lemma_margins"]["rows"]]
    ok = rep.passed and min(margins) >= 0 and len(margins) == 1 + 2 * 2 + 2 * 3 * 5
    verdict(8, ok, f"{scenario}: {len(margins)} margins, min {min(margins):.3e}")
    assert ok


def test_criterion_9_hypothesis_gating(scalar_cfg, verdict):
    rejected = load_config(scenario_path("powerlog_rejected"))
    errors, _ = validate(rejected, long_bond=True)
    cites = bool(errors) and all(LONGBOND_CONDITION in e and "weight condition" in e for e in errors)
    accepted = []
    for wbar in (PowerWeight(4.0), ExponentialWeight(0.1)):
        cfg = replace(scalar_cfg, wbar=wbar, vol=DeterministicVol.exponential(SIGMA, KAPPA, wbar))
        accepted.append(validate(cfg, long_bond=True)[0] == [])
    ok = cites and all(accepted)
    verdict(9, ok, f"powerlog rejected: {errors[0] if errors else 'no'}; power(4), exponential accepted: {accepted}")
    assert ok


def test_criterion_10_determinism_across_workers(tmp_path, verdict):
    blobs = {}
    for threads in (1, 4, 8):
        out = tmp_path / f"w{threads}"
        code = main(["simulate", "--config", scenario_path("scalar_gaussian"), "--paths", "2000", "--seed", "99",
                     "--threads", str(threads), "--out", str(out)])
        assert code == 0
        blobs[threads] = tuple((out / name).read_bytes()
                               for name in ("report.json", "report.txt", "martingale_means.csv", "path_summary.csv"))
    ok = blobs[1] == blobs[4] == blobs[8]
    verdict(10, ok, "report.json, report.txt and CSVs byte-identical for 1, 4, 8 workers" if ok else "reports differ")
    assert ok
