import json
import math
from dataclasses import replace

import numpy as np
import pytest

from hjm_longterm.config import apply_overrides
from hjm_longterm.diagnostics import (
    RunReport,
    decay_proxy,
    l1_bound,
    l1_convergence,
    lemma_suite,
    mean_se,
    model_of,
    simulate,
    weak_error_grid,
    weak_error_study,
)
from hjm_longterm.hjm_engine import EulerMaruyama
from hjm_longterm.measures import Q
from hjm_longterm.montecarlo import simulate_paths


def _small(cfg, paths=400, dt=1 / 50):
    return apply_overrides(cfg, paths=paths, dt=dt)


def test_zero_vol_martingales_are_exactly_one(load_scenario):
    rep = simulate(load_scenario("zero_vol"))
    assert rep.passed
    rows = rep.tables["martingale_means"]["rows"]
    for t, label, mean, se, _ in rows:
        if not label.startswith("curve"):
            assert mean == 1.0 and se == 0.0


def test_zero_vol_convergence_distances_vanish(load_scenario):
    rep = l1_convergence(load_scenario("zero_vol"))
    assert rep.passed
    assert all(row[1] == 0.0 for row in rep.tables["convergence"]["rows"])
    assert any(c.name.startswith("pathwise coupling") for c in rep.checks)


def test_zero_vol_lemma_margins_equal_the_bounds(load_scenario):
    rep = lemma_suite(load_scenario("zero_vol"))
    assert rep.passed
    for name, t, T, lhs, rhs, margin in rep.tables["lemma_margins"]["rows"]:
        if name in ("L2 norm of exp(-j_inf - k_inf)", "sup_v L2 norm of Y_v^T"):
            assert lhs == pytest.approx(1.0)
        else:
            assert lhs == 0.0 and margin == rhs


def test_zero_vol_weak_error_is_zero(load_scenario):
    rep = weak_error_study(replace(load_scenario("zero_vol"), weak_error=replace(
        load_scenario("zero_vol").weak_error, paths=50)))
    assert rep.passed
    assert max(row[3] for row in rep.tables["weak_error"]["rows"]) <= 1e-14


def test_simulate_report_is_reproducible(load_scenario):
    cfg = _small(load_scenario("scalar_gaussian"))
    a = simulate(cfg).to_json()
    b = simulate(replace(cfg, run=replace(cfg.run, threads=3, block_size=cfg.run.block_size))).to_json()
    assert a == b
    data = json.loads(a)
    assert data["passed"] and data["n_paths"] == 400
    assert {c["name"] for c in data["checks"]} >= {"long rate conserved on every step",
                                                    "factorization identity S = M_inf / B_inf"}


def test_reweighting_check(load_scenario):
    cfg = _small(load_scenario("scalar_gaussian"), paths=2000)
    cfg = replace(cfg, checks={**cfg.checks, "reweighting": True}, run=replace(cfg.run, output_times=(1.0,)))
    rep = simulate(cfg)
    names = [c.name for c in rep.checks]
    assert any(n.startswith("reweighting") for n in names)
    assert rep.passed


def test_standard_errors_scale_with_root_n(load_scenario):
    cfg = _small(load_scenario("scalar_gaussian"))
    model = model_of(cfg)
    se = []
    for n in (1000, 4000):
        res = simulate_paths(model, EulerMaruyama(1 / 50), Q, n, 17, [1.0])
        se.append(mean_se(res.at("r", 1.0))[1])
    assert se[1] / se[0] == pytest.approx(0.5, rel=0.2)


def test_proof_functional_invariants(load_scenario):
    cfg = _small(load_scenario("two_factor"))
    res = simulate_paths(model_of(cfg), EulerMaruyama(1 / 50), Q, 200, 3, [0.5, 1.0], functional_maturities=(5.0,))
    for t in (0.5, 1.0):
        assert np.all(res.at("zT[5]", t) >= 0)
        assert np.all(res.at("kT[5]", t) >= 0)
        assert np.all(np.exp(-res.at("dj[5]", t) - res.at("zT[5]", t)) > 0)
        assert np.all(res.at("kdiff_run[5]", t) >= np.abs(res.at("kdiff[5]", t)))


def test_z_functional_matches_closed_form(load_scenario):
    # sigma_bar^T(u) = (sigma/kappa) e^{-kappa (T-u)}, so z_t^T = (sigma/kappa)^2 (e^{-2k(T-t)} - e^{-2kT}) / (4k)
    cfg = _small(load_scenario("scalar_gaussian"))
    res = simulate_paths(model_of(cfg), EulerMaruyama(1 / 1000), Q, 2, 3, [1.0], functional_maturities=(5.0,))
    s, k, t, T = 0.02, 0.5, 1.0, 5.0
    exact = (s / k) ** 2 * (math.exp(-2 * k * (T - t)) - math.exp(-2 * k * T)) / (4 * k)
    assert res.at("zT[5]", 1.0)[0] == pytest.approx(exact, rel=2e-3)


def test_lemma_margins_two_factor_small(load_scenario):
    rep = lemma_suite(_small(load_scenario("two_factor"), paths=300))
    assert rep.passed, [c.name for c in rep.failures()]


def test_bound_and_proxy(load_scenario):
    cfg = load_scenario("scalar_gaussian")
    assert l1_bound(cfg, 1.0, 40.0) < l1_bound(cfg, 1.0, 5.0)
    assert decay_proxy(cfg, 1.0, 5.0) == pytest.approx(0.04 * math.exp(-2.0))


def test_weak_error_grid_has_exact_shifts():
    g = weak_error_grid([1 / 50, 1 / 100, 1 / 200], 1.0, 60.0)
    assert g.nodes[1] == pytest.approx(1 / 200)
    for dt in (1 / 50, 1 / 100, 1 / 200):
        _, w = g.shift_weights(dt)
        fine = g.nodes <= 2.0 - dt
        # shifted fine nodes land on nodes, so interpolation weights are 0 or 1
        assert np.all(np.minimum(np.abs(w[fine]), np.abs(w[fine] - 1)) < 1e-9)


def test_run_report_text_and_failures():
    rep = RunReport("s", "simulate", 1, 10, 0.1, "euler", "P")
    rep.add("a", True, 0.0, 1.0)
    rep.add("b", False, float("inf"), 1.0, "broken")
    assert not rep.passed and [c.name for c in rep.failures()] == ["b"]
    assert "[FAIL] b" in rep.to_text()
    assert json.loads(rep.to_json())["checks"][1]["value"] == "inf"
