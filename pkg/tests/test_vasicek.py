import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hjm_longterm.curve_space import ForwardCurve, MaturityGrid, integrate_values
from hjm_longterm.hjm_engine import EulerMaruyama, ExactGaussian, HJMEngine
from hjm_longterm.measures import P, Q, QINF
from hjm_longterm.montecarlo import Model, simulate_paths
from hjm_longterm.vasicek import (
    UnsupportedCurveError,
    VasicekParams,
    affine_bond_price,
    forward_curve_Q,
    forward_curve_Q_values,
    initial_forward,
    initial_forward_slope,
    initial_log_discount,
    long_bond_closed_form,
    long_rate,
    mean_curve,
    ou_mean_shift,
    ou_variance,
    params_with_curve,
    short_rate_params,
    vasicek_initial_curve,
)
from hjm_longterm.vol_model import ConstantMPR, DeterministicVol

GRID = MaturityGrid.geometric(60.0, 120)
PARAMS = VasicekParams(0.02, 0.5, theta_Q=0.05, gamma=0.2, r0=0.02)


def test_long_rate_value():
    # 0.05 - 0.02^2 / (2 * 0.5^2)
    assert long_rate(PARAMS) == pytest.approx(0.0492, abs=1e-15)
    assert float(initial_forward(PARAMS, 1e4)) == pytest.approx(0.0492, abs=1e-12)


def test_initial_curve_starts_at_r0():
    assert float(initial_forward(PARAMS, 0.0)) == pytest.approx(0.02)
    curve = vasicek_initial_curve(0.05, 0.5, 0.02, 0.02, GRID)
    assert curve.values[0] == pytest.approx(0.02)
    assert curve.long_rate == pytest.approx(0.0492, abs=1e-10)


def test_log_discount_matches_quadrature_of_the_curve():
    for s in (0.5, 5.0, 30.0):
        ref, _ = integrate.quad(lambda u: float(initial_forward(PARAMS, u)), 0, s)
        assert initial_log_discount(PARAMS, s) == pytest.approx(-ref, rel=1e-12)


def test_slope_matches_central_differences():
    for s in (0.1, 2.0, 10.0):
        h = 1e-5
        fd = (float(initial_forward(PARAMS, s + h)) - float(initial_forward(PARAMS, s - h))) / (2 * h)
        assert float(initial_forward_slope(PARAMS, s)) == pytest.approx(fd, rel=1e-6)
    with pytest.raises(UnsupportedCurveError):
        initial_forward_slope(params_with_curve(PARAMS, GRID), 1.0)


def test_time_homogeneous_curve_has_constant_reversion_level():
    for t in (0.0, 1.0, 7.0):
        kappa, level = short_rate_params(PARAMS, Q, t)
        assert kappa == 0.5
        assert level == pytest.approx(0.05, abs=1e-14)
        # long forward measure level moves down by (sigma/kappa)^2
        assert short_rate_params(PARAMS, QINF, t)[1] == pytest.approx(0.05 - 0.0016, abs=1e-14)


def test_ou_variance_matches_quadrature():
    ref, _ = integrate.quad(lambda s: math.exp(-2 * 0.5 * (3.0 - s)), 0, 3.0)
    assert ou_variance(0.5, 3.0) == pytest.approx(ref, rel=1e-12)


def test_mean_curve_at_zero_is_the_initial_curve():
    assert np.allclose(mean_curve(PARAMS, GRID, 0.0, P), initial_forward(PARAMS, GRID.nodes), atol=1e-15)
    assert ou_mean_shift(PARAMS, Q, 2.0) == 0.0
    assert ou_mean_shift(PARAMS, P, 2.0) == pytest.approx(-0.2 * (1 - math.exp(-1.0)) / 0.5)


def test_affine_price_agrees_with_curve_integration():
    t, ou = 2.0, 0.3
    fine = MaturityGrid.uniform(60.0, 0.002)
    curve = forward_curve_Q(PARAMS, t, ou, fine)
    r_t = curve.values[0]
    for tau in (1.0, 5.0, 20.0):
        from_curve = math.exp(-float(integrate_values(fine, curve.values, 0.0, tau)))
        assert affine_bond_price(PARAMS, t, tau, r_t) == pytest.approx(from_curve, rel=1e-6)


def _exact_run(measure, n=64, horizon=3.0, dt=0.01, seed=5):
    tab = params_with_curve(PARAMS, GRID)
    model = Model(GRID, DeterministicVol.exponential(0.02, 0.5), ConstantMPR(0.2), tab.f0)
    times = [0.5, 1.0, horizon]
    res = simulate_paths(model, ExactGaussian(dt), measure, n, seed, times, block_size=32)
    return tab, res, times


@pytest.mark.parametrize("measure", [P, Q, QINF])
def test_exact_engine_reproduces_closed_form_curves(measure):
    tab = params_with_curve(PARAMS, GRID)
    engine = HJMEngine(GRID, DeterministicVol.exponential(0.02, 0.5), ConstantMPR(0.2), tab.f0, ExactGaussian(0.05))
    rng = np.random.default_rng(9)
    values, ou, t = np.tile(tab.f0.values, (32, 1)), np.zeros((32, 1)), 0.0
    worst = 0.0
    for _ in range(60):
        c = engine.coefficients(t, values, measure)
        dW, xi = engine.exact_noise(0.05, rng.standard_normal((32, 1)), rng.standard_normal((32, 1)))
        values, ou = engine.advance(values, t, 0.05, c, dW, xi, ou, measure)
        t += 0.05
        oracle = forward_curve_Q_values(tab, GRID, t, ou[:, 0])
        worst = max(worst, float(np.max(np.abs(values - oracle) / np.abs(oracle))))
    assert worst < 1e-12


def test_exact_engine_short_rate_matches_oracle_with_shared_noise():
    tab, res, times = _exact_run(P)
    for t in times:
        oracle_r = forward_curve_Q_values(tab, GRID, t, res.at("ou", t)[:, 0])[:, 0]
        assert np.max(np.abs(res.at("r", t) - oracle_r) / np.abs(oracle_r)) < 1e-12


@pytest.mark.parametrize("measure", [P, Q, QINF])
def test_long_bond_closed_form_matches_accounting(measure):
    model = Model(GRID, DeterministicVol.exponential(0.02, 0.5), ConstantMPR(0.2),
                  vasicek_initial_curve(0.05, 0.5, 0.02, 0.02, GRID))
    res = simulate_paths(model, EulerMaruyama(0.01), measure, 16, 3, [1.0, 2.0])
    for t in (1.0, 2.0):
        log_A, W, log_B = res.at("log_A", t), res.at("W", t)[:, 0], res.at("log_Binf", t)
        closed = np.array([long_bond_closed_form(PARAMS, t, a, w, measure) for a, w in zip(log_A, W)])
        assert np.allclose(np.exp(log_B), closed, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.001, 0.05), st.floats(0.1, 2.0), st.floats(-0.02, 0.1), st.floats(-0.02, 0.1))
def test_initial_curve_limits(sigma, kappa, theta, r0):
    p = VasicekParams(sigma, kappa, theta_Q=theta, r0=r0)
    assert float(initial_forward(p, 0.0)) == pytest.approx(r0, abs=1e-15)
    assert float(initial_forward(p, 200.0 / kappa)) == pytest.approx(long_rate(p), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(-1.0, 1.0))
def test_oracle_curves_hold_the_tail(t, ou):
    out = forward_curve_Q_values(PARAMS, GRID, t, ou)
    assert out[-1] == float(initial_forward(PARAMS, GRID.x_max))


def test_tabulated_params_reuse_the_grid_curve():
    tab = params_with_curve(PARAMS, GRID)
    assert not tab.analytic
    assert isinstance(tab.f0, ForwardCurve) and tab.f0.grid == GRID
    with pytest.raises(ValueError):
        VasicekParams(0.02, 0.5)
