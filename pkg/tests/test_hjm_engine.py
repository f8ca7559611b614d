import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjm_longterm.curve_space import ForwardCurve, MaturityGrid, PowerLogWeight, translate_values
from hjm_longterm.hjm_engine import (
    EulerMaruyama,
    ExactGaussian,
    HJMEngine,
    NumericalBlowup,
    hjm_drift,
    make_scheme,
    s_operator,
    step,
)
from hjm_longterm.measures import P, Q, QINF, Measure
from hjm_longterm.vol_model import ConfigurationError, ConstantMPR, DeterministicVol, StateDependentMPR, ZeroMPR

GRID = MaturityGrid.geometric(60.0, 120)
VOL = DeterministicVol.exponential(0.02, 0.5)
MPR = ConstantMPR(0.2)
F0 = ForwardCurve(GRID, 0.05 - 0.03 * np.exp(-0.5 * GRID.nodes))


def test_s_operator_of_a_constant():
    g = MaturityGrid.uniform(10.0, 0.5)
    out = s_operator(ForwardCurve.flat(g, 0.3))
    assert np.allclose(out.values, 0.09 * g.nodes, rtol=1e-14)


def test_drift_under_each_measure():
    sig = VOL.curves(0.0, None, GRID)[0]
    alpha = VOL.alpha_hjm(0.0, None, GRID)
    assert np.array_equal(hjm_drift(VOL, MPR, 0.0, F0, Q).total.values, alpha)
    assert np.allclose(hjm_drift(VOL, MPR, 0.0, F0, P).total.values, alpha - 0.2 * sig, atol=1e-18)
    assert np.allclose(hjm_drift(VOL, MPR, 0.0, F0, QINF).total.values, alpha - 0.04 * sig, atol=1e-18)
    lam_T = 0.04 * (1 - math.exp(-0.5 * 10.0))
    assert np.allclose(hjm_drift(VOL, MPR, 0.0, F0, Measure.forward(10.0)).total.values, alpha - lam_T * sig,
                       atol=1e-18)


def test_drift_closed_form_for_exponential_factor():
    # alpha(x) = (sigma^2 / kappa) e^{-kappa x} (1 - e^{-kappa x})
    x = GRID.nodes[:-1]
    expect = 0.02**2 / 0.5 * np.exp(-0.5 * x) * (1 - np.exp(-0.5 * x))
    assert np.allclose(hjm_drift(VOL, MPR, 0.0, F0, Q).alpha_hjm.values[:-1], expect, rtol=1e-12)


def test_long_forward_measure_needs_the_long_bond_condition():
    vol = DeterministicVol.exponential(0.02, 0.5, PowerLogWeight())
    with pytest.raises(ConfigurationError):
        hjm_drift(vol, MPR, 0.0, F0, QINF)


def test_euler_step_matches_hand_update():
    dW = np.array([0.013])
    out = step(F0, 0.0, EulerMaruyama(0.01), VOL, MPR, P, dW)
    sig = VOL.curves(0.0, None, GRID)[0]
    mu = VOL.alpha_hjm(0.0, None, GRID) - 0.2 * sig
    expect = translate_values(GRID, F0.values, 0.01) + mu * 0.01 + sig * 0.013
    assert np.allclose(out.values, expect, rtol=0, atol=1e-17)
    assert out.long_rate == F0.long_rate


def test_zero_vol_step_is_a_pure_shift():
    vol = DeterministicVol.zero()
    out = step(F0, 0.0, EulerMaruyama(0.25), vol, ZeroMPR(), Q, [0.7])
    assert np.array_equal(out.values, translate_values(GRID, F0.values, 0.25))


@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_step_reports_blowup_and_refuses_exact():
    with pytest.raises(NumericalBlowup):
        step(F0, 0.0, EulerMaruyama(0.01), VOL, MPR, P, [np.inf])
    with pytest.raises(ValueError):
        step(F0, 0.0, ExactGaussian(0.01), VOL, MPR, P, [0.0])


def test_engine_validation():
    with pytest.raises(ConfigurationError):
        HJMEngine(GRID, VOL, ConstantMPR((0.1, 0.2)), F0, EulerMaruyama())
    state_mpr = StateDependentMPR(lambda t, f: np.array([0.1]), lambda t: 1.0, 1)
    with pytest.raises(ConfigurationError):
        HJMEngine(GRID, VOL, state_mpr, F0, ExactGaussian())
    with pytest.raises(ValueError):
        make_scheme("milstein", 0.01)
    assert make_scheme("exact", 0.02).kind == "exact"


def test_exact_noise_covariance():
    engine = HJMEngine(GRID, VOL, MPR, F0, ExactGaussian(0.1))
    rng = np.random.default_rng(11)
    n = 400_000
    dW, xi = engine.exact_noise(0.1, rng.standard_normal((n, 1)), rng.standard_normal((n, 1)))
    k, dt = 0.5, 0.1
    cov = (1 - math.exp(-k * dt)) / k
    var = (1 - math.exp(-2 * k * dt)) / (2 * k)
    # sample moments of Gaussian pairs, 5 standard errors
    assert np.mean(dW * xi) == pytest.approx(cov, abs=5 * math.sqrt(2 * dt * var / n))
    assert np.mean(xi * xi) == pytest.approx(var, abs=5 * var * math.sqrt(2 / n))
    assert np.mean(dW * dW) == pytest.approx(dt, abs=5 * dt * math.sqrt(2 / n))


def test_rolling_forward_maturity():
    assert HJMEngine._qt_remaining(20.0, 0.0) == 20.0
    assert HJMEngine._qt_remaining(20.0, 19.5) == pytest.approx(0.5)
    assert HJMEngine._qt_remaining(20.0, 20.0) == 20.0


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(1e-4, 0.1), st.sampled_from(["P", "Q", "QInf", "QT:10"]))
def test_any_step_keeps_the_long_rate(dw, dt, measure):
    out = step(F0, 0.3, EulerMaruyama(dt), VOL, MPR, Measure.parse(measure), [dw])
    assert out.long_rate == F0.long_rate
