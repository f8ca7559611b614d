"""Closed-form benchmark for the one-factor Gaussian model with exponential volatility.

These formulas are the reference for the simulation engine and deliberately
share no code with it: curve laws are written in factored form, the initial
discount function is integrated analytically, and the short-rate drift level
uses the analytic slope of the initial curve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curve_space import ForwardCurve, MaturityGrid, integrate_values
from .measures import Measure


class UnsupportedCurveError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class VasicekParams:
    """Scalar model ``sigma(x) = sigma exp(-kappa x)`` with constant market price of risk.

    With ``theta_Q`` given the initial curve is the time-homogeneous one and
    stays analytic; otherwise ``f0`` must be supplied and is used as tabulated.
    """

    sigma: float
    kappa: float
    theta_Q: float | None = None
    gamma: float = 0.0
    r0: float = 0.0
    f0: ForwardCurve | None = None

    def __post_init__(self):
        if not (self.sigma >= 0 and self.kappa > 0):
            raise ValueError("need sigma >= 0 and kappa > 0")
        if self.theta_Q is None and self.f0 is None:
            raise ValueError("give theta_Q or an initial curve")

    @property
    def analytic(self) -> bool:
        return self.theta_Q is not None

    @property
    def long_bond_vol(self) -> float:
        return self.sigma / self.kappa

    @property
    def gamma_long(self) -> float:
        """Market price of risk left after removing the long-bond volatility."""
        return self.gamma - self.sigma / self.kappa


# --------------------------------------------------------- initial curve


def initial_forward(p: VasicekParams, s):
    """Initial forward rate at maturity s (analytic curve or the tabulated representative)."""
    s = np.asarray(s, dtype=float)
    if not p.analytic:
        return p.f0(s)
    k = p.kappa
    decay = np.exp(-k * s)
    grown = -np.expm1(-k * s)
    return (p.theta_Q * k - p.sigma**2 * grown / (2 * k)) * grown / k + p.r0 * decay


def initial_forward_slope(p: VasicekParams, s):
    if not p.analytic:
        raise UnsupportedCurveError("a tabulated initial curve has no analytic slope")
    s = np.asarray(s, dtype=float)
    k = p.kappa
    decay = np.exp(-k * s)
    grown = -np.expm1(-k * s)
    return k * decay * (p.theta_Q - p.r0 - p.sigma**2 * grown / k**2)


def initial_log_discount(p: VasicekParams, s: float) -> float:
    """``-int_0^s f0``: log of the initial zero-coupon price for maturity s."""
    if not p.analytic:
        return -float(integrate_values(p.f0.grid, p.f0.values, 0.0, s))
    k, sig = p.kappa, p.sigma
    g1 = -math.expm1(-k * s) / k
    g2 = -math.expm1(-2 * k * s) / (2 * k)
    sq = s - 2 * g1 + g2  # int_0^s (1 - e^{-ku})^2 du
    return -(p.theta_Q * (s - g1) - sig**2 * sq / (2 * k**2) + p.r0 * g1)


def vasicek_initial_curve(theta_Q: float, kappa: float, sigma: float, r0: float, grid: MaturityGrid) -> ForwardCurve:
    """Time-homogeneous initial curve sampled on `grid`."""
    p = VasicekParams(sigma, kappa, theta_Q=theta_Q, r0=r0)
    return ForwardCurve(grid, initial_forward(p, grid.nodes))


def long_rate(p: VasicekParams) -> float:
    """Limit of the time-homogeneous initial curve: ``theta_Q - sigma^2 / (2 kappa^2)``."""
    if not p.analytic:
        return p.f0.long_rate
    return p.theta_Q - p.sigma**2 / (2 * p.kappa**2)


def params_with_curve(p: VasicekParams, grid: MaturityGrid) -> VasicekParams:
    """Same model with the initial curve attached as sampled on `grid` (the simulation representative)."""
    f0 = p.f0 if p.f0 is not None and p.f0.grid == grid else ForwardCurve(grid, initial_forward(p, grid.nodes))
    return VasicekParams(p.sigma, p.kappa, None, p.gamma, p.r0, f0)


# ------------------------------------------------------------ curve laws


def _shifted_initial(p: VasicekParams, grid: MaturityGrid, t: float) -> np.ndarray:
    return np.asarray(initial_forward(p, grid.nodes + t), dtype=float)


def q_deterministic_part(p: VasicekParams, x, t: float):
    """Risk-neutral convexity term added to ``f0(t + x)``."""
    x = np.asarray(x, dtype=float)
    k, s = p.kappa, p.sigma
    ex = np.exp(-k * x)
    return (s / k) ** 2 * ex * (-math.expm1(-k * t)) * (1.0 - ex * (1.0 + math.exp(-k * t)) / 2.0)


def qinf_deterministic_part(p: VasicekParams, x, t: float):
    """Long-forward-measure drift term added to ``f0(t + x)``."""
    x = np.asarray(x, dtype=float)
    k, s = p.kappa, p.sigma
    return -(s**2 / (2 * k**2)) * np.exp(-2 * k * x) * (-math.expm1(-2 * k * t))


def _assemble(p, grid, t, deterministic, ou_values):
    ou_values = np.asarray(ou_values, dtype=float)
    x = grid.nodes
    stochastic = p.sigma * np.exp(-p.kappa * x) * ou_values[..., None]
    out = _shifted_initial(p, grid, t) + deterministic + stochastic
    out[..., -1] = float(initial_forward(p, grid.x_max))  # tail held at the initial long rate
    return out


def forward_curve_Q_values(p: VasicekParams, grid: MaturityGrid, t: float, wq_integral) -> np.ndarray:
    """Curves at t given realised ``int_0^t e^{-kappa(t-s)} dW^Q_s`` (scalar or array of paths)."""
    return _assemble(p, grid, t, q_deterministic_part(p, grid.nodes, t), wq_integral)


def forward_curve_Qinf_values(p: VasicekParams, grid: MaturityGrid, t: float, wqinf_integral) -> np.ndarray:
    return _assemble(p, grid, t, qinf_deterministic_part(p, grid.nodes, t), wqinf_integral)


def forward_curve_Q(p: VasicekParams, t: float, wq_integral: float, grid: MaturityGrid | None = None) -> ForwardCurve:
    grid = grid or p.f0.grid
    return ForwardCurve(grid, forward_curve_Q_values(p, grid, t, float(wq_integral)))


def forward_curve_Qinf(p: VasicekParams, t: float, wqinf_integral: float, grid: MaturityGrid | None = None) -> ForwardCurve:
    grid = grid or p.f0.grid
    return ForwardCurve(grid, forward_curve_Qinf_values(p, grid, t, float(wqinf_integral)))


def ou_variance(kappa: float, t: float) -> float:
    return -math.expm1(-2 * kappa * t) / (2 * kappa)


def ou_mean_shift(p: VasicekParams, measure: Measure, t: float) -> float:
    """Mean of the risk-neutral OU integral when the paths are generated under `measure`."""
    grown = -math.expm1(-p.kappa * t) / p.kappa
    if measure.kind == "Q":
        return 0.0
    if measure.kind == "P":
        return -p.gamma * grown
    if measure.kind == "QInf":
        return -p.long_bond_vol * grown
    raise ValueError("closed-form means cover P, Q and QInf")


def mean_curve(p: VasicekParams, grid: MaturityGrid, t: float, measure: Measure) -> np.ndarray:
    """Expected forward curve at t under P, Q or QInf."""
    return forward_curve_Q_values(p, grid, t, ou_mean_shift(p, measure, t))


# ---------------------------------------------------------- short rate


def short_rate_params(p: VasicekParams, measure: Measure, t: float) -> tuple[float, float]:
    """Mean-reversion speed and level of the short rate under Q or QInf."""
    k, s = p.kappa, p.sigma
    level_q = float(initial_forward_slope(p, t)) / k + float(initial_forward(p, t)) + s**2 / (2 * k**2) * -math.expm1(-2 * k * t)
    if measure.kind == "Q":
        return k, level_q
    if measure.kind == "QInf":
        return k, level_q - s**2 / k**2
    raise ValueError("short-rate parameters are given under Q and QInf")


def long_bond_closed_form(p: VasicekParams, t: float, log_A: float, w_driver: float, measure: Measure) -> float:
    """Long bond value from the savings account and the Brownian value under `measure`."""
    v = p.long_bond_vol
    if measure.kind == "Q":
        return math.exp(log_A - v * w_driver - 0.5 * v * v * t)
    if measure.kind == "QInf":
        return math.exp(log_A - v * w_driver + 0.5 * v * v * t)
    if measure.kind == "P":
        return math.exp(log_A + v * p.gamma * t - v * w_driver - 0.5 * v * v * t)
    raise ValueError("closed form available under P, Q and QInf")


def affine_bond_price(p: VasicekParams, t: float, tau: float, r_t: float) -> float:
    """Hull-White price at t of the bond maturing at t + tau given the short rate r_t."""
    k, s = p.kappa, p.sigma
    b = -math.expm1(-k * tau) / k
    log_ratio = initial_log_discount(p, t + tau) - initial_log_discount(p, t)
    f0_t = float(initial_forward(p, t))
    return math.exp(log_ratio + b * f0_t - s**2 / (4 * k) * b * b * -math.expm1(-2 * k * t) - b * r_t)
