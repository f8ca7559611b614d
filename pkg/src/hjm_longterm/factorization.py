"""Pricing-kernel accounting along simulated paths.

Every stochastic exponential is carried in log space. With the left-point
rule for the savings account, ``log M - log A`` and ``log M_inf - log B_inf``
receive algebraically identical increments, so the long-term factorization
holds to rounding on every path.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curve_space import ForwardCurve, MaturityGrid, integrate_values
from .measures import Measure
from .vol_model import InvariantViolation

FACTORIZATION_TOL = 1e-10
_ROLL_TOL = 1e-9


class AccountingError(InvariantViolation):
    pass


@dataclass
class RolloverTracker:
    """Wealth of the strategy that buys a bond maturing in `period` years and rolls it at maturity."""

    period: float
    log_B: np.ndarray
    log_prod: np.ndarray  # log of the product of purchase prices P_{iT}^{(i+1)T}
    log_gap: np.ndarray  # log B^T - log B^inf, accumulated from the tail vol directly
    segment: int = 0

    def remaining(self, t: float) -> float:
        return (self.segment + 1) * self.period - t

    def roll_due(self, t: float) -> bool:
        return self.remaining(t) <= _ROLL_TOL * max(1.0, self.period)


@dataclass
class PathState:
    """Accounting state of a batch of paths; all per-path arrays have length N."""

    grid: MaturityGrid
    t: float
    values: np.ndarray  # (N, n) forward curves
    log_A: np.ndarray
    log_M: np.ndarray
    log_Minf: np.ndarray
    log_Binf: np.ndarray
    rollover: dict = field(default_factory=dict)
    path_ids: np.ndarray | None = None
    ou: np.ndarray | None = None  # Ornstein-Uhlenbeck state of the exact scheme, Q-driven

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def curve(self, i: int) -> ForwardCurve:
        return ForwardCurve(self.grid, self.values[i])


def initial_state(f0: ForwardCurve, n_paths: int, rollover_periods=(), path_ids=None, n_factors: int = 0) -> PathState:
    values = np.tile(f0.values, (n_paths, 1))
    zeros = lambda: np.zeros(n_paths)
    ps = PathState(f0.grid, 0.0, values, zeros(), zeros(), zeros(), zeros(),
                   path_ids=np.arange(n_paths) if path_ids is None else np.asarray(path_ids))
    for T in rollover_periods:
        T = float(T)
        if not 0 < T <= f0.grid.x_max:
            raise ValueError(f"roll-over period {T} outside (0, x_max]")
        start = np.full(n_paths, -float(integrate_values(f0.grid, f0.values, 0.0, T)))
        ps.rollover[T] = RolloverTracker(T, zeros(), start, zeros())
    if n_factors:
        ps.ou = np.zeros((n_paths, n_factors))
    return ps


def _dot(a, b):
    """Sum over the factor axis without BLAS, so results do not depend on threading."""
    return np.sum(a * b, axis=-1)


def accrue(ps: PathState, dt: float, dW, c, check_finite: bool = True) -> dict:
    """Accrue one step of length dt in place from the state at the left end.

    `dW` are the increments under the simulation measure and `c` the
    coefficients at (ps.t, ps.values). Must be called before the curve is
    advanced. Returns the per-step gamma decomposition residual and the
    Q increments, for callers that track further functionals.
    """
    dW = np.asarray(dW, dtype=float)
    gamma = c.gamma
    dWP = dW + c.theta * dt
    dWQ = dWP - gamma * dt
    r = ps.values[:, 0]
    ps.log_A += r * dt
    ps.log_M += _dot(gamma, dWP) - 0.5 * _dot(gamma, gamma) * dt
    out = {"dWQ": dWQ, "dWP": dWP, "gamma_residual": 0.0}
    s_inf = c.sig_inf
    if s_inf is not None:
        g_inf = gamma - s_inf
        out["gamma_residual"] = float(np.max(np.abs(np.broadcast_to(gamma - s_inf - g_inf, np.shape(gamma)))))
        ps.log_Minf += _dot(g_inf, dWP) - 0.5 * _dot(g_inf, g_inf) * dt
        ps.log_Binf += r * dt + _dot(s_inf, gamma) * dt - _dot(s_inf, dWP) - 0.5 * _dot(s_inf, s_inf) * dt
    for tracker in ps.rollover.values():
        tau = tracker.remaining(ps.t)
        s_tau, s_bar = c.bond_vols[tau]
        tracker.log_B += r * dt + _dot(s_tau, gamma) * dt - _dot(s_tau, dWP) - 0.5 * _dot(s_tau, s_tau) * dt
        if s_inf is not None:
            tracker.log_gap += _dot(s_bar, dWQ) + 0.5 * _dot(s_bar, s_tau + s_inf) * dt
    if check_finite:
        for arr in (ps.log_A, ps.log_M, ps.log_Minf, ps.log_Binf):
            bad = ~np.isfinite(arr)
            if bad.any():
                from .hjm_engine import NumericalBlowup

                raise NumericalBlowup(ps.t, int(ps.path_ids[np.argmax(bad)]))
    return out


def roll_over(ps: PathState) -> None:
    """Reinvest maturing roll-over positions at the current time."""
    for tracker in ps.rollover.values():
        if tracker.roll_due(ps.t):
            tracker.segment += 1
            tracker.log_prod += -integrate_values(ps.grid, ps.values, 0.0, tracker.period)


# ------------------------------------------------------------ observables


def bond_price_values(grid: MaturityGrid, values, tau: float) -> np.ndarray:
    if tau < 0:
        raise ValueError("time to maturity must be non-negative")
    if tau > grid.x_max * (1 + 1e-12):
        raise ValueError(f"time to maturity {tau} beyond grid end {grid.x_max}; extend the grid")
    return np.exp(-integrate_values(grid, values, 0.0, min(tau, grid.x_max)))


def bond_price(f: ForwardCurve, tau: float) -> float:
    """Zero-coupon price ``exp(-int_0^tau f)`` for a bond with `tau` years left."""
    return float(bond_price_values(f.grid, f.values, tau))


def pricing_kernel(ps: PathState) -> np.ndarray:
    return np.exp(ps.log_M - ps.log_A)


def long_bond(ps: PathState) -> np.ndarray:
    return np.exp(ps.log_Binf)


def long_forward_martingale(ps: PathState) -> np.ndarray:
    return np.exp(ps.log_Minf)


def rollover_wealth(ps: PathState, T: float) -> np.ndarray:
    return np.exp(ps.rollover[float(T)].log_B)


def rollover_wealth_from_curve(ps: PathState, T: float) -> np.ndarray:
    """Roll-over wealth rebuilt from bond prices read off the simulated curves."""
    tr = ps.rollover[float(T)]
    return np.exp(-tr.log_prod) * bond_price_values(ps.grid, ps.values, tr.remaining(ps.t))


def forward_martingale(ps: PathState, T: float, from_curve: bool = False) -> np.ndarray:
    """``S_t B_t^T``; equals ``S_t P_t^T / P_0^T`` before the first roll date."""
    if from_curve:
        return pricing_kernel(ps) * rollover_wealth_from_curve(ps, T)
    return np.exp(ps.log_M - ps.log_A + ps.rollover[float(T)].log_B)


def pi_process(ps: PathState, lam: float) -> np.ndarray:
    """Transitory factor ``pi_t = exp(-lam t) B_t^inf``."""
    return np.exp(ps.log_Binf - lam * ps.t)


def factorization_residual(ps: PathState) -> np.ndarray:
    S = np.exp(ps.log_M - ps.log_A)
    ratio = np.exp(ps.log_Minf) / np.exp(ps.log_Binf)
    return np.abs(S - ratio) / S


def factorization_check(ps: PathState, lam: float, tol: float = FACTORIZATION_TOL) -> float:
    """Largest relative gap between the kernel and its long-term factorization.

    `lam` is the long forward rate of the initial curve; the permanent and
    transitory factors are rebuilt from it so their product is checked too.
    """
    residual = factorization_residual(ps)
    via_pi = np.exp(-lam * ps.t) * np.exp(ps.log_Minf) / pi_process(ps, lam)
    S = pricing_kernel(ps)
    worst = float(max(np.max(residual), np.max(np.abs(S - via_pi) / S)))
    if not worst <= tol:
        raise AccountingError(f"factorization residual {worst:.3e} exceeds {tol:.0e} at t={ps.t:.6g}")
    return worst


def log_density(ps: PathState, measure: Measure) -> np.ndarray:
    """Log Radon-Nikodym density of `measure` against P on the information up to ps.t."""
    if measure.kind == "P":
        return np.zeros(ps.n_paths)
    if measure.kind == "Q":
        return ps.log_M.copy()
    if measure.kind == "QInf":
        return ps.log_Minf.copy()
    return ps.log_M - ps.log_A + ps.rollover[float(measure.maturity)].log_B


def density_ratio(ps: PathState, source: Measure, target: Measure) -> np.ndarray:
    """``d target / d source`` restricted to the information up to ps.t."""
    if source == target:
        return np.ones(ps.n_paths)
    return np.exp(log_density(ps, target) - log_density(ps, source))
