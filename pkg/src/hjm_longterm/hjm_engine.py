"""Arbitrage-free drift and time stepping of the forward-curve SDE.

The translation part of the dynamics is handled semi-Lagrangian: the curve is
shifted by ``dt`` through linear interpolation, then drift and diffusion are
added. An exact Gaussian transition is available for deterministic
exponential factors with a deterministic market price of risk.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .curve_space import ForwardCurve, MaturityGrid, cumulative_integral, translate_values
from .measures import Measure
from .vol_model import (
    ConfigurationError,
    DeterministicVol,
    InvariantViolation,
    MarketPriceOfRisk,
    VolSpec,
    require_longbond,
)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


class NumericalBlowup(FloatingPointError):
    def __init__(self, t, path_id):
        super().__init__(f"non-finite state at t={t:.6g} on path {path_id}")
        self.t = t
        self.path_id = path_id


def s_operator_values(grid: MaturityGrid, values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values * cumulative_integral(grid, values)


def s_operator(f: ForwardCurve) -> ForwardCurve:
    """``(S f)(x) = f(x) int_0^x f``; zero-tail input gives zero-tail output."""
    return ForwardCurve(f.grid, s_operator_values(f.grid, f.values))


@dataclass(frozen=True, eq=False)
class DriftAssembly:
    alpha_hjm: ForwardCurve
    mpr_term: ForwardCurve
    total: ForwardCurve


@dataclass(frozen=True)
class EulerMaruyama:
    dt: float = 1.0 / 250

    kind = "euler"


@dataclass(frozen=True)
class ExactGaussian:
    dt: float = 1.0 / 250

    kind = "exact"


def make_scheme(kind: str, dt: float):
    schemes = {"euler": EulerMaruyama, "exact": ExactGaussian}
    if kind not in schemes:
        raise ValueError(f"unknown scheme {kind!r} (expected euler or exact)")
    return schemes[kind](dt)


@dataclass
class StepCoefficients:
    """Model coefficients at the left end of a step, shared by curve and accounting updates."""

    sig: np.ndarray  # (J, n) or (N, J, n)
    alpha: np.ndarray  # (n,) or (N, n)
    gamma: np.ndarray  # (J,) or (N, J)
    sig_inf: np.ndarray | None  # (J,) or (N, J)
    lam: np.ndarray  # price of risk of the simulation measure relative to Q
    bond_vols: dict  # remaining maturity -> (bond vol, tail vol)

    @property
    def theta(self) -> np.ndarray:
        """Drift of W^P under the simulation measure: ``dW^P = dW + theta dt``."""
        return self.gamma - self.lam


class HJMEngine:
    """Vectorised forward-curve stepper for a batch of paths (rows of a 2-D array)."""

    def __init__(self, grid: MaturityGrid, vol: VolSpec, mpr: MarketPriceOfRisk, f0: ForwardCurve, scheme):
        if f0.grid != grid:
            raise ValueError("initial curve must live on the simulation grid")
        if mpr.n_factors != vol.n_factors:
            raise ConfigurationError("market price of risk and volatility must have the same number of factors")
        self.grid, self.vol, self.mpr, self.f0, self.scheme = grid, vol, mpr, f0, scheme
        self.has_long_bond = vol.wbar.satisfies_longbond_condition
        if scheme.kind == "exact":
            if not (isinstance(vol, DeterministicVol) and vol.is_exponential and mpr.is_deterministic):
                raise ConfigurationError(
                    "the exact Gaussian scheme needs deterministic exponential factors and a deterministic market price of risk"
                )
            self.kappas = vol.kappas
            self.sigmas = vol.sigmas
            if np.any((self.kappas <= 0) & (self.sigmas > 0)):
                raise ConfigurationError("exact scheme needs kappa > 0 on every active factor")

    # -- coefficients ------------------------------------------------------

    def coefficients(self, t: float, values, measure: Measure, maturities: Sequence[float] = ()) -> StepCoefficients:
        """Coefficients at time t. `maturities` are remaining times to maturity whose bond vols are needed."""
        vol, grid = self.vol, self.grid
        sig = vol.curves(t, values, grid)
        alpha = vol.alpha_hjm(t, values, grid, sig)
        gamma = self.mpr(t, values)
        sig_inf = vol.long_bond_vols(t, values, grid, sig) if self.has_long_bond else None
        taus = set(float(m) for m in maturities)
        if measure.kind == "QT":
            taus.add(self._qt_remaining(measure.maturity, t))
        bond = {tau: (vol.bond_vols(t, values, grid, tau, sig), vol.tail_bond_vols(t, values, grid, tau, sig))
                for tau in taus}
        if measure.kind == "P":
            lam = gamma
        elif measure.kind == "Q":
            lam = np.zeros_like(gamma)
        elif measure.kind == "QInf":
            if sig_inf is None:
                require_longbond(vol)
            lam = sig_inf
        else:
            lam = bond[self._qt_remaining(measure.maturity, t)][0]
        lam = np.broadcast_to(lam, np.broadcast_shapes(np.shape(lam), np.shape(gamma)))
        return StepCoefficients(sig, alpha, gamma, sig_inf, lam, bond)

    @staticmethod
    def _qt_remaining(T, t):
        """Remaining maturity of the bond held by the T roll-over strategy at time t."""
        k = math.floor(t / T + 1e-12)
        return (k + 1) * T - t

    def drift(self, c: StepCoefficients) -> np.ndarray:
        """``alpha - sum_j lam_j sigma^j``: the forward-curve drift under the simulation measure."""
        return c.alpha - np.sum(c.lam[..., :, None] * c.sig, axis=-2)

    # -- stepping ----------------------------------------------------------

    def advance(self, values, t: float, dt: float, c: StepCoefficients, dW, xi=None, ou=None, measure=None):
        """One step of size dt. Returns ``(values, ou)``; `ou` is None for Euler."""
        if self.scheme.kind == "exact":
            return self._advance_exact(t, dt, dW, xi, ou, measure)
        out = translate_values(self.grid, values, dt)
        out += self.drift(c) * dt
        dW = np.asarray(dW)
        if c.sig.ndim == 2:
            for j in range(c.sig.shape[0]):
                if np.any(c.sig[j]):
                    out += dW[..., j, None] * c.sig[j]
        else:
            out += np.sum(dW[..., :, None] * c.sig, axis=-2)
        return out, None

    # exact Gaussian transition ------------------------------------------

    def exact_noise(self, dt: float, z1, z2):
        """Joint Brownian increments and OU increments ``int e^{-kappa(t+dt-s)} dW_s`` from two normal draws."""
        k = self.kappas
        cov = np.where(k > 0, -np.expm1(-k * dt) / np.where(k > 0, k, 1.0), dt)
        var = np.where(k > 0, -np.expm1(-2 * k * dt) / np.where(k > 0, 2 * k, 1.0), dt)
        resid = np.sqrt(np.maximum(var - cov * cov / dt, 0.0))
        dW = math.sqrt(dt) * z1
        return dW, (cov / dt) * dW + resid * z2

    def _lam_path(self, s: float, measure: Measure) -> np.ndarray:
        if measure.kind == "P":
            return self.mpr(s, None)
        if measure.kind == "Q":
            return np.zeros(self.vol.n_factors)
        if measure.kind == "QInf":
            return self.vol.long_bond_vols(s, None, self.grid)
        return self.vol.bond_vols(s, None, self.grid, self._qt_remaining(measure.maturity, s))

    def _advance_exact(self, t, dt, dW, xi, ou, measure):
        if xi is None or ou is None or measure is None:
            raise ValueError("exact stepping needs xi, ou and the simulation measure")
        k = self.kappas
        s_nodes = t + 0.5 * dt * (_GL_NODES + 1.0)
        lam = np.array([self._lam_path(s, measure) for s in s_nodes])  # (8, J)
        decay = np.exp(-k[None, :] * (t + dt - s_nodes)[:, None])
        shift_xi = 0.5 * dt * np.sum(_GL_WEIGHTS[:, None] * decay * lam, axis=0)
        ou = np.exp(-k * dt) * ou + (xi - shift_xi)
        tau = t + dt
        base = self._deterministic_curve(tau)
        sig = self.vol.curves(tau, None, self.grid)
        out = np.broadcast_to(base, ou.shape[:-1] + base.shape).copy()
        for j in range(sig.shape[0]):
            if np.any(sig[j]):
                out += ou[..., j, None] * sig[j]
        return out, ou

    def _deterministic_curve(self, tau):
        """``f0(tau + x) + int_0^tau alpha(x + u) du`` on the grid, tail held at f0(inf)."""
        x = self.grid.nodes
        out = np.interp(x + tau, x, self.f0.values)
        for s, k in zip(self.sigmas, self.kappas):
            if s == 0:
                continue
            e1 = np.exp(-k * x)
            term = (s / k) ** 2 * (e1 * -math.expm1(-k * tau) - 0.5 * e1 * e1 * -math.expm1(-2 * k * tau))
            term[-1] = 0.0
            out += term
        return out


# ------------------------------------------------------ single-curve API


def _coefficients_for(vol, mpr, t, f, measure):
    engine = HJMEngine(f.grid, vol, mpr, f, EulerMaruyama())
    return engine, engine.coefficients(t, f.values, measure)


def hjm_drift(vol: VolSpec, mpr: MarketPriceOfRisk, t: float, f: ForwardCurve, measure: Measure) -> DriftAssembly:
    """Drift decomposition ``mu = alpha_HJM - lam . sigma`` under `measure`."""
    if measure.kind == "QInf":
        require_longbond(vol)
    engine, c = _coefficients_for(vol, mpr, t, f, measure)
    alpha = np.broadcast_to(c.alpha, f.values.shape)
    mpr_term = np.sum(c.lam[:, None] * c.sig, axis=0)
    return DriftAssembly(ForwardCurve(f.grid, alpha), ForwardCurve(f.grid, mpr_term), ForwardCurve(f.grid, alpha - mpr_term))


def step(f: ForwardCurve, t: float, scheme, vol: VolSpec, mpr: MarketPriceOfRisk, measure: Measure, dW) -> ForwardCurve:
    """One Euler-Maruyama step of a single curve.

    The exact Gaussian scheme carries an Ornstein-Uhlenbeck state besides the
    curve and is driven through :class:`HJMEngine` instead.
    """
    if scheme.kind != "euler":
        raise ValueError("single-curve step supports the Euler scheme; use HJMEngine for exact stepping")
    engine, c = _coefficients_for(vol, mpr, t, f, measure)
    values, _ = engine.advance(f.values, t, scheme.dt, c, np.asarray(dW, dtype=float))
    if not np.all(np.isfinite(values)):
        raise NumericalBlowup(t, 0)
    if values[-1] != f.values[-1]:
        raise InvariantViolation("long rate changed during a step")
    return ForwardCurve(f.grid, values)
