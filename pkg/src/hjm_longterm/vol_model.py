"""Forward-rate volatilities, market price of risk and bond volatilities.

Volatility factors take values in the subspace of curves vanishing at
infinity, so every factor curve has a zero last node. Bond volatilities are
integrals of the factor curves over time to maturity; the long-bond
volatility integrates over the whole half-line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .curve_space import (
    ExponentialWeight,
    ForwardCurve,
    MaturityGrid,
    PowerWeight,
    WeightSpec,
    cell_weight_integrals,
    cumulative_integral,
    hw_norm_values,
    integrate_values,
    power_exponential_moment,
)

# Slack on runtime bound assertions. The grid norm uses trapezoid weights, which
# overstate the exact norm of a smooth factor by ~0.2% on the default grid.
BOUND_RTOL = 1e-2


class InvariantViolation(RuntimeError):
    """A model invariant failed at runtime (misconfigured model or a bug)."""


class ConfigurationError(ValueError):
    """The model does not meet a hypothesis needed for the requested quantity."""


# ---------------------------------------------------------------- factors


@dataclass(frozen=True)
class ExponentialFactor:
    """Factor curve ``sigma * exp(-kappa x)``."""

    sigma: float
    kappa: float

    def __post_init__(self):
        if self.sigma < 0 or self.kappa < 0:
            raise ValueError("exponential factor needs sigma >= 0 and kappa >= 0")
        if self.sigma > 0 and self.kappa == 0:
            raise ValueError("a constant factor does not vanish at infinity (kappa must be > 0)")

    def values(self, grid: MaturityGrid) -> np.ndarray:
        if self.sigma == 0:
            return np.zeros(grid.size)
        v = self.sigma * np.exp(-self.kappa * grid.nodes)
        v[-1] = 0.0
        return v

    def integral(self, tau: float) -> float:
        if self.sigma == 0:
            return 0.0
        return -self.sigma / self.kappa * math.expm1(-self.kappa * tau)

    def tail_integral(self, tau: float) -> float:
        if self.sigma == 0:
            return 0.0
        return self.sigma / self.kappa * math.exp(-self.kappa * tau)

    def total_integral(self) -> float:
        return 0.0 if self.sigma == 0 else self.sigma / self.kappa

    def s_transform(self, grid: MaturityGrid) -> np.ndarray:
        """Closed form of ``h(x) int_0^x h`` for this factor."""
        if self.sigma == 0:
            return np.zeros(grid.size)
        e = np.exp(-self.kappa * grid.nodes)
        v = self.sigma**2 / self.kappa * (e - e * e)
        v[-1] = 0.0
        return v

    def norm_sq(self, weight: WeightSpec) -> float:
        """Squared weighted Sobolev norm of the exact (untruncated) factor."""
        if self.sigma == 0:
            return 0.0
        k = self.kappa
        if isinstance(weight, PowerWeight):
            moment = power_exponential_moment(weight.alpha, 2 * k)
        elif isinstance(weight, ExponentialWeight):
            moment = 1.0 / (2 * k - weight.alpha) if 2 * k > weight.alpha else math.inf
        else:
            moment, _ = integrate.quad(lambda x: math.exp(-2 * k * x) * float(weight(x)), 0, np.inf, limit=400)
        return self.sigma**2 * (1.0 + k * k * moment)


@dataclass(frozen=True, eq=False)
class TabulatedFactor:
    """Deterministic factor given on a grid, hard zero beyond x_max."""

    curve: ForwardCurve

    def __post_init__(self):
        if self.curve.long_rate != 0.0:
            raise ValueError("tabulated factor must vanish at x_max (long rate 0)")

    def values(self, grid: MaturityGrid) -> np.ndarray:
        if grid != self.curve.grid:
            raise ValueError("tabulated factor lives on a different grid")
        return np.array(self.curve.values)


# ------------------------------------------------------------ volatilities


class VolSpec:
    """A J-factor volatility map ``(t, curve) -> J factor curves``."""

    n_factors: int
    wbar: WeightSpec
    bound_D2: float
    lipschitz_D1: float

    @property
    def is_deterministic(self) -> bool:
        return False

    @property
    def is_exponential(self) -> bool:
        return False

    def curves(self, t: float, f_values, grid: MaturityGrid) -> np.ndarray:
        """Factor curves, shape ``(J, n)`` or ``(N, J, n)`` for a batch of curves."""
        raise NotImplementedError

    def bond_vols(self, t, f_values, grid, tau, sig=None) -> np.ndarray:
        """``int_0^tau sigma_t(u) du`` per factor."""
        if sig is None:
            sig = self.curves(t, f_values, grid)
        return integrate_values(grid, sig, 0.0, min(tau, grid.x_max))

    def tail_bond_vols(self, t, f_values, grid, tau, sig=None) -> np.ndarray:
        """``int_tau^inf sigma_t(u) du`` per factor (zero tail beyond x_max)."""
        if sig is None:
            sig = self.curves(t, f_values, grid)
        if tau >= grid.x_max:
            return np.zeros(sig.shape[:-1])
        return integrate_values(grid, sig, tau, grid.x_max)

    def long_bond_vols(self, t, f_values, grid, sig=None) -> np.ndarray:
        if sig is None:
            sig = self.curves(t, f_values, grid)
        return cumulative_integral(grid, sig)[..., -1]

    def alpha_hjm(self, t, f_values, grid, sig=None) -> np.ndarray:
        """``sum_j sigma^j(x) int_0^x sigma^j``, trapezoid quadrature."""
        if sig is None:
            sig = self.curves(t, f_values, grid)
        return np.sum(sig * cumulative_integral(grid, sig), axis=-2)


class DeterministicVol(VolSpec):
    """Curve-independent factors (exponential or tabulated)."""

    def __init__(self, factors: Sequence, wbar: WeightSpec | None = None, bound_D2: float | None = None):
        self.factors = tuple(factors)
        self.n_factors = len(self.factors)
        self.wbar = wbar if wbar is not None else PowerWeight(4.0)
        self.lipschitz_D1 = 0.0
        self.bound_D2 = float(bound_D2) if bound_D2 is not None else self._norm_bound()
        self._cache = {}

    @classmethod
    def exponential(cls, sigmas, kappas, wbar=None) -> "DeterministicVol":
        sigmas, kappas = np.atleast_1d(sigmas), np.atleast_1d(kappas)
        if sigmas.shape != kappas.shape:
            raise ValueError("sigma and kappa lists must have equal length")
        return cls([ExponentialFactor(float(s), float(k)) for s, k in zip(sigmas, kappas)], wbar)

    @classmethod
    def zero(cls, n_factors: int = 1, wbar=None) -> "DeterministicVol":
        return cls([ExponentialFactor(0.0, 1.0)] * n_factors, wbar)

    def _norm_bound(self) -> float:
        total = 0.0
        for fac in self.factors:
            if isinstance(fac, ExponentialFactor):
                total += fac.norm_sq(self.wbar)
            else:
                total += float(hw_norm_values(fac.curve.grid, fac.curve.values, self.wbar)) ** 2
        return math.sqrt(total)

    @property
    def is_deterministic(self):
        return True

    @property
    def is_exponential(self):
        return all(isinstance(f, ExponentialFactor) for f in self.factors)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([f.sigma for f in self.factors])

    @property
    def kappas(self) -> np.ndarray:
        return np.array([f.kappa for f in self.factors])

    @property
    def squared_sum(self) -> float:
        """``sum_j sigma_j^2 (1 + kappa_j)`` for exponential factors."""
        return float(sum(f.sigma**2 * (1 + f.kappa) for f in self.factors if isinstance(f, ExponentialFactor)))

    def _grid_data(self, grid):
        data = self._cache.get(grid)
        if data is None:
            sig = np.array([f.values(grid) for f in self.factors]).reshape(self.n_factors, grid.size)
            if self.is_exponential:
                alpha = np.sum([f.s_transform(grid) for f in self.factors], axis=0).reshape(grid.size)
            else:
                alpha = VolSpec.alpha_hjm(self, 0.0, None, grid, sig)
            sig.setflags(write=False)
            alpha.setflags(write=False)
            data = self._cache[grid] = (sig, alpha)
        return data

    def curves(self, t, f_values, grid):
        return self._grid_data(grid)[0]

    def alpha_hjm(self, t, f_values, grid, sig=None):
        return self._grid_data(grid)[1]

    def bond_vols(self, t, f_values, grid, tau, sig=None):
        if self.is_exponential:
            return np.array([f.integral(tau) for f in self.factors])
        return super().bond_vols(t, f_values, grid, tau, sig)

    def tail_bond_vols(self, t, f_values, grid, tau, sig=None):
        if self.is_exponential:
            return np.array([f.tail_integral(tau) for f in self.factors])
        return super().tail_bond_vols(t, f_values, grid, tau, sig)

    def long_bond_vols(self, t, f_values, grid, sig=None):
        if self.is_exponential:
            return np.array([f.total_integral() for f in self.factors])
        return super().long_bond_vols(t, f_values, grid, sig)

    def __repr__(self):
        return f"DeterministicVol({list(self.factors)!r}, wbar={self.wbar!r})"


class StateDependentVol(VolSpec):
    """Volatility given by a pure function ``fn(t, f_values, grid) -> (..., J, n)``.

    The caller declares the Lipschitz and bound constants; every evaluation
    through :func:`eval_vol` is checked against `bound_D2`.
    """

    def __init__(self, fn: Callable, n_factors: int, bound_D2: float, lipschitz_D1: float, wbar: WeightSpec | None = None):
        self.fn = fn
        self.n_factors = int(n_factors)
        self.bound_D2 = float(bound_D2)
        self.lipschitz_D1 = float(lipschitz_D1)
        self.wbar = wbar if wbar is not None else PowerWeight(4.0)

    def curves(self, t, f_values, grid):
        sig = np.asarray(self.fn(t, f_values, grid), dtype=float)
        if sig.shape[-2:] != (self.n_factors, grid.size):
            raise InvariantViolation(f"volatility map returned shape {sig.shape}")
        return sig


# ------------------------------------------------------- market price of risk


class MarketPriceOfRisk:
    """The l2-valued process gamma, dominated by ``Gamma(t)``."""

    n_factors: int
    #: whether the declared dominator is square integrable on [0, inf)
    dominator_in_l2: bool = True

    @property
    def is_deterministic(self) -> bool:
        return True

    def __call__(self, t: float, f_values=None) -> np.ndarray:
        raise NotImplementedError

    def dominator(self, t: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroMPR(MarketPriceOfRisk):
    n_factors: int = 1

    def __call__(self, t, f_values=None):
        return np.zeros(self.n_factors)

    def dominator(self, t):
        return 0.0


@dataclass(frozen=True)
class ConstantMPR(MarketPriceOfRisk):
    """Constant gamma; its dominator is only square integrable on finite horizons."""

    gamma: tuple
    dominator_in_l2 = False

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(float(g) for g in np.atleast_1d(self.gamma)))

    @property
    def n_factors(self):
        return len(self.gamma)

    def __call__(self, t, f_values=None):
        return np.array(self.gamma)

    def dominator(self, t):
        return float(np.linalg.norm(self.gamma))


@dataclass(frozen=True)
class ExponentialDecayMPR(MarketPriceOfRisk):
    """``gamma(t) = gamma0 * exp(-decay t)``, dominated by ``|gamma0| exp(-decay t)``."""

    gamma0: tuple
    decay: float

    def __post_init__(self):
        object.__setattr__(self, "gamma0", tuple(float(g) for g in np.atleast_1d(self.gamma0)))
        if self.decay <= 0:
            raise ValueError("decay must be positive for a square-integrable dominator")

    @property
    def n_factors(self):
        return len(self.gamma0)

    def __call__(self, t, f_values=None):
        return np.array(self.gamma0) * math.exp(-self.decay * t)

    def dominator(self, t):
        return float(np.linalg.norm(self.gamma0)) * math.exp(-self.decay * t)


class DeterministicMPR(MarketPriceOfRisk):
    def __init__(self, fn: Callable, dominator: Callable, n_factors: int):
        self.fn, self._dominator, self.n_factors = fn, dominator, int(n_factors)

    def __call__(self, t, f_values=None):
        return np.asarray(self.fn(t), dtype=float).reshape(self.n_factors)

    def dominator(self, t):
        return float(self._dominator(t))


class StateDependentMPR(MarketPriceOfRisk):
    """``fn(t, f_values) -> (..., J)``, a pure function of time and curve."""

    def __init__(self, fn: Callable, dominator: Callable, n_factors: int):
        self.fn, self._dominator, self.n_factors = fn, dominator, int(n_factors)

    @property
    def is_deterministic(self):
        return False

    def __call__(self, t, f_values=None):
        return np.asarray(self.fn(t, f_values), dtype=float)

    def dominator(self, t):
        return float(self._dominator(t))


# ----------------------------------------------------------- tail bounds


@dataclass(frozen=True)
class TailBoundParams:
    """``C(T) = K min(T^{-eps/2}, 1)``."""

    K: float
    eps: float

    def __post_init__(self):
        if not (self.K > 0 and self.eps > 0):
            raise ValueError("tail bound needs K > 0 and eps > 0")

    def __call__(self, T):
        T = np.asarray(T, dtype=float)
        with np.errstate(divide="ignore"):
            cap = np.where(T > 1.0, T ** (-self.eps / 2.0), 1.0)
        out = self.K * cap
        return float(out) if out.ndim == 0 else out


def tail_bound_C(p: TailBoundParams, T: float) -> float:
    if T < 0:
        raise ValueError("T must be non-negative")
    return p(T)


def analytic_tail_bound(wbar: WeightSpec) -> TailBoundParams:
    """Constants for ``int_T^inf |h| <= C(T) |h|_wbar`` derived in closed form for `wbar`.

    Uses ``|h(x)| <= |h| (int_x^inf 1/wbar)^{1/2}`` and integrates the bound.
    """
    if isinstance(wbar, PowerWeight):
        a = wbar.alpha
        if a <= 3:
            raise ConfigurationError("power weight needs alpha > 3 for a decaying tail bound")
        return TailBoundParams(K=2.0 / ((a - 3.0) * math.sqrt(a - 1.0)), eps=a - 3.0)
    if isinstance(wbar, ExponentialWeight):
        b = wbar.alpha
        return TailBoundParams(K=2.0 / b**1.5 * max(1.0, 2.0 / (b * math.e)), eps=2.0)
    raise ConfigurationError(f"no tail bound for weight {wbar!r}: long-bond weight condition not met")


def calibrate_tail_constant(wbar: WeightSpec, eps: float, grid: MaturityGrid, rng, n_members: int = 100,
                            kappa_range=(0.05, 5.0), T_grid=None) -> float:
    """Smallest K with ``int_T^inf |h| <= K min(T^{-eps/2},1) |h|`` over random exponential curves."""
    from .curve_space import tail_integral_abs

    if T_grid is None:
        T_grid = np.linspace(0.0, 0.5 * grid.x_max, 61)
    cw = cell_weight_integrals(grid, wbar)
    worst = 0.0
    for kappa in np.exp(rng.uniform(*np.log(kappa_range), size=n_members)):
        h = ForwardCurve(grid, ExponentialFactor(1.0, float(kappa)).values(grid))
        norm = float(hw_norm_values(grid, h.values, wbar, cw))
        for T in T_grid:
            cap = min(T ** (-eps / 2.0), 1.0) if T > 0 else 1.0
            worst = max(worst, tail_integral_abs(h, float(T)) / (cap * norm))
    return worst


# ------------------------------------------------------------ operations


def eval_vol(v: VolSpec, t: float, f: ForwardCurve) -> list[ForwardCurve]:
    """Factor curves at (t, f), with the long-rate and norm-bound invariants checked."""
    if t < 0:
        raise ValueError("t must be non-negative")
    sig = v.curves(t, f.values, f.grid)
    if np.any(sig[..., -1] != 0.0):
        raise InvariantViolation("volatility factor curves must vanish at x_max")
    norm = math.sqrt(float(np.sum(hw_norm_values(f.grid, sig, v.wbar) ** 2)))
    if norm > v.bound_D2 * (1 + BOUND_RTOL):
        raise InvariantViolation(f"volatility norm {norm:.6g} exceeds bound D2={v.bound_D2:.6g}")
    return [ForwardCurve(f.grid, s) for s in sig]


def bond_vol(v: VolSpec, t: float, f: ForwardCurve, T: float) -> np.ndarray:
    """Volatility of the bond maturing at calendar time T."""
    if t > T:
        raise ValueError("bond volatility needs t <= T")
    return v.bond_vols(t, f.values, f.grid, T - t)


def require_longbond(v: VolSpec) -> None:
    if not v.wbar.satisfies_longbond_condition:
        raise ConfigurationError(
            f"long-bond weight condition: 1/wbar(x) must decay like x^-(3+eps); {v.wbar!r} does not"
        )


def long_bond_vol(v: VolSpec, t: float, f: ForwardCurve) -> np.ndarray:
    require_longbond(v)
    return v.long_bond_vols(t, f.values, f.grid)


def eval_mpr(g: MarketPriceOfRisk, t: float, f: ForwardCurve | None = None) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be non-negative")
    gamma = g(t, None if f is None else f.values)
    bound = g.dominator(t)
    if np.linalg.norm(gamma) > bound * (1 + 1e-12) + 1e-300:
        raise InvariantViolation(f"market price of risk exceeds its dominator {bound:.6g} at t={t}")
    return gamma
