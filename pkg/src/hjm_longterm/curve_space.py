"""Forward curves as elements of a weighted Sobolev space.

A curve is stored by its node values on a :class:`MaturityGrid`. The
representative used everywhere is the piecewise-linear interpolant with a
constant tail beyond the last node, so the weak derivative is piecewise
constant and the long rate is the last node value.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate, optimize, special


class MaturityGrid:
    """Strictly increasing time-to-maturity nodes starting at zero."""

    __slots__ = ("nodes", "_shift_cache")

    def __init__(self, nodes):
        nodes = np.array(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("a maturity grid needs at least 3 nodes")
        if nodes[0] != 0.0:
            raise ValueError("the first grid node must be 0")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        self.nodes = nodes
        self._shift_cache = {}

    @classmethod
    def geometric(cls, x_max: float = 60.0, n: int = 120, first_step: float = 0.01) -> "MaturityGrid":
        """Nodes ``x_i = x_max (e^{b i/(n-1)} - 1) / (e^b - 1)`` with the first gap equal to `first_step`."""
        if not 0 < first_step < x_max / (n - 1):
            raise ValueError("first_step must be positive and below the uniform spacing")

        def gap(b):
            return x_max * math.expm1(b / (n - 1)) / math.expm1(b) - first_step

        b = optimize.brentq(gap, 1e-9, 700.0)
        u = np.linspace(0.0, 1.0, n)
        nodes = x_max * np.expm1(b * u) / math.expm1(b)
        nodes[0], nodes[-1] = 0.0, x_max
        return cls(nodes)

    @classmethod
    def uniform(cls, x_max: float, step: float) -> "MaturityGrid":
        n = int(round(x_max / step))
        if not math.isclose(n * step, x_max, rel_tol=1e-12):
            raise ValueError("x_max must be a multiple of step")
        return cls(step * np.arange(n + 1))

    @classmethod
    def hybrid(cls, step: float, x_fine: float, x_max: float = 60.0, n_coarse: int = 60) -> "MaturityGrid":
        """Uniform spacing `step` on [0, x_fine], then geometric growth up to `x_max`."""
        fine = cls.uniform(x_fine, step).nodes
        coarse = cls.geometric(x_max - x_fine, n_coarse + 1, first_step=step).nodes
        return cls(np.concatenate([fine, x_fine + coarse[1:]]))

    @property
    def x_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    def refined(self) -> "MaturityGrid":
        """Dyadic refinement: a midpoint inserted in every cell."""
        mids = 0.5 * (self.nodes[:-1] + self.nodes[1:])
        out = np.empty(2 * self.size - 1)
        out[0::2] = self.nodes
        out[1::2] = mids
        return MaturityGrid(out)

    def shift_weights(self, dt: float):
        """Cell indices and linear weights sampling ``x + dt`` (clamped to x_max) at every node."""
        key = float(dt)
        cached = self._shift_cache.get(key)
        if cached is not None:
            return cached
        x = self.nodes
        y = np.minimum(x + key, x[-1])
        idx = np.clip(np.searchsorted(x, y, side="right") - 1, 0, x.size - 2)
        w = (y - x[idx]) / (x[idx + 1] - x[idx])
        idx.setflags(write=False)
        w.setflags(write=False)
        self._shift_cache[key] = (idx, w)
        return idx, w

    def shift_is_local(self, dt: float) -> bool:
        idx, w = self.shift_weights(dt)
        key = ("local", float(dt))
        if key not in self._shift_cache:
            n = self.size
            self._shift_cache[key] = bool(np.array_equal(idx[:-1], np.arange(n - 1)) and w[-1] == 1.0)
        return self._shift_cache[key]

    def __eq__(self, other):
        if not isinstance(other, MaturityGrid):
            return NotImplemented
        return self.nodes.shape == other.nodes.shape and bool(np.all(self.nodes == other.nodes))

    def __hash__(self):
        return hash(self.nodes.tobytes())

    def __repr__(self):
        return f"MaturityGrid(n={self.size}, x_max={self.x_max:g})"


# ---------------------------------------------------------------- weights


def _check_nonnegative(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("weights are defined for x >= 0 only")
    return x


class WeightSpec:
    """Non-decreasing C^1 weight ``w >= 1`` of the forward-curve norm."""

    def __call__(self, x):
        raise NotImplementedError

    @property
    def satisfies_base_condition(self) -> bool:
        """Closed-form answer to whether ``w^{-1/3}`` is integrable on [0, inf)."""
        raise NotImplementedError

    @property
    def satisfies_longbond_condition(self) -> bool:
        """Whether ``1/w(x) = O(x^{-(3+eps)})`` for some eps > 0."""
        raise NotImplementedError

    def inverse_tail(self, x: float) -> float:
        """``int_x^inf ds / w(s)``."""
        val, _ = integrate.quad(lambda s: 1.0 / float(self(s)), x, np.inf, limit=200)
        return val


@dataclass(frozen=True)
class ExponentialWeight(WeightSpec):
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("exponential weight needs alpha > 0")

    def __call__(self, x):
        return np.exp(self.alpha * _check_nonnegative(x))

    @property
    def satisfies_base_condition(self):
        return True

    @property
    def satisfies_longbond_condition(self):
        return True

    def inverse_tail(self, x):
        return math.exp(-self.alpha * x) / self.alpha

    def label(self):
        return f"exponential:{self.alpha:g}"


@dataclass(frozen=True)
class PowerWeight(WeightSpec):
    """``w(x) = (1 + x)^alpha``."""

    alpha: float

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError("power weight needs alpha >= 0")

    def __call__(self, x):
        return (1.0 + _check_nonnegative(x)) ** self.alpha

    @property
    def satisfies_base_condition(self):
        return self.alpha > 3

    @property
    def satisfies_longbond_condition(self):
        return self.alpha > 3

    def inverse_tail(self, x):
        if self.alpha <= 1:
            return math.inf
        return (1.0 + x) ** (1.0 - self.alpha) / (self.alpha - 1.0)

    def label(self):
        return f"power:{self.alpha:g}"


@dataclass(frozen=True)
class PowerLogWeight(WeightSpec):
    """``w(x) = (1 + x)^power * log(2 + x)^log_power``.

    The default (3, 6) is integrable in the base sense but decays too slowly
    for the long bond to exist.
    """

    power: float = 3.0
    log_power: float = 6.0

    def __post_init__(self):
        if self.power < 0 or self.log_power < 0:
            raise ValueError("power-log weight needs non-negative exponents")

    def __call__(self, x):
        x = _check_nonnegative(x)
        return (1.0 + x) ** self.power * np.log(2.0 + x) ** self.log_power

    @property
    def satisfies_base_condition(self):
        return self.power > 3 or (self.power == 3 and self.log_power > 3)

    @property
    def satisfies_longbond_condition(self):
        return self.power > 3

    def label(self):
        return f"powerlog:{self.power:g}:{self.log_power:g}"


WEIGHT_REGISTRY = {
    "exponential": ExponentialWeight,
    "power": PowerWeight,
    "powerlog": PowerLogWeight,
}


def parse_weight(text: str) -> WeightSpec:
    """Parse ``"power:4"``, ``"exponential:0.1"`` or ``"powerlog[:p:q]"``."""
    name, *args = [s.strip() for s in text.strip().split(":")]
    cls = WEIGHT_REGISTRY.get(name.lower())
    if cls is None:
        raise ValueError(f"unknown weight family {name!r}")
    return cls(*(float(a) for a in args))


def weight_eval(w: WeightSpec, x: float) -> float:
    if x < 0:
        raise ValueError("weights are defined for x >= 0 only")
    return float(w(x))


# ----------------------------------------------------------------- curves


@dataclass(frozen=True, eq=False)
class ForwardCurve:
    """Instantaneous forward rates (1/years) at the nodes of `grid`."""

    grid: MaturityGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("forward curve values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: MaturityGrid, fn: Callable, snap_tail: bool = False) -> "ForwardCurve":
        values = np.array(fn(grid.nodes), dtype=float)
        if snap_tail:
            values[-1] = 0.0
        return cls(grid, values)

    @classmethod
    def flat(cls, grid: MaturityGrid, level: float) -> "ForwardCurve":
        return cls(grid, np.full(grid.size, float(level)))

    @property
    def long_rate(self) -> float:
        return float(self.values[-1])

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / self.grid.widths

    def __call__(self, x):
        return np.interp(x, self.grid.nodes, self.values)

    def _like(self, values):
        return ForwardCurve(self.grid, values)

    def _other(self, other):
        if isinstance(other, ForwardCurve):
            if other.grid != self.grid:
                raise ValueError("curves live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self._like(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._like(self.values - self._other(other))

    def __mul__(self, scalar):
        return self._like(self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)

    def __repr__(self):
        return f"ForwardCurve({self.grid!r}, f(0)={self.values[0]:.6g}, long_rate={self.long_rate:.6g})"


WeightLike = Union[WeightSpec, Callable]


def cell_weight_integrals(grid: MaturityGrid, w: WeightLike) -> np.ndarray:
    """Trapezoid approximation of ``int w`` over each grid cell."""
    wx = np.asarray(w(grid.nodes), dtype=float)
    return 0.5 * (wx[:-1] + wx[1:]) * grid.widths


def hw_norm_values(grid: MaturityGrid, values, w: WeightLike, cell_weights=None) -> np.ndarray:
    """Weighted Sobolev norm of node values; vectorised over leading axes."""
    values = np.asarray(values, dtype=float)
    if cell_weights is None:
        cell_weights = cell_weight_integrals(grid, w)
    slopes = np.diff(values, axis=-1) / grid.widths
    terms = np.concatenate([np.abs(values[..., :1]), np.abs(slopes) * np.sqrt(cell_weights)], axis=-1)
    # scale before squaring so tiny or huge curves neither underflow nor overflow
    scale = np.max(terms, axis=-1, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    return scale[..., 0] * np.sqrt(np.sum((terms / safe) ** 2, axis=-1))


def hw_norm(h: ForwardCurve, w: WeightLike) -> float:
    return float(hw_norm_values(h.grid, h.values, w))


def long_forward_rate(h: ForwardCurve) -> float:
    return h.long_rate


def translate_values(grid: MaturityGrid, values, dt: float) -> np.ndarray:
    """Sample ``x -> h(x + dt)`` at the nodes; constant beyond x_max."""
    if dt < 0:
        raise ValueError("translation needs dt >= 0")
    idx, w = grid.shift_weights(dt)
    values = np.asarray(values, dtype=float)
    if grid.shift_is_local(dt):
        # every node moves within its own cell: slices instead of gathers
        out = np.empty(values.shape)
        np.multiply(values[..., 1:], w[:-1], out=out[..., :-1])
        out[..., :-1] += values[..., :-1] * (1.0 - w[:-1])
        out[..., -1] = values[..., -1]
        return out
    return values[..., idx] * (1.0 - w) + values[..., idx + 1] * w


def translate(h: ForwardCurve, dt: float) -> ForwardCurve:
    return h._like(translate_values(h.grid, h.values, dt))


def cumulative_integral(grid: MaturityGrid, values) -> np.ndarray:
    """``int_0^{x_i} h`` at every node (exact for the piecewise-linear representative)."""
    values = np.asarray(values, dtype=float)
    cells = 0.5 * (values[..., :-1] + values[..., 1:]) * grid.widths
    out = np.zeros(values.shape)
    np.cumsum(cells, axis=-1, out=out[..., 1:])
    return out


def integrate_values(grid: MaturityGrid, values, a: float, b: float, cumulative=None) -> np.ndarray:
    """Exact integral of the representative over [a, b], vectorised over leading axes."""
    if not 0 <= a <= b:
        raise ValueError("need 0 <= a <= b")
    values = np.asarray(values, dtype=float)
    if cumulative is None:
        cumulative = cumulative_integral(grid, values)
    return _antiderivative(grid, values, cumulative, b) - _antiderivative(grid, values, cumulative, a)


def _antiderivative(grid, values, cumulative, x):
    nodes = grid.nodes
    if x >= nodes[-1]:
        return cumulative[..., -1] + (x - nodes[-1]) * values[..., -1]
    i = int(np.searchsorted(nodes, x, side="right")) - 1
    h = x - nodes[i]
    if h == 0.0:
        return cumulative[..., i]
    lam = h / (nodes[i + 1] - nodes[i])
    v_x = values[..., i] * (1.0 - lam) + values[..., i + 1] * lam
    return cumulative[..., i] + 0.5 * h * (values[..., i] + v_x)


def _abs_linear_integral(v0, v1, width):
    """``int |linear|`` over a cell with end values v0, v1."""
    a0, a1 = np.abs(v0), np.abs(v1)
    same_sign = v0 * v1 >= 0
    denom = np.where(same_sign, 1.0, a0 + a1)
    crossing = (v0**2 + v1**2) / (2.0 * denom)
    return width * np.where(same_sign, 0.5 * (a0 + a1), crossing)


def tail_integral_abs(h: ForwardCurve, T: float) -> float:
    """``int_T^inf |h(x)| dx``; ``math.inf`` when the long rate is non-zero."""
    if T < 0:
        raise ValueError("T must be non-negative")
    if h.long_rate != 0.0:
        return math.inf
    nodes, v = h.grid.nodes, h.values
    if T >= nodes[-1]:
        return 0.0
    i = int(np.searchsorted(nodes, T, side="right")) - 1
    head = _abs_linear_integral(float(h(T)), v[i + 1], nodes[i + 1] - T)
    rest = _abs_linear_integral(v[i + 1 : -1], v[i + 2 :], np.diff(nodes[i + 1 :]))
    return float(head + np.sum(rest))


# ---------------------------------------------------------------- CSV I/O


def write_curve_csv(curve: ForwardCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "f"])
        for x, f in zip(curve.grid.nodes, curve.values):
            writer.writerow([repr(float(x)), repr(float(f))])


def read_curve_csv(path) -> ForwardCurve:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames[:2]] != ["x", "f"]:
            raise ValueError(f"{path}: expected header 'x,f'")
        rows = [(float(r["x"]), float(r["f"])) for r in reader]
    xs, fs = zip(*rows)
    return ForwardCurve(MaturityGrid(xs), np.array(fs))


def power_exponential_moment(alpha: float, a: float) -> float:
    """``int_0^inf e^{-a x} (1 + x)^alpha dx`` for a > 0."""
    if a <= 0:
        return math.inf
    if float(alpha).is_integer() and alpha >= 0:
        n = int(alpha)
        return sum(math.comb(n, k) * math.factorial(k) / a ** (k + 1) for k in range(n + 1))
    s = alpha + 1.0
    if a < 500:
        return math.exp(a) * a ** (-s) * special.gamma(s) * special.gammaincc(s, a)
    val, _ = integrate.quad(lambda x: math.exp(-a * x) * (1.0 + x) ** alpha, 0.0, np.inf)
    return val
