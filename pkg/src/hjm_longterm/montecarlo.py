"""Seeded, block-parallel path simulation with pricing-kernel accounting.

Paths are split into fixed-size blocks. Block ``b`` draws its Brownian
increments from ``SeedSequence(seed, spawn_key=(b, 0))`` and, for the exact
scheme, the extra Ornstein-Uhlenbeck residual from ``spawn_key=(b, 1)``. The
partition never depends on the worker count and blocks are reassembled in
order, so every output is bit-identical for any number of threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .curve_space import ForwardCurve, MaturityGrid, integrate_values
from .factorization import accrue, factorization_residual, initial_state, roll_over
from .hjm_engine import HJMEngine, NumericalBlowup
from .measures import Measure
from .vol_model import InvariantViolation, MarketPriceOfRisk, VolSpec

DEFAULT_BLOCK = 500
_MERGE_TOL = 1e-9
_FUNCTIONAL_FIELDS = ("jT", "kT", "zT", "dj", "kdiff", "kdiff_run")


@dataclass(frozen=True, eq=False)
class Model:
    grid: MaturityGrid
    vol: VolSpec
    mpr: MarketPriceOfRisk
    f0: ForwardCurve

    @property
    def n_factors(self) -> int:
        return self.vol.n_factors


def time_grid(horizon: float, dt: float, extra=()) -> np.ndarray:
    """Uniform dt grid on [0, horizon] merged with the `extra` times; extra times are kept exactly."""
    if dt <= 0 or horizon < 0:
        raise ValueError("need dt > 0 and horizon >= 0")
    n = int(round(horizon / dt))
    if abs(n * dt - horizon) > _MERGE_TOL * max(1.0, horizon):
        n = int(math.ceil(horizon / dt))
    base = [min(k * dt, horizon) for k in range(n + 1)] + [horizon]
    special = sorted({float(x) for x in extra if 0 <= x <= horizon} | {0.0, float(horizon)})
    merged = []
    for t in sorted(set(base)):
        j = np.searchsorted(special, t)
        near = [s for s in special[max(j - 1, 0): j + 1] if abs(s - t) <= _MERGE_TOL * max(1.0, abs(t))]
        if not near:
            merged.append(t)
    return np.array(sorted(set(merged) | set(special)))


@dataclass
class MCResult:
    """Per-path observables at the output times, stacked as ``(K, N)`` arrays."""

    times: np.ndarray
    data: dict
    stats: dict
    path_rows: list = field(default_factory=list)

    def at(self, name: str, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9:
            raise KeyError(f"{t} is not an output time")
        return self.data[name][k]

    @property
    def n_paths(self) -> int:
        return next(iter(self.data.values())).shape[1]


class _Functionals:
    """Running proof functionals for a bond with fixed maturity T (not rolled)."""

    def __init__(self, T, n):
        self.T = T
        z = lambda: np.zeros(n)
        self.jT, self.kT, self.zT, self.dj, self.kdiff, self.kdiff_run = z(), z(), z(), z(), z(), z()
        self.kdiff_sup = 0.0

    def update(self, t, dt, dWQ, sig_T, sig_bar, sig_inf):
        if t >= self.T:
            return
        self.jT += np.sum(sig_T * dWQ, axis=-1)
        self.kT += 0.5 * np.sum(sig_T * sig_T, axis=-1) * dt
        self.zT += 0.5 * np.sum(sig_bar * sig_bar, axis=-1) * dt
        self.dj -= np.sum(sig_bar * dWQ, axis=-1)
        self.kdiff -= 0.5 * np.sum(sig_bar * (sig_T + sig_inf), axis=-1) * dt
        np.maximum(self.kdiff_run, np.abs(self.kdiff), out=self.kdiff_run)
        self.kdiff_sup = max(self.kdiff_sup, float(np.max(self.kdiff_run)))


def _block_sizes(n_paths, block_size, antithetic):
    if antithetic and block_size % 2:
        raise ValueError("antithetic sampling needs an even block size")
    sizes = [block_size] * (n_paths // block_size)
    if n_paths % block_size:
        sizes.append(n_paths % block_size)
    if antithetic and any(s % 2 for s in sizes):
        raise ValueError("antithetic sampling needs an even number of paths")
    return sizes


def _normals(rng, n, j, antithetic):
    if not antithetic:
        return rng.standard_normal((n, j))
    half = rng.standard_normal((n // 2, j))
    return np.concatenate([half, -half])


def simulate_paths(model: Model, scheme, measure: Measure, n_paths: int, seed: int, output_times,
                   rollover_periods=(), functional_maturities=(), block_size: int = DEFAULT_BLOCK,
                   threads: int = 1, antithetic: bool = False, record_paths: int = 0,
                   check_factorization: bool = True) -> MCResult:
    """Simulate `n_paths` curves with accounting under `measure` and record observables at `output_times`."""
    output_times = np.array(sorted({float(t) for t in output_times}))
    if output_times.size == 0 or output_times[0] < 0:
        raise ValueError("need non-negative output times")
    horizon = float(output_times[-1])
    engine = HJMEngine(model.grid, model.vol, model.mpr, model.f0, scheme)
    rolls = tuple(float(T) for T in rollover_periods)
    extra = set(output_times.tolist())
    for T in rolls + ((measure.maturity,) if measure.kind == "QT" else ()):
        extra |= {k * T for k in range(1, int(horizon / T) + 1)}
    times = time_grid(horizon, scheme.dt, extra)
    out_index = {int(np.argmin(np.abs(times - t))): i for i, t in enumerate(output_times)}
    sizes = _block_sizes(n_paths, block_size, antithetic)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
    args = dict(engine=engine, model=model, measure=measure, times=times, out_index=out_index, rolls=rolls,
                functional_maturities=tuple(float(T) for T in functional_maturities), antithetic=antithetic,
                record_paths=record_paths, check_factorization=check_factorization, seed=seed)

    def run(b):
        return _run_block(b, int(starts[b]), sizes[b], **args)

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(run, range(len(sizes))))
    else:
        blocks = [run(b) for b in range(len(sizes))]

    data = {name: np.concatenate([blk["data"][name] for blk in blocks], axis=1) for name in blocks[0]["data"]}
    stats = {}
    for key in blocks[0]["stats"]:
        stats[key] = max(blk["stats"][key] for blk in blocks)
    stats["n_steps"] = int(times.size - 1)
    rows = [row for blk in blocks for row in blk["rows"]]
    return MCResult(output_times, data, stats, rows)


def _run_block(b, start, size, *, engine, model, measure, times, out_index, rolls, functional_maturities,
               antithetic, record_paths, check_factorization, seed):
    J = model.n_factors
    exact = engine.scheme.kind == "exact"
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b, 0)))
    rng_xi = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b, 1))) if exact else None
    ps = initial_state(model.f0, size, rolls, path_ids=np.arange(start, start + size), n_factors=J if exact else 0)
    long_rate = model.f0.values[-1]
    funcs = {T: _Functionals(T, size) for T in functional_maturities}
    has_inf = engine.has_long_bond
    j_inf, k_inf = np.zeros(size), np.zeros(size)
    W = np.zeros((size, J))
    K = len(out_index)
    names = ["r", "log_A", "log_M", "log_Minf", "log_Binf", "j_inf", "k_inf"]
    for T in rolls:
        names += [f"log_B[{T:g}]", f"log_gap[{T:g}]", f"log_B_curve[{T:g}]"]
    for T in functional_maturities:
        names += [f"{a}[{T:g}]" for a in _FUNCTIONAL_FIELDS]
    data = {name: np.zeros((K, size)) for name in names}
    data["W"] = np.zeros((K, size, J))
    if exact:
        data["ou"] = np.zeros((K, size, J))
    stats = {"max_longrate_dev": 0.0, "max_gamma_residual": 0.0, "max_factorization_residual": 0.0}
    for T in functional_maturities:
        stats[f"kdiff_sup[{T:g}]"] = 0.0
    rows = []
    n_rec = max(0, min(record_paths - start, size))

    def record(k):
        ps_vals = ps.values
        data["r"][k] = ps_vals[:, 0]
        for name in ("log_A", "log_M", "log_Minf", "log_Binf"):
            data[name][k] = getattr(ps, name)
        data["j_inf"][k], data["k_inf"][k] = j_inf, k_inf
        data["W"][k] = W
        if exact:
            data["ou"][k] = ps.ou
        for T, tr in ps.rollover.items():
            data[f"log_B[{T:g}]"][k] = tr.log_B
            data[f"log_gap[{T:g}]"][k] = tr.log_gap
            data[f"log_B_curve[{T:g}]"][k] = -tr.log_prod - _bond_integral(ps, tr.remaining(ps.t))
        for T, fn in funcs.items():
            for attr in _FUNCTIONAL_FIELDS:
                data[f"{attr}[{T:g}]"][k] = getattr(fn, attr)
        for i in range(n_rec):
            row = {"path": int(ps.path_ids[i]), "t": ps.t, "r": float(ps_vals[i, 0]), "A": math.exp(ps.log_A[i]),
                   "M": math.exp(ps.log_M[i]), "Minf": math.exp(ps.log_Minf[i]), "Binf": math.exp(ps.log_Binf[i])}
            for T, tr in ps.rollover.items():
                row[f"B_T{T:g}"] = math.exp(tr.log_B[i])
            rows.append(row)

    if 0 in out_index:
        record(out_index[0])
    for step in range(times.size - 1):
        t, t_next = float(times[step]), float(times[step + 1])
        h = t_next - t
        taus = [tr.remaining(t) for tr in ps.rollover.values()] + [T - t for T in functional_maturities if T > t]
        c = engine.coefficients(t, ps.values, measure, taus)
        z1 = _normals(rng, size, J, antithetic)
        if exact:
            dW, xi = engine.exact_noise(h, z1, _normals(rng_xi, size, J, antithetic))
        else:
            dW, xi = math.sqrt(h) * z1, None
        acc = accrue(ps, h, dW, c)
        W += dW
        stats["max_gamma_residual"] = max(stats["max_gamma_residual"], acc["gamma_residual"])
        if has_inf:
            j_inf += np.sum(c.sig_inf * acc["dWQ"], axis=-1)
            k_inf += 0.5 * np.sum(c.sig_inf * c.sig_inf, axis=-1) * h
            for T, fn in funcs.items():
                if T > t:
                    s_T, s_bar = c.bond_vols[T - t]
                    fn.update(t, h, acc["dWQ"], s_T, s_bar, c.sig_inf)
        values, ou = engine.advance(ps.values, t, h, c, dW, xi, ps.ou, measure)
        if not np.all(np.isfinite(values)):
            bad = int(np.argmax(~np.all(np.isfinite(values), axis=1)))
            raise NumericalBlowup(t_next, int(ps.path_ids[bad]))
        dev = float(np.max(np.abs(values[:, -1] - long_rate)))
        if dev != 0.0:
            raise InvariantViolation(f"long rate moved by {dev:.3e} at t={t_next:.6g}")
        ps.values, ps.ou, ps.t = values, ou, t_next
        roll_over(ps)
        if check_factorization and has_inf:
            stats["max_factorization_residual"] = max(stats["max_factorization_residual"],
                                                      float(np.max(factorization_residual(ps))))
        if step + 1 in out_index:
            record(out_index[step + 1])
    for T, fn in funcs.items():
        stats[f"kdiff_sup[{T:g}]"] = fn.kdiff_sup
    return {"data": data, "stats": stats, "rows": rows}


def _bond_integral(ps, tau):
    return integrate_values(ps.grid, ps.values, 0.0, tau)
