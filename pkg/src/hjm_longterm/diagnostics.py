"""Monte Carlo studies and invariant checks assembled into run reports.

Every study returns a :class:`RunReport`. Reports hold only quantities that
are reproducible from (config, seed); wall-clock timings are kept apart so
that ``report.json`` is byte-identical across runs and worker counts.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .config import SimConfig, validate
from .curve_space import ForwardCurve, MaturityGrid, hw_norm_values, tail_integral_abs
from .hjm_engine import make_scheme
from .measures import Measure
from .montecarlo import Model, simulate_paths
from .vol_model import analytic_tail_bound, calibrate_tail_constant

Z_SCORE = 3.0


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    detail: str = ""


@dataclass
class RunReport:
    scenario: str
    command: str
    seed: int
    n_paths: int
    dt: float
    scheme: str
    measure: str
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    path_rows: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, value=None, threshold=None, detail=""):
        self.checks.append(Check(name, bool(passed), _num(value), _num(threshold), detail))

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def merge(self, other: "RunReport") -> None:
        self.checks += other.checks
        self.tables.update(other.tables)
        self.info.update(other.info)
        self.warnings += [w for w in other.warnings if w not in self.warnings]
        self.path_rows += other.path_rows

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario, "command": self.command, "seed": self.seed, "n_paths": self.n_paths,
            "dt": self.dt, "scheme": self.scheme, "measure": self.measure, "passed": self.passed,
            "checks": [c.__dict__ for c in self.checks],
            "tables": self.tables, "info": self.info, "warnings": self.warnings,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"scenario {self.scenario}: {self.command}",
                 f"seed={self.seed} paths={self.n_paths} dt={self.dt:g} scheme={self.scheme} measure={self.measure}",
                 ""]
        for c in self.checks:
            val = "" if c.value is None else f" value={c.value:.6g}"
            thr = "" if c.threshold is None else f" limit={c.threshold:.6g}"
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}{val}{thr}{'  ' + c.detail if c.detail else ''}")
        for name, table in self.tables.items():
            lines += ["", f"{name}:", "  " + "  ".join(f"{col:>14}" for col in table["columns"])]
            for row in table["rows"]:
                lines.append("  " + "  ".join(_fmt(v) for v in row))
        if self.info:
            lines += ["", "info:"] + [f"  {k} = {v}" for k, v in sorted(self.info.items())]
        if self.warnings:
            lines += ["", "warnings:"] + [f"  {w}" for w in self.warnings]
        lines += ["", f"overall: {'PASS' if self.passed else 'FAIL'}"]
        return "\n".join(lines) + "\n"


def _num(v):
    return None if v is None else float(v)


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return f"{v:>14d}"
    if isinstance(v, (float, np.floating)):
        return f"{v:>14.6g}"
    return f"{str(v):>14}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(np.mean(x)), float("nan")
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


def _within(mean, se, target, z=Z_SCORE, atol=1e-12):
    return abs(mean - target) <= z * se + atol


def model_of(cfg: SimConfig) -> Model:
    return Model(cfg.grid, cfg.vol, cfg.mpr, cfg.f0)


def _report(cfg: SimConfig, command: str, n_paths: int, measure: Measure, dt=None, scheme=None) -> RunReport:
    rep = RunReport(cfg.scenario, command, cfg.run.seed, n_paths, cfg.run.dt if dt is None else dt,
                    scheme or cfg.run.scheme, str(measure))
    rep.info["long_forward_rate"] = float(cfg.f0.long_rate)
    rep.info["vol_bound_D2"] = float(cfg.vol.bound_D2)
    rep.info["weights"] = f"w={cfg.w!r} wbar={cfg.wbar!r}"
    rep.warnings += validate(cfg)[1]
    return rep


# -------------------------------------------------------------- simulate


def _log_density(res, name_T, measure: Measure, k):
    if measure.kind == "P":
        return np.zeros(res.n_paths)
    if measure.kind == "Q":
        return res.data["log_M"][k]
    if measure.kind == "QInf":
        return res.data["log_Minf"][k]
    return res.data["log_M"][k] - res.data["log_A"][k] + res.data[name_T(measure.maturity)][k]


def simulate(cfg: SimConfig) -> RunReport:
    """Run the scenario and evaluate every enabled invariant."""
    run = cfg.run
    rolls = tuple(run.rollover)
    if run.measure.kind == "QT" and run.measure.maturity not in rolls:
        rolls += (run.measure.maturity,)
    res = simulate_paths(model_of(cfg), make_scheme(run.scheme, run.dt), run.measure, run.paths, run.seed,
                         run.output_times, rollover_periods=rolls, threads=run.threads, block_size=run.block_size,
                         antithetic=run.antithetic, record_paths=run.record_paths)
    rep = _report(cfg, "simulate", run.paths, run.measure)
    has_inf = cfg.wbar.satisfies_longbond_condition
    ch = cfg.checks
    if ch.get("long_rate", True):
        rep.add("long rate conserved on every step", res.stats["max_longrate_dev"] == 0.0,
                res.stats["max_longrate_dev"], 0.0)
    if ch.get("gamma_decomposition", True) and has_inf:
        rep.add("gamma = long-bond vol + gamma_inf on every step", res.stats["max_gamma_residual"] == 0.0,
                res.stats["max_gamma_residual"], 0.0)
    if ch.get("factorization", True) and has_inf:
        at_outputs = max(float(np.max(np.abs(np.exp(res.data["log_M"][k] - res.data["log_A"][k])
                                             - np.exp(res.data["log_Minf"][k]) / np.exp(res.data["log_Binf"][k]))
                                      / np.exp(res.data["log_M"][k] - res.data["log_A"][k])))
                         for k in range(res.times.size))
        worst = max(res.stats["max_factorization_residual"], at_outputs)
        rep.add("factorization identity S = M_inf / B_inf", worst < 1e-10, worst, 1e-10, "max over paths and steps")

    rows = []
    if ch.get("martingale", True) or ch.get("drift_condition", True):
        name_T = lambda T: f"log_B[{T:g}]"
        targets = [("M (Q density)", Measure("Q"), ch.get("martingale", True))]
        if has_inf:
            targets.append(("M_inf (QInf density)", Measure("QInf"), ch.get("martingale", True)))
        targets += [(f"M^T T={T:g}", Measure.forward(T), ch.get("martingale", True)) for T in rolls]
        for k, t in enumerate(res.times):
            base = _log_density(res, name_T, run.measure, k)
            for label, target, enabled in targets:
                if not enabled or target == run.measure:
                    continue
                x = np.exp(_log_density(res, name_T, target, k) - base)
                m, se = mean_se(x)
                ok = _within(m, se, 1.0)
                rows.append([float(t), label, m, se, (m - 1) / se if se > 0 else 0.0])
                rep.add(f"martingale {label} at t={t:g}", ok, abs(m - 1), Z_SCORE * se)
            if ch.get("drift_condition", True):
                for T in rolls:
                    x = np.exp(res.data["log_M"][k] - res.data["log_A"][k] + res.data[f"log_B_curve[{T:g}]"][k] - base)
                    m, se = mean_se(x)
                    rows.append([float(t), f"curve M^T T={T:g}", m, se, (m - 1) / se if se > 0 else 0.0])
                    rep.add(f"drift condition: curve-priced M^T T={T:g} at t={t:g}", _within(m, se, 1.0),
                            abs(m - 1), Z_SCORE * se)
    rep.tables["martingale_means"] = {"columns": ["t", "process", "mean", "std_error", "z"], "rows": rows}

    summary = []
    for k, t in enumerate(res.times):
        r_m, r_se = mean_se(res.data["r"][k])
        row = [float(t), r_m, r_se, mean_se(np.exp(res.data["log_A"][k]))[0]]
        row.append(mean_se(np.exp(res.data["log_Binf"][k]))[0] if has_inf else float("nan"))
        summary.append(row)
    rep.tables["path_summary"] = {"columns": ["t", "mean_r", "se_r", "mean_A", "mean_Binf"], "rows": summary}

    if ch.get("reweighting", False) and has_inf:
        rep.merge(reweighting_check(cfg))
    rep.info["path_rows"] = len(res.path_rows)
    rep.path_rows = res.path_rows
    return rep


def reweighting_check(cfg: SimConfig) -> RunReport:
    """``E^QInf[r_t]`` by direct QInf simulation and by P simulation weighted with M_inf."""
    run = cfg.run
    t = max(run.output_times)
    common = dict(threads=run.threads, block_size=run.block_size)
    model, scheme = model_of(cfg), make_scheme(run.scheme, run.dt)
    direct = simulate_paths(model, scheme, Measure("QInf"), run.paths, run.seed + 1, [t], **common)
    weighted = simulate_paths(model, scheme, Measure("P"), run.paths, run.seed + 2, [t], **common)
    m1, se1 = mean_se(direct.at("r", t))
    m2, se2 = mean_se(np.exp(weighted.at("log_Minf", t)) * weighted.at("r", t))
    se = math.hypot(se1, se2)
    rep = _report(cfg, "reweighting", run.paths, Measure("QInf"))
    rep.add(f"reweighting E_QInf[r_{t:g}]: direct vs M_inf-weighted P", _within(m1, se, m2), abs(m1 - m2), Z_SCORE * se)
    rep.tables["reweighting"] = {"columns": ["t", "direct", "se_direct", "weighted", "se_weighted"],
                                 "rows": [[t, m1, se1, m2, se2]]}
    return rep


# -------------------------------------------------------- L1 convergence


def _tail_constants(cfg):
    p = analytic_tail_bound(cfg.wbar)
    return p, p(0.0), float(cfg.vol.bound_D2)


def l1_bound(cfg: SimConfig, t: float, T: float) -> float:
    """Hoelder-type bound on the L1 distance assembled from the lemma estimates."""
    p, C0, D2 = _tail_constants(cfg)
    CT = p(T - t)
    y_norm = math.exp(0.5 * C0**2 * t * D2**2)
    y_minus_one = CT * D2 * y_norm * math.sqrt(t)
    E = 0.5 * CT**2 * t * D2**2 + C0 * CT * t * D2**2
    return math.exp(C0**2 * t * D2**2) * (y_minus_one * math.exp(E) + math.expm1(E))


def decay_proxy(cfg: SimConfig, t: float, T: float) -> float | None:
    """``sum_j (sigma_j / kappa_j) exp(-kappa_j (T - t))`` for exponential factors."""
    if not cfg.vol.is_exponential:
        return None
    return float(sum(s / k * math.exp(-k * (T - t)) for s, k in zip(cfg.vol.sigmas, cfg.vol.kappas) if s > 0))


def l1_convergence(cfg: SimConfig, t: float | None = None, Ts=None) -> RunReport:
    """``E^Q |B_t^T / A_t - B_t^inf / A_t|`` for each T with pathwise-coupled noise."""
    t = cfg.converge.t if t is None else float(t)
    Ts = tuple(sorted(cfg.converge.maturities if Ts is None else Ts))
    n = cfg.converge.paths or cfg.run.paths
    run = cfg.run
    res = simulate_paths(model_of(cfg), make_scheme(run.scheme, run.dt), Measure("Q"), n, run.seed, [t],
                         rollover_periods=Ts, threads=run.threads, block_size=run.block_size, antithetic=run.antithetic)
    rep = _report(cfg, "converge", n, Measure("Q"))
    discount_inf = np.exp(res.at("log_Binf", t) - res.at("log_A", t))
    rows, l1s, ses = [], [], []
    for T in Ts:
        gap = res.at(f"log_gap[{T:g}]", t)
        dist = discount_inf * np.abs(np.expm1(gap))
        m, se = mean_se(dist)
        rows.append([T, m, se, l1_bound(cfg, t, T), decay_proxy(cfg, t, T)])
        l1s.append(m)
        ses.append(se)
    rep.tables["convergence"] = {"columns": ["T", "l1_distance", "std_error", "bound", "decay_proxy"], "rows": rows}
    l1s, ses = np.array(l1s), np.array(ses)
    rep.add("L1 distance below lemma bound", bool(np.all(l1s <= np.array([r[3] for r in rows]))),
            float(np.max(l1s - np.array([r[3] for r in rows]))), 0.0)
    mono = all(l1s[i + 1] <= l1s[i] + Z_SCORE * math.hypot(ses[i], ses[i + 1]) for i in range(len(Ts) - 1))
    rep.add("L1 distance non-increasing in T", mono)
    if np.all(l1s == 0):
        rep.add("pathwise coupling: zero distance without volatility", True, 0.0, 0.0)
        rep.info["slope"] = None
        return rep
    if np.all(l1s > 0) and len(Ts) >= 2:
        slope = float(np.polyfit(np.array(Ts), np.log(l1s), 1)[0])
        rep.info["slope"] = slope
        if cfg.vol.is_exponential:
            active = [k for s, k in zip(cfg.vol.sigmas, cfg.vol.kappas) if s > 0]
            ref = -min(active)
            rel = abs(slope - ref) / abs(ref)
            rep.info["slope_reference"] = ref
            rep.add("log L1 slope matches -kappa", rel <= cfg.converge.tolerance, rel, cfg.converge.tolerance,
                    f"slope={slope:.6g} reference={ref:.6g}")
    else:
        rep.add("L1 distances positive for the slope fit", False, float(np.min(l1s)), 0.0)
    return rep


# ------------------------------------------------------------ lemma suite


def lemma_suite(cfg: SimConfig) -> RunReport:
    """Numerical check of the tail, long-bond-vol and proof-functional inequalities."""
    lm, run = cfg.lemmas, cfg.run
    n = lm.paths or run.paths
    times = tuple(sorted(lm.times))
    horizon = max(times)
    grid_v = sorted(set(times) | set(np.round(np.arange(0.25, horizon + 1e-9, 0.25), 12).tolist()))
    res = simulate_paths(model_of(cfg), make_scheme(run.scheme, run.dt), Measure("Q"), n, run.seed, grid_v,
                         functional_maturities=lm.maturities, threads=run.threads, block_size=run.block_size,
                         antithetic=run.antithetic)
    rep = _report(cfg, "lemmas", n, Measure("Q"))
    p, C0, D2 = _tail_constants(cfg)
    rep.info["tail_bound_K"] = p.K
    rep.info["tail_bound_eps"] = p.eps
    if lm.calibrate:
        rep.info["tail_bound_K_calibrated"] = calibrate_tail_constant(cfg.wbar, p.eps, cfg.grid,
                                                                      np.random.default_rng(run.seed))
    rows = []

    def margin(name, lhs, rhs, t=None, T=None):
        rows.append([name, t, T, lhs, rhs, rhs - lhs])
        rep.add(f"{name} t={t:g} T={T:g}" if t is not None else name, rhs - lhs >= 0, rhs - lhs, 0.0,
                f"lhs={lhs:.6g} rhs={rhs:.6g}")

    sig = cfg.vol.curves(0.0, cfg.f0.values, cfg.grid)
    norms = hw_norm_values(cfg.grid, sig, cfg.wbar)
    tail_points = sorted({0.0} | set(lm.maturities) | {T - t for t in times for T in lm.maturities if T >= t})
    worst = None
    for j in range(sig.shape[0]):
        h = ForwardCurve(cfg.grid, sig[j])
        for T in tail_points:
            m = p(T) * float(norms[j]) - tail_integral_abs(h, T)
            if worst is None or m < worst[0]:
                worst = (m, tail_integral_abs(h, T), p(T) * float(norms[j]), T)
    if worst is not None:
        rows.append(["tail bound", None, worst[3], worst[1], worst[2], worst[0]])
        rep.add("tail bound int_T^inf |sigma| <= C(T) |sigma|_wbar (worst factor and T)", worst[0] >= 0, worst[0], 0.0)

    for t in times:
        k = int(np.argmin(np.abs(res.times - t)))
        margin("long-bond vol energy", float(np.max(2 * res.data["k_inf"][k])), C0**2 * t * D2**2, t, math.inf)
        j_inf, k_inf = res.data["j_inf"][k], res.data["k_inf"][k]
        margin("L2 norm of exp(-j_inf - k_inf)", math.sqrt(float(np.mean(np.exp(-2 * j_inf - 2 * k_inf)))),
               math.exp(C0**2 * t * D2**2), t, math.inf)
        y_bound = math.exp(0.5 * C0**2 * t * D2**2)
        for T in sorted(lm.maturities):
            if T < t:
                continue
            CT = p(T - t)
            key = lambda a: f"{a}[{T:g}]"
            ys = [math.sqrt(float(np.mean(np.exp(-2 * res.data[key("dj")][i] - 2 * res.data[key("zT")][i]))))
                  for i in range(k + 1)]
            margin("sup_v L2 norm of Y_v^T", max(ys), y_bound, t, T)
            margin("sup_v |k^T - k^inf|", float(np.max(res.data[key("kdiff_run")][k])), C0 * CT * t * D2**2, t, T)
            Y = np.exp(-res.data[key("dj")][k] - res.data[key("zT")][k])
            y_rhs = CT * D2 * y_bound * math.sqrt(t)
            margin("L2 norm of Y_t^T - 1", math.sqrt(float(np.mean((Y - 1) ** 2))), y_rhs, t, T)
            margin("|z_t^T|", float(np.max(np.abs(res.data[key("zT")][k]))), 0.5 * CT**2 * t * D2**2, t, T)
            E = 0.5 * CT**2 * t * D2**2 + C0 * CT * t * D2**2
            lhs = math.sqrt(float(np.mean(np.expm1(-res.data[key("dj")][k] - res.data[key("kdiff")][k]) ** 2)))
            margin("L2 norm of exp(-(j^T-j^inf)-(k^T-k^inf)) - 1", lhs, y_rhs * math.exp(E) + math.expm1(E), t, T)
    rep.tables["lemma_margins"] = {"columns": ["check", "t", "T", "lhs", "rhs", "margin"], "rows": rows}
    return rep


# ------------------------------------------------------------ weak error


def weak_error_grid(dts, t: float, x_max: float) -> MaturityGrid:
    """Fine uniform section whose step divides every dt, so translations land on nodes."""
    fracs = [Fraction(dt).limit_denominator(10**6) for dt in dts]
    step = fracs[0]
    for f in fracs[1:]:
        step = Fraction(math.gcd(step.numerator, f.numerator), math.lcm(step.denominator, f.denominator))
    return MaturityGrid.hybrid(float(step), math.ceil(t) + 1.0, x_max)


def resample_initial_curve(cfg: SimConfig, grid: MaturityGrid) -> ForwardCurve:
    if cfg.curve_kind == "vasicek" and cfg.vasicek:
        from .vasicek import vasicek_initial_curve

        v = cfg.vasicek
        return vasicek_initial_curve(v["theta_Q"], v["kappa"], v["sigma"], v["r0"], grid)
    return ForwardCurve.from_function(grid, cfg.f0)


def weak_error_study(cfg: SimConfig, dts=None) -> RunReport:
    """Weak error of Euler against the exact Gaussian transition for ``E[r_t]``."""
    we, run = cfg.weak_error, cfg.run
    dts = tuple(sorted(we.dts if dts is None else dts, reverse=True))
    t = we.t
    grid = weak_error_grid(dts, t, cfg.grid.x_max)
    f0 = resample_initial_curve(cfg, grid)
    model = Model(grid, cfg.vol, cfg.mpr, f0)
    n = we.paths + (we.paths % 2)
    rep = _report(cfg, "weak-error", n, we.measure, dt=min(dts), scheme="euler vs exact")
    rep.info["weak_error_grid"] = f"uniform step {grid.nodes[1]:g} up to x={math.ceil(t) + 1:g}, {grid.size} nodes"
    oracle = _oracle_mean_short_rate(cfg, f0, t, we.measure)
    rows, errs = [], []
    for dt in dts:
        out = {}
        for kind in ("euler", "exact"):
            res = simulate_paths(model, make_scheme(kind, dt), we.measure, n, run.seed, [t], antithetic=True,
                                 block_size=n, threads=1)
            out[kind] = mean_se(res.at("r", t))
        err = abs(out["euler"][0] - out["exact"][0])
        errs.append(err)
        rows.append([dt, out["euler"][0], out["exact"][0], err, out["exact"][1], oracle])
        if oracle is not None:
            gap = abs(out["exact"][0] - oracle)
            rep.add(f"exact scheme mean matches closed form at dt={dt:g}", gap <= 5 * out["exact"][1] + 1e-14,
                    gap, 5 * out["exact"][1])
    rep.tables["weak_error"] = {"columns": ["dt", "euler_mean", "exact_mean", "weak_error", "std_error", "oracle_mean"],
                                "rows": rows}
    lo, hi = we.ratio_range
    if max(errs) <= 1e-14:
        rep.add("weak error vanishes without volatility or drift", True, max(errs), 1e-14)
        return rep
    for i in range(len(dts) - 1):
        ratio = errs[i] / errs[i + 1] if errs[i + 1] > 0 else math.inf
        rep.add(f"weak error ratio dt={dts[i]:g} -> {dts[i + 1]:g}", lo <= ratio <= hi, ratio, None,
                f"expected in [{lo:g}, {hi:g}]")
    return rep


def _oracle_mean_short_rate(cfg, f0, t, measure):
    vol = cfg.vol
    if not (vol.is_exponential and vol.n_factors == 1 and measure.kind in ("P", "Q", "QInf")):
        return None
    gamma = cfg.mpr(0.0)
    if not np.all(cfg.mpr(t) == gamma) or vol.sigmas[0] == 0:
        return None
    from .vasicek import VasicekParams, mean_curve

    p = VasicekParams(float(vol.sigmas[0]), float(vol.kappas[0]), gamma=float(gamma[0]), f0=f0)
    return float(mean_curve(p, f0.grid, t, measure)[0])
