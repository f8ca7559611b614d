"""Scenario files: INI sections parsed into a validated simulation config.

Example::

    [scenario]
    id = scalar_gaussian

    [grid]
    kind = geometric        ; geometric | uniform | hybrid
    x_max = 60
    n = 120

    [weights]
    w = power:4
    wbar = power:4

    [vol]
    kind = exponential      ; exponential | tabulated | zero (or an empty section)
    sigmas = 0.02
    kappas = 0.5

    [mpr]
    kind = constant         ; zero | constant | decay
    gamma = 0.2

    [curve]
    kind = vasicek          ; vasicek | flat | csv

    [vasicek]
    theta_Q = 0.05
    r0 = 0.02

    [run]
    seed = 20240101
    paths = 10000
    dt = 0.004
    scheme = euler
    measure = P
    output_times = 1, 5
    rollover = 20

Command-line overrides replace file values (see :func:`apply_overrides`).
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .curve_space import (
    ForwardCurve,
    MaturityGrid,
    PowerLogWeight,
    WeightSpec,
    parse_weight,
    read_curve_csv,
)
from .measures import Measure
from .vol_model import (
    ConfigurationError,
    ConstantMPR,
    DeterministicVol,
    ExponentialDecayMPR,
    ExponentialFactor,
    MarketPriceOfRisk,
    TabulatedFactor,
    ZeroMPR,
)

BASE_CONDITION = "base weight condition"
LONGBOND_CONDITION = "long-bond weight condition"
VOL_CONDITION = "volatility bound condition"
MPR_CONDITION = "market price of risk condition"
CURVE_CONDITION = "initial curve condition"


def _floats(text: str) -> list[float]:
    """Comma-separated numbers; fractions such as ``1/50`` are allowed."""
    return [float(Fraction(tok.strip())) for tok in text.split(",") if tok.strip()]


def _bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


@dataclass
class RunSection:
    seed: int = 12345
    paths: int = 10000
    dt: float = 1.0 / 250
    scheme: str = "euler"
    measure: Measure = field(default_factory=lambda: Measure("P"))
    output_times: tuple = (1.0, 5.0)
    rollover: tuple = (20.0,)
    threads: int = 1
    block_size: int = 500
    antithetic: bool = False
    record_paths: int = 0


@dataclass
class ConvergeSection:
    t: float = 1.0
    maturities: tuple = (5.0, 10.0, 20.0, 40.0)
    paths: int | None = None
    tolerance: float = 0.2


@dataclass
class LemmaSection:
    times: tuple = (1.0, 5.0)
    maturities: tuple = (5.0, 10.0, 20.0)
    paths: int | None = None
    calibrate: bool = False


@dataclass
class WeakErrorSection:
    t: float = 1.0
    dts: tuple = (1.0 / 50, 1.0 / 100, 1.0 / 200)
    paths: int = 2000
    measure: Measure = field(default_factory=lambda: Measure("P"))
    ratio_range: tuple = (1.6, 2.4)


@dataclass
class SimConfig:
    scenario: str
    grid: MaturityGrid
    w: WeightSpec
    wbar: WeightSpec
    vol: DeterministicVol
    mpr: MarketPriceOfRisk
    f0: ForwardCurve
    vasicek: dict | None
    run: RunSection
    converge: ConvergeSection
    lemmas: LemmaSection
    weak_error: WeakErrorSection
    checks: dict
    output_dir: str
    source: str = ""
    curve_kind: str = "flat"

    @property
    def long_bond_requested(self) -> bool:
        return (self.run.measure.kind == "QInf" or self.checks.get("factorization", True)
                or self.checks.get("martingale", True) or self.checks.get("reweighting", False))


DEFAULT_CHECKS = {
    "long_rate": True,
    "factorization": True,
    "gamma_decomposition": True,
    "martingale": True,
    "drift_condition": True,
    "reweighting": False,
}


# -------------------------------------------------------------- parsing


def _grid(sec) -> MaturityGrid:
    kind = sec.get("kind", "geometric")
    x_max = sec.getfloat("x_max", 60.0)
    if kind == "geometric":
        return MaturityGrid.geometric(x_max, sec.getint("n", 120), sec.getfloat("first_step", 0.01))
    if kind == "uniform":
        return MaturityGrid.uniform(x_max, float(Fraction(sec.get("step", "0.5"))))
    if kind == "hybrid":
        return MaturityGrid.hybrid(float(Fraction(sec.get("step", "1/200"))), sec.getfloat("x_fine", 2.0), x_max,
                                   sec.getint("n_coarse", 60))
    raise ConfigurationError(f"unknown grid kind {kind!r}")


def _vol(sec, wbar, base_dir) -> DeterministicVol:
    kind = sec.get("kind", "exponential" if "sigmas" in sec else "zero")
    n_zero = sec.getint("factors", 1)
    if kind == "zero":
        return DeterministicVol.zero(n_zero, wbar)
    if kind == "exponential":
        sigmas, kappas = _floats(sec.get("sigmas", "")), _floats(sec.get("kappas", ""))
        if len(sigmas) != len(kappas) or not sigmas:
            raise ConfigurationError(f"{VOL_CONDITION}: sigmas and kappas must be non-empty lists of equal length")
        return DeterministicVol([ExponentialFactor(s, k) for s, k in zip(sigmas, kappas)], wbar)
    if kind == "tabulated":
        files = [p.strip() for p in sec.get("files", "").split(",") if p.strip()]
        if not files:
            raise ConfigurationError(f"{VOL_CONDITION}: tabulated volatility needs 'files'")
        return DeterministicVol([TabulatedFactor(read_curve_csv(os.path.join(base_dir, p))) for p in files], wbar)
    raise ConfigurationError(f"unknown volatility kind {kind!r}")


def _mpr(sec, n_factors) -> MarketPriceOfRisk:
    kind = sec.get("kind", "constant" if "gamma" in sec else "zero")
    if kind == "zero":
        return ZeroMPR(n_factors)
    gamma = _floats(sec.get("gamma", ""))
    if len(gamma) != n_factors:
        raise ConfigurationError(f"{MPR_CONDITION}: gamma needs one entry per volatility factor ({n_factors})")
    if kind == "constant":
        return ConstantMPR(tuple(gamma))
    if kind == "decay":
        return ExponentialDecayMPR(tuple(gamma), sec.getfloat("decay", 1.0))
    raise ConfigurationError(f"unknown market price of risk kind {kind!r}")


def _curve(cfg, grid, vol, base_dir):
    sec = cfg["curve"] if cfg.has_section("curve") else {}
    kind = sec.get("kind", "vasicek" if cfg.has_section("vasicek") else "flat")
    vas = None
    if cfg.has_section("vasicek"):
        v = cfg["vasicek"]
        vas = {"theta_Q": v.getfloat("theta_Q"), "r0": v.getfloat("r0", 0.0)}
        if "sigma" in v:
            vas["sigma"], vas["kappa"] = v.getfloat("sigma"), v.getfloat("kappa")
        elif vol.is_exponential and vol.n_factors == 1:
            vas["sigma"], vas["kappa"] = float(vol.sigmas[0]), float(vol.kappas[0])
    if kind == "flat":
        return ForwardCurve.flat(grid, float(sec.get("level", "0.03"))), vas, kind
    if kind == "csv":
        path = os.path.join(base_dir, sec.get("path", ""))
        curve = read_curve_csv(path)
        if curve.grid != grid:
            raise ConfigurationError(f"{CURVE_CONDITION}: {path} nodes differ from the [grid] nodes")
        return curve, vas, kind
    if kind == "vasicek":
        if vas is None or vas.get("theta_Q") is None or "sigma" not in vas:
            raise ConfigurationError(f"{CURVE_CONDITION}: vasicek curve needs [vasicek] theta_Q and a scalar exponential vol")
        from .vasicek import vasicek_initial_curve

        return vasicek_initial_curve(vas["theta_Q"], vas["kappa"], vas["sigma"], vas["r0"], grid), vas, kind
    raise ConfigurationError(f"unknown curve kind {kind!r}")


def load_config(path: str) -> SimConfig:
    """Parse a scenario file. Raises OSError if unreadable and ConfigurationError if malformed."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path, encoding="utf-8") as fh:
        try:
            parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed scenario: {exc}") from exc
    return parse_config(parser, base_dir=os.path.dirname(os.path.abspath(path)), source=path)


def parse_config(parser: configparser.ConfigParser, base_dir: str = ".", source: str = "") -> SimConfig:
    try:
        return _parse(parser, base_dir, source)
    except (ValueError, KeyError, ZeroDivisionError, configparser.Error) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"malformed scenario: {exc}") from exc


def _section(parser, name):
    return parser[name] if parser.has_section(name) else parser[configparser.DEFAULTSECT]


def _parse(parser, base_dir, source):
    grid = _grid(_section(parser, "grid"))
    wsec = _section(parser, "weights")
    w = parse_weight(wsec.get("w", "power:4"))
    wbar = parse_weight(wsec.get("wbar", "power:4"))
    vol = _vol(_section(parser, "vol"), wbar, base_dir)
    mpr = _mpr(_section(parser, "mpr"), vol.n_factors)
    f0, vas, curve_kind = _curve(parser, grid, vol, base_dir)

    r = _section(parser, "run")
    run = RunSection(
        seed=r.getint("seed", 12345), paths=r.getint("paths", 10000), dt=float(Fraction(r.get("dt", "1/250"))),
        scheme=r.get("scheme", "euler"), measure=Measure.parse(r.get("measure", "P")),
        output_times=tuple(_floats(r.get("output_times", "1, 5"))), rollover=tuple(_floats(r.get("rollover", "20"))),
        threads=r.getint("threads", 1), block_size=r.getint("block_size", 500),
        antithetic=_bool(r.get("antithetic", "false")), record_paths=r.getint("record_paths", 0))
    c = _section(parser, "converge")
    converge = ConvergeSection(t=c.getfloat("t", 1.0), maturities=tuple(_floats(c.get("maturities", "5, 10, 20, 40"))),
                               paths=c.getint("paths") if "paths" in c else None, tolerance=c.getfloat("tolerance", 0.2))
    lm = _section(parser, "lemmas")
    lemmas = LemmaSection(times=tuple(_floats(lm.get("times", "1, 5"))),
                          maturities=tuple(_floats(lm.get("maturities", "5, 10, 20"))),
                          paths=lm.getint("paths") if "paths" in lm else None, calibrate=_bool(lm.get("calibrate", "false")))
    we = _section(parser, "weak_error")
    weak = WeakErrorSection(t=we.getfloat("t", 1.0), dts=tuple(_floats(we.get("dts", "1/50, 1/100, 1/200"))),
                            paths=we.getint("paths", 2000), measure=Measure.parse(we.get("measure", "P")),
                            ratio_range=tuple(_floats(we.get("ratio_range", "1.6, 2.4"))))
    ch = _section(parser, "checks")
    checks = {k: _bool(ch.get(k, str(v))) for k, v in DEFAULT_CHECKS.items()}
    out = _section(parser, "output").get("dir", "out")
    scenario = _section(parser, "scenario").get("id", os.path.splitext(os.path.basename(source))[0] or "scenario")
    return SimConfig(scenario, grid, w, wbar, vol, mpr, f0, vas, run, converge, lemmas, weak, checks, out, source,
                     curve_kind)


# ------------------------------------------------------------ validation


def validate(cfg: SimConfig, long_bond: bool | None = None) -> tuple[list[str], list[str]]:
    """Hypothesis gates. Returns ``(errors, warnings)``; errors name the violated condition."""
    errors, warnings = [], []
    long_bond = cfg.long_bond_requested if long_bond is None else long_bond
    if not cfg.w.satisfies_base_condition:
        errors.append(f"{BASE_CONDITION}: w^(-1/3) must be integrable on [0, inf); {cfg.w!r} fails")
    if not cfg.wbar.satisfies_base_condition:
        errors.append(f"{BASE_CONDITION}: wbar^(-1/3) must be integrable on [0, inf); {cfg.wbar!r} fails")
    if long_bond and not cfg.wbar.satisfies_longbond_condition:
        msg = f"{LONGBOND_CONDITION}: 1/wbar(x) must be O(x^-(3+eps)) for some eps > 0; {cfg.wbar!r} fails"
        if isinstance(cfg.wbar, PowerLogWeight):
            msg += " (this cubic-log weight meets the base condition but not the long-bond condition)"
        errors.append(msg)
    if not cfg.vol.bound_D2 < float("inf"):
        errors.append(f"{VOL_CONDITION}: volatility norm bound D2 is not finite")
    if not getattr(cfg.mpr, "dominator_in_l2", True):
        warnings.append(f"{MPR_CONDITION}: constant market price of risk is not square-integrable on [0, inf); "
                        "accepted on the finite simulation horizon")
    run = cfg.run
    if run.paths <= 0:
        errors.append("run.paths must be positive")
    if not run.dt > 0:
        errors.append("run.dt must be positive")
    if run.scheme not in ("euler", "exact"):
        errors.append(f"run.scheme must be euler or exact, not {run.scheme!r}")
    elif run.scheme == "exact" and not (cfg.vol.is_exponential and cfg.mpr.is_deterministic):
        errors.append("run.scheme = exact needs exponential factors and a deterministic market price of risk")
    if not run.output_times or min(run.output_times) < 0:
        errors.append("run.output_times must be non-empty and non-negative")
    if run.threads < 1 or run.block_size < 1:
        errors.append("run.threads and run.block_size must be positive")
    if run.antithetic and run.block_size % 2:
        errors.append("antithetic sampling needs an even block size")
    for T in run.rollover + cfg.converge.maturities + cfg.lemmas.maturities:
        if not 0 < T <= cfg.grid.x_max:
            errors.append(f"maturity {T:g} must lie in (0, x_max={cfg.grid.x_max:g}]")
    if run.measure.kind == "QT" and run.measure.maturity > cfg.grid.x_max:
        errors.append(f"forward-measure maturity {run.measure.maturity:g} beyond x_max")
    if cfg.converge.maturities and not cfg.converge.t < min(cfg.converge.maturities):
        errors.append("converge.t must be smaller than every convergence maturity")
    if any(dt <= 0 for dt in cfg.weak_error.dts):
        errors.append("weak_error.dts must be positive")
    return errors, warnings


def apply_overrides(cfg: SimConfig, seed=None, paths=None, dt=None, out=None, threads=None) -> SimConfig:
    """Command-line values take precedence over the scenario file."""
    run = replace(cfg.run,
                  seed=cfg.run.seed if seed is None else int(seed),
                  paths=cfg.run.paths if paths is None else int(paths),
                  dt=cfg.run.dt if dt is None else float(dt),
                  threads=cfg.run.threads if threads is None else int(threads))
    cfg = replace(cfg, run=run, output_dir=cfg.output_dir if out is None else out)
    if paths is not None:
        cfg = replace(cfg, converge=replace(cfg.converge, paths=int(paths)), lemmas=replace(cfg.lemmas, paths=int(paths)),
                      weak_error=replace(cfg.weak_error, paths=int(paths)))
    return cfg
