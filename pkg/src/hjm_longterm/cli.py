"""Scenario runner.

Exit codes: 0 all enabled checks passed, 1 a check failed, 2 the scenario is
invalid, 3 reading or writing files failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time

from . import __version__
from .config import ConfigurationError, SimConfig, apply_overrides, load_config, validate
from .curve_space import ForwardCurve
from .diagnostics import RunReport, l1_convergence, lemma_suite, simulate, weak_error_study
from .hjm_engine import NumericalBlowup
from .measures import Measure
from .vol_model import ConstantMPR, InvariantViolation, ZeroMPR

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

_PRECEDENCE = ("Values given on the command line (--seed, --paths, --dt, --out, --threads) take precedence "
               "over the scenario file; --paths applies to every study in the run.")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="scenario INI file")
    common.add_argument("--seed", type=int, metavar="U64", help="root seed of the path generator")
    common.add_argument("--paths", type=int, metavar="N", help="number of Monte Carlo paths")
    common.add_argument("--dt", type=float, metavar="FLOAT", help="time step in years")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--threads", type=int, metavar="N", help="worker threads (results do not depend on it)")
    p = argparse.ArgumentParser(prog="hjm-longterm", description="HJM long-term factorization scenarios.",
                                epilog=_PRECEDENCE)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate paths and check the invariants", epilog=_PRECEDENCE)
    sub.add_parser("converge", parents=[common], help="L1 convergence of roll-over wealth to the long bond",
                   epilog=_PRECEDENCE)
    sub.add_parser("lemmas", parents=[common], help="numerical margins of the tail and functional bounds",
                   epilog=_PRECEDENCE)
    sub.add_parser("weak-error", parents=[common], help="Euler weak error against the exact Gaussian scheme",
                   epilog=_PRECEDENCE)
    od = sub.add_parser("oracle-dump", parents=[common], help="closed-form Gaussian curves and parameters",
                        epilog=_PRECEDENCE)
    od.add_argument("--time", type=float, default=0.0, help="calendar time of the dumped curve (default 0)")
    od.add_argument("--measure", default="Q", help="Q or QInf: measure of the mean curve (default Q)")
    return p


# ----------------------------------------------------------------- output


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def write_artifacts(rep: RunReport, out_dir: str, timing: dict, extra_files: dict | None = None) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    files = {"report.json": rep.to_json(), "report.txt": rep.to_text()}
    for name, table in rep.tables.items():
        files[f"{name}.csv"] = _csv_text(table["columns"], table["rows"])
    if rep.path_rows:
        cols = list(rep.path_rows[0].keys())
        files["paths.csv"] = _csv_text(cols, [[row[c] for c in cols] for row in rep.path_rows])
    files.update(extra_files or {})
    files["timing.json"] = json.dumps(timing, indent=2, sort_keys=True) + "\n"
    for name, text in files.items():
        _atomic_write(os.path.join(out_dir, name), text)
    return sorted(files)


# --------------------------------------------------------------- commands


def _long_bond_needed(command: str, cfg: SimConfig) -> bool:
    if command in ("converge", "lemmas"):
        return True
    if command == "simulate":
        return cfg.long_bond_requested
    if command == "weak-error":
        return cfg.weak_error.measure.kind == "QInf"
    return False


def oracle_dump(cfg: SimConfig, t: float, measure: Measure):
    from .vasicek import VasicekParams, long_rate, mean_curve, params_with_curve, short_rate_params

    v = cfg.vasicek
    if not v or v.get("theta_Q") is None or "sigma" not in v:
        raise ConfigurationError("oracle-dump needs a [vasicek] section with theta_Q and a scalar exponential vol")
    if cfg.mpr.n_factors != 1 or not (isinstance(cfg.mpr, (ConstantMPR, ZeroMPR))):
        raise ConfigurationError("oracle-dump needs a scalar constant or zero market price of risk")
    gamma = float(cfg.mpr(0.0)[0])
    p = VasicekParams(v["sigma"], v["kappa"], theta_Q=v["theta_Q"], gamma=gamma, r0=v["r0"])
    tab = params_with_curve(p, cfg.grid)
    values = tab.f0.values if t == 0 else mean_curve(tab, cfg.grid, t, measure)
    curve = ForwardCurve(cfg.grid, values)
    rep = RunReport(cfg.scenario, "oracle-dump", cfg.run.seed, 0, 0.0, "closed form", str(measure))
    rep.info.update({
        "time": t, "long_rate_limit": long_rate(p), "long_rate_on_grid": float(curve.long_rate),
        "long_bond_vol": p.long_bond_vol, "gamma_inf": p.gamma_long,
        "theta_Q": short_rate_params(p, Measure("Q"), t)[1], "theta_QInf": short_rate_params(p, Measure("QInf"), t)[1],
    })
    text = _csv_text(["x", "f"], [[float(x), float(f)] for x, f in zip(cfg.grid.nodes, curve.values)])
    return rep, {"oracle_curve.csv": text}


def _failure_summary(kind: str, messages) -> str:
    return json.dumps({"status": kind, "errors": list(messages)}, indent=2, sort_keys=True)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigurationError as exc:
        print(_failure_summary("config_error", [str(exc)]), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(_failure_summary("io_error", [f"cannot read {args.config}: {exc}"]), file=sys.stderr)
        return EXIT_IO
    cfg = apply_overrides(cfg, seed=args.seed, paths=args.paths, dt=args.dt, out=args.out, threads=args.threads)
    errors, warnings = validate(cfg, long_bond=_long_bond_needed(args.command, cfg))
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if errors:
        print(_failure_summary("config_error", errors), file=sys.stderr)
        return EXIT_CONFIG

    start = time.perf_counter()
    extra = {}
    try:
        if args.command == "simulate":
            rep = simulate(cfg)
        elif args.command == "converge":
            rep = l1_convergence(cfg)
        elif args.command == "lemmas":
            rep = lemma_suite(cfg)
        elif args.command == "weak-error":
            rep = weak_error_study(cfg)
        else:
            rep, extra = oracle_dump(cfg, args.time, Measure.parse(args.measure))
    except ConfigurationError as exc:
        print(_failure_summary("config_error", [str(exc)]), file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, NumericalBlowup) as exc:
        rep = RunReport(cfg.scenario, args.command, cfg.run.seed, cfg.run.paths, cfg.run.dt, cfg.run.scheme,
                        str(cfg.run.measure))
        rep.add(type(exc).__name__, False, detail=str(exc))
    rep.warnings += [w for w in warnings if w not in rep.warnings]
    timing = {"command": args.command, "seconds": round(time.perf_counter() - start, 3), "threads": cfg.run.threads}
    try:
        written = write_artifacts(rep, cfg.output_dir, timing, extra)
    except OSError as exc:
        print(_failure_summary("io_error", [str(exc)]), file=sys.stderr)
        return EXIT_IO
    print(rep.to_text(), end="")
    print(f"artifacts in {cfg.output_dir}: {', '.join(written)}")
    if not rep.passed:
        print(_failure_summary("check_failed", [f"{c.name}: {c.detail or c.value}" for c in rep.failures()]),
              file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
