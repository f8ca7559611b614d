"""Show the rollover wealth of a T-bond approaching the long bond as T grows.

The L1 distance at a fixed time decays like exp(-kappa T) for exponential volatility.
Run: python demos/long_term_convergence.py [paths]
"""
import sys
from pathlib import Path

from hjm_longterm.config import apply_overrides, load_config
from hjm_longterm.diagnostics import l1_convergence

SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "scalar_gaussian.ini"


def main(paths: int = 5000) -> None:
    cfg = apply_overrides(load_config(str(SCENARIO)), paths=paths, dt=1 / 100)
    rep = l1_convergence(cfg, 1.0, (5.0, 10.0, 20.0, 40.0))
    print(f"{'T':>5} {'L1 distance':>14} {'std error':>12} {'bound':>12}")
    for T, dist, se, bound, _ in rep.tables["convergence"]["rows"]:
        print(f"{T:>5g} {dist:>14.6e} {se:>12.3e} {bound:>12.3e}")
    print(f"\nfitted log-slope {rep.info['slope']:.4f}, expected {-cfg.vasicek['kappa']}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 5000)
