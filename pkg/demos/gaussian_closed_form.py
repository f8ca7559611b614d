"""Print closed-form Gaussian curves: the initial curve, its long end, and mean curves per measure."""
import numpy as np

from hjm_longterm.curve_space import MaturityGrid, long_forward_rate
from hjm_longterm.measures import P, Q, QINF
from hjm_longterm.vasicek import VasicekParams, long_rate, mean_curve, params_with_curve

SIGMA, KAPPA, THETA_Q, GAMMA, R0 = 0.02, 0.5, 0.05, 0.2, 0.02


def main() -> None:
    grid = MaturityGrid.geometric(60.0, 120)
    p = params_with_curve(VasicekParams(SIGMA, KAPPA, theta_Q=THETA_Q, gamma=GAMMA, r0=R0), grid)
    print(f"long rate: closed form {long_rate(p):.6f}, last grid node {long_forward_rate(p.f0):.6f}")
    show = [0.0, 1.0, 5.0, 10.0, 30.0, 60.0]
    idx = [int(np.argmin(np.abs(grid.nodes - x))) for x in show]
    print("\nmean forward curve at t = 5")
    print("  x      " + "".join(f"{grid.nodes[i]:>9.2f}" for i in idx))
    print("  f0     " + "".join(f"{p.f0.values[i]:>9.5f}" for i in idx))
    for m in (P, Q, QINF):
        curve = mean_curve(p, grid, 5.0, m)
        print(f"  {m.kind:<7}" + "".join(f"{curve[i]:>9.5f}" for i in idx))


if __name__ == "__main__":
    main()
