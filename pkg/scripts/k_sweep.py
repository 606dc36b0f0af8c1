"""Sensitivity of the solver's no-trade half-width to the rate cap K."""

import argparse

import numpy as np

from smallcost import ergodic as E
from smallcost.corrector import solve_corrector_1d


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=0.01)
    ap.add_argument("--caps", type=float, nargs="+", default=[25, 50, 100, 200, 400, 800])
    args = ap.parse_args()
    exact = solve_corrector_1d(1.0, -1.0, 1.0, 2.0 / 3.0)
    grid = E.GridSpec.from_step([2.5], args.h)
    print(f"closed form: half-width {float(exact.delta_xi):.6f}, a {float(exact.a):.6f}")
    print("K,halfwidth,a,iterations")
    for K in args.caps:
        data = E.ProblemData(alpha=[[np.sqrt(2 / 3)]], v_z=1.0, v_zz=-1.0, sigma_S=[[1.0]], K=K)
        sol = E.policy_iteration(data, grid)
        print(f"{K:g},{sol.region.halfwidths[0]:.6f},{sol.a:.8f},{sol.iterations}")


if __name__ == "__main__":
    main()
