"""Mesh convergence of the ergodic solver on the one-dimensional reference problem."""

import argparse

import numpy as np

from smallcost import ergodic as E


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--K", type=float, default=1e4)
    ap.add_argument("--steps", type=float, nargs="+", default=[0.08, 0.04, 0.02, 0.01, 0.005])
    args = ap.parse_args()
    data = E.ProblemData(alpha=[[np.sqrt(2 / 3)]], v_z=1.0, v_zz=-1.0, sigma_S=[[1.0]], K=args.K)
    print("h,halfwidth,halfwidth_error,a,a_error")
    for h in args.steps:
        sol = E.policy_iteration(data, E.GridSpec.from_step([2.5], h))
        hw = sol.region.halfwidths[0]
        print(f"{h:g},{hw:.6f},{abs(hw - 1):.3e},{sol.a:.8f},{abs(sol.a + 0.5):.3e}")


if __name__ == "__main__":
    main()
