"""Two-asset half-widths for the figure-4 rows under two readings of the cost level."""

import json
from pathlib import Path

import numpy as np

from smallcost import ergodic as E
from smallcost.cli import solver_problem

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    print("config,normalized_1,normalized_2,at_lambda_1,at_lambda_2,at_half_lambda_1,at_half_lambda_2,iterations")
    for path in sorted((ROOT / "configs").glob("fig4_*.json")):
        data, grid, info = solver_problem(json.loads(path.read_text()))
        sol = E.policy_iteration(data, grid)
        lam = info["lambda_p"]
        n = sol.region.halfwidths
        full = [np.cbrt(lam) * x for x in n]
        half = [np.cbrt(lam / 2) * x for x in n]
        print(f"{path.stem},{n[0]:.4f},{n[1]:.4f},{full[0]:.4f},{full[1]:.4f},{half[0]:.4f},{half[1]:.4f},{sol.iterations}")
