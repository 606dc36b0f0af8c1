"""Command-line front end: one JSON config in, CSV/JSON data files out.

Usage::

    smallcost <command> --config <path> [--out <dir>] [--seed <u64>]

Commands: ntregion, simulate, welfare, solve, convergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import re
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import ergodic
from .corrector import ko_ntregion, power_halfwidth, solve_corrector_1d
from .frictionless import ko_stationary, ko_weight, ko_weight_sensitivity
from .models import (
    BlackScholesParams,
    CostSpec,
    KimOmbergParams,
    Preferences,
    ValidationError,
    from_dict,
)
from .simulate import PathConfig, simulate_fixed, simulate_proportional, trading_stats
from .welfare import (
    MonteCarloConfig,
    bs_esr,
    cel_monte_carlo,
    esr_loss_bs,
    esr_loss_ko,
    ko_esr,
)

log = logging.getLogger("smallcost")

COMMANDS = ("ntregion", "simulate", "welfare", "solve", "convergence")
MODEL_KINDS = {"kim_omberg": KimOmbergParams, "black_scholes": BlackScholesParams}
TOP_KEYS = {"command", "description", "seed", "model", "preferences", "cost", "market", "corrector", "numerics"}
NUMERIC_KEYS = {
    "ntregion": {"t", "f_min", "f_max", "n", "pi_min", "pi_max", "lambda_grid"},
    "simulate": {"policy", "dt", "length", "n_paths", "f0", "w0", "halfwidth", "fixed_cost", "wealth", "deduct_costs"},
    "welfare": {"lambda_grid", "horizon", "mc_paths", "mc_dt", "mc_batch"},
    "solve": {"n_points", "K", "bound_factor", "bound", "h", "tol", "max_iter"},
    "convergence": {"n_t", "f"},
}


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config io


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(text: str, key: str) -> str:
    line = _line_of(text, key)
    return f" (line {line})" if line else ""


def _check_keys(block: dict, allowed: set, name: str, text: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"{name} must be a JSON object")
    for key in block:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {name}{_where(text, key)}")


def load_config(path: Path, command: str) -> tuple[dict, str]:
    text = path.read_text() if path.exists() else ""
    if not text.strip():
        raise ConfigError(f"empty or missing config: {path}")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    _check_keys(cfg, TOP_KEYS, "config", text)
    if cfg.get("command", command) != command:
        raise ConfigError(f"config is for command {cfg['command']!r}, not {command!r}{_where(text, 'command')}")
    _check_keys(cfg.get("numerics", {}), NUMERIC_KEYS[command], "numerics", text)
    return cfg, text


def _record(cls, block, name: str, text: str):
    try:
        return from_dict(cls, block)
    except ValidationError as exc:
        raise ConfigError(f"{name}: {exc}{_where(text, exc.field) if exc.field else ''}") from exc


def _model(cfg: dict, text: str):
    block = dict(cfg.get("model") or {})
    kind = block.pop("kind", None)
    if kind not in MODEL_KINDS:
        raise ConfigError(f"model.kind must be one of {sorted(MODEL_KINDS)}{_where(text, 'kind')}")
    return _record(MODEL_KINDS[kind], block, "model", text)


def _preferences(cfg: dict, text: str) -> Preferences:
    return _record(Preferences, cfg.get("preferences"), "preferences", text)


def _cost(cfg: dict, text: str) -> CostSpec:
    return _record(CostSpec, cfg.get("cost"), "cost", text)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _write_csv(path: Path, header, rows, comment: str) -> None:
    with path.open("w", newline="") as fh:
        fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x).__name__}")


# ------------------------------------------------------------------ commands


def _lambda_grid(values, text: str) -> list[float]:
    grid = [float(x) for x in values]
    if any(not 0 <= x < 1 for x in grid):
        raise ConfigError(f"lambda_grid entries must lie in [0, 1){_where(text, 'lambda_grid')}")
    return grid


def cmd_ntregion(cfg, text, out: Path, comment: str) -> list[Path]:
    model = _model(cfg, text)
    prefs = _preferences(cfg, text)
    cost = _cost(cfg, text)
    num = cfg.get("numerics", {})
    n = int(num.get("n", 201))
    lams = _lambda_grid(num.get("lambda_grid", []), text)
    g = prefs.gamma
    if isinstance(model, KimOmbergParams):
        if prefs.horizon_T is None:
            raise ConfigError("preferences.horizon_T is required for the Kim-Omberg model")
        T, t = prefs.horizon_T, float(num.get("t", 0.0))
        f = np.linspace(num.get("f_min", -0.1), num.get("f_max", 0.2), n)
        pi = ko_weight(model, g, T, t, f)
        pi_f = np.full_like(f, ko_weight_sensitivity(model, g, T, t))
        sS, sF, rho = model.sigma_S, model.sigma_F, model.rho
    else:
        f = np.full(n, np.nan)
        pi = np.linspace(num.get("pi_min", 0.0), num.get("pi_max", 1.0), n)
        pi_f = np.zeros(n)
        sS, sF, rho = model.sigma, 0.0, 0.0
    normalized = power_halfwidth(pi, pi_f, g, sS, sF, rho)
    halfwidth = np.cbrt(cost.lambda_p) * normalized
    header = ["f", "pi", "pi_f", "normalized_halfwidth", "halfwidth", "lower", "upper"]
    header += [f"halfwidth_lambda_{lam:g}" for lam in lams]
    rows = [
        [f[k], pi[k], pi_f[k], normalized[k], halfwidth[k], pi[k] - halfwidth[k], pi[k] + halfwidth[k]]
        + [np.cbrt(lam) * normalized[k] for lam in lams]
        for k in range(n)
    ]
    path = out / "ntregion.csv"
    _write_csv(path, header, rows, comment)
    return [path]


def cmd_simulate(cfg, text, out: Path, comment: str, seed: int) -> list[Path]:
    model = _model(cfg, text)
    if not isinstance(model, KimOmbergParams):
        raise ConfigError("simulate requires a kim_omberg model")
    prefs = _preferences(cfg, text)
    if prefs.horizon_T is None:
        raise ConfigError("preferences.horizon_T is required")
    num = cfg.get("numerics", {})
    policy = num.get("policy", "proportional")
    pcfg = PathConfig(
        seed=seed,
        dt=float(num.get("dt", 1.0 / 2520)),
        T=float(num.get("length", prefs.horizon_T)),
        n_paths=int(num.get("n_paths", 1)),
    )
    common = dict(f0=num.get("f0"), w0=num.get("w0"), deduct_costs=bool(num.get("deduct_costs", True)))
    paths, stats = [], []
    for i in range(pcfg.n_paths):
        if policy == "proportional":
            cost = _cost(cfg, text)
            fp = simulate_proportional(model, prefs.gamma, prefs.horizon_T, cost.lambda_p, pcfg, path_index=i, **common)
        elif policy == "fixed":
            if "halfwidth" not in num:
                raise ConfigError("fixed policy needs numerics.halfwidth")
            h = float(num["halfwidth"])
            fee = float(num.get("fixed_cost", 0.0)) / float(num.get("wealth", 1.0))
            lam = _cost(cfg, text).lambda_p if "cost" in cfg else 0.0
            fp = simulate_fixed(
                model, prefs.gamma, prefs.horizon_T, lambda t, f, pi: h, pcfg,
                path_index=i, lambda_p=lam, fixed_cost=fee, **common,
            )  # fmt: skip
        else:
            raise ConfigError(f"unknown policy {policy!r}{_where(text, 'policy')}")
        path = out / f"path_{i:03d}.csv"
        fp.to_csv(path, comment=comment)
        paths.append(path)
        stats.append({"path": path.name, "bankrupt": fp.bankrupt, **asdict(trading_stats(fp))})
    summary = out / "simulate_summary.json"
    _write_json(summary, {"config_sha256": config_hash(cfg), "paths": stats})
    return paths + [summary]


def cmd_welfare(cfg, text, out: Path, comment: str, seed: int) -> list[Path]:
    prefs = _preferences(cfg, text)
    g = prefs.gamma
    model = _model(cfg, text)
    num = cfg.get("numerics", {})
    lams = _lambda_grid(num.get("lambda_grid", [1e-4, 1e-3, 1e-2]), text)
    if isinstance(model, KimOmbergParams):
        ko = model
        bs = BlackScholesParams(r=ko.r, mu=ko.F_bar, sigma=ko.sigma_S)
    else:
        ko, bs = None, model
    rows = []
    for lam in lams:
        row = {"lambda_p": lam}
        b = esr_loss_bs(bs, g, lam)
        row["delta_esr_bs"] = b.delta_esr
        row["relative_delta_esr_bs"] = b.delta_esr / bs_esr(bs, g)
        if ko is not None:
            k = esr_loss_ko(ko, g, lam)
            row["delta_esr_ko"] = k.delta_esr
            row["relative_delta_esr_ko"] = k.delta_esr / ko_esr(ko, g)
            row["quadrature_error_ko"] = k.quadrature_error_estimate
        rows.append(row)
    base = next((r for r in rows if r["lambda_p"] > 0), None)
    for row in rows:
        for key in ("delta_esr_bs", "delta_esr_ko"):
            if base is not None and key in row:
                row[f"{key}_ratio_to_first"] = row[key] / base[key]
    report = {"config_sha256": config_hash(cfg), "gamma": g, "rows": rows}
    horizon = num.get("horizon", prefs.horizon_T)
    if horizon is not None and ko is not None:
        mc = MonteCarloConfig(
            seed=seed,
            dt=float(num.get("mc_dt", 1.0 / 250)),
            n_paths=int(num.get("mc_paths", 1000)),
            batch_size=int(num.get("mc_batch", 250)),
        )
        report["cel"] = [
            {"lambda_p": lam, **asdict(cel_monte_carlo(ko, g, float(horizon), lam, mc))} for lam in lams
        ]
        report["cel_horizon"] = float(horizon)
    path = out / "welfare.json"
    _write_json(path, report)
    return [path]


def solver_problem(cfg: dict, text: str = "") -> tuple[ergodic.ProblemData, ergodic.GridSpec, dict]:
    """Problem data, grid and report extras for a ``solve`` config."""
    if ("corrector" in cfg) == ("market" in cfg):
        raise ConfigError("solve needs exactly one of a 'corrector' or a 'market' block")
    num = cfg.get("numerics", {})
    K = float(num.get("K", 100.0))
    if "corrector" in cfg:
        block = cfg["corrector"]
        _check_keys(block, {"v_z", "v_zz", "sigma_S", "alpha_sq"}, "corrector", text)
        v_z, v_zz, s, a2 = (float(block[k]) for k in ("v_z", "v_zz", "sigma_S", "alpha_sq"))
        data = ergodic.ProblemData(alpha=[[a2**0.5]], v_z=v_z, v_zz=v_zz, sigma_S=[[s]], K=K)
        grid = ergodic.GridSpec.from_step([float(num.get("bound", 2.5))], float(num.get("h", 0.01)))
        return data, grid, {"closed_form": solve_corrector_1d(v_z, v_zz, s, a2)}
    block = cfg["market"]
    _check_keys(block, {"r", "mu", "sigma", "rho"}, "market", text)
    prefs = _preferences(cfg, text)
    cost = _cost(cfg, text)
    mu = np.asarray(block["mu"], dtype=float)
    vols = np.asarray(block["sigma"], dtype=float)
    if mu.shape != vols.shape or mu.ndim != 1 or mu.size not in (1, 2):
        raise ConfigError("market.mu and market.sigma must be equal-length lists of length 1 or 2")
    if np.any(vols <= 0):
        raise ConfigError(f"market.sigma entries must be positive{_where(text, 'sigma')}")
    rho = float(block.get("rho", 0.0))
    if not -1 < rho < 1:
        raise ConfigError(f"market.rho must lie in (-1, 1){_where(text, 'rho')}")
    corr = np.array([[1.0]]) if mu.size == 1 else np.array([[1.0, rho], [rho, 1.0]])
    sigma_S = np.linalg.cholesky(np.outer(vols, vols) * corr)
    data, pi = ergodic.power_utility_problem(mu, sigma_S, prefs.gamma, K)
    bounds = ergodic.default_bounds(data, float(num.get("bound_factor", 3.0)))
    grid = ergodic.monotone_grid(data, bounds, int(num.get("n_points", 201)))
    return data, grid, {"merton_weights": pi, "lambda_p": cost.lambda_p}


def cmd_solve(cfg, text, out: Path, comment: str) -> list[Path]:
    data, grid, info = solver_problem(cfg, text)
    num = cfg.get("numerics", {})
    sol = ergodic.policy_iteration(data, grid, tol=num.get("tol"), max_iter=int(num.get("max_iter", 200)))
    extra: dict = {}
    if "closed_form" in info:
        exact = info["closed_form"]
        hw = sol.region.halfwidths[0]
        extra["closed_form_comparison"] = cmp = {
            "halfwidth": hw,
            "halfwidth_closed_form": float(exact.delta_xi),
            "halfwidth_rel_dev": abs(hw / exact.delta_xi - 1.0),
            "a": sol.a,
            "a_closed_form": float(exact.a),
            "a_rel_dev": abs(sol.a / exact.a - 1.0),
        }
        print(
            f"solver half-width {hw:.6f} vs closed form {cmp['halfwidth_closed_form']:.6f} "
            f"(rel. dev. {cmp['halfwidth_rel_dev']:.3%}); "
            f"a {sol.a:.6f} vs {cmp['a_closed_form']:.6f} (rel. dev. {cmp['a_rel_dev']:.3%})"
        )
    else:
        extra = {**info, "scaled_halfwidths": sol.region.scaled_halfwidths(info["lambda_p"])}
    gen = ergodic.discretize_generator(data, sol.policy, grid)
    axes = grid.mesh()
    codes = sol.region.codes
    header = [f"xi_{i + 1}" for i in range(grid.d)] + ["policy_code"]
    flat = [ax.ravel() for ax in axes]
    rows = zip(*flat, codes.ravel().astype(int))
    mask_path = out / "solve_mask.csv"
    _write_csv(mask_path, header, rows, comment)
    diag = {
        "config_sha256": config_hash(cfg),
        "a": sol.a,
        "a_history": sol.a_history,
        "iterations": sol.iterations,
        "timings_s": sol.timings,
        "grid_h": list(grid.h),
        "grid_shape": list(grid.shape),
        "halfwidths_normalized": list(sol.region.halfwidths),
        "lower": list(sol.region.lower),
        "upper": list(sol.region.upper),
        "generator_min_off_diagonal": gen.min_off_diagonal(),
        "generator_max_abs_row_sum": float(np.max(np.abs(gen.row_sums()))),
        **extra,
    }
    diag_path = out / "solve_diagnostics.json"
    _write_json(diag_path, diag)
    return [mask_path, diag_path]


def cmd_convergence(cfg, text, out: Path, comment: str) -> list[Path]:
    model = _model(cfg, text)
    if not isinstance(model, KimOmbergParams):
        raise ConfigError("convergence requires a kim_omberg model")
    prefs = _preferences(cfg, text)
    if prefs.horizon_T is None:
        raise ConfigError("preferences.horizon_T is required")
    cost = _cost(cfg, text)
    num = cfg.get("numerics", {})
    T, g = prefs.horizon_T, prefs.gamma
    f = float(num.get("f", model.F_bar))
    t = np.linspace(0.0, T, int(num.get("n_t", 401)))
    region = ko_ntregion(model, g, T, t, np.full_like(t, f), cost.lambda_p)
    st = ko_stationary(model, g)
    pi_bar = float(st.weight(f))
    hw_bar = float(np.cbrt(cost.lambda_p) * power_halfwidth(pi_bar, st.pi_bar_slope, g, model.sigma_S, model.sigma_F, model.rho))
    header = ["t", "pi", "lower", "upper", "pi_bar", "lower_bar", "upper_bar"]
    rows = [
        [t[k], region.center[k], region.lower[k], region.upper[k], pi_bar, pi_bar - hw_bar, pi_bar + hw_bar]
        for k in range(t.size)
    ]
    path = out / "convergence.csv"
    _write_csv(path, header, rows, comment)
    return [path]


# ------------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smallcost", description="Small-cost asymptotics toolkit.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, required=True, help="JSON experiment config")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory (created if needed)")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed (u64)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(command: str, config: Path, out: Path, seed: int | None = None) -> list[Path]:
    cfg, text = load_config(config, command)
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg["seed"] = seed
    seed = int(cfg.get("seed", 0))
    out.mkdir(parents=True, exist_ok=True)
    comment = f"config_sha256={config_hash(cfg)} command={command}"
    if command == "ntregion":
        return cmd_ntregion(cfg, text, out, comment)
    if command == "simulate":
        return cmd_simulate(cfg, text, out, comment, seed)
    if command == "welfare":
        return cmd_welfare(cfg, text, out, comment, seed)
    if command == "solve":
        return cmd_solve(cfg, text, out, comment)
    return cmd_convergence(cfg, text, out, comment)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        written = run(args.command, args.config, args.out, args.seed)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"smallcost: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # report any failure as a nonzero exit
        print(f"smallcost: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
