"""Multi-asset first corrector equation via capped trading rates and policy iteration.

The singular controls of the ergodic problem are replaced by trading rates in
``[0, K]``. The controlled generator is discretized with an upwind, monotone
stencil so that it is the transition-rate matrix of a continuous-time Markov
chain on the grid, and the resulting average-cost problem is solved by policy
iteration started from the no-trade policy.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class NonMonotoneStencilError(ValueError):
    pass


class SingularSystemError(RuntimeError):
    pass


class NoConvergenceError(RuntimeError):
    def __init__(self, message, a_history):
        super().__init__(message)
        self.a_history = list(a_history)


class EmptyRegionError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid ``h_i * k`` for ``k = -n_lo[i] .. n_hi[i]``; always contains 0."""

    h: tuple[float, ...]
    n_lo: tuple[int, ...]
    n_hi: tuple[int, ...]

    def __post_init__(self):
        if not len(self.h) == len(self.n_lo) == len(self.n_hi):
            raise ValueError("grid dimensions disagree")
        if any(h <= 0 for h in self.h):
            raise ValueError("grid steps must be positive")
        if any(n < 1 for n in self.n_lo + self.n_hi):
            raise ValueError("grid must extend on both sides of the origin")

    @classmethod
    def symmetric(cls, bounds, n_points) -> "GridSpec":
        """``n_points[i]`` (odd) points spanning ``[-bounds[i], bounds[i]]``."""
        bounds = np.atleast_1d(np.asarray(bounds, dtype=float))
        n_points = np.broadcast_to(np.asarray(n_points, dtype=int), bounds.shape)
        if np.any(n_points % 2 == 0) or np.any(n_points < 3):
            raise ValueError("symmetric grids need an odd number (>= 3) of points")
        half = (n_points - 1) // 2
        return cls(h=tuple(float(x) for x in bounds / half), n_lo=tuple(int(n) for n in half), n_hi=tuple(int(n) for n in half))

    @classmethod
    def from_step(cls, bounds, h) -> "GridSpec":
        bounds = np.atleast_1d(np.asarray(bounds, dtype=float))
        h = np.broadcast_to(np.asarray(h, dtype=float), bounds.shape)
        n = np.rint(bounds / h).astype(int)
        return cls(h=tuple(float(x) for x in h), n_lo=tuple(int(k) for k in n), n_hi=tuple(int(k) for k in n))

    @property
    def d(self) -> int:
        return len(self.h)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(lo + hi + 1 for lo, hi in zip(self.n_lo, self.n_hi))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lo(self):
        return tuple(-n * h for n, h in zip(self.n_lo, self.h))

    @property
    def hi(self):
        return tuple(n * h for n, h in zip(self.n_hi, self.h))

    def axes(self) -> list[np.ndarray]:
        return [h * np.arange(-lo, hi + 1) for h, lo, hi in zip(self.h, self.n_lo, self.n_hi)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    @property
    def origin_index(self) -> tuple[int, ...]:
        return tuple(self.n_lo)

    @property
    def origin_flat(self) -> int:
        return int(np.ravel_multi_index(self.origin_index, self.shape))


@dataclass(frozen=True, eq=False)
class ProblemData:
    alpha: np.ndarray
    v_z: float
    v_zz: float
    sigma_S: np.ndarray
    K: float

    def __post_init__(self):
        alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        sigma_S = np.atleast_2d(np.asarray(self.sigma_S, dtype=float))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sigma_S", sigma_S)
        if alpha.shape[0] != alpha.shape[1] or sigma_S.shape != alpha.shape:
            raise ValueError("alpha and sigma_S must be square matrices of equal size")
        if not self.v_z > 0 or not self.v_zz < 0:
            raise ValueError("need v_z > 0 and v_zz < 0")
        if not self.K > 0:
            raise ValueError("rate cap K must be positive")

    @property
    def d(self) -> int:
        return self.alpha.shape[0]

    @property
    def A(self) -> np.ndarray:
        return self.alpha @ self.alpha.T

    def monotonicity_margin(self, grid: GridSpec) -> np.ndarray:
        """``A_ii/h_i^2 - sum_j |A_ij|/(h_i h_j)`` per dimension; must be >= 0."""
        A, h = self.A, np.asarray(grid.h)
        off = np.abs(A) / np.outer(h, h)
        np.fill_diagonal(off, 0.0)
        return np.diag(A) / h**2 - off.sum(axis=1)

    def check_monotone(self, grid: GridSpec) -> None:
        margin = self.monotonicity_margin(grid)
        if np.any(margin < 0):
            i = int(np.argmin(margin))
            raise NonMonotoneStencilError(
                f"non-monotone stencil in dimension {i + 1} (margin {margin[i]:.3g}); "
                "rebalance the grid steps h_i (anisotropic grid) so that A_ii/h_i^2 dominates"
            )


@dataclass(frozen=True, eq=False)
class Policy:
    """Buy and sell rates, each of shape ``(d, *grid.shape)``."""

    buy: np.ndarray
    sell: np.ndarray

    @classmethod
    def zero(cls, grid: GridSpec) -> "Policy":
        z = np.zeros((grid.d, *grid.shape))
        return cls(buy=z, sell=z.copy())

    @property
    def nu(self) -> np.ndarray:
        return self.buy - self.sell

    def trading(self) -> np.ndarray:
        """Boolean mask of points where any asset is traded."""
        return np.any((self.buy > 0) | (self.sell > 0), axis=0)

    def codes(self) -> np.ndarray:
        """0 no trade, +-(i+1) trade in asset i only (sign = buy/sell), 3 several assets."""
        active = (self.buy > 0) | (self.sell > 0)
        n_active = active.sum(axis=0)
        code = np.zeros(self.buy.shape[1:], dtype=int)
        for i in range(self.buy.shape[0]):
            sign = np.where(self.buy[i] > 0, 1, -1)
            code = np.where(active[i] & (n_active == 1), sign * (i + 1), code)
        return np.where(n_active > 1, 3, code)

    def same_as(self, other: "Policy") -> bool:
        return np.array_equal(self.buy, other.buy) and np.array_equal(self.sell, other.sell)


@dataclass(frozen=True, eq=False)
class DiscreteGenerator:
    matrix: sp.csr_matrix
    grid: GridSpec

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def min_off_diagonal(self) -> float:
        m = self.matrix.tocoo()
        off = m.row != m.col
        return float(m.data[off].min()) if np.any(off) else 0.0


@dataclass(frozen=True, eq=False)
class RegionDescription:
    mask: np.ndarray  # True where no asset is traded
    codes: np.ndarray
    lower: tuple[float, ...]  # boundary along each axis through the origin
    upper: tuple[float, ...]
    grid: GridSpec

    @property
    def halfwidths(self) -> tuple[float, ...]:
        return tuple((u - l) / 2 for l, u in zip(self.lower, self.upper))

    def scaled_halfwidths(self, lambda_p: float) -> tuple[float, ...]:
        return tuple(np.cbrt(lambda_p) * h for h in self.halfwidths)

    def cross_sections(self, dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """For ``d = 2``: extent of the no-trade set along ``dim`` for each value of the other coordinate.

        Returns ``(other_coordinate, low, high)``; rows without a no-trade point carry NaN.
        """
        if self.grid.d != 2:
            raise ValueError("cross sections are defined for two-dimensional grids")
        axes = self.grid.axes()
        other = 1 - dim
        mask = np.moveaxis(self.mask, dim, 1)
        lo = np.full(mask.shape[0], np.nan)
        hi = np.full(mask.shape[0], np.nan)
        for k, row in enumerate(mask):
            idx = np.flatnonzero(row)
            if idx.size:
                lo[k], hi[k] = axes[dim][idx[0]], axes[dim][idx[-1]]
        return axes[other], lo, hi


@dataclass(frozen=True, eq=False)
class ErgodicSolution:
    w: np.ndarray
    a: float
    policy: Policy
    iterations: int
    a_history: list[float]
    region: RegionDescription
    grid: GridSpec
    timings: list[float] = field(default_factory=list)


def build_alpha_matrix(theta, theta_z, sigma_S) -> np.ndarray:
    """Deviation diffusion matrix ``(I - theta_z 1^T) diag(theta) sigma_S``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_z = np.atleast_1d(np.asarray(theta_z, dtype=float))
    sigma_S = np.atleast_2d(np.asarray(sigma_S, dtype=float))
    d = theta.size
    if theta_z.size != d or sigma_S.shape != (d, d):
        raise ValueError("dimensions of theta, theta_z and sigma_S disagree")
    return (np.eye(d) - np.outer(theta_z, np.ones(d))) @ np.diag(theta) @ sigma_S


def power_utility_problem(mu, sigma_S, gamma: float, K: float) -> tuple[ProblemData, np.ndarray]:
    """Homothetic normalization (wealth 1, ``v_z = 1``, ``v_zz = -gamma``) in weight units.

    Returns the problem data and the frictionless Merton weights.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma_S = np.atleast_2d(np.asarray(sigma_S, dtype=float))
    cov = sigma_S @ sigma_S.T
    pi = np.linalg.solve(cov, mu) / gamma
    alpha = build_alpha_matrix(pi, pi, sigma_S)
    return ProblemData(alpha=alpha, v_z=1.0, v_zz=-float(gamma), sigma_S=sigma_S, K=K), pi


def default_bounds(data: ProblemData, factor: float = 3.0) -> np.ndarray:
    """``factor`` times the one-dimensional closed-form half-width in each coordinate."""
    A = data.A
    var = np.diag(data.sigma_S @ data.sigma_S.T)
    return factor * np.cbrt(-data.v_z / data.v_zz * 1.5 * np.diag(A) / var)


# ------------------------------------------------------------------ assembly


def _offsets(d: int):
    """Stencil neighbours as (offset vector, kind, i, j)."""
    for i in range(d):
        for s in (1, -1):
            e = [0] * d
            e[i] = s
            yield tuple(e), "axis", i, None
    for i, j in itertools.combinations(range(d), 2):
        for si, sj in itertools.product((1, -1), repeat=2):
            e = [0] * d
            e[i], e[j] = si, sj
            yield tuple(e), ("same" if si == sj else "cross"), i, j


def generator_entries(data: ProblemData, policy: Policy, grid: GridSpec, exact: bool = False):
    """COO triplets ``(rows, cols, vals)`` of the discretized controlled generator.

    With ``exact=True`` all arithmetic runs on :class:`fractions.Fraction`
    (every float is converted exactly) and ``vals`` is an object array.
    """
    data.check_monotone(grid)
    d = grid.d
    if data.d != d:
        raise ValueError("grid and problem dimensions disagree")
    conv = Fraction if exact else float
    A = [[conv(float(x)) for x in row] for row in data.A]
    h = [conv(x) for x in grid.h]
    nu = policy.nu.reshape(d, -1)
    if exact:
        nu = np.vectorize(lambda x: Fraction(float(x)), otypes=[object])(nu)

    shape = grid.shape
    idx = np.indices(shape).reshape(d, -1)
    rows_all = np.arange(grid.size)
    zero = Fraction(0) if exact else 0.0
    diag = np.full(grid.size, zero, dtype=object if exact else float)

    rows, cols, vals = [], [], []
    for e, kind, i, j in _offsets(d):
        if kind == "axis":
            base = A[i][i] / (h[i] * h[i]) - sum(abs(A[i][k]) / (h[i] * h[k]) for k in range(d) if k != i)
            base = base / 2
            drift = np.where(nu[i] * e[i] > 0, nu[i] * e[i], zero) / h[i]
            coef = base + drift
        else:
            aij = A[i][j]
            w = (max(aij, zero) if kind == "same" else max(-aij, zero)) / (2 * h[i] * h[j])
            if w == 0:
                continue
            coef = np.full(grid.size, w, dtype=object if exact else float)
        target = idx + np.asarray(e)[:, None]
        inside = np.all((target >= 0) & (target < np.asarray(shape)[:, None]), axis=0)
        coef = np.where(inside, coef, zero)
        keep = inside & (coef != 0)
        diag = diag - coef
        rows.append(rows_all[keep])
        cols.append(np.ravel_multi_index(tuple(target[:, keep]), shape))
        vals.append(np.asarray(coef, dtype=object if exact else float)[keep])
    rows.append(rows_all)
    cols.append(rows_all)
    vals.append(diag)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def discretize_generator(data: ProblemData, policy: Policy, grid: GridSpec) -> DiscreteGenerator:
    rows, cols, vals = generator_entries(data, policy, grid)
    m = sp.csr_matrix((vals.astype(float), (rows, cols)), shape=(grid.size, grid.size))
    return DiscreteGenerator(matrix=m, grid=grid)


# ------------------------------------------------------------ policy iteration


def running_cost(data: ProblemData, policy: Policy, grid: GridSpec) -> np.ndarray:
    """``-1/2 |sigma_S^T xi|^2 v_zz + v_z sum_i (l^i + m^i)`` on the grid (flattened)."""
    xi = np.stack([m.ravel() for m in grid.mesh()])
    proj = data.sigma_S.T @ xi
    rates = (policy.buy + policy.sell).reshape(grid.d, -1).sum(axis=0)
    return -0.5 * np.sum(proj**2, axis=0) * data.v_zz + data.v_z * rates


def policy_evaluation(gen: DiscreteGenerator, policy: Policy, data: ProblemData) -> tuple[np.ndarray, float]:
    """Solve ``L w + f = -a`` with ``w(0) = 0``; returns grid-shaped ``w`` and ``a``."""
    grid = gen.grid
    f = running_cost(data, policy, grid)
    o = grid.origin_flat
    # w(origin) = 0 frees its column, which is reused for the unknown a
    M = gen.matrix.tocsc()
    col = M[:, [o]].toarray().ravel()
    n = grid.size
    M = (M + sp.csc_matrix((1.0 - col, (np.arange(n), np.full(n, o))), shape=(n, n))).tocsc()
    rhs = -f
    if grid.d <= 2:
        with np.errstate(all="ignore"):
            x = spla.spsolve(M, rhs)
    else:
        diag = M.diagonal()
        diag[diag == 0] = 1.0
        pre = sp.diags(1.0 / diag)
        x, info = spla.gmres(M, rhs, M=pre, rtol=1e-12, restart=200, maxiter=2000)
        if info != 0:
            raise SingularSystemError(f"iterative solve did not converge (info={info})")
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("singular policy-evaluation system (reducible or broken generator)")
    a = float(x[o])
    w = x.copy()
    w[o] = 0.0
    return w.reshape(grid.shape), a


def policy_improvement(w: np.ndarray, data: ProblemData, grid: GridSpec) -> Policy:
    """Bang-bang minimizer of the discrete Hamiltonian at every point and in every asset."""
    buy = np.zeros((grid.d, *grid.shape))
    sell = np.zeros_like(buy)
    for i, h in enumerate(grid.h):
        fwd = np.full(grid.shape, np.inf)
        bwd = np.full(grid.shape, -np.inf)
        diff = np.diff(w, axis=i) / h
        lead = [slice(None)] * grid.d
        trail = [slice(None)] * grid.d
        lead[i] = slice(None, -1)
        trail[i] = slice(1, None)
        fwd[tuple(lead)] = diff
        bwd[tuple(trail)] = diff
        buy_gain = data.v_z + fwd  # +inf at the upper edge: cannot move out
        sell_gain = data.v_z - bwd
        do_buy = (buy_gain < 0) & (buy_gain < sell_gain)
        do_sell = (sell_gain < 0) & (sell_gain < buy_gain)
        buy[i] = np.where(do_buy, data.K, 0.0)
        sell[i] = np.where(do_sell, data.K, 0.0)
    return Policy(buy=buy, sell=sell)


def _axis_extent(mask: np.ndarray, grid: GridSpec, dim: int) -> tuple[float, float]:
    line = [o for o in grid.origin_index]
    line[dim] = slice(None)
    row = mask[tuple(line)]
    o = grid.origin_index[dim]
    h = grid.h[dim]
    if not row[o]:
        raise EmptyRegionError("origin is not in the no-trade set")
    k = o
    while k + 1 < row.size and row[k + 1]:
        k += 1
    upper = (k - o) * h + (h / 2 if k + 1 < row.size else 0.0)
    k = o
    while k - 1 >= 0 and row[k - 1]:
        k -= 1
    lower = (k - o) * h - (h / 2 if k > 0 else 0.0)
    return lower, upper


def extract_no_trade_region(sol_or_policy, grid: GridSpec) -> RegionDescription:
    """No-trade set of a solution (or policy).

    Boundaries along each axis through the origin are placed midway between the
    last no-trade grid point and the first trading point.
    """
    policy = sol_or_policy.policy if isinstance(sol_or_policy, ErgodicSolution) else sol_or_policy
    mask = ~policy.trading()
    if not mask.any():
        raise EmptyRegionError("empty region: no grid point without trading (K too small or grid too coarse)")
    lower, upper = zip(*(_axis_extent(mask, grid, i) for i in range(grid.d)))
    return RegionDescription(mask=mask, codes=policy.codes(), lower=lower, upper=upper, grid=grid)


def policy_iteration(data: ProblemData, grid: GridSpec, tol: float | None = None, max_iter: int = 200) -> ErgodicSolution:
    """Alternate evaluation and improvement from the zero policy.

    Stops once ``|a_j - a_{j-1}| < tol`` (default ``1e-9 |a_1|``) or the policy
    is unchanged.
    """
    data.check_monotone(grid)
    policy = Policy.zero(grid)
    history: list[float] = []
    timings: list[float] = []
    for it in range(1, max_iter + 1):
        start = time.perf_counter()
        gen = discretize_generator(data, policy, grid)
        w, a = policy_evaluation(gen, policy, data)
        history.append(a)
        if tol is None:
            tol = 1e-9 * max(abs(history[0]), np.finfo(float).tiny)
        new_policy = policy_improvement(w, data, grid)
        timings.append(time.perf_counter() - start)
        log.debug("iteration %d: a = %.12g", it, a)
        stable = new_policy.same_as(policy)
        if stable or (it > 1 and abs(history[-1] - history[-2]) < tol):
            return ErgodicSolution(
                w=w, a=a, policy=policy, iterations=it, a_history=history,
                region=extract_no_trade_region(policy, grid), grid=grid, timings=timings,
            )  # fmt: skip
        policy = new_policy
    raise NoConvergenceError(f"no convergence after {max_iter} iterations", history)


def monotone_grid(data: ProblemData, bounds, n_points: int) -> GridSpec:
    """Symmetric grid with ``n_points`` per axis whose step ratio keeps the stencil monotone.

    Starts from the isotropic choice ``h_i = bounds_i / half`` and, in two
    dimensions, moves the ratio ``h_2 / h_1`` into the admissible interval
    ``[|A_12| / A_11, A_22 / |A_12|]`` by enlarging one of the bounds.
    """
    grid = GridSpec.symmetric(bounds, n_points)
    if np.all(data.monotonicity_margin(grid) >= 0):
        return grid
    if data.d != 2:
        data.check_monotone(grid)
    A = data.A
    lo_ratio = abs(A[0, 1]) / A[0, 0]
    hi_ratio = A[1, 1] / abs(A[0, 1])
    h1, h2 = grid.h
    ratio = h2 / h1
    # small safety factor keeps the margin strictly positive after rounding
    if ratio < lo_ratio:
        h2 = h1 * lo_ratio * (1 + 1e-9)
    else:
        h1 = h2 / (hi_ratio * (1 - 1e-9))
    half = grid.n_lo
    grid = GridSpec(h=(h1, h2), n_lo=half, n_hi=half)
    data.check_monotone(grid)
    return grid
