"""Volterra kernel of fractional Brownian motion and its grid tabulation.

The kernel is represented without its normalising constant as

    k(t, θ) = (t-θ)^(H-1/2) + (1/2-H) ∫_θ^t (u-θ)^(H-3/2) (1 - (θ/u)^(1/2-H)) du

and ``K_H = c_H * k``.  Point evaluations use a graded Gauss rule after the
substitution ``u = θ + v**2``; bulk tabulation uses the equivalent
hypergeometric closed form, which is much cheaper per point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import ConvergenceError, DomainError

H_LOWER = 0.25
H_UPPER = 1.0


class Regime(str, Enum):
    ROUGH = "rough"
    SMOOTH = "smooth"
    STANDARD = "standard"


def validate_hurst(H: float) -> float:
    H = float(H)
    if not math.isfinite(H) or not (H_LOWER < H < H_UPPER):
        raise DomainError(f"Hurst parameter must lie in (1/4, 1), got {H!r}")
    return H


def regime_of(H: float) -> Regime:
    H = validate_hurst(H)
    if H < 0.5:
        return Regime.ROUGH
    if H > 0.5:
        return Regime.SMOOTH
    return Regime.STANDARD


@dataclass(frozen=True)
class HurstParams:
    """Hurst index, horizon and normalising constant of the kernel."""

    H: float
    T: float = 1.0
    cH: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "H", validate_hurst(self.H))
        if not (math.isfinite(self.T) and self.T > 0):
            raise DomainError(f"horizon T must be positive, got {self.T!r}")
        if not (math.isfinite(self.cH) and self.cH > 0):
            raise DomainError(f"cH must be positive, got {self.cH!r}")

    @property
    def regime(self) -> Regime:
        return regime_of(self.H)

    @classmethod
    def calibrated(cls, H: float, T: float = 1.0, quad_resolution: int = 16) -> "HurstParams":
        return cls(H=H, T=T, cH=calibrate_cH(H, quad_resolution))

    def recalibrated(self, quad_resolution: int = 16) -> "HurstParams":
        return HurstParams(self.H, self.T, calibrate_cH(self.H, quad_resolution))


class TimeGrid:
    """Increasing time points 0 = t_0 < ... < t_N = T."""

    def __init__(self, points):
        pts = np.array(points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise DomainError("a grid needs at least two points")
        if pts[0] != 0.0:
            raise DomainError("grid must start at 0")
        if not np.all(np.diff(pts) > 0):
            raise DomainError("grid points must be strictly increasing")
        pts.setflags(write=False)
        self._points = pts

    @classmethod
    def uniform(cls, N: int, T: float = 1.0) -> "TimeGrid":
        N = int(N)
        if N < 1:
            raise DomainError("N must be a positive integer")
        pts = np.arange(N + 1, dtype=float) * (float(T) / N)
        pts[-1] = float(T)
        return cls(pts)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def N(self) -> int:
        return self._points.size - 1

    @property
    def T(self) -> float:
        return float(self._points[-1])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self._points)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self._points[1:] + self._points[:-1])

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Index i with t_i == t (within a relative tolerance)."""
        i = int(np.searchsorted(self._points, t - tol * self.T))
        if i > self.N or abs(self._points[i] - t) > tol * self.T:
            raise DomainError(f"time {t!r} is not a grid point")
        return i

    def subgrid(self, stride: int) -> "TimeGrid":
        if stride < 1 or self.N % stride:
            raise DomainError(f"stride {stride} does not divide N={self.N}")
        return TimeGrid(self._points[::stride])

    def key(self) -> bytes:
        return self._points.tobytes()

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self._points, other._points)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"TimeGrid(N={self.N}, T={self.T})"


# ---------------------------------------------------------------- quadrature

@lru_cache(maxsize=None)
def _gauss(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def _graded_unit_rule(m: int, levels: int, left: bool, right: bool):
    """Composite Gauss rule on [0, 1] with panels halving toward flagged ends."""
    cuts = {0.0, 1.0}
    if left:
        cuts.update(0.5 ** k for k in range(1, levels + 1))
    if right:
        cuts.update(1.0 - 0.5 ** k for k in range(1, levels + 1))
    if left and right:
        cuts.add(0.5)
    cuts = np.array(sorted(cuts))
    x, w = _gauss(m)
    a, b = cuts[:-1, None], cuts[1:, None]
    nodes = (a + (b - a) * x).ravel()
    weights = ((b - a) * w).ravel()
    return nodes, weights


@lru_cache(maxsize=None)
def _jacobi_end_rule(m: int, levels: int, alpha_left: float, alpha_right: float):
    """Rule on [0, 1] for f(x) x^alpha_left (1-x)^alpha_right g(x) with smooth g.

    Geometric panels toward both ends; the two end panels use Gauss-Jacobi
    with the exact endpoint power, the others plain Gauss-Legendre.
    Returned weights already include the power factors.
    """
    cuts = sorted({0.0, 0.5, 1.0}
                  | {0.5 ** k for k in range(1, levels + 1)}
                  | {1.0 - 0.5 ** k for k in range(1, levels + 1)})
    cuts = np.array(cuts)
    x, w = _gauss(m)
    nodes, weights = [], []
    for p, q in zip(cuts[:-1], cuts[1:]):
        L = q - p
        if p == 0.0:
            xj, wj = special.roots_jacobi(m, 0.0, alpha_left)
            nodes.append(p + L * (xj + 1) / 2)
            weights.append(wj * (L / 2) ** (1 + alpha_left)
                           * (1 - (p + L * (xj + 1) / 2)) ** alpha_right)
        elif q == 1.0:
            xj, wj = special.roots_jacobi(m, alpha_right, 0.0)
            xn = p + L * (xj + 1) / 2
            nodes.append(xn)
            weights.append(wj * (L / 2) ** (1 + alpha_right) * xn ** alpha_left)
        else:
            xn = p + L * x
            nodes.append(xn)
            weights.append(L * w * xn ** alpha_left * (1 - xn) ** alpha_right)
    return np.concatenate(nodes), np.concatenate(weights)


def _unit_kernel_quad(H: float, t, theta, nodes: int = 16, levels: int = 40):
    """k(t, θ) by Gauss quadrature in v with u = θ + v², graded toward v = 0."""
    t, theta = np.broadcast_arrays(np.asarray(t, float), np.asarray(theta, float))
    shape = t.shape
    t, theta = t.ravel(), theta.ravel()
    a = 0.5 - H
    V = np.sqrt(t - theta)
    power = (t - theta) ** (H - 0.5)
    if a == 0.0:
        return power.reshape(shape)
    x, w = _graded_unit_rule(nodes, levels, True, False)
    out = np.empty_like(t)
    chunk = max(1, 200_000 // x.size)
    for s in range(0, t.size, chunk):
        sl = slice(s, s + chunk)
        v = V[sl, None] * x[None, :]
        th = theta[sl, None]
        # 1 - (θ/(θ+v²))^a written to avoid cancellation for small v
        g = 2.0 * v ** (2 * H - 2) * -np.expm1(-a * np.log1p(v * v / th))
        out[sl] = power[sl] + a * V[sl] * (g @ w)
    return out.reshape(shape)


def _unit_kernel_closed(H: float, t, theta):
    """k(t, θ) through its hypergeometric closed form (bulk evaluation)."""
    t = np.asarray(t, float)
    theta = np.asarray(theta, float)
    return (t - theta) ** (H - 0.5) * special.hyp2f1(H - 0.5, 0.5 - H, H + 0.5, 1.0 - t / theta)


def literature_cH(H: float) -> float:
    """Closed-form unit-variance constant, reported alongside the numeric one."""
    H = validate_hurst(H)
    return math.sqrt(2 * H * special.gamma(1.5 - H)
                     / (special.gamma(H + 0.5) * special.gamma(2 - 2 * H)))


# ---------------------------------------------------------------- point evaluation

def _check_points(params: HurstParams, t, theta):
    t = np.asarray(t, float)
    theta = np.asarray(theta, float)
    if np.any(theta <= 0):
        raise DomainError("kernel is not evaluated at θ <= 0")
    if np.any(t > params.T * (1 + 1e-12)) or np.any(t <= 0):
        raise DomainError("t must lie in (0, T]")
    return np.broadcast_arrays(t, theta)


def eval_kernel(params: HurstParams, t, theta, resolution: int = 16):
    """K_H(t, θ); zero for θ >= t."""
    t, theta = _check_points(params, t, theta)
    out = np.zeros(t.shape)
    live = theta < t
    if np.any(live):
        out[live] = params.cH * _unit_kernel_quad(params.H, t[live], theta[live], nodes=resolution)
    return out[()] if out.ndim == 0 else out


def eval_kernel_dt(params: HurstParams, t, theta):
    """∂K_H/∂t (t, θ); zero for θ > t, undefined on the diagonal."""
    t, theta = _check_points(params, t, theta)
    if np.any(theta == t):
        raise DomainError("the t-derivative is singular at θ = t")
    H = params.H
    out = np.zeros(t.shape)
    live = theta < t
    if H != 0.5 and np.any(live):
        tl, thl = t[live], theta[live]
        out[live] = params.cH * (H - 0.5) * (thl / tl) ** (0.5 - H) * (tl - thl) ** (H - 1.5)
    return out[()] if out.ndim == 0 else out


def kernel_increment(params: HurstParams, t1: float, t2: float, theta: float, nodes: int = 16) -> float:
    """K_H(t2, θ) - K_H(t1, θ) as the integral of the t-derivative over [t1, t2].

    The power (r-θ)^(H-3/2) is integrated exactly through the change of
    variable w = (r-θ)^(H-1/2)/(H-1/2); the smooth factor (θ/r)^(1/2-H) is
    handled by Gauss rules on panels geometric in r-θ.
    """
    if not (theta < t1 < t2):
        raise DomainError("kernel_increment needs θ < t1 < t2")
    _check_points(params, t2, theta)
    H = params.H
    if H == 0.5:
        return 0.0
    e = H - 0.5
    x1, x2 = t1 - theta, t2 - theta
    n_pan = max(1, int(math.ceil(math.log2(x2 / x1))))
    cuts = x1 * (x2 / x1) ** (np.arange(n_pan + 1) / n_pan)
    xg, wg = _gauss(nodes)
    wp = cuts ** e / e
    total = 0.0
    for a, b in zip(wp[:-1], wp[1:]):
        w = a + (b - a) * xg
        r = theta + (e * w) ** (1.0 / e)
        total += (b - a) * np.dot(wg, (theta / r) ** (0.5 - H))
    return float(params.cH * e * total)


# ---------------------------------------------------------------- calibration

def _unit_second_moment(H: float, resolution: int) -> float:
    """∫_0^1 k(1, θ)² dθ with the endpoint powers integrated exactly."""
    left = -abs(2 * H - 1)
    right = 2 * H - 1
    x, w = _jacobi_end_rule(resolution, 30, left, right)
    k = _unit_kernel_quad(H, 1.0, x, nodes=resolution)
    # strip the endpoint powers that are already inside the weights
    g = k * k / (x ** left * (1 - x) ** right)
    return float(np.dot(w, g))


def calibrate_cH(H: float, quad_resolution: int = 16) -> float:
    """Constant making ∫_0^1 K_H(1, θ)² dθ = 1."""
    H = validate_hurst(H)
    if H == 0.5:
        return 1.0
    m1 = _unit_second_moment(H, quad_resolution)
    m2 = _unit_second_moment(H, quad_resolution + 8)
    if not (np.isfinite(m1) and abs(m1 - m2) <= 1e-8 * abs(m2)):
        raise ConvergenceError(f"calibration quadrature did not stabilise for H={H}")
    return 1.0 / math.sqrt(m1)


# ---------------------------------------------------------------- tabulation

@dataclass(frozen=True, eq=False)
class KernelTable:
    """Grid tabulation of K_H and of its cell masses in t.

    ``K[i, j]`` approximates K_H(t_i, ·) on cell j for j < i and is zero
    otherwise; ``dK[i, j] = K[i+1, j] - K[i, j]`` for j < i and zero otherwise.
    """

    params: HurstParams
    grid: TimeGrid
    K: np.ndarray
    dK: np.ndarray

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def first_mass(self) -> np.ndarray:
        """K[j+1, j]: kernel mass of the r-cell that contains θ itself."""
        j = np.arange(self.N)
        return self.K[j + 1, j]

    def check_grid(self, grid: TimeGrid):
        from .errors import GridMismatchError
        if grid != self.grid:
            raise GridMismatchError("objects do not share the kernel table grid")


def _cell_weight_ratio(H: float, edges: np.ndarray) -> np.ndarray:
    """sqrt(mean w²)/mean w per cell for the endpoint weight w = θ^-|H-1/2|."""
    p = -abs(H - 0.5)
    if p == 0.0:
        return np.ones(edges.size - 1)
    lo, hi = edges[:-1], edges[1:]
    d = hi - lo
    m1 = (hi ** (p + 1) - lo ** (p + 1)) / ((p + 1) * d)
    m2 = (hi ** (2 * p + 1) - lo ** (2 * p + 1)) / ((2 * p + 1) * d)
    return np.sqrt(m2) / m1


def _tabulate_unit(H: float, edges: np.ndarray, interior_nodes: int = 8,
                   edge_nodes: int = 12, levels: int = 30) -> np.ndarray:
    N = edges.size - 1
    lo, d = edges[:-1], np.diff(edges)
    K = np.zeros((N + 1, N))
    if H == 0.5:
        K[np.tril_indices(N + 1, -1, N)] = 1.0
        return K
    rough = H < 0.5
    xi, wi = _gauss(interior_nodes)
    ii, jj = np.tril_indices(N + 1, -1, N)
    interior = (jj > 0) & (jj < ii - 1)
    ii_in, jj_in = ii[interior], jj[interior]
    chunk = max(1, 2_000_000 // interior_nodes)
    for s in range(0, ii_in.size, chunk):
        i, j = ii_in[s:s + chunk], jj_in[s:s + chunk]
        th = lo[j, None] + d[j, None] * xi[None, :]
        K[i, j] = _unit_kernel_closed(H, edges[i, None], th) @ wi
    # cells touching θ = 0 or θ = t_i: graded rules toward the singular ends
    for i in range(1, N + 1):
        for j in {0, i - 1}:
            left, right = j == 0, j == i - 1
            x, w = _graded_unit_rule(edge_nodes, levels, left, right)
            vals = _unit_kernel_closed(H, edges[i], lo[j] + d[j] * x)
            if rough and right:
                K[i, j] = math.sqrt(np.dot(w, vals * vals))
            else:
                K[i, j] = np.dot(w, vals)
    rho = _cell_weight_ratio(H, edges)
    mask = np.ones_like(K, dtype=bool)
    if rough:
        mask[np.arange(1, N + 1), np.arange(N)] = False
    K = np.where(mask, K * rho[None, :], K)
    return K


@lru_cache(maxsize=32)
def _cached_table(H: float, cH: float, T: float, key: bytes):
    edges = np.frombuffer(key, dtype=float)
    grid = TimeGrid(edges)
    K = cH * _tabulate_unit(H, edges)
    K[np.triu_indices(K.shape[0], 0, K.shape[1])] = 0.0
    N = grid.N
    dK = np.zeros((N, N))
    dK[1:] = K[2:] - K[1:-1]
    dK[np.triu_indices(N)] = 0.0
    if H == 0.5:
        dK[:] = 0.0
    K.setflags(write=False)
    dK.setflags(write=False)
    return KernelTable(HurstParams(H, T, cH), grid, K, dK)


def build_kernel_table(params: HurstParams, grid: TimeGrid) -> KernelTable:
    """Tabulate the kernel on ``grid``; cached per (params, grid)."""
    if abs(grid.T - params.T) > 1e-12 * params.T:
        raise DomainError("grid horizon differs from params.T")
    table = _cached_table(params.H, params.cH, params.T, grid.key())
    return KernelTable(params, grid, table.K, table.dK)


def fbm_covariance(H: float, s, t):
    s = np.asarray(s, float)
    t = np.asarray(t, float)
    return 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(t - s) ** (2 * H))


def covariance_check(table: KernelTable) -> float:
    """Largest gap between the tabulated and exact covariance on grid pairs."""
    t = table.grid.points
    C = table.K @ (table.K * table.grid.dt[None, :]).T
    R = fbm_covariance(table.params.H, t[:, None], t[None, :])
    return float(np.max(np.abs(C - R)))
