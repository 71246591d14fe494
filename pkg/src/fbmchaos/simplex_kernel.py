"""Recursive transfer kernels K*^(n)_{s,t} h on the grid cube and their norms.

Tensors live on the cells of [0, t]^n with the last axis carrying θ_n.  The
order-n kernel is obtained from the order-(n-1) kernels evaluated at every
r-cell (the "inner stack"), which are computed once and reused for every
outer cell and every window.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import linalg

from .errors import DomainError, InsufficientDataError, MemoryBoundError
from .integrands import IntegrandSpec
from .kernel import HurstParams, KernelTable, Regime, TimeGrid

MAX_CELLS = 2 ** 24


@dataclass(frozen=True, eq=False)
class SimplexKernelTensor:
    n: int
    s: float
    t: float
    grid: TimeGrid
    values: np.ndarray

    @property
    def m(self) -> int:
        """Number of grid cells in [0, t]."""
        return self.values.shape[0] if self.n else 0

    @property
    def cell_widths(self) -> np.ndarray:
        return self.grid.dt[: self.m]

    def padded(self, m: int) -> np.ndarray:
        out = np.zeros((m,) * self.n)
        out[(slice(0, self.m),) * self.n] = self.values
        return out

    def volume_weights(self) -> np.ndarray:
        w = self.cell_widths
        out = w
        for _ in range(self.n - 1):
            out = np.multiply.outer(out, w)
        return out


def _window_indices(table: KernelTable, s: float, t: float):
    if not (0 <= s <= t <= table.params.T * (1 + 1e-12)):
        raise DomainError(f"window must satisfy 0 <= s <= t <= T, got ({s}, {t})")
    return table.grid.index_of(s), table.grid.index_of(t)


def _check_budget(N: int, n: int):
    if N ** n > MAX_CELLS:
        raise MemoryBoundError(f"N^n = {N}^{n} exceeds the cell budget {MAX_CELLS}")


# ---------------------------------------------------------------- one level of the recursion

def _lift_vector(table: KernelTable, f: np.ndarray, a: int, i: int) -> np.ndarray:
    """Order-one step for scalar values f[k] at r-cells k < i.

    θ-cell j in [a, i): f_j K(t_i, θ_j) + Σ_{k>j} (f_k - f_j) dK[k, j]
    θ-cell j <  a     : Σ_{a<=k<i} f_k dK[k, j]
    """
    out = np.zeros(i)
    if i == 0:
        return out
    D = table.dK[:i, :i]
    f = f[:i]
    hi = slice(a, i)
    diff = (f[:, None] - f[None, hi]) * D[:, hi]
    out[hi] = f[hi] * table.K[i, hi] + diff.sum(axis=0)
    if a > 0:
        out[:a] = (f[a:i, None] * D[a:i, :a]).sum(axis=0)
    return out


def _lift_tensor(table: KernelTable, F: np.ndarray, a: int, i: int) -> np.ndarray:
    """Order-raising step for tensor values F[k] (inner kernels at r-cell k).

    Returns T with T[j] = Σ_{k} F[k]·(mass of the r-cell k against θ-cell j),
    the first axis indexing θ_n.  For j >= a the cell containing θ_j itself
    contributes K(t_{j+1}, θ_j); the two regime formulas coincide on the grid
    once the Δ-difference term is telescoped with the inner increment identity.
    """
    rest = F.shape[1:]
    Ff = F[:i].reshape(i, -1)
    W = table.dK[:i, :i].copy()
    if a > 0:
        W[:a, :a] = 0.0
    c = np.zeros(i)
    c[a:i] = table.first_mass[a:i]
    T = W.T @ Ff + c[:, None] * Ff
    return T.reshape((i,) + rest)


class InnerStack:
    """Memoised order-(n-1) kernels at every r-cell, for a fixed integrand.

    ``F[k]`` holds K*^{(n-1)}_{0,t_k} h(·, m_k) padded to the full grid (or
    h(m_k) when n = 1).  Time-dependent integrands bind their t-slot through
    ``t_value``.
    """

    def __init__(self, table: KernelTable, spec: IntegrandSpec, t_value: Optional[float] = None,
                 upto: Optional[int] = None):
        self.table = table
        self.spec = spec
        self.n = spec.n
        N = table.N if upto is None else upto
        _check_budget(table.N, spec.n)
        self.N = N
        mids = table.grid.midpoints
        if spec.time_dependent:
            if t_value is None:
                raise DomainError("time-dependent integrand needs its t-slot value")
            hfun = lambda *th: spec(*th, t=t_value)
        else:
            hfun = lambda *th: spec(*th)
        self.F = _build_stack(table, hfun, spec.n, N, mids)

    def tensor_values(self, a: int, i: int) -> np.ndarray:
        """Order-n kernel values on the window (t_a, t_i), last axis θ_n."""
        if i > self.N:
            raise DomainError("window exceeds the memoised range")
        if self.n == 1:
            return _lift_vector(self.table, self.F, a, i)
        F = self.F[(slice(0, i),) * self.n]
        T = _lift_tensor(self.table, F, a, i)
        return np.moveaxis(T, 0, -1)


def _build_stack(table, hfun, n, N, mids):
    if n == 1:
        return np.asarray(hfun(mids[:N]), dtype=float).copy()
    F = np.zeros((N,) * n)
    for k in range(1, N):
        sub = _build_stack(table, lambda *th, _r=mids[k]: hfun(*th, _r), n - 1, k, mids)
        if n - 1 == 1:
            inner = _lift_vector(table, sub, 0, k)
        else:
            inner = np.moveaxis(_lift_tensor(table, sub, 0, k), 0, -1)
        F[(k,) + (slice(0, k),) * (n - 1)] = inner
    return F


def _as_vector(table: KernelTable, h, i: int) -> np.ndarray:
    if callable(h):
        return np.broadcast_to(np.asarray(h(table.grid.midpoints[:i]), float), (i,)).copy()
    v = np.asarray(h, dtype=float)
    if v.shape[0] < i:
        raise DomainError("integrand values do not cover [0, t]")
    return v[:i]


def kstar1(table: KernelTable, h: Union[Callable, np.ndarray], s: float, t: float,
           regime: Optional[Regime] = None) -> SimplexKernelTensor:
    """Order-one kernel K*_{s,t} h for h given as a function or midpoint values."""
    if regime is not None and Regime(regime) is not table.params.regime:
        raise DomainError("requested regime does not match the kernel table")
    a, i = _window_indices(table, s, t)
    f = _as_vector(table, h, i)
    return SimplexKernelTensor(1, s, t, table.grid, _lift_vector(table, f, a, i))


def kstar1_all_times(table: KernelTable, f: np.ndarray) -> np.ndarray:
    """Rows i = 0..N of K*_{0,t_i} for fixed midpoint values f (cumulative form)."""
    N = table.N
    f = np.asarray(f, dtype=float)[:N]
    G = (f[:, None] - f[None, :]) * table.dK
    C = np.cumsum(G, axis=0)
    out = np.zeros((N + 1, N))
    out[1:] = f[None, :] * table.K[1:] + C
    out[np.triu_indices(N + 1, 0, N)] = 0.0
    return out


def kstar_n(table: KernelTable, spec: IntegrandSpec, s: float, t: float,
            stack: Optional[InnerStack] = None) -> SimplexKernelTensor:
    """Order-n kernel K*^{(n)}_{s,t} h; ``stack`` may carry memoised inner kernels."""
    spec.validate_for(table.params)
    a, i = _window_indices(table, s, t)
    _check_budget(table.N, spec.n)
    if stack is None:
        stack = InnerStack(table, spec, t_value=t if spec.time_dependent else None, upto=max(i, 1))
    values = stack.tensor_values(a, i)
    return SimplexKernelTensor(spec.n, s, t, table.grid, values)


# ---------------------------------------------------------------- norms

def l2_norm(tensor: SimplexKernelTensor) -> float:
    if tensor.m == 0:
        return 0.0
    return float(math.sqrt(np.sum(tensor.values ** 2 * tensor.volume_weights())))


def symmetrize(tensor: SimplexKernelTensor) -> SimplexKernelTensor:
    if tensor.n > 3:
        raise DomainError("symmetrisation is implemented for n <= 3")
    perms = list(itertools.permutations(range(tensor.n)))
    acc = np.zeros_like(tensor.values)
    for p in perms:
        acc += np.transpose(tensor.values, p)
    return SimplexKernelTensor(tensor.n, tensor.s, tensor.t, tensor.grid, acc / len(perms))


def fgn_autocovariance(H: float, lags: np.ndarray) -> np.ndarray:
    k = np.abs(np.asarray(lags, dtype=float))
    return 0.5 * ((k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


def _hh_quadratic(H: float, v: np.ndarray, width: float) -> float:
    """α_H ∬ v(r) v(ξ) |r-ξ|^{2H-2} for v constant on M equal cells of ``width``.

    The singular double integral over a pair of cells equals the second
    difference of |u|^{2H}/(2H(2H-1)), which after the α_H factor is the
    fractional Gaussian noise autocovariance at the cell lag.
    """
    M = v.size
    gamma = fgn_autocovariance(H, np.arange(M))
    Gv = linalg.toeplitz(gamma) @ v
    return float(width ** (2 * H) * np.dot(v, Gv))


def abs_hh_norm(params: HurstParams, h: Callable, window=(0.0, None), cells: int = 1024) -> float:
    """|H^H| norm of h on a window, exact for h constant on ``cells`` equal cells."""
    if params.regime is not Regime.SMOOTH:
        raise DomainError("the |H^H| norm is defined for the smooth regime only")
    s, t = window
    t = params.T if t is None else t
    if not (0 <= s < t):
        raise DomainError("window must satisfy s < t")
    width = (t - s) / cells
    mids = s + width * (np.arange(cells) + 0.5)
    v = np.abs(np.broadcast_to(np.asarray(h(mids), float), (cells,)))
    return math.sqrt(max(_hh_quadratic(params.H, v, width), 0.0))


def lp_norm(h: Callable, p: float, window=(0.0, 1.0), cells: int = 1024) -> float:
    s, t = window
    width = (t - s) / cells
    mids = s + width * (np.arange(cells) + 0.5)
    v = np.abs(np.broadcast_to(np.asarray(h(mids), float), (cells,)))
    if math.isinf(p):
        return float(v.max())
    return float((np.sum(v ** p) * width) ** (1.0 / p))


def hls_ratios(params: HurstParams, family, window=(0.0, None), cells: int = 1024) -> np.ndarray:
    """|H^H| norm over L^{1/H} norm for each h of a family."""
    t = params.T if window[1] is None else window[1]
    w = (window[0], t)
    return np.array([abs_hh_norm(params, h, w, cells) / lp_norm(h, 1.0 / params.H, w, cells)
                     for h in family])


# ---------------------------------------------------------------- exponent regression

@dataclass
class BoundReport:
    n: int
    H: float
    regime: str
    s: float
    widths: list
    norms: list
    slope: float
    intercept: float
    threshold: float
    implied_constant: float
    passed: bool
    tolerance: float = 0.05
    integrand: str = ""

    @property
    def squared_slope(self) -> float:
        return 2.0 * self.slope

    def to_dict(self) -> dict:
        d = asdict(self)
        d["squared_slope"] = self.squared_slope
        return d


def bound_threshold(params: HurstParams, spec: IntegrandSpec) -> float:
    return spec.holder_threshold(params)


def verify_bound(table: KernelTable, spec: IntegrandSpec, s: float = 0.0, levels: int = 5,
                 tolerance: float = 0.05, first_level: int = 1) -> BoundReport:
    """Dyadic sweep t - s = T/2^k, k = first_level, ..., of the order-n kernel norm.

    The log-log slope of the L² norm against the window length is compared
    with H - 1/q (smooth) or H (rough).
    """
    if levels < 4:
        raise InsufficientDataError("the sweep needs at least four windows")
    spec.validate_for(table.params)
    T = table.params.T
    if first_level < 1:
        raise DomainError("first_level must be at least 1")
    widths = [T * 2.0 ** -k for k in range(first_level, first_level + levels)]
    if s < 0 or s + widths[0] > T * (1 + 1e-12):
        raise DomainError("sweep start s must satisfy 0 <= s <= T - widest window")
    stack = None if spec.time_dependent else InnerStack(table, spec, upto=table.grid.index_of(s + widths[0]))
    norms = []
    for w in widths:
        tensor = kstar_n(table, spec, s, s + w, stack=stack)
        norms.append(l2_norm(tensor))
    lw, ln = np.log(widths), np.log(norms)
    slope, intercept = np.polyfit(lw, ln, 1)
    threshold = bound_threshold(table.params, spec)
    implied = float(np.max(np.array(norms) / np.array(widths) ** threshold))
    return BoundReport(n=spec.n, H=table.params.H, regime=table.params.regime.value, s=s,
                       widths=widths, norms=[float(x) for x in norms], slope=float(slope),
                       intercept=float(intercept), threshold=float(threshold),
                       implied_constant=implied, passed=bool(slope >= threshold - tolerance),
                       tolerance=tolerance, integrand=spec.name)
