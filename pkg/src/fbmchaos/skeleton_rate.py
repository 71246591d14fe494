"""Deterministic skeletons along Cameron-Martin directions and the rate functional."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .chaos_mc import PathEngine, evaluation_indices, off_diagonal_sum
from .errors import DomainError, GridMismatchError
from .fbm import PathKind, PathSample
from .integrands import IntegrandSpec
from .kernel import KernelTable
from .simplex_kernel import SimplexKernelTensor, kstar_n, symmetrize
from .streams import stream_generator


class RateMethod(str, Enum):
    CLOSED_FORM = "ClosedFormProjection"
    PROJECTED_GRADIENT = "ProjectedGradient"
    MULTI_START = "MultiStart"


@dataclass(frozen=True, eq=False)
class CameronMartinElement:
    table: KernelTable
    phidot: np.ndarray
    phi: PathSample

    @classmethod
    def from_phidot(cls, table: KernelTable, phidot) -> "CameronMartinElement":
        phidot = np.asarray(phidot, dtype=float)
        return cls(table, phidot, phi_from_phidot(table, phidot))

    @property
    def grid(self):
        return self.table.grid

    @property
    def norm_sq(self) -> float:
        return float(np.sum(self.phidot ** 2 * self.table.grid.dt))


@dataclass
class RateResult:
    rate: float
    minimizer: CameronMartinElement
    constraint_residual: float
    method: RateMethod
    oracle_gap: Optional[float] = None
    converged: bool = True
    t_star: Optional[float] = None
    skeleton_max: Optional[float] = None
    candidates: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rate": self.rate, "constraint_residual": self.constraint_residual,
                "method": self.method.value, "oracle_gap": self.oracle_gap,
                "converged": self.converged, "t_star": self.t_star,
                "skeleton_max": self.skeleton_max, "candidates": list(self.candidates),
                "upper_estimate": self.method is not RateMethod.CLOSED_FORM}


def phi_from_phidot(table: KernelTable, phidot) -> PathSample:
    """φ(t_i) = Σ_{j<i} K[i, j] φ̇_j Δθ_j."""
    phidot = np.asarray(phidot, dtype=float)
    if phidot.shape != (table.N,):
        raise GridMismatchError("phidot must have one value per grid cell")
    return PathSample(table.grid, table.K @ (phidot * table.grid.dt), PathKind.SKELETON)


def _contract(tensor: SimplexKernelTensor, phidot: np.ndarray):
    x = np.asarray(phidot, float)[..., : tensor.m] * tensor.cell_widths
    if tensor.m == 0:
        return np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0
    return off_diagonal_sum(tensor.values, x)


def skeleton_value(table: KernelTable, spec: IntegrandSpec, t: float, phidot) -> float:
    """J^{(n)}_t: the order-n kernel at (0, t) contracted against φ̇^{⊗n} ΠΔθ.

    The contraction skips the grid diagonal, as the Wiener-Itô sum does, so
    that the skeleton is exactly the mean of the shifted discrete chaos.
    """
    tensor = kstar_n(table, spec, 0.0, t)
    return float(_contract(tensor, phidot))


def skeleton_path(table: KernelTable, spec: IntegrandSpec, phidot, stride: int = 1) -> PathSample:
    idx = evaluation_indices(table.N, stride)
    phidot = np.asarray(phidot, float)
    vals = PathEngine(table, spec, idx).evaluate((phidot * table.grid.dt)[None, :])[0]
    return PathSample(table.grid.subgrid(stride), vals, PathKind.SKELETON)


# ---------------------------------------------------------------- sphere maximisation

class _Form:
    """J(u) = off-diagonal sum of the symmetrised tensor against y/sqrt(Δ).

    Coordinates y_j = u_j sqrt(Δ_j) make the L² norm Euclidean.
    """

    def __init__(self, tensor: SimplexKernelTensor):
        self.n = tensor.n
        sym = symmetrize(tensor).values
        sq = np.sqrt(tensor.cell_widths)
        A = sym
        for ax in range(self.n):
            shape = [1] * self.n
            shape[ax] = -1
            A = A * sq.reshape(shape)
        m = tensor.m
        if self.n >= 2:
            idx = np.arange(m)
            if self.n == 2:
                A = A.copy()
                A[idx, idx] = 0.0
            else:
                A = A.copy()
                A[idx, idx, :] = 0.0
                A[idx, :, idx] = 0.0
                A[:, idx, idx] = 0.0
        self.A = A
        self.m = m

    def value(self, y):
        if self.n == 1:
            return y @ self.A
        if self.n == 2:
            return np.einsum("...i,ij,...j->...", y, self.A, y)
        return np.einsum("...i,ijk,...j,...k->...", y, self.A, y, y)

    def grad(self, y):
        if self.n == 1:
            return np.broadcast_to(self.A, y.shape)
        if self.n == 2:
            return 2.0 * y @ self.A
        return 3.0 * np.einsum("ijk,...j,...k->...i", self.A, y, y)


def _ascend(form: _Form, y0: np.ndarray, tol: float, max_iter: int):
    """Projected gradient ascent of J on the unit sphere with backtracking."""
    y = y0 / np.linalg.norm(y0)
    val = float(form.value(y))
    step = 1.0
    converged = False
    for _ in range(max_iter):
        g = form.grad(y)
        pg = g - np.dot(g, y) * y
        gnorm = float(np.linalg.norm(pg))
        if gnorm <= tol:
            converged = True
            break
        step = min(step * 2.0, 1e6)
        slack = 8 * np.finfo(float).eps * abs(val)
        while True:
            cand = y + step * pg
            cand /= np.linalg.norm(cand)
            cval = float(form.value(cand))
            # slack of a few ulps so that rounding in J cannot stall the search
            if cval >= val + 1e-4 * step * gnorm ** 2 - slack or step < 1e-14:
                break
            step *= 0.5
        if cval <= val and step < 1e-14:
            break
        y, val = cand, cval
    return y, val, converged


def _maximise(form: _Form, n_starts: int, seed: int, tol: float, max_iter: int):
    results = []
    for k in range(n_starts):
        y0 = stream_generator(seed, k).standard_normal(form.m)
        y, val, conv = _ascend(form, y0, tol, max_iter)
        results.append((val, k, y, conv))
    return results


def _endpoint_rate(table, tensor: SimplexKernelTensor, a: float, n_starts: int, seed: int,
                   tol: float, max_iter: int) -> RateResult:
    N = table.N
    m = tensor.m
    dt = table.grid.dt
    full = lambda x: np.concatenate([x, np.zeros(N - x.size)])
    if a <= 0:
        zero = CameronMartinElement.from_phidot(table, np.zeros(N))
        return RateResult(0.0, zero, 0.0, RateMethod.CLOSED_FORM, t_star=tensor.t, candidates=[0.0])
    if tensor.n == 1:
        g = tensor.values
        norm2 = float(np.sum(g * g * dt[:m]))
        if norm2 == 0:
            return RateResult(math.inf, CameronMartinElement.from_phidot(table, np.zeros(N)),
                              math.inf, RateMethod.CLOSED_FORM, t_star=tensor.t)
        phidot = full(a * g / norm2)
        rate = a * a / (2 * norm2)
        elem = CameronMartinElement.from_phidot(table, phidot)
        resid = abs(float(_contract(tensor, phidot)) - a)
        return RateResult(rate, elem, resid, RateMethod.CLOSED_FORM, t_star=tensor.t,
                          skeleton_max=math.sqrt(norm2), candidates=[rate])
    form = _Form(tensor)
    runs = _maximise(form, n_starts, seed, tol, max_iter)
    n = tensor.n
    cands = []
    for val, k, y, conv in runs:
        cands.append(0.5 * (a / val) ** (2.0 / n) if val > 0 else math.inf)
    # minimum rate, ties broken by the lowest start index
    order = sorted(range(len(runs)), key=lambda k: (cands[k], k))
    best = order[0]
    val, _, y, conv = runs[best]
    if not val > 0:
        return RateResult(math.inf, CameronMartinElement.from_phidot(table, np.zeros(N)), math.inf,
                          RateMethod.MULTI_START, converged=conv, t_star=tensor.t, candidates=cands)
    # feasibility polish: scale the unit maximiser onto the constraint boundary
    c = (a / val) ** (1.0 / n)
    phidot = full(c * y / np.sqrt(dt[:m]))
    elem = CameronMartinElement.from_phidot(table, phidot)
    resid = abs(float(_contract(tensor, phidot)) - a)
    return RateResult(0.5 * elem.norm_sq, elem, resid, RateMethod.MULTI_START, converged=conv,
                      t_star=tensor.t, skeleton_max=val, candidates=cands)


def rate_for_endpoint(table: KernelTable, spec: IntegrandSpec, a: float, t: Optional[float] = None,
                      n_starts: int = 16, seed: int = 0, tol: float = 1e-8,
                      max_iter: int = 20000, oracle_coarse: int = 2) -> RateResult:
    """min ½||φ̇||² subject to J_t(φ̇) >= a (t defaults to the horizon).

    For n = 2 the relative gap to the half-resolution oracle is attached as
    ``oracle_gap`` (set ``oracle_coarse=0`` to skip it).

    For n >= 2 the skeleton is n-homogeneous, so the problem reduces to
    maximising J over the unit sphere of L²; the minimum rate is then
    ½ (a / max J)^{2/n}.
    """
    t = table.params.T if t is None else t
    tensor = kstar_n(table, spec, 0.0, t)
    res = _endpoint_rate(table, tensor, a, n_starts, seed, tol, max_iter)
    if oracle_coarse and spec.n == 2 and a > 0 and tensor.m % oracle_coarse == 0:
        ref = rate_oracle(table, spec, a, t, coarse=oracle_coarse)
        res.oracle_gap = (res.rate - ref) / ref
    return res


def rate_for_sup(table: KernelTable, spec: IntegrandSpec, a: float, stride: int = 1,
                 n_starts: int = 16, seed: int = 0, tol: float = 1e-8,
                 max_iter: int = 20000) -> RateResult:
    """Minimum of the endpoint problem over grid times t* (every ``stride``-th)."""
    if not a > 0:
        raise DomainError("sup events need a > 0")
    idx = evaluation_indices(table.N, stride)[1:]
    engine = PathEngine(table, spec, idx)
    best = None
    for i in idx:
        tensor = engine.tensor(int(i))
        res = _endpoint_rate(table, tensor, a, n_starts, seed, tol, max_iter)
        if best is None or res.rate < best.rate:
            best = res
    return best


def rate_oracle(table: KernelTable, spec: IntegrandSpec, a: float, t: Optional[float] = None,
                coarse: int = 1, n_starts: int = 256, seed: int = 12345) -> float:
    """Reference rate by dense linear algebra, independent of the ascent code.

    With ``coarse`` > 1, φ̇ is restricted to functions constant on blocks of
    ``coarse`` consecutive cells, i.e. the exhaustive optimum over the coarse
    grid.  That restriction can only raise the rate.  n = 2 uses a
    generalized symmetric eigenproblem; n = 3 uses many random starts.
    """
    t = table.params.T if t is None else t
    tensor = kstar_n(table, spec, 0.0, t)
    if a <= 0:
        return 0.0
    m, w = tensor.m, tensor.cell_widths
    if coarse < 1 or m % coarse:
        raise DomainError("coarse factor must divide the number of cells")
    if tensor.n == 1:
        g = np.add.reduceat(tensor.values * w, np.arange(0, m, coarse))
        return a * a / (2 * float(np.sum(g * g / np.add.reduceat(w, np.arange(0, m, coarse)))))
    if tensor.n == 2:
        S = symmetrize(tensor).values * np.outer(w, w)
        np.fill_diagonal(S, 0.0)
        P = np.kron(np.eye(m // coarse), np.ones((coarse, 1)))
        jmax = float(linalg.eigh(P.T @ S @ P, P.T @ (w[:, None] * P), eigvals_only=True)[-1])
    else:
        if coarse != 1:
            raise DomainError("coarse oracles are implemented for n <= 2")
        jmax = max(val for val, *_ in _maximise(_Form(tensor), n_starts, seed, 1e-10, 50000))
    return 0.5 * (a / jmax) ** (2.0 / tensor.n) if jmax > 0 else math.inf


def rate_for_holder(table: KernelTable, spec: IntegrandSpec, gamma: float, a: float,
                    stride: int = 1) -> RateResult:
    """First-chaos rate of {||J||_{C^γ} >= a} on the ``stride`` sub-grid.

    The grid norm is sup|x| + sup quotient, a sum of two maxima of linear
    functionals, so the rate is a²/2 over the largest norm of s1·ℓ1 + s2·ℓ2.
    """
    if spec.n != 1:
        raise DomainError("Hölder-norm rates are implemented for the first chaos only")
    idx = evaluation_indices(table.N, stride)
    engine = PathEngine(table, spec, idx)
    rows = np.array([np.concatenate([engine.tensor(int(i)).values, np.zeros(table.N - i)]) for i in idx])
    times = table.grid.points[idx]
    sq = np.sqrt(table.grid.dt)
    R = rows * sq[None, :]
    pi, pj = np.triu_indices(len(idx), 1)
    Q = (R[pj] - R[pi]) / ((times[pj] - times[pi]) ** gamma)[:, None]
    best, arg = 0.0, None
    for k in range(R.shape[0]):
        for sgn in (1.0, -1.0):
            v = np.sum((sgn * R[k][None, :] + Q) ** 2, axis=1)
            j = int(np.argmax(v))
            if v[j] > best:
                best, arg = float(v[j]), (k, j, sgn)
    k, j, sgn = arg
    y = sgn * R[k] + Q[j]
    phidot = a * y / best / sq
    elem = CameronMartinElement.from_phidot(table, phidot)
    return RateResult(a * a / (2 * best), elem, 0.0, RateMethod.CLOSED_FORM,
                      t_star=float(times[k]), skeleton_max=math.sqrt(best))
