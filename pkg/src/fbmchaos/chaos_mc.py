"""Discrete multiple Wiener-Itô sums and Monte Carlo checks built on them."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, GridMismatchError, InsufficientDataError
from .fbm import BrownianDriver, PathKind, PathSample, sample_increments
from .holder import holder_norm_values
from .integrands import IntegrandSpec
from .kernel import KernelTable, TimeGrid
from .simplex_kernel import (InnerStack, SimplexKernelTensor, kstar1_all_times, kstar_n,
                             symmetrize)
from .streams import CHUNK, map_chunks

DEFAULT_STRIDE = 8


@dataclass(frozen=True)
class McEstimate:
    mean: float
    variance: float
    stderr: float
    n_samples: int
    seed: int

    @classmethod
    def from_samples(cls, x, seed: int) -> "McEstimate":
        x = np.asarray(x, dtype=float)
        n = x.size
        if n < 2:
            raise InsufficientDataError("an estimate needs at least two samples")
        var = float(np.var(x, ddof=1))
        return cls(float(np.mean(x)), var, math.sqrt(var / n), int(n), int(seed))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "variance": self.variance, "stderr": self.stderr,
                "n_samples": self.n_samples, "seed": self.seed}


@dataclass(frozen=True, eq=False)
class ChaosSampleSet:
    spec: IntegrandSpec
    times: np.ndarray
    samples: np.ndarray
    eps: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.samples.shape[1] != len(self.times):
            raise DomainError("sample columns must match the evaluation times")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


# ---------------------------------------------------------------- Wiener-Itô sums

def _increments(tensor: SimplexKernelTensor, driver) -> np.ndarray:
    if isinstance(driver, BrownianDriver):
        if driver.grid != tensor.grid:
            raise GridMismatchError("tensor and driver grids differ")
        dW = driver.dW
    else:
        dW = np.asarray(driver, dtype=float)
        if dW.shape[-1] != tensor.grid.N:
            raise GridMismatchError("increment length does not match the tensor grid")
    return dW[..., : tensor.m]


def off_diagonal_sum(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Σ over pairwise-distinct index tuples of values[j1..jn]·x[j1]···x[jn].

    ``x`` may carry leading batch axes.  Diagonal tuples are removed by
    inclusion-exclusion on power sums.
    """
    n = values.ndim
    if n == 1:
        return x @ values
    if n == 2:
        full = np.einsum("...i,...i->...", x @ values.T, x) if x.ndim > 1 else x @ values @ x
        return full - (x * x) @ np.diagonal(values)
    if n == 3:
        xy = np.tensordot(x, values, axes=([-1], [2]))          # (..., a, b)
        full = np.einsum("...ab,...a,...b->...", xy, x, x)
        x2 = x * x
        d01 = np.einsum("aac->ac", values)
        d02 = np.einsum("aba->ab", values)
        d12 = np.einsum("abb->ab", values)
        p01 = np.einsum("...a,ac,...c->...", x2, d01, x)
        p02 = np.einsum("...a,ab,...b->...", x2, d02, x)
        p12 = np.einsum("...a,ab,...b->...", x, d12, x2)
        triple = (x2 * x) @ np.einsum("aaa->a", values)
        return full - p01 - p02 - p12 + 2.0 * triple
    raise DomainError("Wiener-Itô sums are implemented for n <= 3")


def wiener_ito_sum(tensor: SimplexKernelTensor, driver):
    """Diagonal-free multiple sum of the tensor against driver increments."""
    if tensor.m == 0:
        x = _increments(tensor, driver)
        return np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0
    return off_diagonal_sum(tensor.values, _increments(tensor, driver))


def distinct_mask(m: int, n: int) -> np.ndarray:
    if n == 1:
        return np.ones(m, dtype=bool)
    idx = np.indices((m,) * n)
    mask = np.ones((m,) * n, dtype=bool)
    for a, b in itertools.combinations(range(n), 2):
        mask &= idx[a] != idx[b]
    return mask


def variance_oracle(tensor: SimplexKernelTensor) -> float:
    """E[I²] = n!·Σ_distinct sym(values)²·ΠΔ for the discrete off-diagonal sum."""
    if tensor.n > 3:
        raise DomainError("variance oracle is implemented for n <= 3")
    if tensor.m == 0:
        return 0.0
    sym = symmetrize(tensor).values
    w = tensor.volume_weights()
    mask = distinct_mask(tensor.m, tensor.n)
    return float(math.factorial(tensor.n) * np.sum((sym ** 2 * w)[mask]))


# ---------------------------------------------------------------- paths

def evaluation_indices(N: int, stride: int) -> np.ndarray:
    if stride < 1 or N % stride:
        raise DomainError(f"stride {stride} does not divide N={N}")
    return np.arange(0, N + 1, stride)


class PathEngine:
    """Kernels K*^{(n)}_{0,t_i} h(·, t_i) at a set of evaluation indices."""

    def __init__(self, table: KernelTable, spec: IntegrandSpec, indices: Sequence[int]):
        spec.validate_for(table.params)
        self.table = table
        self.spec = spec
        self.indices = np.asarray(indices, dtype=int)
        self._stack = None
        self._rows = None
        if not spec.time_dependent:
            if spec.n == 1:
                f = spec(table.grid.midpoints)
                self._rows = kstar1_all_times(table, f)
            else:
                self._stack = InnerStack(table, spec)

    def tensor(self, i: int) -> SimplexKernelTensor:
        t = float(self.table.grid.points[i])
        if self._rows is not None:
            vals = self._rows[i, :i].copy()
            return SimplexKernelTensor(1, 0.0, t, self.table.grid, vals)
        if i == 0:
            return SimplexKernelTensor(self.spec.n, 0.0, 0.0, self.table.grid,
                                       np.zeros((0,) * self.spec.n))
        return kstar_n(self.table, self.spec, 0.0, t, stack=self._stack)

    def evaluate(self, dW: np.ndarray, workers: int = 1) -> np.ndarray:
        """Path values at the evaluation indices for every row of ``dW``."""
        dW = np.atleast_2d(dW)
        S = dW.shape[0]
        out = np.zeros((S, self.indices.size))
        if self._rows is not None:
            rows = self._rows[self.indices]

            def work(a, b):
                out[a:b] = dW[a:b] @ rows.T
            map_chunks(work, S, workers)
            return out
        for col, i in enumerate(self.indices):
            if i == 0:
                continue
            vals = self.tensor(int(i)).values

            def work(a, b, _v=vals, _i=int(i), _c=col):
                out[a:b, _c] = off_diagonal_sum(_v, dW[a:b, :_i])
            map_chunks(work, S, workers)
        return out


def integral_path(table: KernelTable, spec: IntegrandSpec, driver: BrownianDriver,
                  stride: int = 1) -> PathSample:
    """I^{(n)}_{t}(h) at every ``stride``-th grid time for one driver."""
    table.check_grid(driver.grid)
    idx = evaluation_indices(table.N, stride)
    values = PathEngine(table, spec, idx).evaluate(driver.dW[None, :])[0]
    return PathSample(table.grid.subgrid(stride), values, PathKind.CHAOS)


def sample_chaos(table: KernelTable, spec: IntegrandSpec, seed: int, n_samples: int,
                 stride: int = DEFAULT_STRIDE, indices: Optional[Sequence[int]] = None,
                 workers: int = 1, phidot: Optional[np.ndarray] = None,
                 first_index: int = 0, dW: Optional[np.ndarray] = None) -> ChaosSampleSet:
    """Monte Carlo sample of chaos paths; sample k uses stream (seed, first_index + k).

    ``phidot`` shifts every driver by the Cameron-Martin direction φ̇.
    """
    idx = evaluation_indices(table.N, stride) if indices is None else np.asarray(indices, int)
    if dW is None:
        dW = sample_increments(table.grid, seed, n_samples, first_index, workers)
    if phidot is not None:
        dW = dW + np.asarray(phidot, float)[None, :] * table.grid.dt[None, :]
    values = PathEngine(table, spec, idx).evaluate(dW, workers)
    return ChaosSampleSet(spec, table.grid.points[idx].copy(), values, 1.0, int(seed))


@dataclass
class MomentReport:
    p: int
    s: float
    t: float
    estimate: McEstimate
    exact: Optional[float] = None

    def to_dict(self) -> dict:
        return {"p": self.p, "s": self.s, "t": self.t, "estimate": self.estimate.to_dict(),
                "exact": self.exact}


def increment_tensor(table: KernelTable, spec: IntegrandSpec, s: float, t: float) -> SimplexKernelTensor:
    if spec.time_dependent:
        raise DomainError("increment kernels need a time-independent integrand")
    return kstar_n(table, spec, s, t)


def mc_increment_moments(table: KernelTable, spec: IntegrandSpec, s: float, t: float, p: int,
                         n_samples: int, seed: int, workers: int = 1) -> MomentReport:
    """E|I_t - I_s|^p by Monte Carlo over drivers; exact value for p = 2."""
    if p not in (2, 4):
        raise DomainError("moment order must be 2 or 4")
    if not s < t:
        raise DomainError("need s < t")
    tensor = increment_tensor(table, spec, s, t)
    dW = sample_increments(table.grid, seed, n_samples, 0, workers)
    x = np.concatenate(map_chunks(lambda a, b: wiener_ito_sum(tensor, dW[a:b]), n_samples, workers))
    est = McEstimate.from_samples(np.abs(x) ** p, seed)
    exact = variance_oracle(tensor) if p == 2 else None
    return MomentReport(p, s, t, est, exact)


def exact_increment_slope(table: KernelTable, spec: IntegrandSpec, s: float = 0.0, levels: int = 5):
    """Log-log slope of the exact second moment of I_t - I_s over dyadic t - s."""
    T = table.params.T
    widths = np.array([T * 2.0 ** -k for k in range(1, levels + 1)])
    stack = InnerStack(table, spec, upto=table.grid.index_of(s + widths[0]))
    v = [variance_oracle(kstar_n(table, spec, s, s + w, stack=stack)) for w in widths]
    slope = np.polyfit(np.log(widths), np.log(v), 1)[0]
    return float(slope), widths, np.array(v)


def scale_family(samples: ChaosSampleSet, eps: float) -> ChaosSampleSet:
    if not eps > 0:
        raise DomainError("ε must be positive")
    n = samples.spec.n
    return ChaosSampleSet(samples.spec, samples.times, samples.samples * eps ** (n / 2),
                          samples.eps * eps, samples.seed)


# ---------------------------------------------------------------- Hölder regression

@dataclass
class HolderLevel:
    gamma: float
    medians: list
    growth: float
    expected: str
    passed: bool


@dataclass
class HolderRegressionReport:
    levels: list
    threshold: float
    n_paths: int
    rows: list = field(default_factory=list)
    stable_limit: float = 0.25
    divergent_limit: float = 0.5

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict:
        return {"levels": self.levels, "threshold": self.threshold, "n_paths": self.n_paths,
                "stable_limit": self.stable_limit, "divergent_limit": self.divergent_limit,
                "rows": [r.__dict__ for r in self.rows], "passed": self.passed}


def coarsen_increments(dW: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive increments so a fine driver induces the coarse one."""
    S, N = dW.shape
    return dW.reshape(S, N // factor, factor).sum(axis=2)


def holder_regression(samples_by_level: dict, gamma_list, threshold: float,
                      stable_limit: float = 0.25, divergent_limit: float = 0.5) -> HolderRegressionReport:
    """Growth of the median grid C^γ norm from the coarsest to the finest level.

    ``samples_by_level`` maps N to (times, values) with values of shape
    (paths, N+1).  γ below the threshold must grow by less than
    ``stable_limit``; γ >= threshold + 0.1 must grow by more than
    ``divergent_limit``.
    """
    levels = sorted(samples_by_level)
    n_paths = min(samples_by_level[N][1].shape[0] for N in levels)
    if n_paths < 100:
        raise InsufficientDataError("Hölder regression needs at least 100 paths")
    rep = HolderRegressionReport(levels, threshold, n_paths, [], stable_limit, divergent_limit)
    for g in gamma_list:
        meds = []
        for N in levels:
            times, vals = samples_by_level[N]
            norms = holder_norm_values(times, vals, g)
            meds.append(float(np.median(norms)))
        growth = meds[-1] / meds[0] - 1.0 if meds[0] > 0 else 0.0
        if g < threshold:
            expected, ok = "stable", growth < stable_limit
        elif g >= threshold + 0.1 - 1e-12:
            expected, ok = "divergent", growth > divergent_limit
        else:
            expected, ok = "unspecified", True
        rep.rows.append(HolderLevel(float(g), meds, float(growth), expected, bool(ok)))
    return rep
