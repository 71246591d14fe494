"""Fractional Brownian paths from Brownian increments, plus an exact sampler."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import linalg

from .errors import ConvergenceError, DomainError, GridMismatchError
from .kernel import KernelTable, TimeGrid, fbm_covariance, validate_hurst
from .streams import map_chunks, standard_normals, stream_generator

EXACT_MAX_N = 4096


class PathKind(str, Enum):
    FBM = "FbmPath"
    CHAOS = "ChaosPath"
    SKELETON = "SkeletonPath"


@dataclass(frozen=True, eq=False)
class PathSample:
    grid: TimeGrid
    values: np.ndarray
    kind: PathKind = PathKind.FBM

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.N + 1,):
            raise GridMismatchError("path length does not match its grid")
        if v[0] != 0.0:
            raise DomainError("paths start at 0")
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return self.grid.points

    def scaled(self, c: float) -> "PathSample":
        return PathSample(self.grid, c * self.values, self.kind)

    def __add__(self, other: "PathSample") -> "PathSample":
        if other.grid != self.grid:
            raise GridMismatchError("paths live on different grids")
        return PathSample(self.grid, self.values + other.values, self.kind)


@dataclass(frozen=True, eq=False)
class BrownianDriver:
    grid: TimeGrid
    dW: np.ndarray
    stream_id: tuple

    def __post_init__(self):
        if np.shape(self.dW) != (self.grid.N,):
            raise GridMismatchError("driver length does not match its grid")

    def scaled(self, c: float) -> "BrownianDriver":
        return BrownianDriver(self.grid, c * self.dW, self.stream_id)

    def shifted(self, phidot) -> "BrownianDriver":
        """Increments of W + ∫φ̇ (a Cameron-Martin shift)."""
        return BrownianDriver(self.grid, self.dW + np.asarray(phidot) * self.grid.dt, self.stream_id)


def sample_driver(grid: TimeGrid, stream_id) -> BrownianDriver:
    seed, index = stream_id
    z = stream_generator(seed, index).standard_normal(grid.N)
    return BrownianDriver(grid, z * np.sqrt(grid.dt), (int(seed), int(index)))


def sample_increments(grid: TimeGrid, seed: int, n_samples: int, first_index: int = 0,
                      workers: int = 1) -> np.ndarray:
    """Driver increments for sample indices first_index, ..., as rows."""
    scale = np.sqrt(grid.dt)

    def work(a, b):
        return standard_normals(seed, np.arange(first_index + a, first_index + b), grid.N) * scale

    parts = map_chunks(work, n_samples, workers)
    return np.concatenate(parts) if parts else np.zeros((0, grid.N))


def fbm_from_driver(table: KernelTable, driver: BrownianDriver) -> PathSample:
    table.check_grid(driver.grid)
    return PathSample(table.grid, table.K @ driver.dW, PathKind.FBM)


def fbm_paths(table: KernelTable, dW: np.ndarray) -> np.ndarray:
    """Batch version of fbm_from_driver: rows of dW to rows of path values."""
    return dW @ table.K.T


@lru_cache(maxsize=8)
def _covariance_factor(H: float, key: bytes) -> np.ndarray:
    t = np.frombuffer(key, dtype=float)[1:]
    C = fbm_covariance(H, t[:, None], t[None, :])
    try:
        L = linalg.cholesky(C, lower=True)
    except linalg.LinAlgError as exc:
        raise ConvergenceError(f"covariance factorisation failed for H={H}, N={t.size}") from exc
    L.setflags(write=False)
    return L


def fbm_exact(grid: TimeGrid, H: float, stream_id) -> PathSample:
    """Exact Gaussian sample from the factorised fBm covariance matrix."""
    H = validate_hurst(H)
    if grid.N > EXACT_MAX_N:
        raise DomainError(f"exact sampler is capped at N={EXACT_MAX_N}")
    L = _covariance_factor(H, grid.key())
    seed, index = stream_id
    z = stream_generator(seed, index).standard_normal(grid.N)
    return PathSample(grid, np.concatenate([[0.0], L @ z]), PathKind.FBM)


def fbm_exact_paths(grid: TimeGrid, H: float, seed: int, n_samples: int, first_index: int = 0) -> np.ndarray:
    H = validate_hurst(H)
    if grid.N > EXACT_MAX_N:
        raise DomainError(f"exact sampler is capped at N={EXACT_MAX_N}")
    L = _covariance_factor(H, grid.key())
    z = standard_normals(seed, np.arange(first_index, first_index + n_samples), grid.N)
    return np.hstack([np.zeros((n_samples, 1)), z @ L.T])
