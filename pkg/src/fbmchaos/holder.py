"""Grid Hölder norms: paths, moduli, dyadic interpolation and simplex norms."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, GridMismatchError
from .kernel import TimeGrid


@dataclass
class HolderReport:
    exponent: float
    sup_norm: float
    increment_quotients: dict
    total: float
    argmax_witness: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "sup_norm": self.sup_norm,
                "increment_quotients": dict(self.increment_quotients),
                "total": self.total, "argmax_witness": self.argmax_witness}


def _check_exponent(g: float):
    if not (0 < g < 1):
        raise DomainError(f"Hölder exponent must lie in (0, 1), got {g}")


def _quotient_sup(times: np.ndarray, values: np.ndarray, gamma: float, max_gap: float = math.inf):
    """Max over pairs i < j with t_j - t_i <= max_gap of |x_j - x_i|/(t_j - t_i)^γ.

    ``values`` may carry a leading batch axis; returns (sup, lag, start) with
    the witness of the first row.
    """
    v = np.atleast_2d(values)
    best = np.zeros(v.shape[0])
    wit = (0, 0)
    M = times.size
    tol = max_gap * (1 + 1e-12)
    for L in range(1, M):
        gaps = times[L:] - times[:-L]
        keep = gaps <= tol
        if not np.any(keep):
            break
        q = np.abs(v[:, L:] - v[:, :-L])[:, keep] / gaps[keep] ** gamma
        qm = q.max(axis=1)
        if qm[0] > best[0]:
            start = int(np.flatnonzero(keep)[np.argmax(q[0])])
            wit = (start, start + L)
        best = np.maximum(best, qm)
    return best, wit


def _path_arrays(path):
    if hasattr(path, "grid"):
        return path.grid.points, np.asarray(path.values, float)
    times, values = path
    return np.asarray(times, float), np.asarray(values, float)


def _holder_1d(times, values, gamma) -> HolderReport:
    _check_exponent(gamma)
    sup_idx = int(np.argmax(np.abs(values)))
    sup = float(abs(values[sup_idx]))
    q, (i, j) = _quotient_sup(times, values, gamma)
    quot = float(q[0])
    return HolderReport(gamma, sup, {"(1,)": quot}, sup + quot,
                        {"sup": [float(times[sup_idx])],
                         "(1,)": {"theta": [float(times[i])], "r": [float(times[j])]}})


def holder_norm_1d(path, gamma: float) -> HolderReport:
    """sup|x| + max_{i<j} |x_j - x_i|/(t_j - t_i)^γ over all grid pairs."""
    times, values = _path_arrays(path)
    return _holder_1d(times, values, gamma)


def holder_norm_values(times, values, gamma: float) -> np.ndarray:
    """Grid C^γ norm of each row of ``values``."""
    _check_exponent(gamma)
    values = np.atleast_2d(values)
    q, _ = _quotient_sup(np.asarray(times, float), values, gamma)
    return np.abs(values).max(axis=1) + q


def modulus(path, gamma: float, delta: float) -> float:
    """ω(δ): the Hölder quotient restricted to pairs at distance <= δ."""
    _check_exponent(gamma)
    times, values = _path_arrays(path)
    if not (0 < delta <= times[-1] * (1 + 1e-12)):
        raise DomainError("δ must lie in (0, T]")
    q, _ = _quotient_sup(times, values, gamma, delta)
    return float(q[0])


def dyadic_interpolate(path, m: int):
    """Piecewise-linear interpolation through the dyadic points jT/2^m."""
    from .fbm import PathSample
    grid = path.grid
    T = grid.T
    idx = []
    for j in range(2 ** m + 1):
        try:
            idx.append(grid.index_of(j * T / 2 ** m))
        except DomainError as exc:
            raise GridMismatchError(f"grid lacks the dyadic points of level {m}") from exc
    idx = np.array(idx)
    vals = np.interp(grid.points, grid.points[idx], path.values[idx])
    return PathSample(grid, vals, path.kind)


# ---------------------------------------------------------------- simplex norm

def mixed_increment(h: Callable, theta, r, subset) -> np.ndarray:
    """Δ^{i_1..i_k} h(θ; r) by the recursive alternating-difference definition.

    ``theta`` is a sequence of n coordinate arrays, ``r`` maps each index of
    ``subset`` (0-based) to an array of replacement values.
    """
    subset = tuple(subset)
    if not subset:
        return np.asarray(h(*theta), float)
    *head, last = subset
    moved = list(theta)
    moved[last] = r[last]
    return mixed_increment(h, moved, r, head) - mixed_increment(h, theta, r, head)


def mixed_increment_expanded(h: Callable, theta, r, subset) -> np.ndarray:
    """Same quantity as a signed sum over the 2^k substitution patterns."""
    subset = tuple(subset)
    k = len(subset)
    total = 0.0
    for size in range(k + 1):
        for chosen in itertools.combinations(subset, size):
            args = list(theta)
            for i in chosen:
                args[i] = r[i]
            total = total + (-1) ** (k - size) * np.asarray(h(*args), float)
    return total


def _variables(n: int, subset):
    """Variable names and strict/non-strict order constraints for a subset term."""
    names = [("theta", i) for i in range(n)] + [("r", i) for i in subset]
    pos = {v: k for k, v in enumerate(names)}
    cons = []
    for i in range(n - 1):
        cons.append((pos[("theta", i)], pos[("theta", i + 1)], False))
    for a, i in enumerate(subset):
        cons.append((pos[("theta", i)], pos[("r", i)], True))
        if a + 1 < len(subset):
            cons.append((pos[("r", i)], pos[("theta", subset[a + 1])], False))
    return names, cons


def _objective(h, n, subset, lam, P, cfg):
    """Quotient for configurations ``cfg`` (rows of grid indices)."""
    theta = [P[cfg[:, i]] for i in range(n)]
    if not subset:
        return np.abs(np.asarray(h(*theta), float)) * np.ones(cfg.shape[0])
    r = {i: P[cfg[:, n + a]] for a, i in enumerate(subset)}
    num = np.abs(mixed_increment(h, theta, r, subset))
    den = np.ones(cfg.shape[0])
    for i in subset:
        den = den * (r[i] - theta[i]) ** lam
    return num / den


def _feasible(cfg, cons):
    ok = np.ones(cfg.shape[0], dtype=bool)
    for a, b, strict in cons:
        ok &= (cfg[:, a] < cfg[:, b]) if strict else (cfg[:, a] <= cfg[:, b])
    return ok


def _enumerate(h, n, subset, lam, P, block: int = 2_000_000):
    names, cons = _variables(n, subset)
    V, M = len(names), P.size
    best, arg = -1.0, None
    rest = np.indices((M,) * (V - 1)).reshape(V - 1, -1).T if V > 1 else np.zeros((1, 0), int)
    for first in range(M):
        for s in range(0, rest.shape[0], block):
            cfg = np.hstack([np.full((min(block, rest.shape[0] - s), 1), first), rest[s:s + block]])
            cfg = cfg[_feasible(cfg, cons)]
            if cfg.size == 0:
                continue
            val = _objective(h, n, subset, lam, P, cfg)
            k = int(np.argmax(val))
            if val[k] > best:
                best, arg = float(val[k]), cfg[k].copy()
    return best, arg


def _hill_climb(h, n, subset, lam, P, starts, rng, sweeps: int = 200):
    names, cons = _variables(n, subset)
    V, M = len(names), P.size
    best, arg = -1.0, None
    steps = [2 ** k for k in range(int(math.log2(M)) + 1)]
    for cfg in starts:
        cur = np.array(cfg, dtype=int)
        val = float(_objective(h, n, subset, lam, P, cur[None, :])[0])
        for _ in range(sweeps):
            cand = []
            for v in range(V):
                for st in steps:
                    for sgn in (-1, 1):
                        c = cur.copy()
                        c[v] = c[v] + sgn * st
                        if 0 <= c[v] < M:
                            cand.append(c)
            cand = np.array(cand)
            cand = cand[_feasible(cand, cons)]
            if cand.size == 0:
                break
            vals = _objective(h, n, subset, lam, P, cand)
            k = int(np.argmax(vals))
            if vals[k] <= val:
                break
            cur, val = cand[k], float(vals[k])
        if val > best:
            best, arg = val, cur.copy()
    return best, arg


def _random_start(n, subset, M, rng):
    names, cons = _variables(n, subset)
    while True:
        cfg = rng.integers(0, M, size=len(names))
        if _feasible(cfg[None, :], cons)[0]:
            return cfg


def _enumeration_size(M: int, V: int) -> int:
    return M ** V


def simplex_holder_norm(h: Callable, n: int, lam: float, grid: TimeGrid,
                        enumeration_limit: int = 40_000_000, restarts: int = 32,
                        seed: int = 0) -> HolderReport:
    """Simplex Hölder norm of h over the grid points of [0, t].

    Each subset term is the sup of |Δ^{I} h| / Π |r_i - θ_i|^λ over ordered
    θ-tuples and the displayed interleaving of the r's.  Small grids are
    enumerated; larger ones use hill climbing seeded by the enumerated optimum
    of a nested coarse grid plus random restarts.
    """
    if n not in (1, 2, 3):
        raise DomainError("simplex norms are implemented for n <= 3")
    _check_exponent(lam)
    P = grid.points
    if n == 1:
        return _holder_1d(P, np.asarray(h(P), float), lam)
    rng = np.random.default_rng(seed)
    quotients, witness = {}, {}
    sup = None
    subsets = [()] + [c for k in range(1, n + 1) for c in itertools.combinations(range(n), k)]
    for subset in subsets:
        V = n + len(subset)
        if _enumeration_size(P.size, V) <= enumeration_limit:
            val, cfg = _enumerate(h, n, subset, lam, P)
        else:
            stride = 1
            while _enumeration_size((P.size - 1) // stride + 1, V) > enumeration_limit:
                stride *= 2
            coarse = P[::stride]
            _, ccfg = _enumerate(h, n, subset, lam, coarse)
            starts = [ccfg * stride] + [_random_start(n, subset, P.size, rng) for _ in range(restarts)]
            val, cfg = _hill_climb(h, n, subset, lam, P, starts, rng)
        thetas = [float(P[cfg[i]]) for i in range(n)]
        if not subset:
            sup = val
            witness["sup"] = thetas
        else:
            key = str(tuple(i + 1 for i in subset))
            quotients[key] = val
            witness[key] = {"theta": thetas,
                            "r": [float(P[cfg[n + a]]) for a in range(len(subset))]}
    total = sup + sum(quotients.values())
    return HolderReport(lam, sup, quotients, total, witness)
