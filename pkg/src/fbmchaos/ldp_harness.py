"""Small-noise tail probabilities of chaos paths against the rate functional."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .chaos_mc import McEstimate, sample_chaos
from .errors import DomainError, InsufficientDataError
from .holder import holder_norm_values
from .integrands import IntegrandSpec
from .kernel import KernelTable
from .skeleton_rate import RateResult, rate_for_endpoint, rate_for_holder, rate_for_sup

P_LOW, P_HIGH = 1e-3, 0.5


class EventKind(str, Enum):
    ENDPOINT_ABOVE = "EndpointAbove"
    SUP_ABOVE = "SupAbove"
    HOLDER_NORM_ABOVE = "HolderNormAbove"


class Verdict(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class EventSetSpec:
    kind: EventKind
    a: float
    gamma: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        if not (self.a >= 0 and math.isfinite(self.a)):
            raise DomainError("event level a must be a finite non-negative number")
        if self.kind is EventKind.HOLDER_NORM_ABOVE and not (self.gamma is not None and 0 < self.gamma < 1):
            raise DomainError("Hölder events need γ in (0, 1)")

    @classmethod
    def endpoint_above(cls, a):
        return cls(EventKind.ENDPOINT_ABOVE, a)

    @classmethod
    def sup_above(cls, a):
        return cls(EventKind.SUP_ABOVE, a)

    @classmethod
    def holder_norm_above(cls, gamma, a):
        return cls(EventKind.HOLDER_NORM_ABOVE, a, gamma)

    def statistic(self, times: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Positively 1-homogeneous path functional whose level set is the event."""
        if self.kind is EventKind.ENDPOINT_ABOVE:
            return values[:, -1]
        if self.kind is EventKind.SUP_ABOVE:
            return values.max(axis=1)
        return holder_norm_values(times, values, self.gamma)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "a": self.a, "gamma": self.gamma}


def threshold_for(a: float, eps: float, n: int) -> float:
    """ε^{n/2} X >= a  ⟺  X >= a ε^{-n/2}."""
    return a * eps ** (-n / 2.0)


def probability_estimate(stat: np.ndarray, level: float, seed: int) -> McEstimate:
    n = stat.size
    if n < 2:
        raise InsufficientDataError("need at least two samples")
    p = float(np.count_nonzero(stat >= level)) / n
    var = p * (1.0 - p)
    return McEstimate(p, var, math.sqrt(var / n), n, int(seed))


def wilson_interval(p: float, n: int, z: float = 1.959963984540054):
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def event_statistic(table: KernelTable, spec: IntegrandSpec, event: EventSetSpec, n_samples: int,
                    seed: int, stride: int = 1, workers: int = 1) -> np.ndarray:
    """Unscaled statistic of every sample path (shared across the ε ladder)."""
    if event.kind is EventKind.ENDPOINT_ABOVE:
        indices = [0, table.N]
    else:
        indices = None
    ss = sample_chaos(table, spec, seed, n_samples, stride=stride, indices=indices, workers=workers)
    return event.statistic(ss.times, ss.samples)


def tail_probability(table: KernelTable, spec: IntegrandSpec, event: EventSetSpec, eps: float,
                     n_samples: int, seed: int, stride: int = 1, workers: int = 1,
                     statistic: Optional[np.ndarray] = None) -> McEstimate:
    """Fraction of paths of ε^{n/2} I^{(n)} in the (closed) event set."""
    if n_samples < 1000:
        raise InsufficientDataError("tail probabilities need at least 10^3 samples")
    if not eps > 0:
        raise DomainError("ε must be positive")
    stat = statistic if statistic is not None else event_statistic(
        table, spec, event, n_samples, seed, stride, workers)
    return probability_estimate(stat, threshold_for(event.a, eps, spec.n), seed)


def gaussian_endpoint_tail(table: KernelTable, a: float, eps: float) -> float:
    """Exact tail of the first-chaos endpoint, h ≡ 1: Q(a / (ε^{1/2} T^H))."""
    sd = math.sqrt(eps) * table.params.T ** table.params.H
    return float(stats.norm.sf(a / sd))


def prescan_ladder(stat: np.ndarray, a: float, n: int, points: int = 6,
                   p_low: float = 2 * P_LOW, p_high: float = 0.4, margin: float = 1.0,
                   eps_cap: float = 1.0) -> np.ndarray:
    """Geometric ε ladder whose estimated tail stays inside [p_low, p_high].

    The defaults sit inside [10^-3, 0.5] so that symmetric statistics (median
    near zero) still get a ladder; ε is capped at ``eps_cap`` because the
    extrapolation only models the small-ε regime.
    """
    x_hi = np.quantile(stat, 1.0 - p_low)
    x_lo = np.quantile(stat, 1.0 - p_high)
    if not (x_hi > 0 and x_lo > 0):
        raise InsufficientDataError("event level is outside Monte Carlo reach")
    eps_min = (a / x_hi) ** (2.0 / n) * margin
    eps_max = min((a / x_lo) ** (2.0 / n) / margin, eps_cap)
    if eps_max <= eps_min:
        raise InsufficientDataError("ladder window is empty")
    return np.geomspace(eps_min, eps_max, points)


@dataclass
class LdpRow:
    eps: float
    estimate: McEstimate
    eps_log_p: Optional[float]
    wilson: tuple
    gap: Optional[float]
    in_reach: bool


@dataclass
class LdpSweepReport:
    event: EventSetSpec
    n: int
    rows: list
    rate: RateResult
    limit_linear: Optional[float] = None
    limit_linear_stderr: Optional[float] = None
    limit: Optional[float] = None
    limit_stderr: Optional[float] = None
    seed: int = 0

    @property
    def eps(self) -> list:
        return [r.eps for r in self.rows]

    def to_dict(self) -> dict:
        return {
            "event": self.event.to_dict(),
            "n": self.n,
            "seed": self.seed,
            "rate": self.rate.to_dict() if self.rate is not None else None,
            "limit": self.limit,
            "limit_stderr": self.limit_stderr,
            "limit_linear": self.limit_linear,
            "limit_linear_stderr": self.limit_linear_stderr,
            "rows": [{"eps": r.eps, "p_hat": r.estimate.mean, "stderr": r.estimate.stderr,
                      "n_samples": r.estimate.n_samples, "eps_log_p": r.eps_log_p,
                      "wilson_low": r.wilson[0], "wilson_high": r.wilson[1],
                      "gap": r.gap, "in_reach": r.in_reach} for r in self.rows],
        }

    def table_rows(self) -> list:
        return [[r.eps, r.estimate.mean, r.estimate.stderr, r.eps_log_p, r.gap] for r in self.rows]


def _weighted_fit(X: np.ndarray, y: np.ndarray, sd: np.ndarray):
    """Weighted least squares; returns coefficients and their standard errors."""
    W = 1.0 / sd
    coef, *_ = np.linalg.lstsq(X * W[:, None], y * W, rcond=None)
    resid = (y - X @ coef) * W
    dof = max(len(y) - X.shape[1], 1)
    s2 = max(float(resid @ resid) / dof, 1.0)
    cov = s2 * np.linalg.inv((X * W[:, None]).T @ (X * W[:, None]))
    return coef, np.sqrt(np.diag(cov))


def extrapolate(eps: np.ndarray, p: np.ndarray, stderr: np.ndarray):
    """Intercepts of ε log P̂ at ε → 0.

    Returns (linear, linear_se, corrected, corrected_se).  The corrected model
    c0 + c1 ε + c2 ε log ε absorbs the polynomial prefactor of the tail
    (for a Gaussian tail ε log P = -I + ε log C + ½ ε log ε + o(ε)).
    """
    y = eps * np.log(p)
    sd = np.maximum(eps * stderr / p, 1e-12)
    X1 = np.column_stack([np.ones_like(eps), eps])
    c1, s1 = _weighted_fit(X1, y, sd)
    lin, lin_se = float(c1[0]), float(s1[0])
    if eps.size >= 4:
        X2 = np.column_stack([np.ones_like(eps), eps, eps * np.log(eps)])
        c2, s2 = _weighted_fit(X2, y, sd)
        return lin, lin_se, float(c2[0]), float(s2[0])
    return lin, lin_se, lin, lin_se


def event_rate(table: KernelTable, spec: IntegrandSpec, event: EventSetSpec, **kw) -> RateResult:
    if event.kind is EventKind.ENDPOINT_ABOVE:
        return rate_for_endpoint(table, spec, event.a, **kw)
    if event.kind is EventKind.SUP_ABOVE:
        return rate_for_sup(table, spec, event.a, **kw)
    return rate_for_holder(table, spec, event.gamma, event.a)


def ldp_sweep(table: KernelTable, spec: IntegrandSpec, event: EventSetSpec,
              eps_ladder: Optional[Sequence[float]], n_samples: int, seed: int,
              stride: int = 1, workers: int = 1, rate: Optional[RateResult] = None,
              ladder_points: int = 6) -> LdpSweepReport:
    """Tail estimates over an ε ladder from one coupled sample set."""
    stat = event_statistic(table, spec, event, n_samples, seed, stride, workers)
    if eps_ladder is None:
        eps_ladder = prescan_ladder(stat, event.a, spec.n, ladder_points)
    eps_ladder = np.asarray(sorted(float(e) for e in eps_ladder))
    if rate is None:
        rate = event_rate(table, spec, event)
    rows = []
    for e in eps_ladder:
        est = probability_estimate(stat, threshold_for(event.a, e, spec.n), seed)
        p = est.mean
        elp = e * math.log(p) if p > 0 else None
        gap = elp + rate.rate if elp is not None else None
        rows.append(LdpRow(float(e), est, elp, wilson_interval(p, est.n_samples), gap,
                           bool(P_LOW <= p <= P_HIGH)))
    rep = LdpSweepReport(event, spec.n, rows, rate, seed=int(seed))
    if rate.rate == 0:
        good = [r for r in rows if r.estimate.mean > 0]
    else:
        good = [r for r in rows if r.in_reach and r.estimate.mean > 0]
    if len(good) >= 2:
        e = np.array([r.eps for r in good])
        p = np.array([r.estimate.mean for r in good])
        se = np.array([r.estimate.stderr for r in good])
        rep.limit_linear, rep.limit_linear_stderr, rep.limit, rep.limit_stderr = extrapolate(e, p, se)
    return rep


def compare_rate(report: LdpSweepReport, rel_tol: float = 0.15) -> Verdict:
    """PASS iff |limit + rate| <= max(rel_tol·rate, 2·fit stderr)."""
    if report.rate.rate == 0:
        if report.limit is None:
            return Verdict.INCONCLUSIVE
        ok = abs(report.limit) <= max(2.0 * report.limit_stderr, 1e-3)
        return Verdict.PASS if ok else Verdict.FAIL
    reach = [r for r in report.rows if r.in_reach and r.estimate.mean > 0]
    if len(reach) < 4 or report.limit is None or not math.isfinite(report.rate.rate):
        return Verdict.INCONCLUSIVE
    rate = report.rate.rate
    tol = max(rel_tol * rate, 2.0 * report.limit_stderr)
    return Verdict.PASS if abs(report.limit + rate) <= tol else Verdict.FAIL
