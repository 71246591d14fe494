"""Deterministic integrands on the simplex and their declared regularity."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .errors import DomainError
from .kernel import HurstParams, Regime


class RegularityError(DomainError):
    """Declared regularity class is incompatible with the Hurst regime."""


class Regularity(str, Enum):
    LQ = "Lq"
    SIMPLEX_HOLDER = "SimplexHolder"


@dataclass(frozen=True)
class IntegrandSpec:
    """An order-n integrand h(θ_1, ..., θ_n[, t]) with its regularity class.

    ``h`` is called with n broadcastable arrays of times; a time-dependent
    integrand (``beta`` set) additionally receives the keyword ``t``.
    """

    n: int
    h: Callable
    regularity: Regularity = Regularity.LQ
    q: Optional[float] = None
    lam: Optional[float] = None
    beta: Optional[float] = None
    name: str = "custom"
    constant: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise DomainError(f"chaos order must be 1, 2 or 3, got {self.n}")
        reg = Regularity(self.regularity)
        object.__setattr__(self, "regularity", reg)
        if reg is Regularity.LQ:
            if self.q is None or not (self.q > 1):
                raise DomainError("Lq regularity needs an exponent q > 1")
        else:
            if self.lam is None or not (0 < self.lam < 1):
                raise DomainError("SimplexHolder regularity needs λ in (0, 1)")
        if self.beta is not None and not (0 < self.beta < 1):
            raise DomainError("time regularity β must lie in (0, 1)")

    @property
    def time_dependent(self) -> bool:
        return self.beta is not None

    def validate_for(self, params: HurstParams) -> None:
        """Reject (regime, regularity) combinations outside the theory."""
        regime, H = params.regime, params.H
        if regime is Regime.STANDARD:
            return
        if self.regularity is Regularity.LQ:
            if regime is not Regime.SMOOTH:
                raise RegularityError("Lq integrands require the smooth regime H > 1/2")
            if not (self.q * H > 1):
                raise RegularityError(f"Lq integrands require q·H > 1 (q={self.q}, H={H})")
        else:
            if regime is not Regime.ROUGH:
                raise RegularityError("SimplexHolder integrands require the rough regime H < 1/2")
            if not (self.lam + H > 0.5):
                raise RegularityError(f"SimplexHolder integrands require λ + H > 1/2 (λ={self.lam}, H={H})")

    def holder_threshold(self, params: HurstParams) -> float:
        """Path Hölder exponent below which sample paths are regular."""
        if params.regime is Regime.ROUGH or self.regularity is Regularity.SIMPLEX_HOLDER:
            return params.H
        return params.H - (0.0 if math.isinf(self.q) else 1.0 / self.q)

    def __call__(self, *thetas, t=None):
        shape = np.broadcast(*thetas).shape if len(thetas) > 1 else np.shape(thetas[0])
        if self.time_dependent:
            val = self.h(*thetas, t=t)
        else:
            val = self.h(*thetas)
        return np.broadcast_to(np.asarray(val, dtype=float), shape)

    def scaled(self, c: float) -> "IntegrandSpec":
        h = self.h
        const = None if self.constant is None else c * self.constant
        if self.time_dependent:
            return replace(self, h=lambda *th, t=None: c * h(*th, t=t), name=f"{c}*{self.name}", constant=const)
        return replace(self, h=lambda *th: c * h(*th), name=f"{c}*{self.name}", constant=const)

    def plus(self, other: "IntegrandSpec") -> "IntegrandSpec":
        if other.n != self.n or other.time_dependent != self.time_dependent:
            raise DomainError("integrands of different shape cannot be added")
        f, g = self.h, other.h
        if self.time_dependent:
            h = lambda *th, t=None: f(*th, t=t) + g(*th, t=t)
        else:
            h = lambda *th: f(*th) + g(*th)
        return replace(self, h=h, name=f"{self.name}+{other.name}", constant=None)


def _default_regularity(params: Optional[HurstParams], q, lam):
    if q is None and lam is None:
        if params is not None and params.regime is Regime.ROUGH:
            return Regularity.SIMPLEX_HOLDER, None, 0.5
        return Regularity.LQ, math.inf, None
    if lam is not None:
        return Regularity.SIMPLEX_HOLDER, None, float(lam)
    return Regularity.LQ, float(q), None


def integrand_from_descriptor(descriptor: str, n: int, q: Optional[float] = None,
                              lam: Optional[float] = None,
                              params: Optional[HurstParams] = None) -> IntegrandSpec:
    """Build a named integrand.

    Descriptors: ``const`` or ``const:<c>``; ``poly:<e1>,...,<en>`` for
    Π θ_i^e_i (a single exponent is applied to every slot);
    ``time_dep:<β>`` for h(θ; t) = t^β; ``singular:<α>@<s0>`` for
    |θ_n - s0|^-α.
    """
    reg, q, lam = _default_regularity(params, q, lam)
    kind, _, arg = descriptor.partition(":")
    kind = kind.strip()
    beta = None
    constant = None
    if kind == "const":
        c = float(arg) if arg else 1.0
        constant = c
        h = lambda *th: np.full(np.broadcast(*th).shape if len(th) > 1 else np.shape(th[0]), c)
    elif kind == "poly":
        exps = [float(e) for e in arg.split(",") if e.strip()]
        if len(exps) == 1:
            exps = exps * n
        if len(exps) != n:
            raise DomainError(f"poly descriptor needs {n} exponents, got {len(exps)}")
        if all(e == 0 for e in exps):
            constant = 1.0

        def h(*th, _e=tuple(exps)):
            out = 1.0
            for x, e in zip(th, _e):
                out = out * np.asarray(x, float) ** e
            return out
    elif kind == "time_dep":
        beta = float(arg)

        def h(*th, t=None, _b=beta):
            shape = np.broadcast(*th).shape if len(th) > 1 else np.shape(th[0])
            return np.full(shape, float(t) ** _b)
    elif kind == "singular":
        a_str, _, s_str = arg.partition("@")
        alpha, s0 = float(a_str), float(s_str)
        if reg is Regularity.LQ and not math.isinf(q) and alpha * q >= 1:
            raise RegularityError(f"|θ - s0|^-α is not in L^q for α·q = {alpha * q} >= 1")

        def h(*th, _a=alpha, _s=s0):
            return np.abs(np.asarray(th[-1], float) - _s) ** (-_a) * np.ones(
                np.broadcast(*th).shape if len(th) > 1 else np.shape(th[0]))
    else:
        raise DomainError(f"unknown integrand descriptor {descriptor!r}")
    return IntegrandSpec(n=n, h=h, regularity=reg, q=q, lam=lam, beta=beta,
                         name=descriptor, constant=constant)
