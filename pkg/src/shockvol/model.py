"""Model parameters, derived constants and closed-form path functionals.

The volatility decays as a power of the time elapsed since the last Poisson
shock and blows up at every shock. Between shocks the integrated variance
``I_t`` has a closed form, so everything here is exact up to floating point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn


class DomainError(ValueError):
    """Raised when a parameter or argument lies outside its valid domain."""


def _power_increment(base: float, dx: float, p: float) -> float:
    """Return ``(base + dx)**p - base**p`` without cancellation for small dx."""
    if dx == 0.0:
        return 0.0
    return base**p * math.expm1(p * math.log1p(dx / base))


@dataclass(frozen=True)
class ModelParams:
    """The four primitive parameters of the model.

    Attributes:
        D: Decay exponent, strictly between 0 and 1/2.
        V: Large-time volatility.
        lam: Shock intensity (per time unit).
        tau0: Virtual shock time before the origin (strictly negative).
    """

    D: float
    V: float
    lam: float
    tau0: float

    def __post_init__(self) -> None:
        if not (0.0 < self.D < 0.5):
            raise DomainError(f"D must lie in (0, 1/2), got {self.D}")
        if not self.V > 0.0:
            raise DomainError(f"V must be positive, got {self.V}")
        if not self.lam > 0.0:
            raise DomainError(f"lambda must be positive, got {self.lam}")
        if not self.tau0 < 0.0:
            raise DomainError(f"tau0 must be negative, got {self.tau0}")

    @classmethod
    def from_sigma0(cls, D: float, V: float, lam: float, sigma0: float) -> "ModelParams":
        return cls(D=D, V=V, lam=lam, tau0=sigma0_to_tau0(sigma0, D, V, lam))

    @classmethod
    def from_tail_constant(cls, D: float, C_sf: float, lam: float, sigma0: float) -> "ModelParams":
        """Build parameters from the tail constant and the initial volatility."""
        c_sf = c_sf_from_tail_constant(D, C_sf)
        V = c_sf * math.sqrt(gamma_fn(2 * D + 1)) * lam ** (0.5 - D)
        return cls.from_sigma0(D, V, lam, sigma0)


@dataclass(frozen=True)
class DerivedConstants:
    c_sf: float
    sigma0: float
    C_sf: float
    C_tilde: float
    ou_c: float
    ou_gamma: float
    D: float
    tau0: float


@dataclass(frozen=True)
class JumpTimes:
    """One realization of the shock times on ``(0, horizon]``."""

    horizon: float
    times: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        if times.size:
            if times[0] <= 0.0 or times[-1] > self.horizon:
                raise DomainError("jump times must lie in (0, horizon]")
            if np.any(np.diff(times) <= 0.0):
                raise DomainError("jump times must be strictly increasing")
        object.__setattr__(self, "times", times)

    def count(self, t: float) -> int:
        """Number of jumps in ``[0, t]``."""
        return int(np.searchsorted(self.times, t, side="right"))


@dataclass(frozen=True)
class QueryPoint:
    kappa: float
    t: float

    def __post_init__(self) -> None:
        if not self.t > 0.0:
            raise DomainError(f"maturity must be positive, got {self.t}")

    def canonical(self) -> "QueryPoint":
        """The mirror point with non-negative log-strike."""
        return QueryPoint(abs(self.kappa), self.t)


def tail_constant(D: float, c_sf: float) -> float:
    """Constant in front of the large-strike tail exponent."""
    return ((1 - D) ** (0.5 / (1 - D)) / (0.5 - D) ** ((0.5 - D) / (1 - D))) / c_sf ** (1 / (1 - D))


def c_sf_from_tail_constant(D: float, C_sf: float) -> float:
    if not C_sf > 0.0:
        raise DomainError(f"C_sf must be positive, got {C_sf}")
    K = (1 - D) ** (0.5 / (1 - D)) / (0.5 - D) ** ((0.5 - D) / (1 - D))
    return (K / C_sf) ** (1 - D)


def derive_constants(params: ModelParams) -> DerivedConstants:
    D, V, lam, tau0 = params.D, params.V, params.lam, params.tau0
    c_sf = lam ** (D - 0.5) * V / math.sqrt(gamma_fn(2 * D + 1))
    sigma0 = lam ** (D - 0.5) * V * (-tau0) ** (D - 0.5) / math.sqrt(gamma_fn(2 * D))
    C_tilde = c_sf ** (1 / D) * (2 * D) ** (1 / (2 * D)) * (1 - 2 * D) ** ((1 - 2 * D) / (2 * D))
    ou_gamma = (2 - 2 * D) / (1 - 2 * D)
    ou_c = (1 - 2 * D) / (2 * D * c_sf**2) ** (1 / (1 - 2 * D))
    return DerivedConstants(
        c_sf=c_sf,
        sigma0=sigma0,
        C_sf=tail_constant(D, c_sf),
        C_tilde=C_tilde,
        ou_c=ou_c,
        ou_gamma=ou_gamma,
        D=D,
        tau0=tau0,
    )


def sigma0_to_tau0(sigma0: float, D: float, V: float, lam: float) -> float:
    """Invert the initial-volatility relation for the virtual shock time."""
    if not sigma0 > 0.0:
        raise DomainError(f"sigma0 must be positive, got {sigma0}")
    if not (0.0 < D < 0.5) or V <= 0.0 or lam <= 0.0:
        raise DomainError("invalid D, V or lambda")
    scale = lam ** (D - 0.5) * V / math.sqrt(gamma_fn(2 * D))
    # sigma0 = scale * (-tau0)**(D - 1/2), solved in log space
    return -math.exp(math.log(sigma0 / scale) / (D - 0.5))


def spot_volatility(consts: DerivedConstants, jumps: JumpTimes, tau0: float, t: float) -> float:
    """Spot volatility at time ``t``; ``inf`` exactly at a shock time."""
    if t < 0.0 or t > jumps.horizon:
        raise DomainError(f"t={t} outside [0, {jumps.horizon}]")
    n = jumps.count(t)
    last = jumps.times[n - 1] if n else tau0
    age = t - last
    if age == 0.0:
        return math.inf
    return consts.c_sf * math.sqrt(2 * consts.D) * age ** (consts.D - 0.5)


def time_change(consts: DerivedConstants, jumps: JumpTimes, tau0: float, t: float) -> float:
    """Integrated variance ``I_t`` in closed form."""
    if t < 0.0 or t > jumps.horizon:
        raise DomainError(f"t={t} outside [0, {jumps.horizon}]")
    p = 2 * consts.D
    n = jumps.count(t)
    if n == 0:
        return consts.c_sf**2 * _power_increment(-tau0, t, p)
    times = jumps.times[:n]
    total = _power_increment(-tau0, times[0], p)
    if n > 1:
        total += float(np.sum(np.diff(times) ** p))
    total += (t - times[-1]) ** p
    return consts.c_sf**2 * total


def it_upper_bound(consts: DerivedConstants, n, t):
    """Pathwise bound on ``I_t`` given ``n`` jumps in ``[0, t]``."""
    n = np.asarray(n, dtype=float)
    t = np.asarray(t, dtype=float)
    out = consts.sigma0**2 * t + consts.c_sf**2 * n ** (1 - 2 * consts.D) * t ** (2 * consts.D)
    return float(out) if out.ndim == 0 else out


def mean_sigma_squared(consts: DerivedConstants, lam: float, t: float, epsabs: float = 1e-10) -> float:
    """Expected squared spot volatility at time ``t``.

    The age of the volatility is an exponential variable truncated at ``t``
    when at least one shock occurred, and ``t + |tau0|`` otherwise.
    """
    if t < 0.0:
        raise DomainError(f"t must be non-negative, got {t}")
    alpha = 1 - 2 * consts.D
    scale = consts.c_sf**2 * 2 * consts.D
    no_jump = (t - consts.tau0) ** (-alpha) * math.exp(-lam * t)
    if t == 0.0:
        return scale * no_jump
    # substitute y = u**(1/(1-alpha)) to remove the y**(-alpha) singularity at 0
    k = 1.0 / (1.0 - alpha)
    upper = t ** (1.0 - alpha)

    def integrand(u: float) -> float:
        y = u**k
        return k * lam * math.exp(-lam * y)

    truncated, _ = integrate.quad(integrand, 0.0, upper, epsabs=epsabs, epsrel=1e-12, limit=200)
    return scale * (truncated + no_jump)


def time_change_grid(consts: DerivedConstants, jumps: JumpTimes, tau0: float, grid: Sequence[float]) -> np.ndarray:
    return np.array([time_change(consts, jumps, tau0, float(s)) for s in grid])
