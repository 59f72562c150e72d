"""Closed-form small-maturity and large-strike asymptotics.

Every asymptote returns an :class:`Asymptote`, which carries the formula value
together with the regime it was evaluated in. Formulas refuse arguments
outside their guard conditions instead of extrapolating.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfcx

from .model import DerivedConstants, DomainError, QueryPoint
from .pricing import normal_cdf, normal_pdf

A_LARGE = "A_large_strike"
B_KAPPA2 = "B_kappa2_scale"
C_INTER = "C_intermediate"
D_TYPICAL = "D_typical"
UNCLASSIFIED = "unclassified"
LABELS = (A_LARGE, B_KAPPA2, C_INTER, D_TYPICAL)
_SHORT = {"A": A_LARGE, "B": B_KAPPA2, "C": C_INTER, "D": D_TYPICAL}


class GuardError(DomainError):
    """An asymptotic formula was asked for outside its guard conditions."""


class RegimeMismatch(DomainError):
    pass


# ---------------------------------------------------------------------------
# boundary scales and f


def _log_inv_t(t: float) -> float:
    if not (0.0 < t < 1.0):
        raise DomainError(f"boundary scales need 0 < t < 1, got {t}")
    return -math.log(t)


def bkappa1(t: float) -> float:
    return math.sqrt(t * _log_inv_t(t))


def bkappa2(t: float, D: float) -> float:
    return t**D * math.sqrt(_log_inv_t(t))


@dataclass(frozen=True)
class FProfile:
    a: float
    value: float
    argmin_m: int


def f_term(m, a, consts: DerivedConstants):
    """``f_m(a) = m + a^2 / (2 c^2 m^(1-2D))``."""
    m = np.asarray(m, dtype=float)
    return m + a * a / (2.0 * consts.c_sf**2 * m ** (1.0 - 2.0 * consts.D))


def f_threshold(k, consts: DerivedConstants):
    """Crossing point ``x_k`` where ``f_k`` and ``f_{k+1}`` tie (``x_0 = 0``)."""
    k = np.asarray(k, dtype=float)
    beta = 1.0 - 2.0 * consts.D
    with np.errstate(divide="ignore"):
        gap = 0.5 * (k**-beta - (k + 1.0) ** -beta)
        out = np.where(k > 0, consts.c_sf / np.sqrt(gap), 0.0)
    return float(out) if out.ndim == 0 else out


def f_profile(a: float, consts: DerivedConstants) -> FProfile:
    """``f(a) = min_m f_m(a)`` using the explicit thresholds.

    ``f = f_k`` on ``[x_{k-1}, x_k)``; the starting index comes from the
    large-``k`` expansion of ``x_k`` and is corrected by a local walk.
    """
    if not a >= 0.0 or not math.isfinite(a):
        raise DomainError(f"f needs a >= 0, got {a}")
    if a == 0.0:
        return FProfile(0.0, 1.0, 1)
    beta = 1.0 - 2.0 * consts.D
    k = max(1, int((a * a * beta / (2.0 * consts.c_sf**2)) ** (1.0 / (1.0 + beta))))
    while a >= f_threshold(k, consts):
        k += 1
    while k > 1 and a < f_threshold(k - 1, consts):
        k -= 1
    return FProfile(a, float(f_term(k, a, consts)), k)


def f_value(a: float, consts: DerivedConstants) -> float:
    return f_profile(a, consts).value


def f_bruteforce(a: float, consts: DerivedConstants, m_max: int = 10_000) -> tuple[float, int]:
    vals = f_term(np.arange(1, m_max + 1), a, consts)
    i = int(np.argmin(vals))
    return float(vals[i]), i + 1


# ---------------------------------------------------------------------------
# regimes


@dataclass(frozen=True)
class Thresholds:
    """Band multipliers around ``bkappa2`` and the proximity used for tagging."""

    theta_low: float = 0.5
    theta_high: float = 2.0
    near: float = 0.10

    def __post_init__(self) -> None:
        if not (0.0 < self.theta_low <= self.theta_high):
            raise DomainError("need 0 < theta_low <= theta_high")
        if not self.near >= 0.0:
            raise DomainError("near must be non-negative")


@dataclass(frozen=True)
class Regime:
    """Regime label of a query point.

    ``scheme`` is ``smile`` (implied vol and prices, lower boundary constant
    ``sqrt(2D+1) sigma0``) or ``tail`` (tail probabilities, constant
    ``sqrt(2) sigma0``). ``ratio`` is ``kappa / bkappa2(t)`` (or ``kappa / t``
    when ``t >= 1``). ``candidates`` lists every label within ``near`` of a
    boundary, the assigned one first.
    """

    label: str
    ratio: float
    scheme: str
    candidates: tuple[str, ...] = field(default=())

    @property
    def short(self) -> str:
        return self.label[0] if self.label != UNCLASSIFIED else "-"


def _near(x: float, edge: float, tol: float) -> bool:
    return edge > 0.0 and abs(x - edge) <= tol * edge


def classify(q: QueryPoint, consts: DerivedConstants, thresholds: Thresholds | None = None, scheme: str = "smile") -> Regime:
    th = thresholds or Thresholds()
    k = abs(q.kappa)
    t = q.t
    if scheme not in ("smile", "tail"):
        raise DomainError(f"unknown scheme {scheme!r}")
    if t >= 1.0:
        # the boundary scales are undefined; only the large-strike family applies
        label = A_LARGE if k > t else UNCLASSIFIED
        return Regime(label, k / t, scheme, (label,))
    b1, b2 = bkappa1(t), bkappa2(t, consts.D)
    if scheme == "smile":
        edges = [
            (math.sqrt(2 * consts.D + 1) * consts.sigma0 * b1, D_TYPICAL, C_INTER),
            (th.theta_low * b2, C_INTER, B_KAPPA2),
            (th.theta_high * b2, B_KAPPA2, A_LARGE),
        ]
    else:
        edges = [
            (math.sqrt(2.0) * consts.sigma0 * math.sqrt(t), D_TYPICAL, C_INTER),
            (math.sqrt(2.0) * consts.sigma0 * b1, C_INTER, B_KAPPA2),
            (th.theta_high * b2, B_KAPPA2, A_LARGE),
        ]
    label = A_LARGE
    for edge, below, _ in edges:
        # the C band is open at its upper edge in the smile scheme
        inside = k < edge if (scheme == "smile" and below == C_INTER) else k <= edge
        if inside:
            label = below
            break
    cands = [label]
    for edge, below, above in edges:
        if _near(k, edge, th.near):
            for lab in (below, above):
                if lab not in cands:
                    cands.append(lab)
    return Regime(label, k / b2, scheme, tuple(cands))


def _resolve(q: QueryPoint, consts: DerivedConstants, regime, thresholds, scheme) -> Regime:
    if regime is None:
        return classify(q, consts, thresholds, scheme)
    if isinstance(regime, Regime):
        return regime
    label = _SHORT.get(regime, regime)
    if label not in LABELS:
        raise DomainError(f"unknown regime {regime!r}")
    ratio = abs(q.kappa) / bkappa2(q.t, consts.D) if q.t < 1.0 else abs(q.kappa) / q.t
    return Regime(label, ratio, scheme, (label,))


@dataclass(frozen=True)
class Asymptote:
    value: float
    regime: Regime
    formula: str


# ---------------------------------------------------------------------------
# implied volatility


def _large_strike_log(k: float, t: float) -> float:
    if not (k > 0.0 and k / t > 1.0):
        raise GuardError(f"large-strike formula needs kappa/t > 1 (kappa={k}, t={t})")
    return math.log(k / t)


def smile_A(k: float, t: float, consts: DerivedConstants) -> float:
    L = _large_strike_log(k, t)
    e = (0.5 - consts.D) / (1.0 - consts.D)
    return ((k / t) / math.sqrt(L)) ** e / math.sqrt(2.0 * consts.C_sf)


def smile_B(k: float, t: float, consts: DerivedConstants) -> float:
    a = k / bkappa2(t, consts.D)
    return k / (bkappa1(t) * math.sqrt(2.0 * f_value(a, consts)))


def smile_C(k: float, t: float, consts: DerivedConstants) -> float:
    if not k > 0.0:
        raise GuardError("intermediate formula needs kappa > 0")
    expo = consts.D + 1.0 - math.log(k) / math.log(t)
    if not expo > 0.0:
        raise GuardError(f"intermediate formula has non-positive exponent at kappa={k}, t={t}")
    return k / (bkappa1(t) * math.sqrt(2.0 * expo))


def smile_D(k: float, t: float, consts: DerivedConstants) -> float:
    return consts.sigma0


_SMILE = {A_LARGE: smile_A, B_KAPPA2: smile_B, C_INTER: smile_C, D_TYPICAL: smile_D}


def smile_asymptote(q: QueryPoint, consts: DerivedConstants, thresholds: Thresholds | None = None, regime=None) -> Asymptote:
    """Asymptotic implied volatility; ``regime`` forces a particular formula."""
    reg = _resolve(q, consts, regime, thresholds, "smile")
    if reg.label == UNCLASSIFIED:
        raise GuardError(f"no asymptotic regime for kappa={q.kappa}, t={q.t}")
    k = abs(q.kappa)
    return Asymptote(_SMILE[reg.label](k, q.t, consts), reg, "smile_" + reg.short)


# ---------------------------------------------------------------------------
# tail probabilities


def tail_A(k: float, t: float, consts: DerivedConstants) -> float:
    return -ldp_rate(1.0, consts) * ldp_speed(QueryPoint(k, t), consts)


def tail_B(k: float, t: float, consts: DerivedConstants) -> float:
    return -f_value(k / bkappa2(t, consts.D), consts) * _log_inv_t(t)


def tail_C(k: float, t: float, consts: DerivedConstants) -> float:
    return -k * k / (2.0 * consts.sigma0**2 * t)


def tail_D(k: float, t: float, consts: DerivedConstants) -> float:
    a = k / math.sqrt(t)
    return math.log(normal_cdf(-a / consts.sigma0))


_TAIL = {A_LARGE: tail_A, B_KAPPA2: tail_B, C_INTER: tail_C, D_TYPICAL: tail_D}


def tail_asymptote(q: QueryPoint, consts: DerivedConstants, thresholds: Thresholds | None = None, regime=None) -> Asymptote:
    """Asymptote of ``log P(X_t > kappa)`` for ``kappa >= 0``."""
    if q.kappa < 0.0:
        raise DomainError("tail asymptotics are stated for kappa >= 0")
    reg = _resolve(q, consts, regime, thresholds, "tail")
    if reg.label == UNCLASSIFIED:
        raise GuardError(f"no asymptotic regime for kappa={q.kappa}, t={q.t}")
    return Asymptote(_TAIL[reg.label](q.kappa, q.t, consts), reg, "tail_" + reg.short)


def g_factor(kappa: float, t: float) -> float:
    if not (t > 0.0 and kappa >= 0.0):
        raise DomainError("g needs t > 0 and kappa >= 0")
    return math.log1p(1.0 / t) + math.log1p(kappa)


def tail_asymptote_unified(q: QueryPoint, consts: DerivedConstants) -> Asymptote:
    """Single formula covering the large-strike and ``bkappa2`` families."""
    k, t = q.kappa, q.t
    if k < 0.0:
        raise DomainError("tail asymptotics are stated for kappa >= 0")
    g = g_factor(k, t)
    a = k / (t**consts.D * math.sqrt(g))
    reg = classify(q, consts, scheme="tail")
    return Asymptote(-f_value(a, consts) * g, reg, "tail_unified")


# ---------------------------------------------------------------------------
# option prices


@dataclass(frozen=True)
class PriceAsymptote:
    """``quantity`` is one of ``log_c``, ``log_c_over_kappa``, ``c_over_kappa``, ``c``."""

    variant: str
    quantity: str
    value: float
    regime: Regime
    kappa: float

    def price(self) -> float:
        if self.quantity == "log_c":
            return math.exp(self.value)
        if self.quantity == "log_c_over_kappa":
            return self.kappa * math.exp(self.value)
        if self.quantity == "c_over_kappa":
            return self.kappa * self.value
        return self.value


_VARIANTS = {A_LARGE: ("a", "b"), B_KAPPA2: ("b",), C_INTER: ("c",), D_TYPICAL: ("d", "e")}


def default_price_variant(k: float, label: str) -> str:
    if label == A_LARGE:
        return "a" if k >= 1.0 else "b"
    if label == D_TYPICAL:
        return "e" if k == 0.0 else "d"
    return _VARIANTS[label][0]


def price_asymptote(q: QueryPoint, consts: DerivedConstants, variant: str | None = None, thresholds: Thresholds | None = None, regime=None) -> PriceAsymptote:
    """Asymptotic call price in the form natural to the regime.

    Variants: ``a`` log c (strike bounded away from 0), ``b`` log(c/k),
    ``c`` log(c/k) in the anomalous band, ``d`` c/k on the sqrt(t) scale,
    ``e`` c itself for strikes well inside sqrt(t).
    """
    k, t = abs(q.kappa), q.t
    reg = _resolve(QueryPoint(k, t), consts, regime, thresholds, "smile")
    if reg.label == UNCLASSIFIED:
        raise GuardError(f"no asymptotic regime for kappa={q.kappa}, t={t}")
    v = variant or default_price_variant(k, reg.label)
    if v not in _VARIANTS[reg.label]:
        raise RegimeMismatch(f"variant ({v}) has no formula in regime {reg.label}")
    if v in ("a", "b"):
        tail_label = A_LARGE if reg.label == A_LARGE else B_KAPPA2
        val = _TAIL[tail_label](k, t, consts)
        return PriceAsymptote(v, "log_c" if v == "a" else "log_c_over_kappa", val, reg, k)
    if v == "c":
        if not k > 0.0:
            raise GuardError("variant (c) needs kappa > 0")
        val = -(consts.D + 1.0 - math.log(k) / math.log(t)) * _log_inv_t(t)
        return PriceAsymptote(v, "log_c_over_kappa", val, reg, k)
    if v == "d":
        if not k > 0.0:
            raise GuardError("variant (d) needs kappa > 0")
        return PriceAsymptote(v, "c_over_kappa", d_function(k / math.sqrt(t) / consts.sigma0), reg, k)
    return PriceAsymptote(v, "c", consts.sigma0 * math.sqrt(t / (2.0 * math.pi)), reg, k)


# ---------------------------------------------------------------------------
# the D function and price-to-vol conversion

_MILLS = math.sqrt(math.pi / 2.0)


def d_function(z: float) -> float:
    """``D(z) = phi(z)/z - Phi(-z)`` for ``z > 0``.

    Written as ``phi(z) (1/z - M(z))`` with the Mills ratio ``M`` so that the
    value stays accurate where both terms are tiny.
    """
    if not z > 0.0:
        raise DomainError(f"D(z) needs z > 0, got {z}")
    if z < 1.0:
        return normal_pdf(z) / z - normal_cdf(-z)
    return normal_pdf(z) * (1.0 / z - float(erfcx(z / math.sqrt(2.0))) * _MILLS)


def d_function_prime(z: float) -> float:
    return -normal_pdf(z) / (z * z)


def d_inverse_seed(y: float) -> float:
    """Leading-order inverse from the small-``y`` and large-``y`` expansions."""
    if y < 1.0:
        return math.sqrt(-2.0 * math.log(y))
    return 1.0 / (math.sqrt(2.0 * math.pi) * y)


def d_inverse(y: float, tol: float = 1e-15, max_iter: int = 200) -> float:
    """Inverse of the strictly decreasing ``D`` by bracketed Newton in log space."""
    if not (y > 0.0 and math.isfinite(y)):
        raise DomainError(f"D^-1 needs y > 0, got {y}")
    z = d_inverse_seed(y)
    lo, hi = z, z
    while d_function(lo) < y:
        lo *= 0.5
    while d_function(hi) > y:
        hi *= 2.0
    ly = math.log(y)
    z = min(max(z, lo), hi)
    for _ in range(max_iter):
        Dz = d_function(z)
        g = math.log(Dz) - ly
        if g > 0.0:
            lo = z
        elif g < 0.0:
            hi = z
        else:
            return z
        z_new = z - g * Dz / d_function_prime(z)
        if not (lo < z_new < hi):
            z_new = 0.5 * (lo + hi)
        if abs(z_new - z) <= tol * z:
            return z_new
        z = z_new
    return z


FORMS = ("auto", "gl", "d_inverse", "atm", "simple_log", "simple_ratio_log", "simple_ratio_const", "simple_ratio_inf")


def vol_from_price_asym(q: QueryPoint, price: float, form: str = "auto", kappa_split: float = 1.0) -> float:
    """Implied volatility from a (small) call price via model-free asymptotics.

    ``gl`` is the large-deviation formula for strikes bounded away from 0,
    ``d_inverse`` the small-strike formula through ``D^-1``, ``atm`` the
    at-the-money one. The ``simple_*`` forms are their explicit limits.
    ``auto`` picks ``atm`` at ``kappa = 0``, ``gl`` for ``kappa >= kappa_split``
    and ``d_inverse`` otherwise.
    """
    k, t = abs(q.kappa), q.t
    if q.kappa < 0.0:
        # mirror to the canonical strike: C(k) = e^k (C(-k) - 1 + e^{-k})
        price = math.exp(k) * (price + math.expm1(-k))
    if not (0.0 < price < 1.0):
        raise DomainError(f"price {price} outside (0, 1)")
    if form not in FORMS:
        raise DomainError(f"unknown form {form!r}")
    if form == "auto":
        form = "atm" if k == 0.0 else ("gl" if k >= kappa_split else "d_inverse")
    if form in ("atm", "simple_ratio_inf"):
        return math.sqrt(2.0 * math.pi) * price / math.sqrt(t)
    if not k > 0.0:
        raise GuardError(f"form {form} needs kappa > 0")
    if form == "gl":
        L = -math.log(price) / k
        return (math.sqrt(L + 1.0) - math.sqrt(L)) * math.sqrt(2.0 * k / t)
    if form == "simple_log":
        return k / math.sqrt(2.0 * t * -math.log(price))
    y = price / k
    if form in ("d_inverse", "simple_ratio_const"):
        return k / (d_inverse(y) * math.sqrt(t))
    # simple_ratio_log
    if not y < 1.0:
        raise GuardError("log-ratio form needs c/kappa < 1")
    return k / math.sqrt(2.0 * t * -math.log(y))


# ---------------------------------------------------------------------------
# large deviations


def ldp_rate(x: float, consts: DerivedConstants) -> float:
    """Rate function ``C_sf |x|^(1/(1-D))``."""
    return consts.C_sf * abs(x) ** (1.0 / (1.0 - consts.D))


def ldp_speed(q: QueryPoint, consts: DerivedConstants) -> float:
    k, t = q.kappa, q.t
    L = _large_strike_log(k, t)
    D = consts.D
    return (k / t**D) ** (1.0 / (1.0 - D)) * L ** ((0.5 - D) / (1.0 - D))


def it_tail_asymptote(kappa: float, t: float, consts: DerivedConstants) -> float:
    """Asymptote of ``log P(I_t > kappa)``."""
    if not t > 0.0:
        raise DomainError("t must be positive")
    L = _large_strike_log(kappa, t)
    D = consts.D
    return -(kappa / (consts.c_sf**2 * t ** (2 * D))) ** (1.0 / (1.0 - 2 * D)) * L / (1.0 - 2 * D)
