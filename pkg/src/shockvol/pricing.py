"""Black-Scholes primitives, conditional Monte Carlo call prices and implied vol.

Prices are normalized: spot 1, zero rate, strike ``exp(kappa)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcx

from .model import DomainError, ModelParams, QueryPoint
from .simulate import DEFAULT_CHUNK, Estimate, SeedSpec, estimate_from_samples, sample_It_batch

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class PriceOutOfBounds(ValueError):
    """Price outside the open no-arbitrage interval ``((1 - e^k)^+, 1)``."""


class NoConvergence(RuntimeError):
    pass


def normal_cdf(x):
    """Standard normal distribution function via ``erfc`` (accurate in both tails)."""
    out = 0.5 * erfc(-np.asarray(x, dtype=float) / _SQRT2)
    return float(out) if out.ndim == 0 else out


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x - _LOG_SQRT_2PI)
    return float(out) if out.ndim == 0 else out


def _call_nonneg(kappa: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Call price for ``kappa >= 0`` and ``v > 0``.

    Writes ``Phi(d1) - e^k Phi(d2)`` as ``phi(d1) * [R(-d1) - R(-d2)]`` with the
    scaled complement ``R(x) = erfcx(x / sqrt 2) * sqrt(pi / 2)``, which stays
    accurate deep out of the money where both terms underflow or cancel.
    """
    d1 = -kappa / v + 0.5 * v
    d2 = d1 - v
    plain = normal_cdf(d1) - np.exp(kappa) * normal_cdf(d2)
    scale = math.sqrt(math.pi / 2.0)
    r1 = erfcx(-d1 / _SQRT2) * scale
    r2 = erfcx(-d2 / _SQRT2) * scale
    # phi(d1) == e^k phi(d2), so both terms share the prefactor phi(d1)
    scaled = normal_pdf(d1) * (r1 - r2)
    # the Mills-ratio form is only needed (and only well-conditioned) when d1 < 0
    return np.where(d1 < 0.0, scaled, plain)


def bs_call(kappa, v):
    """Normalized Black-Scholes call ``C(kappa, v)`` with total volatility ``v``.

    Negative log-strikes go through the put-call symmetry
    ``C(-k) = 1 - e^{-k} + e^{-k} C(k)``.
    """
    kappa_a = np.asarray(kappa, dtype=float)
    v_a = np.asarray(v, dtype=float)
    if np.any(v_a < 0.0) or np.any(np.isnan(v_a)):
        raise DomainError("total volatility must be non-negative")
    kappa_b, v_b = np.broadcast_arrays(kappa_a, v_a)
    k = np.abs(kappa_b)
    out = np.zeros(k.shape)
    pos = v_b > 0.0
    if np.any(pos):
        out[pos] = _call_nonneg(k[pos], v_b[pos])
    neg = kappa_b < 0.0
    # at v = 0 the positive-kappa price is 0, so the symmetry gives the intrinsic value
    out = np.where(neg, -np.expm1(-k) + np.exp(-k) * out, out)
    return float(out) if out.ndim == 0 else out


def bs_vega(kappa: float, v: float) -> float:
    """Derivative of the call price in total volatility, ``phi(d1)``."""
    if v <= 0.0:
        return 0.0
    return normal_pdf(-kappa / v + 0.5 * v)


def _log_call_nonneg(kappa: float, v: float) -> float:
    d1 = -kappa / v + 0.5 * v
    if d1 >= 0.0:
        c = float(_call_nonneg(np.array(kappa), np.array(v)))
        return math.log(c) if c > 0.0 else -math.inf
    d2 = d1 - v
    scale = math.sqrt(math.pi / 2.0)
    diff = float(erfcx(-d1 / _SQRT2) - erfcx(-d2 / _SQRT2)) * scale
    # v below the resolution of d1 cancels the difference to zero
    if not diff > 0.0:
        return -math.inf
    return -0.5 * d1 * d1 - _LOG_SQRT_2PI + math.log(diff)


def intrinsic(kappa: float) -> float:
    # numpy's expm1 so the value matches the one inside bs_call to the ulp
    return max(-float(np.expm1(kappa)), 0.0)


def implied_total_vol(price: float, kappa: float, tol: float = 1e-14, max_iter: int = 200) -> float:
    """Total volatility ``v`` with ``bs_call(kappa, v) == price``.

    Negative ``kappa`` is mapped to ``|kappa|`` through the call symmetry, then
    a Newton iteration on the log-price is safeguarded by a bisection bracket.
    """
    if not math.isfinite(price):
        raise PriceOutOfBounds(f"price {price} is not finite")
    if kappa < 0.0:
        k = -kappa
        # C(k) = e^{k} (C(-k) - 1 + e^{-k})
        target = math.exp(k) * (price - intrinsic(kappa))
        if price >= 1.0 or target <= 0.0:
            raise PriceOutOfBounds(f"price {price} outside ({intrinsic(kappa)}, 1) at kappa={kappa}")
        # the mapped price inherits the rounding of the original; clip it into range
        target = min(target, math.nextafter(1.0, 0.0))
    else:
        k = kappa
        target = price
        if not (0.0 < target < 1.0):
            raise PriceOutOfBounds(f"price {price} outside (0, 1) at kappa={kappa}")
    log_target = math.log(target)

    lo, hi = 0.0, 1.0
    while float(bs_call(k, hi)) < target:
        lo = hi
        hi *= 2.0
        if hi > 1e4:
            # beyond this the price is 1 to double precision
            raise NoConvergence(f"no volatility bracket found for price {price}")
    v = _initial_guess(k, target, lo, hi)
    for _ in range(max_iter):
        lc = _log_call_nonneg(k, v)
        g = lc - log_target
        if g == 0.0:
            return v
        if g > 0.0:
            hi = min(hi, v)
        else:
            lo = max(lo, v)
        # d log C / dv = vega / C
        price_v = math.exp(lc)
        deriv = float(bs_vega(k, v)) / price_v if price_v > 0.0 else math.inf
        step_ok = deriv > 0.0 and math.isfinite(deriv)
        v_new = v - g / deriv if step_ok else 0.5 * (lo + hi)
        if not (lo < v_new < hi):
            v_new = 0.5 * (lo + hi)
        if abs(v_new - v) <= tol * max(1.0, v) or hi - lo <= tol * max(1.0, v):
            return v_new
        v = v_new
    raise NoConvergence(f"implied vol did not converge for price {price}, kappa={kappa}")


def _initial_guess(k: float, target: float, lo: float, hi: float) -> float:
    if k == 0.0:
        # C(0, v) = 2 Phi(v/2) - 1
        from scipy.special import ndtri

        return min(max(2.0 * float(ndtri(0.5 * (1.0 + target))), lo), hi) if target < 1.0 else hi
    # deep out of the money: log C ~ -k^2 / (2 v^2)
    guess = k / math.sqrt(max(-2.0 * math.log(target), 1e-300))
    if not (lo < guess < hi):
        guess = 0.5 * (lo + hi) if lo > 0 else 0.5 * hi
    return guess


def implied_vol(price: float, q: QueryPoint) -> float:
    """Black-Scholes implied volatility of a normalized call price."""
    return implied_total_vol(price, q.kappa) / math.sqrt(q.t)


@dataclass(frozen=True)
class PriceEstimate:
    call: Estimate
    query: QueryPoint
    implied_vol: Estimate | None = None


def call_samples(kappa: float, I: np.ndarray) -> np.ndarray:
    """Per-draw conditional prices ``bs_call(kappa, sqrt(I))``."""
    return bs_call(kappa, np.sqrt(I))


def price_call_mc(params: ModelParams, q: QueryPoint, n: int, seed: SeedSpec, chunk_size: int = DEFAULT_CHUNK, I=None) -> PriceEstimate:
    """Hull-White conditional Monte Carlo price.

    ``I`` can be passed to reuse draws across strikes.
    """
    if I is None:
        I = sample_It_batch(params, q.t, n, seed, chunk_size)
    k = abs(q.kappa)
    x = call_samples(k, I)
    if q.kappa < 0.0:
        x = -math.expm1(-k) + math.exp(-k) * x
    return PriceEstimate(estimate_from_samples(x, seed), q)


def implied_vol_mc(params: ModelParams, q: QueryPoint, n: int, seed: SeedSpec, chunk_size: int = DEFAULT_CHUNK, I=None) -> PriceEstimate:
    """Implied vol of the Monte Carlo price; the error is propagated through vega.

    The vol is always computed from the canonical ``|kappa|`` price, so the
    result is symmetric in ``kappa`` on shared draws.
    """
    pe = price_call_mc(params, q, n, seed, chunk_size, I)
    canon = q.canonical()
    if q.kappa < 0.0:
        # recover the canonical price exactly rather than inverting the mirror map
        pc = price_call_mc(params, canon, n, seed, chunk_size, I).call
    else:
        pc = pe.call
    flags = list(pc.flags)
    if pc.value - 3.0 * pc.std_error <= intrinsic(canon.kappa):
        flags.append("straddles_intrinsic")
    v = implied_total_vol(pc.value, canon.kappa)
    vega = float(bs_vega(canon.kappa, v))
    se = pc.std_error / vega / math.sqrt(q.t) if vega > 0.0 else math.inf
    iv = Estimate(v / math.sqrt(q.t), se, pc.n_samples, seed, tuple(flags))
    return PriceEstimate(pe.call, q, iv)
