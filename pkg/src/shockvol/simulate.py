"""Exact simulation of shocks, time changes and log-prices, plus estimators.

Randomness comes from counter-based Philox streams keyed by
``(master_seed, stream_index, chunk, purpose)``. Estimators split the sample
range into fixed-size chunks, so results depend on the seed and the chunk
size but never on the number of workers.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from scipy.special import log_ndtr, logsumexp, ndtr

from .model import (
    DerivedConstants,
    DomainError,
    JumpTimes,
    ModelParams,
    QueryPoint,
    derive_constants,
    time_change,
)

log = logging.getLogger(__name__)

DEFAULT_CHUNK = 100_000

# purpose tags for sub-streams of one chunk
_JUMPS, _GAUSS, _AUX = 0, 1, 2


@dataclass(frozen=True)
class SeedSpec:
    """Root of a family of random streams.

    ``salt`` separates sub-experiments (for example one per maturity of a
    grid) without consuming stream indices.
    """

    master_seed: int
    stream_index: int = 0
    salt: int = 0

    def __post_init__(self) -> None:
        if not (0 <= self.master_seed < 2**64):
            raise DomainError("master_seed must be an unsigned 64-bit integer")
        if self.stream_index < 0:
            raise DomainError("stream_index must be non-negative")

    def generator(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index, self.salt, *key))
        return np.random.Generator(np.random.Philox(ss))

    def salted(self, salt: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.stream_index, salt)

    def for_maturity(self, t: float) -> "SeedSpec":
        """Stream keyed by the bit pattern of ``t``, so grid order never matters."""
        return self.salted(int(np.float64(t).view(np.uint64)))


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    n_samples: int
    seed: SeedSpec | None
    flags: tuple[str, ...] = ()


def estimate_from_samples(samples: np.ndarray, seed: SeedSpec | None, flags: tuple[str, ...] = ()) -> Estimate:
    n = samples.size
    sd = float(np.std(samples, ddof=1)) if n > 1 else 0.0
    return Estimate(float(np.mean(samples)), sd / math.sqrt(n), n, seed, flags)


@dataclass(frozen=True)
class OuSpec:
    """Jump law of the compound Poisson driver of the comparator volatility.

    ``kind`` is one of ``constant`` (every jump equals ``size``),
    ``exponential`` (mean ``size``) or ``pareto`` (tail index ``shape``,
    scale ``size``).
    """

    kind: str = "constant"
    size: float = 1.0
    shape: float = 2.0
    sigma0: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "exponential", "pareto"):
            raise DomainError(f"unknown jump distribution {self.kind!r}")
        if not self.size >= 0.0 or (self.kind == "pareto" and not self.shape > 0):
            raise DomainError("jump parameters must be non-negative")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n, float(self.size))
        if self.kind == "exponential":
            return rng.exponential(self.size, n)
        return self.size * (1.0 + rng.pareto(self.shape, n))


# ---------------------------------------------------------------------------
# jump-time batches


@dataclass
class JumpBatch:
    """Jump times of many independent paths on a common horizon.

    ``times`` holds every path's jumps back to back, sorted within a path;
    path ``i`` owns ``times[offsets[i]:offsets[i] + counts[i]]``.
    """

    horizon: float
    counts: np.ndarray
    times: np.ndarray
    offsets: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.offsets = np.concatenate(([0], np.cumsum(self.counts)[:-1])).astype(np.int64)

    @property
    def n_paths(self) -> int:
        return self.counts.size

    def path_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_paths), self.counts)

    def path(self, i: int) -> JumpTimes:
        o = self.offsets[i]
        return JumpTimes(self.horizon, self.times[o : o + self.counts[i]])

    def counts_before(self, t: float) -> np.ndarray:
        if t >= self.horizon:
            return self.counts.copy()
        return np.bincount(self.path_ids(), weights=self.times <= t, minlength=self.n_paths).astype(np.int64)


def sample_jump_batch(lam: float, horizon: float, n_paths: int, rng: np.random.Generator) -> JumpBatch:
    """Poisson counts, then ordered uniforms on ``(0, horizon]`` given the count."""
    counts = rng.poisson(lam * horizon, n_paths)
    total = int(counts.sum())
    u = rng.random(total)
    # rng.random is in [0, 1); flip to (0, 1] so every time is strictly positive
    u = 1.0 - u
    ids = np.repeat(np.arange(n_paths), counts)
    order = np.lexsort((u, ids))
    return JumpBatch(horizon, counts, horizon * u[order])


def time_change_batch(consts: DerivedConstants, batch: JumpBatch, t: float) -> tuple[np.ndarray, np.ndarray]:
    """``I_t`` and ``N_t`` for every path of the batch."""
    if t < 0.0 or t > batch.horizon:
        raise DomainError(f"t={t} outside [0, {batch.horizon}]")
    p = 2 * consts.D
    a = -consts.tau0
    n_t = batch.counts_before(t)
    ids = batch.path_ids()
    times = batch.times
    # gap before each jump, measured from the previous jump of the same path
    prev = np.empty_like(times)
    if times.size:
        prev[1:] = times[:-1]
        first = batch.offsets[batch.counts > 0]
        prev[first] = 0.0
    gap_terms = np.abs(times - prev) ** p
    if times.size:
        gap_terms[first] = a**p * np.expm1(p * np.log1p(times[first] / a))
    inside = times <= t
    total = np.bincount(ids, weights=np.where(inside, gap_terms, 0.0), minlength=batch.n_paths)
    last = np.zeros(batch.n_paths)
    has = n_t > 0
    last[has] = times[batch.offsets[has] + n_t[has] - 1]
    tail = np.empty(batch.n_paths)
    tail[has] = (t - last[has]) ** p
    tail[~has] = a**p * math.expm1(p * math.log1p(t / a))
    return consts.c_sf**2 * (total + tail), n_t


# ---------------------------------------------------------------------------
# chunked driver


def _chunks(n: int, chunk_size: int) -> list[tuple[int, int]]:
    if n < 1:
        raise DomainError("need at least one sample")
    if chunk_size < 1:
        raise DomainError("chunk_size must be positive")
    return [(j, min(chunk_size, n - j * chunk_size)) for j in range(math.ceil(n / chunk_size))]


def run_chunked(
    fn: Callable[[int, int], np.ndarray],
    n: int,
    chunk_size: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> np.ndarray:
    """Evaluate ``fn(chunk_index, size)`` over all chunks, concatenated in chunk order."""
    parts = _chunks(n, chunk_size)
    if workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda jc: fn(*jc), parts))
    else:
        results = [fn(j, size) for j, size in parts]
    if isinstance(results[0], tuple):
        return tuple(np.concatenate(r) for r in zip(*results))
    return np.concatenate(results)


# ---------------------------------------------------------------------------
# samplers


def sample_jump_times(lam: float, horizon: float, seed: SeedSpec) -> JumpTimes:
    """One Poisson path on ``(0, horizon]`` from exponential inter-arrival times."""
    if not horizon > 0.0:
        raise DomainError("horizon must be positive")
    rng = seed.generator(0, _JUMPS)
    times: list[float] = []
    s = 0.0
    while True:
        s += rng.exponential(1.0 / lam)
        if s > horizon:
            break
        times.append(s)
    return JumpTimes(horizon, np.array(times))


def sample_It(params: ModelParams, t: float, seed: SeedSpec) -> float:
    """One exact draw of the integrated variance at maturity ``t``."""
    if not t > 0.0:
        raise DomainError("t must be positive")
    jumps = sample_jump_times(params.lam, t, seed)
    return time_change(derive_constants(params), jumps, params.tau0, t)


def sample_It_batch(
    params: ModelParams,
    t: float,
    n: int,
    seed: SeedSpec,
    chunk_size: int = DEFAULT_CHUNK,
    workers: int = 1,
    with_counts: bool = False,
):
    """``n`` exact i.i.d. draws of ``I_t`` (and optionally ``N_t``)."""
    if not t > 0.0:
        raise DomainError("t must be positive")
    consts = derive_constants(params)

    def chunk(j: int, size: int):
        batch = sample_jump_batch(params.lam, t, size, seed.generator(j, _JUMPS))
        return time_change_batch(consts, batch, t)

    I, counts = run_chunked(chunk, n, chunk_size, workers)
    return (I, counts) if with_counts else I


def gaussian_batch(n: int, seed: SeedSpec, chunk_size: int = DEFAULT_CHUNK) -> np.ndarray:
    """Standard normals aligned chunk-by-chunk with ``sample_It_batch``."""
    return run_chunked(lambda j, size: seed.generator(j, _GAUSS).standard_normal(size), n, chunk_size)


def sample_log_price_path(params: ModelParams, grid: Sequence[float], seed: SeedSpec) -> np.ndarray:
    """Log-price on a time grid for a single path (exact in law)."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or grid[0] <= 0.0 or np.any(np.diff(grid) <= 0.0):
        raise DomainError("grid must be strictly increasing and positive")
    consts = derive_constants(params)
    jumps = sample_jump_times(params.lam, float(grid[-1]), seed)
    I = np.array([time_change(consts, jumps, params.tau0, s) for s in grid])
    dI = np.diff(I, prepend=0.0)
    z = seed.generator(0, _GAUSS).standard_normal(grid.size)
    return np.cumsum(np.sqrt(dI) * z - 0.5 * dI)


def sample_log_price_batch(
    params: ModelParams, t: float, n: int, seed: SeedSpec, chunk_size: int = DEFAULT_CHUNK
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal log-prices ``X_t`` together with the ``I_t`` draws they used."""
    I = sample_It_batch(params, t, n, seed, chunk_size)
    z = gaussian_batch(n, seed, chunk_size)
    return np.sqrt(I) * z - 0.5 * I, I


def sample_spot_variance(params: ModelParams, t: float, n: int, seed: SeedSpec, chunk_size: int = DEFAULT_CHUNK) -> np.ndarray:
    """Draws of the squared spot volatility at time ``t``.

    Given ``N_t = m >= 1`` the last shock is the maximum of ``m`` uniforms on
    ``[0, t]``, distributed as ``t * U**(1/m)``.
    """
    consts = derive_constants(params)

    def chunk(j: int, size: int) -> np.ndarray:
        rng = seed.generator(j, _AUX)
        m = rng.poisson(params.lam * t, size)
        u = 1.0 - rng.random(size)
        last = np.where(m > 0, t * u ** (1.0 / np.maximum(m, 1)), params.tau0)
        return consts.c_sf**2 * 2 * consts.D * (t - last) ** (2 * consts.D - 1)

    return run_chunked(chunk, n, chunk_size)


# ---------------------------------------------------------------------------
# estimators


def conditional_tail(kappa: float, I: np.ndarray) -> np.ndarray:
    """``P(X_t > kappa | I_t)`` for each draw."""
    s = np.sqrt(I)
    return ndtr(-kappa / s - 0.5 * s)


def estimate_tail(params: ModelParams, q: QueryPoint, n: int, seed: SeedSpec, chunk_size: int = DEFAULT_CHUNK, I=None) -> Estimate:
    """Rao-Blackwellized estimate of ``P(X_t > kappa)``."""
    if I is None:
        I = sample_It_batch(params, q.t, n, seed, chunk_size)
    return estimate_from_samples(conditional_tail(q.kappa, I), seed)


def estimate_log_tail(params: ModelParams, q: QueryPoint, n: int, seed: SeedSpec, chunk_size: int = DEFAULT_CHUNK, I=None) -> Estimate:
    """Estimate of ``log P(X_t > kappa)`` computed in log space.

    The standard error comes from the delta method, ``se(P) / P``.
    """
    if I is None:
        I = sample_It_batch(params, q.t, n, seed, chunk_size)
    s = np.sqrt(I)
    logs = log_ndtr(-q.kappa / s - 0.5 * s)
    m = I.size
    log_mean = float(logsumexp(logs) - math.log(m))
    # second moment of the ratio samples / mean, evaluated without underflow
    rel = np.exp(logs - log_mean)
    se = float(np.std(rel, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return Estimate(log_mean, se, m, seed)


def exp_moment_mc(params: ModelParams, b: float, t: float, n: int, seed: SeedSpec, chunk_size: int = DEFAULT_CHUNK, I=None) -> Estimate:
    """Plain Monte Carlo estimate of ``E[exp(b I_t)]``.

    Flags ``heavy_tail`` when the top 1% of samples carry more than half of
    the total mass.
    """
    if b == 0.0:
        return Estimate(1.0, 0.0, n, seed)
    if I is None:
        I = sample_It_batch(params, t, n, seed, chunk_size)
    x = b * I
    shift = float(np.max(x)) if b > 0 else 0.0
    w = np.exp(x - shift)
    flags: tuple[str, ...] = ()
    k = max(1, w.size // 100)
    top = np.partition(w, w.size - k)[w.size - k :]
    if top.sum() > 0.5 * w.sum():
        flags = ("heavy_tail",)
    est = estimate_from_samples(w, seed, flags)
    scale = math.exp(shift)
    return Estimate(est.value * scale, est.std_error * scale, est.n_samples, seed, flags)


def series_log_terms(consts: DerivedConstants, lam: float, b: float, t: float, j: np.ndarray) -> np.ndarray:
    """Exponents ``f(j)`` of the Poisson-weighted series (with ``0 log 0 = 0``)."""
    j = np.asarray(j, dtype=float)
    A = consts.c_sf**2 * t ** (2 * consts.D) * b
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(j > 0, j * (np.log(j / (lam * t)) - 1.0), 0.0)
    return A * j ** (1 - 2 * consts.D) - ent


def _series_argmax(consts: DerivedConstants, lam: float, b: float, t: float) -> float:
    D = consts.D
    A = (1 - 2 * D) * consts.c_sf**2 * b * t ** (2 * D)

    def fprime(x: float) -> float:
        return A * x ** (-2 * D) - math.log(x / (lam * t))

    lo, hi = 1e-300, 1.0
    while fprime(hi) > 0:
        hi *= 2.0
    return optimize.brentq(fprime, lo, hi, xtol=1e-12, rtol=1e-14, maxiter=500)


def exp_moment_series_bound(
    consts: DerivedConstants,
    lam: float,
    b: float,
    t: float,
    rel_cutoff: float = 1e-16,
    max_terms: int = 1_000_000,
    log: bool = False,
) -> float:
    """Deterministic upper bound on ``E[exp(b I_t)]`` (Stirling constant 1).

    Returns the logarithm of the bound when ``log`` is true, which is the
    useful form for large ``b``.
    """
    if not (b > 0.0 and t > 0.0):
        raise DomainError("b and t must be positive")
    xbar = _series_argmax(consts, lam, b, t)
    if xbar > max_terms:
        raise OverflowError(f"series maximizer {xbar:.3g} beyond the {max_terms}-term cap")
    cut = math.log(rel_cutoff)
    block = 4096
    parts = []
    running_max = -math.inf
    start = 0
    while True:
        if start >= max_terms:
            raise OverflowError(f"series not truncated within {max_terms} terms")
        j = np.arange(start, min(start + block, max_terms))
        f = series_log_terms(consts, lam, b, t, j)
        running_max = max(running_max, float(f.max()))
        parts.append(f)
        past = j[-1] > xbar
        if past and f[-1] < running_max + cut:
            break
        start += block
    f_all = np.concatenate(parts)
    keep = f_all >= running_max + cut + math.log(1e-3)
    value = consts.sigma0**2 * t * b + float(logsumexp(f_all[keep]))
    return value if log else math.exp(value)


# ---------------------------------------------------------------------------
# generalized OU comparator


def _age_increment(age: np.ndarray, dt: np.ndarray, p: float) -> np.ndarray:
    """``(age + dt)**p - age**p`` elementwise, stable for ``dt << age``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(age > 0, age, 1.0)
        inc = safe**p * np.expm1(p * np.log1p(dt / safe))
    return np.where(age > 0, inc, dt**p)


def ou_comparator_batch(consts: DerivedConstants, spec: OuSpec, batch: JumpBatch, t: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Comparator and model time changes on shared jump times.

    Between jumps the comparator variance solves ``d s2 = -c s2**gamma dt``, so
    ``u = s2**-(gamma-1)`` grows at rate ``c (gamma-1)``. Tracking the
    equivalent age ``u / (c (gamma-1))`` makes each segment integrate to the
    same power increment as the model, whose age restarts at 0 on every jump
    (the infinite-jump limit). Returns ``(I_tilde, I)`` per path.
    """
    gamma = consts.ou_gamma
    rate = consts.ou_c * (gamma - 1)
    p = 2 * consts.D
    c2 = consts.c_sf**2
    I_model, n_t = time_change_batch(consts, batch, t)
    n = batch.n_paths
    if spec.sigma0 is None:
        age = np.full(n, -consts.tau0)
    else:
        age = np.full(n, spec.sigma0 ** (-2 * (gamma - 1)) / rate)
    clock = np.zeros(n)
    acc = np.zeros(n)
    jumps_all = spec.draw(rng, batch.times.size)
    for k in range(int(n_t.max()) if n else 0):
        live = n_t > k
        idx = batch.offsets[live] + k
        dt = batch.times[idx] - clock[live]
        acc[live] += c2 * _age_increment(age[live], dt, p)
        a_new = age[live] + dt
        var = (rate * a_new) ** (-1.0 / (gamma - 1)) + jumps_all[idx]
        age[live] = var ** (-(gamma - 1)) / rate
        clock[live] = batch.times[idx]
    acc += c2 * _age_increment(age, t - clock, p)
    return acc, I_model


def simulate_ou_comparator(params: ModelParams, spec: OuSpec, t: float, seed: SeedSpec) -> tuple[float, float]:
    """One shared-draw pair ``(I_tilde, I)``."""
    it, i = simulate_ou_batch(params, spec, t, 1, seed)
    return float(it[0]), float(i[0])


def simulate_ou_batch(params: ModelParams, spec: OuSpec, t: float, n: int, seed: SeedSpec, chunk_size: int = DEFAULT_CHUNK):
    consts = derive_constants(params)

    def chunk(j: int, size: int):
        batch = sample_jump_batch(params.lam, t, size, seed.generator(j, _JUMPS))
        return ou_comparator_batch(consts, spec, batch, t, seed.generator(j, _AUX))

    return run_chunked(chunk, n, chunk_size)
