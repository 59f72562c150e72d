import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shockvol.model import DomainError, ModelParams, QueryPoint, derive_constants, it_upper_bound, time_change
from shockvol.simulate import (
    OuSpec,
    SeedSpec,
    estimate_log_tail,
    estimate_tail,
    exp_moment_mc,
    exp_moment_series_bound,
    run_chunked,
    sample_It,
    sample_It_batch,
    sample_jump_batch,
    sample_jump_times,
    sample_log_price_batch,
    sample_log_price_path,
    sample_spot_variance,
    series_log_terms,
    simulate_ou_batch,
)

PARAMS = ModelParams.from_tail_constant(0.3, 0.5, 1.0, 0.1)
SEED = SeedSpec(12345)


def test_seed_rejects_out_of_range():
    with pytest.raises(DomainError):
        SeedSpec(-1)
    with pytest.raises(DomainError):
        SeedSpec(2**64)


def test_streams_differ_by_key_and_salt():
    a = SEED.generator(0, 0).random(4)
    assert not np.array_equal(a, SEED.generator(1, 0).random(4))
    assert not np.array_equal(a, SEED.salted(3).generator(0, 0).random(4))
    assert np.array_equal(a, SEED.generator(0, 0).random(4))


def test_batch_matches_single_path_closed_form():
    consts = derive_constants(PARAMS)
    batch = sample_jump_batch(2.0, 1.0, 200, SEED.generator(0, 0))
    from shockvol.simulate import time_change_batch

    I, n = time_change_batch(consts, batch, 0.7)
    for i in range(0, 200, 17):
        path = batch.path(i)
        assert I[i] == pytest.approx(time_change(consts, path, PARAMS.tau0, 0.7), rel=1e-12)
        assert n[i] == path.count(0.7)


def test_jump_batch_times_are_positive_and_sorted():
    batch = sample_jump_batch(5.0, 2.0, 500, SEED.generator(0, 0))
    assert batch.times.min() > 0.0 and batch.times.max() <= 2.0
    for i in range(50):
        assert np.all(np.diff(batch.path(i).times) > 0)
    assert batch.counts_before(1.0).sum() <= batch.counts.sum()


def test_poisson_count_mean():
    batch = sample_jump_batch(3.0, 2.0, 100_000, SEED.generator(0, 0))
    se = math.sqrt(6.0 / 100_000)
    assert abs(batch.counts.mean() - 6.0) < 4 * se


def test_single_path_sampler_in_law():
    counts = [sample_jump_times(1.0, 1.0, SeedSpec(7, i)).count(1.0) for i in range(3000)]
    assert abs(np.mean(counts) - 1.0) < 4 * math.sqrt(1.0 / 3000)
    assert sample_It(PARAMS, 0.5, SEED) > 0


def test_chunking_and_workers_do_not_change_draws():
    a = sample_It_batch(PARAMS, 0.1, 5000, SEED, chunk_size=700)
    b = sample_It_batch(PARAMS, 0.1, 5000, SEED, chunk_size=700, workers=3)
    assert a.tobytes() == b.tobytes()


def test_run_chunked_rejects_bad_sizes():
    with pytest.raises(DomainError):
        run_chunked(lambda j, s: np.zeros(s), 0)
    with pytest.raises(DomainError):
        run_chunked(lambda j, s: np.zeros(s), 10, chunk_size=0)


def test_pathwise_bound_on_batch():
    I, n = sample_It_batch(PARAMS, 0.3, 20_000, SEED, with_counts=True)
    assert np.all(I <= it_upper_bound(derive_constants(PARAMS), n, 0.3))


def test_martingale_small_sample():
    X, _ = sample_log_price_batch(PARAMS, 0.1, 200_000, SEED)
    w = np.exp(X)
    assert abs(w.mean() - 1.0) < 4 * w.std() / math.sqrt(w.size)


def test_log_price_path_shape():
    x = sample_log_price_path(PARAMS, [0.1, 0.2, 0.5], SEED)
    assert x.shape == (3,) and np.all(np.isfinite(x))
    with pytest.raises(DomainError):
        sample_log_price_path(PARAMS, [0.2, 0.1], SEED)


def test_spot_variance_positive():
    s = sample_spot_variance(PARAMS, 0.5, 10_000, SEED)
    assert np.all(s > 0)


def test_log_tail_agrees_with_plain_tail():
    q = QueryPoint(0.02, 0.01)
    I = sample_It_batch(PARAMS, q.t, 50_000, SEED)
    p = estimate_tail(PARAMS, q, I.size, SEED, I=I)
    lp = estimate_log_tail(PARAMS, q, I.size, SEED, I=I)
    assert lp.value == pytest.approx(math.log(p.value), rel=1e-10)


def test_exp_moment_mc_below_series_bound():
    consts = derive_constants(PARAMS)
    est = exp_moment_mc(PARAMS, 5.0, 0.1, 100_000, SEED)
    assert est.value <= exp_moment_series_bound(consts, PARAMS.lam, 5.0, 0.1)


def test_series_bound_log_form_consistent():
    consts = derive_constants(PARAMS)
    v = exp_moment_series_bound(consts, 1.0, 10.0, 0.1)
    lv = exp_moment_series_bound(consts, 1.0, 10.0, 0.1, log=True)
    assert math.log(v) == pytest.approx(lv, rel=1e-13)


def test_series_bound_cap():
    consts = derive_constants(PARAMS)
    with pytest.raises(OverflowError):
        exp_moment_series_bound(consts, 1.0, 1e6, 1.0, max_terms=100)


def test_series_first_term_is_zero():
    consts = derive_constants(PARAMS)
    assert series_log_terms(consts, 1.0, 2.0, 0.5, np.array([0]))[0] == 0.0


@pytest.mark.parametrize("spec", [OuSpec("constant", 1.0), OuSpec("exponential", 0.5), OuSpec("pareto", 0.5, 1.5)])
def test_ou_comparator_dominated(spec):
    It, I = simulate_ou_batch(PARAMS, spec, 1.0, 5000, SEED)
    assert np.all(It <= I)


def test_ou_zero_jump_paths_match_model():
    It, I = simulate_ou_batch(PARAMS, OuSpec("constant", 1.0), 1e-3, 2000, SEED)
    # most paths carry no jump at this horizon and must agree exactly
    assert np.mean(It == I) > 0.99


def test_ou_spec_validation():
    with pytest.raises(DomainError):
        OuSpec("gamma")
    with pytest.raises(DomainError):
        OuSpec("pareto", 1.0, 0.0)


@given(seed=st.integers(0, 2**64 - 1), t=st.floats(1e-4, 2.0))
def test_batch_draws_respect_bound(seed, t):
    I, n = sample_It_batch(PARAMS, t, 200, SeedSpec(seed), with_counts=True)
    assert np.all(I > 0)
    assert np.all(I <= it_upper_bound(derive_constants(PARAMS), n, t))
