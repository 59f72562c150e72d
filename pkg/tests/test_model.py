import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gamma as gamma_fn

from shockvol.model import (
    DomainError,
    JumpTimes,
    ModelParams,
    QueryPoint,
    c_sf_from_tail_constant,
    derive_constants,
    it_upper_bound,
    mean_sigma_squared,
    sigma0_to_tau0,
    spot_volatility,
    tail_constant,
    time_change,
    time_change_grid,
)


def unit_params(D=0.25, tau0=-1.0):
    # V chosen so that c_sf == 1 at lambda == 1
    return ModelParams(D, math.sqrt(gamma_fn(2 * D + 1)), 1.0, tau0)


def test_c_sf_is_one_for_unit_params():
    c = derive_constants(unit_params())
    assert c.c_sf == pytest.approx(1.0, rel=1e-15)


def test_c_sf_for_V_one():
    c = derive_constants(ModelParams(0.25, 1.0, 1.0, -1.0))
    assert c.c_sf == pytest.approx(1 / math.sqrt(gamma_fn(1.5)), rel=1e-15)


def test_time_change_without_jumps():
    p = unit_params()
    c = derive_constants(p)
    I = time_change(c, JumpTimes(1.0, []), p.tau0, 1.0)
    assert I == pytest.approx(math.sqrt(2) - 1, rel=1e-14)
    assert I == pytest.approx(0.414214, abs=1e-6)


def test_time_change_with_one_jump():
    p = unit_params()
    c = derive_constants(p)
    I = time_change(c, JumpTimes(1.0, [0.5]), p.tau0, 1.0)
    assert I == pytest.approx((math.sqrt(1.5) - 1) + math.sqrt(0.5), rel=1e-14)


def test_time_change_with_two_jumps():
    p = unit_params()
    c = derive_constants(p)
    I = time_change(c, JumpTimes(1.0, [0.2, 0.6]), p.tau0, 1.0)
    expected = (math.sqrt(1.2) - 1) + math.sqrt(0.4) + math.sqrt(0.4)
    assert I == pytest.approx(expected, rel=1e-14)


def test_spot_volatility_values():
    p = unit_params()
    c = derive_constants(p)
    jumps = JumpTimes(1.0, [0.5])
    # sigma = c sqrt(2D) age^(D - 1/2) = sqrt(0.5) age^(-1/4)
    assert spot_volatility(c, jumps, p.tau0, 0.25) == pytest.approx(math.sqrt(0.5) * 1.25**-0.25)
    assert spot_volatility(c, jumps, p.tau0, 0.75) == pytest.approx(math.sqrt(0.5) * 0.25**-0.25)
    assert spot_volatility(c, jumps, p.tau0, 0.5) == math.inf


def test_sigma0_round_trip():
    p = ModelParams.from_sigma0(0.3, 1.7, 2.0, 0.15)
    assert derive_constants(p).sigma0 == pytest.approx(0.15, rel=1e-13)
    assert sigma0_to_tau0(0.15, 0.3, 1.7, 2.0) == p.tau0


def test_tail_constant_round_trip():
    for D in (0.05, 0.3, 0.45):
        c = c_sf_from_tail_constant(D, 0.5)
        assert tail_constant(D, c) == pytest.approx(0.5, rel=1e-13)


def test_default_constants_against_frozen_values():
    p = ModelParams.from_tail_constant(0.3, 0.5, 1.0, 0.1)
    c = derive_constants(p)
    assert c.C_sf == pytest.approx(0.5, rel=1e-13)
    assert c.sigma0 == pytest.approx(0.1, rel=1e-13)
    assert c.c_sf == pytest.approx(1.8752709148582807, rel=1e-12)
    assert p.V == pytest.approx(1.7726174756866779, rel=1e-12)
    assert c.ou_gamma == pytest.approx(3.5, rel=1e-14)


@pytest.mark.parametrize(
    "kwargs",
    [dict(D=0.0, V=1, lam=1, tau0=-1), dict(D=0.5, V=1, lam=1, tau0=-1), dict(D=0.3, V=-1, lam=1, tau0=-1),
     dict(D=0.3, V=1, lam=0, tau0=-1), dict(D=0.3, V=1, lam=1, tau0=0.0)],
)
def test_params_reject_invalid(kwargs):
    with pytest.raises(DomainError):
        ModelParams(**kwargs)


def test_jump_times_validation():
    with pytest.raises(DomainError):
        JumpTimes(1.0, [0.5, 0.4])
    with pytest.raises(DomainError):
        JumpTimes(1.0, [0.0])
    with pytest.raises(DomainError):
        JumpTimes(1.0, [1.5])


def test_query_point_rejects_nonpositive_t():
    with pytest.raises(DomainError):
        QueryPoint(0.1, 0.0)
    assert QueryPoint(-0.2, 1.0).canonical() == QueryPoint(0.2, 1.0)


def test_time_change_far_virtual_shock_keeps_precision():
    # |tau0| ~ 6.5e5: the first increment is far below the power itself
    p = ModelParams.from_tail_constant(0.3, 0.5, 1.0, 0.1)
    c = derive_constants(p)
    I = time_change(c, JumpTimes(1e-3, []), p.tau0, 1e-3)
    # sigma0^2 t to leading order
    assert I == pytest.approx(0.01 * 1e-3, rel=1e-6)


def test_mean_sigma_squared_no_jumps_limit():
    p = unit_params(D=0.3, tau0=-2.0)
    c = derive_constants(p)
    assert mean_sigma_squared(c, 1.0, 0.0) == pytest.approx(c.sigma0**2, rel=1e-12)


@given(
    D=st.floats(0.05, 0.45),
    times=st.lists(st.floats(1e-6, 1.0), min_size=0, max_size=12, unique=True),
    t=st.floats(1e-6, 1.0),
)
def test_time_change_within_pathwise_bound(D, times, t):
    p = unit_params(D=D, tau0=-0.5)
    c = derive_constants(p)
    jumps = JumpTimes(1.0, sorted(times))
    I = time_change(c, jumps, p.tau0, t)
    assert 0.0 < I <= it_upper_bound(c, jumps.count(t), t) * (1 + 1e-12)


@given(times=st.lists(st.floats(1e-6, 1.0), min_size=0, max_size=8, unique=True))
def test_time_change_is_increasing_in_t(times):
    p = unit_params(D=0.3)
    c = derive_constants(p)
    jumps = JumpTimes(1.0, sorted(times))
    vals = time_change_grid(c, jumps, p.tau0, np.linspace(0.01, 1.0, 50))
    assert np.all(np.diff(vals) > 0)
