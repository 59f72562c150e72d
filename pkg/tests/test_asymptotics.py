import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from shockvol import asymptotics as asy
from shockvol.model import DomainError, ModelParams, QueryPoint, derive_constants
from shockvol.pricing import normal_cdf, normal_pdf

CONSTS = derive_constants(ModelParams.from_tail_constant(0.3, 0.5, 1.0, 0.1))


def test_f_at_zero_and_first_threshold():
    assert asy.f_value(0.0, CONSTS) == 1.0
    x1 = asy.f_threshold(1, CONSTS)
    assert asy.f_term(1, x1, CONSTS) == pytest.approx(asy.f_term(2, x1, CONSTS), rel=1e-13)


@given(a=st.floats(1e-3, 1e3))
def test_f_matches_brute_force(a):
    val, m = asy.f_bruteforce(a, CONSTS)
    prof = asy.f_profile(a, CONSTS)
    assert prof.argmin_m == m
    assert prof.value == val


@given(a=st.floats(0.0, 100.0), b=st.floats(0.0, 100.0))
def test_f_is_non_decreasing(a, b):
    lo, hi = sorted((a, b))
    assert asy.f_value(lo, CONSTS) <= asy.f_value(hi, CONSTS)


def test_f_rejects_negative():
    with pytest.raises(DomainError):
        asy.f_value(-1.0, CONSTS)


def test_boundary_scales():
    t = 1e-4
    assert asy.bkappa1(t) == pytest.approx(math.sqrt(t * math.log(1 / t)))
    assert asy.bkappa2(t, 0.3) == pytest.approx(t**0.3 * math.sqrt(math.log(1 / t)))
    with pytest.raises(DomainError):
        asy.bkappa1(1.0)


def test_classify_covers_all_regimes():
    t = 1e-4
    labels = [asy.classify(QueryPoint(k, t), CONSTS).label for k in (0.0, 0.01, 0.1, 1.0)]
    assert labels == [asy.D_TYPICAL, asy.C_INTER, asy.B_KAPPA2, asy.A_LARGE]


def test_classify_is_symmetric_and_tags_candidates():
    t = 1e-4
    edge = 2.0 * asy.bkappa2(t, CONSTS.D)
    r = asy.classify(QueryPoint(edge * 1.01, t), CONSTS)
    assert r.label == asy.A_LARGE and asy.B_KAPPA2 in r.candidates
    assert asy.classify(QueryPoint(-0.05, t), CONSTS) == asy.classify(QueryPoint(0.05, t), CONSTS)


def test_classify_large_time():
    assert asy.classify(QueryPoint(2.0, 1.5), CONSTS).label == asy.A_LARGE
    assert asy.classify(QueryPoint(1.0, 1.5), CONSTS).label == asy.UNCLASSIFIED
    with pytest.raises(asy.GuardError):
        asy.smile_asymptote(QueryPoint(1.0, 1.5), CONSTS)


def test_smile_D_is_sigma0():
    assert asy.smile_asymptote(QueryPoint(0.0, 1e-4), CONSTS).value == CONSTS.sigma0


def test_forced_regime_and_guards():
    q = QueryPoint(0.01, 1e-4)
    assert asy.smile_asymptote(q, CONSTS, regime="C").regime.label == asy.C_INTER
    with pytest.raises(asy.GuardError):
        asy.smile_asymptote(QueryPoint(1e-5, 1e-4), CONSTS, regime="A")
    with pytest.raises(DomainError):
        asy.smile_asymptote(q, CONSTS, regime="Z")


def test_smile_is_symmetric():
    for k in (0.005, 0.05, 0.5):
        a = asy.smile_asymptote(QueryPoint(k, 1e-4), CONSTS).value
        b = asy.smile_asymptote(QueryPoint(-k, 1e-4), CONSTS).value
        assert a == b


def test_tail_D_and_C_formulas():
    t = 1e-4
    k = 1e-4
    assert asy.tail_D(k, t, CONSTS) == pytest.approx(math.log(normal_cdf(-k / math.sqrt(t) / 0.1)), rel=1e-12)
    assert asy.tail_C(0.01, t, CONSTS) == pytest.approx(-(0.01**2) / (2 * 0.01 * t), rel=1e-12)


def test_tail_rejects_negative_strike():
    with pytest.raises(DomainError):
        asy.tail_asymptote(QueryPoint(-0.1, 0.01), CONSTS)


def test_price_variants():
    t = 1e-4
    assert asy.price_asymptote(QueryPoint(0.0, t), CONSTS).variant == "e"
    assert asy.price_asymptote(QueryPoint(0.0, t), CONSTS).price() == pytest.approx(0.1 * math.sqrt(t / (2 * math.pi)))
    assert asy.price_asymptote(QueryPoint(1e-4, t), CONSTS).variant == "d"
    assert asy.price_asymptote(QueryPoint(2.0, t), CONSTS).variant == "a"
    assert asy.price_asymptote(QueryPoint(0.5, t), CONSTS).variant == "b"
    with pytest.raises(asy.RegimeMismatch):
        asy.price_asymptote(QueryPoint(0.0, t), CONSTS, variant="a")


def test_d_function_values():
    z = 2.0
    assert asy.d_function(z) == pytest.approx(normal_pdf(z) / z - normal_cdf(-z), rel=1e-12)
    # far tail: D(z) ~ phi(z) / z^3, where both original terms nearly cancel
    assert asy.d_function(30.0) == pytest.approx(normal_pdf(30.0) / 30.0**3, rel=0.01)
    with pytest.raises(DomainError):
        asy.d_function(0.0)


@given(y=st.floats(1e-8, 1e3))
def test_d_inverse_round_trip(y):
    assert asy.d_function(asy.d_inverse(y)) == pytest.approx(y, rel=1e-12)


def test_vol_from_price_forms():
    q = QueryPoint(0.0, 1e-4)
    c = 0.1 * math.sqrt(q.t / (2 * math.pi))
    assert asy.vol_from_price_asym(q, c) == pytest.approx(0.1, rel=1e-12)
    q = QueryPoint(0.01, 1e-4)
    for form in ("gl", "d_inverse", "simple_log", "simple_ratio_log"):
        assert asy.vol_from_price_asym(q, 1e-6, form=form) > 0
    with pytest.raises(DomainError):
        asy.vol_from_price_asym(q, 1e-6, form="nope")


def test_d_inverse_gives_exact_vol_for_small_strike():
    # the d-form inverts c/k = D(k / (sigma sqrt t)) exactly
    sigma, t, k = 0.2, 1e-3, 0.01
    y = asy.d_function(k / (sigma * math.sqrt(t)))
    assert asy.vol_from_price_asym(QueryPoint(k, t), y * k, form="d_inverse") == pytest.approx(sigma, rel=1e-12)


def test_ldp_rate_at_one_is_tail_constant():
    assert asy.ldp_rate(1.0, CONSTS) == pytest.approx(CONSTS.C_sf)
    assert asy.ldp_rate(-2.0, CONSTS) == asy.ldp_rate(2.0, CONSTS)
