import pytest
from hypothesis import given
from hypothesis import strategies as st

from shockvol.config import ConfigError, dump_config, load_config, parse_config


def test_defaults_resolve():
    cfg = load_config(None)
    p = cfg.params()
    assert p.D == 0.3 and p.lam == 1.0
    assert cfg.seed().master_seed == 20240601


def test_grids_and_aliases():
    cfg = parse_config("kappa = linspace(0, 0.2, 3)\nt = logspace(-3, -1, 3)\nlam = 2\nseed = 7\n")
    assert cfg["kappa"] == (0.0, 0.1, 0.2)
    assert cfg["t"] == pytest.approx((1e-3, 1e-2, 1e-1))
    assert cfg["lambda"] == 2.0 and cfg["master_seed"] == 7
    assert cfg.queries()[:2] == [(0.0, 1e-3), (0.1, 1e-3)]


@pytest.mark.parametrize(
    "text, key",
    [
        ("D = 0.7\n", "D"),
        ("V = 1\nC_sf = 0.5\n", "C_sf"),
        ("tau0 = 1\n", "tau0"),
        ("t = 0.2, 0.1\n", "t"),
        ("kappa = \n", "kappa"),
        ("n_samples = 0\n", "n_samples"),
        ("format = xml\n", "format"),
        ("bogus = 1\n", "bogus"),
        ("lambda = abc\n", "lambda"),
        ("D = 0.3\nD = 0.2\n", "D"),
    ],
)
def test_invalid_configs_name_the_field(text, key):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.key == key
    assert f"'{key}'" in str(err.value)


def test_error_reports_line():
    with pytest.raises(ConfigError) as err:
        parse_config("# comment\nD = 0.3\nt = 0\n")
    assert "t" in str(err.value)
    with pytest.raises(ConfigError) as err:
        parse_config("D = 0.3\nnot a pair\n")
    assert err.value.line == 2


def test_missing_grid_named():
    with pytest.raises(ConfigError) as err:
        load_config(None).queries()
    assert err.value.key == "kappa"


def test_replace_overrides():
    cfg = load_config(None).replace(seed=5, samples=100, out=None)
    assert cfg["master_seed"] == 5 and cfg["n_samples"] == 100
    with pytest.raises(ConfigError):
        load_config(None).replace(samples=0)


@given(
    D=st.floats(0.01, 0.49),
    sigma0=st.floats(0.01, 1.0),
    ks=st.lists(st.floats(-2, 2), min_size=1, max_size=5, unique=True),
)
def test_dump_round_trip(D, sigma0, ks):
    text = f"D = {D!r}\nsigma0 = {sigma0!r}\nkappa = {', '.join(repr(k) for k in sorted(ks))}\nt = 0.1\n"
    cfg = parse_config(text)
    again = parse_config(dump_config(cfg))
    assert again.values == cfg.values
    assert again.params() == cfg.params()


def test_validation_error_carries_line():
    with pytest.raises(ConfigError) as err:
        parse_config("# header\nD = 0.7\n")
    assert err.value.line == 2 and err.value.key == "D"
    assert str(err.value).startswith("line 2, field 'D': must lie")
