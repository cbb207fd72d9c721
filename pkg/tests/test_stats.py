import math

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from tracebias import stats
from tracebias.stats import ConvergenceError, betainc, pearson_r, t_cdf, t_sf_two_tailed

from .oracles import pearson_textbook, t_two_tailed_quadrature


@pytest.mark.parametrize("t", [0.5, 2.0, 5.0])
@pytest.mark.parametrize("df", [3, 30, 107])
def test_t_pvalue_vs_quadrature(t, df):
    assert abs(t_sf_two_tailed(t, df) - t_two_tailed_quadrature(t, df)) < 1e-8


def test_t_known_values():
    # df = 1 is Cauchy: two-tailed p = 1 - 2 atan(t) / pi
    for t in (0.3, 1.0, 7.0):
        assert t_sf_two_tailed(t, 1) == pytest.approx(1 - 2 * math.atan(t) / math.pi, abs=1e-13)
    # df = 2 has closed form p = 1 - t / sqrt(2 + t^2)
    for t in (0.3, 1.0, 7.0):
        assert t_sf_two_tailed(t, 2) == pytest.approx(1 - t / math.sqrt(2 + t * t), abs=1e-13)


def test_t_symmetry_and_limits():
    assert t_sf_two_tailed(0.0, 10) == 1.0
    assert t_sf_two_tailed(-2.0, 10) == t_sf_two_tailed(2.0, 10)
    assert t_sf_two_tailed(math.inf, 10) == 0.0
    assert t_cdf(0.0, 5) == pytest.approx(0.5)
    assert t_cdf(-1.3, 7) + t_cdf(1.3, 7) == pytest.approx(1.0, abs=1e-14)


@given(st.floats(0.1, 50), st.floats(0.1, 50), st.floats(1e-3, 1 - 1e-3))
def test_betainc_reflection(a, b, x):
    assert betainc(a, b, x) == pytest.approx(1 - betainc(b, a, 1 - x), abs=1e-10)


def test_betainc_edges_and_closed_form():
    assert betainc(2, 3, 0.0) == 0.0
    assert betainc(2, 3, 1.0) == 1.0
    # I_x(a, 1) = x^a
    assert betainc(3.5, 1, 0.4) == pytest.approx(0.4 ** 3.5, rel=1e-12)
    with pytest.raises(ValueError):
        betainc(-1, 2, 0.5)


def test_betainc_iteration_cap(monkeypatch):
    monkeypatch.setattr(stats, "CF_MAX_ITER", 3)
    with pytest.raises(ConvergenceError):
        betainc(50.0, 50.0, 0.45)


def test_pearson_hand_case():
    res = pearson_r([1, 2, 3, 4, 5], [2, 1, 4, 3, 5])
    assert res.r == pytest.approx(0.8, abs=1e-15)
    assert res.df == 3 and res.n == 5
    assert res.t == pytest.approx(0.8 * math.sqrt(3 / (1 - 0.64)))


def test_pearson_perfect():
    x = list(range(10))
    up = pearson_r(x, x)
    assert up.r == 1.0 and up.p_two_tailed == 0.0
    assert pearson_r(x, [-v for v in x]).r == -1.0


floats = st.floats(-1e3, 1e3, allow_nan=False)


@given(st.lists(floats, min_size=3, max_size=30, unique=True), st.floats(0.01, 100), floats,
       st.booleans())
def test_pearson_affine(x, a, b, negate):
    assume(max(x) - min(x) > 1e-3)
    a = -a if negate else a
    r = pearson_r(x, [a * v + b for v in x]).r
    assert abs(r - (-1.0 if negate else 1.0)) <= 1e-12


@given(st.lists(st.tuples(floats, floats), min_size=3, max_size=30))
def test_pearson_vs_textbook(pairs):
    x, y = zip(*pairs)
    assume(max(x) - min(x) > 1e-3 and max(y) - min(y) > 1e-3)
    res = pearson_r(x, y)
    assert res.r == pytest.approx(pearson_textbook(x, y), abs=1e-9)
    assert -1.0 <= res.r <= 1.0 and 0.0 <= res.p_two_tailed <= 1.0


def test_pearson_errors():
    with pytest.raises(ValueError):
        pearson_r([1, 2], [1, 2])
    with pytest.raises(ValueError):
        pearson_r([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson_r([1, 2, 3], [1, 2])
