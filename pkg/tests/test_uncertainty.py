import numpy as np
import pytest
from hypothesis import given, strategies as st

from gexpect import (ConfigurationError, Generator, InvalidArgumentError,
                     UnsupportedDimensionError, VolatilityBand, g_eval, is_nondegenerate,
                     perturb)


@pytest.mark.parametrize("band, a, expected", [
    ((1.0, 1.0), 2.0, 1.0),
    ((0.0, 1.0), -3.0, 0.0),
    ((0.25, 1.0), -2.0, -0.25),
])
def test_g_eval_examples(band, a, expected):
    assert g_eval(Generator.from_variances(*band), a) == pytest.approx(expected, abs=1e-15)


def test_g_eval_matches_grid_search_sup():
    gen = Generator.from_variances(0.25, 1.0)
    gammas = np.linspace(0.25, 1.0, 76)
    for a in np.linspace(-3, 3, 25):
        assert g_eval(gen, a) == pytest.approx(np.max(0.5 * gammas * a), abs=1e-14)


def test_g_eval_vectorized():
    gen = Generator.from_variances(0.25, 1.0)
    out = g_eval(gen, np.array([-2.0, 0.0, 2.0]))
    np.testing.assert_allclose(out, [-0.25, 0.0, 1.0])


@given(st.floats(0, 2), st.floats(0, 2), st.floats(-50, 50), st.floats(-50, 50),
       st.floats(0, 10))
def test_g_is_sublinear_and_monotone(lo, width, a, b, lam):
    gen = Generator.from_variances(lo, lo + width + 1e-3)
    assert g_eval(gen, a + b) <= g_eval(gen, a) + g_eval(gen, b) + 1e-9
    assert g_eval(gen, lam * a) == pytest.approx(lam * g_eval(gen, a), abs=1e-9)
    assert g_eval(gen, max(a, b)) >= g_eval(gen, min(a, b))


@pytest.mark.parametrize("band, expected", [
    ((0.25, 1.0), (True, 0.25)),
    ((0.0, 1.0), (False, 0.0)),
    ((1.0, 1.0), (True, 1.0)),
])
def test_is_nondegenerate(band, expected):
    assert is_nondegenerate(Generator.from_variances(*band)) == expected


def test_perturb_shifts_band():
    p = perturb(Generator.from_variances(0.0, 1.0), 0.5)
    assert (p.band.sigma_min_sq, p.band.sigma_max_sq) == (0.25, 1.25)
    g = Generator.from_variances(0.0, 1.0)
    assert perturb(g, 0.0).band == g.band


def test_perturb_adds_laplacian_term():
    g = Generator.from_variances(0.25, 1.0)
    p = perturb(g, 0.1)
    assert p.band.sigma_min_sq == pytest.approx(0.26)
    assert p.band.sigma_max_sq == pytest.approx(1.01)
    ok, lo = is_nondegenerate(p)
    assert ok and lo == pytest.approx(0.26)
    a = np.linspace(-4, 4, 33)
    np.testing.assert_allclose(g_eval(p, a), g_eval(g, a) + 0.5 * 0.01 * a, atol=1e-14)


def test_perturb_rejects_negative_eps():
    with pytest.raises(InvalidArgumentError):
        perturb(Generator.from_variances(0.0, 1.0), -0.1)


@pytest.mark.parametrize("lo, hi", [(-0.1, 1.0), (1.0, 0.5), (float("nan"), 1.0)])
def test_band_validation(lo, hi):
    with pytest.raises((InvalidArgumentError, ConfigurationError)):
        VolatilityBand(lo, hi)


def test_null_band_is_explicit():
    with pytest.raises((InvalidArgumentError, ConfigurationError)):
        VolatilityBand(0.0, 0.0)
    null = Generator.from_variances(0.0, 0.0)
    assert null.band.is_null
    assert g_eval(null, 5.0) == 0.0


def test_dimension_other_than_one_is_unsupported():
    with pytest.raises(UnsupportedDimensionError):
        g_eval(Generator(VolatilityBand(0.25, 1.0), dimension=2), 1.0)
