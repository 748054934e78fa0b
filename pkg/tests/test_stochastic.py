import math

import numpy as np
import pytest

from gexpect import ConfigurationError, InvalidArgumentError, VolatilityBand
from gexpect.phi_lang import from_catalog, parse
from gexpect.scenario_tree import (PathBatch, PathFunctional, TreeSpec, lower_expectation,
                                   pathwise_max, upper_expectation)
from gexpect.stochastic import (SimpleProcess, exp_martingale, exp_martingale_normalized,
                                j_epsilon, observe, perturbed_exp_martingale,
                                perturbed_exp_martingale_factorized, perturbed_observation,
                                perturbed_qv, qv_functional, shifted_observation,
                                shifted_perturbed_observation)

BAND = VolatilityBand(0.25, 1.0)
DEGEN = VolatilityBand(0.0, 1.0)
H = SimpleProcess.constant(0.5)
ZERO = SimpleProcess.constant(0.0)


def gap(F, G):
    return (F - G).map(np.abs, math.inf)


def test_simple_process_parsing():
    assert SimpleProcess.parse("const:0.5") == H
    h = SimpleProcess.parse("steps:1,2")
    assert h.values == (1.0, 2.0) and h.sup_norm == 2.0
    np.testing.assert_array_equal(h.on_grid(4), [1, 1, 2, 2])
    np.testing.assert_array_equal(h.on_grid(3), [1, 1, 2])
    assert SimpleProcess.parse(h.describe()) == h
    assert ZERO.is_zero and h.scaled(2).values == (2.0, 4.0)
    for bad in ("nope", "const:x", "steps:", "const:inf"):
        with pytest.raises(InvalidArgumentError):
            SimpleProcess.parse(bad)


def test_exp_martingale_zero_h_is_one():
    s = TreeSpec(6, 1.0, BAND, 2)
    assert pathwise_max(s, gap(exp_martingale(ZERO), PathFunctional.constant(1.0))) == 0.0
    assert pathwise_max(s, gap(exp_martingale_normalized(ZERO), PathFunctional.constant(1.0))) == 0.0


def test_exp_martingale_one_step():
    b = PathBatch.from_histories([[1.0]], [[1.0]], None, 1.0, 1.0)
    assert exp_martingale(SimpleProcess.constant(1.0))(b)[0] == pytest.approx(math.exp(0.5))


def test_exp_martingale_symmetric_at_m12():
    s = TreeSpec(12, 1.0, BAND, 2)
    E = exp_martingale(H)
    assert abs(upper_expectation(s, E) - 1) <= 1e-2
    assert abs(lower_expectation(s, E) - 1) <= 1e-2


@pytest.mark.parametrize("band", [BAND, DEGEN])
def test_normalized_martingale_is_exactly_one(band):
    s = TreeSpec(8, 1.0, band, 3)
    En = exp_martingale_normalized(SimpleProcess.parse("steps:0.5,-1,2"))
    assert upper_expectation(s, En) == pytest.approx(1.0, abs=1e-12)
    assert lower_expectation(s, En) == pytest.approx(1.0, abs=1e-12)


def test_normalized_and_plain_martingales_converge():
    devs = []
    for m in (6, 12):
        s = TreeSpec(m, 1.0, BAND, 2)
        ratio = exp_martingale_normalized(H) * exp_martingale(H).map(lambda v: 1 / v, math.inf)
        devs.append(pathwise_max(s, gap(ratio, PathFunctional.constant(1.0))))
    assert devs[1] < devs[0]


def test_shifted_observation():
    s = TreeSpec(4, 1.0, BAND, 2)
    shifted = PathFunctional(shifted_observation(ZERO, 1.0), math.inf)
    assert pathwise_max(s, gap(shifted, PathFunctional(lambda b: b.B(), math.inf))) == 0.0
    ones = PathBatch.from_histories(np.ones((2, 4)), [[1, 1, -1, 1], [-1, -1, 1, -1]], None,
                                    0.25, 1.0)
    np.testing.assert_allclose(shifted_observation(SimpleProcess.constant(1.0), 1.0)(ones),
                               ones.B() - 1.0)
    flat = PathBatch.from_histories(np.zeros((1, 4)), [[1, -1, 1, 1]], None, 0.25, 1.0)
    assert shifted_observation(SimpleProcess.constant(3.0), 1.0)(flat)[0] == 0.0
    with pytest.raises(InvalidArgumentError):
        shifted_observation(H, 0.3)(ones)


def test_j_epsilon():
    s = TreeSpec(6, 1.0, BAND, 2)
    h = SimpleProcess.constant(1.0)
    J0 = j_epsilon(1.0, 1.0, h, 0.0)
    assert upper_expectation(s, J0) == 1.0 and upper_expectation(s, -J0) == -1.0
    for eps in (0.4, 0.1):
        assert pathwise_max(s, gap(j_epsilon(1.0, 1.0, h, eps),
                                   exp_martingale(h.scaled(eps)))) <= 1e-14
    J = j_epsilon(1.0, 10.0, h, 0.3)
    assert lower_expectation(s, J) <= upper_expectation(s, J)
    with pytest.raises(InvalidArgumentError):
        j_epsilon(1.0, 1.0, h, -0.1)


def test_qv_functional_monotone_is_deterministic():
    s = TreeSpec(5, 1.0, BAND, 2)
    F = qv_functional(np.sqrt, 1.0)
    assert upper_expectation(s, F) == pytest.approx(1.0)
    assert lower_expectation(s, F) == pytest.approx(0.5)


def test_observe_checks_arity():
    with pytest.raises(InvalidArgumentError):
        observe(parse("x1 + x2", 2, 10.0), [shifted_observation(H, 1.0)])


# -- product space ------------------------------------------------------------------


PRODUCT = TreeSpec(5, 1.0, DEGEN, 2, product_space=True)


def test_perturbed_needs_product_space():
    s = TreeSpec(3, 1.0, DEGEN, 2)
    with pytest.raises(ConfigurationError):
        upper_expectation(s, PathFunctional(perturbed_observation(0.1, 1.0), math.inf))


def test_perturbed_at_zero_eps_is_b():
    B = PathFunctional(lambda b: b.B(), math.inf)
    assert pathwise_max(PRODUCT, gap(PathFunctional(perturbed_observation(0.0, 1.0), math.inf),
                                     B)) == 0.0
    shifted0 = PathFunctional(shifted_perturbed_observation(H, 0.0, 1.0), math.inf)
    assert pathwise_max(PRODUCT, gap(shifted0, PathFunctional(shifted_observation(H, 1.0),
                                                              math.inf))) <= 1e-15


@pytest.mark.parametrize("eps", [0.0, 0.1, 0.5])
def test_perturbed_quadratic_variation(eps):
    dq = PathFunctional(lambda b: perturbed_qv(eps)(b) - b.qv() - eps ** 2 * b.t_final, math.inf)
    assert pathwise_max(PRODUCT, dq.map(np.abs, math.inf)) <= 1e-12
    half = PathFunctional(lambda b: perturbed_qv(eps, 2)(b) - b.qv(2) - eps ** 2 * 2 * b.dt,
                          math.inf)
    assert pathwise_max(PRODUCT, half.map(np.abs, math.inf)) <= 1e-12


@pytest.mark.parametrize("eps", [0.0, 0.2, 0.4])
def test_perturbed_martingale_factorizes(eps):
    h = SimpleProcess.parse("steps:0.5,-1")
    assert pathwise_max(PRODUCT, gap(perturbed_exp_martingale(h, eps),
                                     perturbed_exp_martingale_factorized(h, eps))) <= 1e-12


def test_w_is_classical():
    # W has unit variance under every control: upper = lower
    sqW = PathFunctional.observe(from_catalog("sq"), [1.0], process="W")
    assert upper_expectation(PRODUCT, sqW) == pytest.approx(1.0, abs=1e-12)
    assert lower_expectation(PRODUCT, sqW) == pytest.approx(1.0, abs=1e-12)
