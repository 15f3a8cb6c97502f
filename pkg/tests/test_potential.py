import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qpspec.potential import (GOLDEN, DiophantineError, FrequencyVector, L_scale,
                              PerturbationSpec, PotentialSpec, Q_ladder, TorusFunction,
                              golden_frequency, iterated_log, torus_integral)


def test_zero_potential_evaluates_to_zero():
    assert PotentialSpec.free().evaluate(7.0) == 0.0


def test_cosine_on_first_coordinate_at_origin():
    q = TorusFunction(2, {(1, 0): 1.0, (-1, 0): 1.0})
    pot = PotentialSpec(golden_frequency(), q)
    assert pot.evaluate(0.0) == pytest.approx(2.0, abs=1e-14)


def test_inverse_square_perturbation_value():
    pot = PotentialSpec.free(perturbation=PerturbationSpec.power(-1.0, 2.0))
    assert pot.evaluate(2.0) == pytest.approx(-0.25, abs=1e-15)
    assert pot.evaluate(2.0, perturbed=False) == 0.0


def test_torus_integral_examples():
    assert torus_integral(TorusFunction.constant(1, 3.5)) == 3.5
    cos = TorusFunction.cosine((1,), 1.0)
    assert torus_integral(cos) == pytest.approx(0.0, abs=1e-15)
    # (cos z)^2 = 1/2 + cos(2z)/2
    assert torus_integral(cos * cos) == pytest.approx(0.5, abs=1e-14)


def test_golden_frequency_constants():
    f = golden_frequency()
    assert f.omega == (1.0, GOLDEN)
    assert f.kappa > 0 and f.tau == 2.0


def test_resonant_frequency_rejected():
    with pytest.raises(DiophantineError):
        FrequencyVector((1.0, 2.0))  # <(2,-1), w> = 0


def test_kappa_violation_rejected():
    with pytest.raises(DiophantineError):
        FrequencyVector((1.0, GOLDEN), kappa=10.0)


def test_indefinite_perturbation_rejected():
    with pytest.raises(ValueError):
        PerturbationSpec("custom", table=((1.0, 2.0, 3.0), (1.0, -1.0, 1.0)))


def test_power_law_needs_positive_gamma():
    with pytest.raises(ValueError):
        PerturbationSpec.power(-1.0, 0.0)


def test_ladder_recursion_and_first_reference():
    x = np.geomspace(20.0, 1e6, 9)
    for n in range(1, 3):
        assert np.allclose(L_scale(x, n), L_scale(x, n - 1) * iterated_log(x, n))
    assert np.allclose(L_scale(x, 0), x)
    assert np.allclose(Q_ladder(x, 1, 2.0), -1.0 / (4 * 2.0 * x**2))


@given(st.integers(1, 50))
def test_diophantine_check_monotone(n):
    f = golden_frequency(n_check=50)
    assert f.satisfies(n)


def _random_torus(draw_coeffs, dim):
    coeffs = {}
    for n, re, im in draw_coeffs:
        n = tuple(n[:dim])
        if not any(n):
            continue
        coeffs[n] = complex(re, im)
        coeffs[tuple(-k for k in n)] = complex(re, -im)
    return TorusFunction(dim, coeffs)


coeff_lists = st.lists(st.tuples(st.lists(st.integers(-3, 3), min_size=2, max_size=2),
                                 st.floats(-1, 1), st.floats(-1, 1)), max_size=4)


@given(coeff_lists, st.lists(st.floats(-10, 10), min_size=2, max_size=2))
def test_real_valued_and_bounded(cl, z):
    f = _random_torus(cl, 2)
    for n, c in f.coeffs.items():
        assert f.coeff(tuple(-k for k in n)) == pytest.approx(c.conjugate())
    direct = sum(c * np.exp(1j * np.dot(n, z)) for n, c in f.coeffs.items())
    assert abs(complex(direct).imag) < 1e-12
    assert f(np.array(z)) == pytest.approx(complex(direct).real, abs=1e-12)
    assert abs(f(np.array(z))) <= f.sup_bound() + 1e-12


@given(coeff_lists)
def test_parseval(cl):
    f = _random_torus(cl, 2)
    expected = sum(abs(c) ** 2 for c in f.coeffs.values())
    val = torus_integral(f * f)
    assert val >= -1e-14
    assert val == pytest.approx(expected, rel=1e-12, abs=1e-14)


@given(st.floats(1, 100), st.integers(-5, 5))
def test_single_frequency_periodicity(x, k):
    w = 1.7
    pot = PotentialSpec(FrequencyVector((w,)), TorusFunction.cosine((1,), 0.8) +
                        TorusFunction.cosine((2,), 0.3))
    shifted = x + 2 * math.pi * k / w
    assert pot.evaluate(x) == pytest.approx(pot.evaluate(shifted), abs=1e-10)


def test_unperturbed_equals_background():
    pot = PotentialSpec.golden_cosine(0.3)
    x = np.linspace(1, 50, 40)
    assert np.array_equal(pot.evaluate(x), pot.evaluate(x, perturbed=False))
