import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpspec.kam import (J, EnergyBelowThresholdError, KamState, MatrixTorusField,
                        free_normalization, kam_step, rotation_of, run_reduction,
                        setup_transform, torus_grid, verify_normal_form)
from qpspec.potential import GOLDEN, PotentialSpec

BAND = PotentialSpec.golden_cosine(0.1)
XS = np.linspace(0.0, 100.0, 201)
# rotation number of BAND at E = 4.5 from the Pruefer angle over [0, 2e5]
BAND_RHO = 2.1208975878252665


@pytest.fixture(scope="module")
def band_run():
    return run_reduction(BAND, 4.5)


def test_free_transform_is_trivial():
    A1, F1 = setup_transform(PotentialSpec.free(2), 9.0)
    assert np.array_equal(A1, 3.0 * J)
    assert F1.norm() == 0.0


def test_transform_conjugates_the_cocycle():
    pot = PotentialSpec.golden_cosine(0.3)
    E = 100.0
    A1, F1 = setup_transform(pot, E)
    Y1 = free_normalization(E)
    y = np.random.default_rng(1).uniform(0, 2 * math.pi, (5, 2))
    for yi, Fi in zip(y, F1.evaluate(y)):
        Q = 0.6 * math.cos(yi[0] + yi[1])
        M = np.array([[0.0, 1.0], [Q - E, 0.0]])
        assert np.allclose(np.linalg.solve(Y1, M @ Y1), A1 + Fi, atol=1e-12)
    assert abs(np.trace(F1.mean())) <= 1e-12
    proxy = pot.sup_bound / (2.0 * math.sqrt(E))
    assert proxy == pytest.approx(0.03)


def test_threshold_enforced():
    with pytest.raises(EnergyBelowThresholdError):
        setup_transform(PotentialSpec.golden_cosine(0.3), 1.0)
    with pytest.raises(ValueError):
        setup_transform(PotentialSpec.free(2), -1.0)


def test_field_norm_and_reality():
    E = 100.0
    _, F1 = setup_transform(PotentialSpec.golden_cosine(0.3), E)
    assert F1.reality_defect() == 0.0
    # two modes of size 0.3 / (2 sqrt E) at |k|_1 = 2
    assert F1.norm() == pytest.approx(2 * 0.3 / 20.0)
    assert F1.norm(0.5) == pytest.approx(2 * 0.3 / 20.0 * math.e)


@settings(max_examples=10)
@given(st.integers(0, 1000))
def test_field_grid_round_trip(seed):
    rng = np.random.default_rng(seed)
    F = MatrixTorusField(2, 3)
    F.coeffs = rng.normal(size=F.coeffs.shape) + 1j * rng.normal(size=F.coeffs.shape)
    back = MatrixTorusField.from_grid(F.on_grid(16), 3)
    G = F.on_grid(16)
    y = torus_grid(2, 16)
    assert np.allclose(F.evaluate(y.reshape(-1, 2)), G.reshape(-1, 2, 2))
    assert back.reality_defect() <= 1e-12


def test_rotation_of():
    assert rotation_of(2.0 * J) == pytest.approx(2.0)
    assert rotation_of(-2.0 * J) == pytest.approx(-2.0)
    assert rotation_of(np.diag([1.0, -1.0])) == 0.0


def test_free_run_single_trivial_step():
    run = run_reduction(PotentialSpec.free(2), 4.0)
    assert run.converged and len(run.reports) == 1
    assert run.reports[0].eps == 0.0
    assert np.allclose(run.state.A, 2.0 * J)


def test_band_run_superlinear(band_run):
    sizes = band_run.sizes
    assert band_run.converged and len(sizes) >= 4
    logs = [math.log(s) for s in sizes]
    assert all(b / a > 1.0 for a, b in zip(logs[:3], logs[1:4]))
    assert all(b < a for a, b in zip(sizes, sizes[1:]))


def test_band_run_invariants(band_run):
    assert abs(np.trace(band_run.state.A)) <= 1e-10
    assert band_run.norms.det_defect <= 1e-10
    assert not band_run.violations
    assert band_run.norms.rho_trace[-1] == pytest.approx(BAND_RHO, abs=1e-9)


def test_band_normal_form_matches_direct_integration(band_run):
    assert verify_normal_form(band_run.state, BAND, 4.5, XS) <= 1e-6


def test_run_is_deterministic(band_run):
    again = run_reduction(BAND, 4.5)
    assert again.sizes == band_run.sizes
    assert np.array_equal(again.state.A, band_run.state.A)


def test_resonant_step_opens_gap():
    # A = J / 2 with an anticommuting mode at m = (1, 0), <omega, m> = 1 = 2 alpha
    omega = np.array([1.0, GOLDEN])
    delta = 1e-3
    F = MatrixTorusField(2, 4)
    P = np.diag([1.0, -1.0])
    F.coeffs[5, 4] = F.coeffs[3, 4] = 0.5 * delta * P
    state = KamState(1, 0.5 * J, F, delta, 10, 0.75, 0.1, 0.5, omega, np.zeros(2),
                     [], 0.5, [], 1.0)
    new, rep = kam_step(state)
    assert rep.m in ((1, 0), (-1, 0))
    assert new.alpha == 0.0
    assert new.rho_partial == pytest.approx(0.5)
    assert rep.F_size < delta**2
