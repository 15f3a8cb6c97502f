import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpspec.averaging import (BOUNDED, MARGINAL, UNBOUNDED, PhaseOdeSpec,
                              check_averaged_equation, classify_grid, classify_phase_ode,
                              slow_variation_holds, window_average)

RATE = 0.5 * math.sqrt(3.0)


def test_unbounded_rate():
    v = classify_phase_ode(PhaseOdeSpec.constant(1.0, 1.0))
    assert v.verdict == UNBOUNDED
    assert v.rate == pytest.approx(RATE, rel=1e-3)


def test_negative_rate():
    v = classify_phase_ode(PhaseOdeSpec.constant(-1.0, -1.0))
    assert v.verdict == UNBOUNDED
    assert v.rate == pytest.approx(-RATE, rel=1e-3)


def test_bounded():
    v = classify_phase_ode(PhaseOdeSpec.constant(1.0, 0.0))
    assert v.verdict == BOUNDED and v.range < 2 * math.pi


def test_marginal():
    assert classify_phase_ode(PhaseOdeSpec.constant(0.5, 0.5)).verdict == MARGINAL


def test_rate_stable_under_horizon_doubling():
    spec = PhaseOdeSpec.constant(1.0, 2.0, power=0.5)
    a = classify_phase_ode(spec)
    b = classify_phase_ode(spec, horizon=2.0 * a.horizon)
    assert abs(b.rate - a.rate) <= 1e-2 * abs(a.rate)
    assert a.rate == pytest.approx(spec.predicted_rate(), rel=1e-2)


def test_integrable_rate_rejected():
    with pytest.raises(ValueError):
        classify_phase_ode(PhaseOdeSpec.constant(1.0, 1.0, rho_kind="exp"))
    with pytest.raises(ValueError):
        classify_phase_ode(PhaseOdeSpec.constant(1.0, 1.0, power=1.5))


@settings(max_examples=15)
@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_verdict_follows_discriminant(A, B):
    disc = 4 * A * B - 1
    v = classify_phase_ode(PhaseOdeSpec.constant(A, B))
    if abs(disc) < 0.1:
        assert v.verdict == MARGINAL
    elif disc > 0:
        assert v.verdict == UNBOUNDED
        assert v.rate == pytest.approx(math.copysign(0.5 * math.sqrt(disc), A), rel=1e-2)
    else:
        assert v.verdict == BOUNDED


def test_grid_table():
    vals = (-1.0, 0.0, 1.0)
    rows = classify_grid(vals)
    assert len(rows) == 9
    for A, B, v in rows:
        expected = UNBOUNDED if 4 * A * B > 1 else BOUNDED
        assert v.verdict == expected


def test_window_average_constant_and_sine():
    x = np.linspace(0.0, 20.0, 20001)
    assert window_average(x, np.full_like(x, 3.0), 5.0, 1.0) == pytest.approx(3.0)
    assert window_average(x, np.sin(x), 2 * math.pi, 0.3) == pytest.approx(0.0, abs=1e-6)


def test_window_average_quasiperiodic_square():
    # U = cos x + cos(phi x): the torus mean of U^2 is 1
    phi = 0.5 * (1 + math.sqrt(5))
    x = np.linspace(0.0, 2e4, 2_000_001)
    U = np.cos(x) + np.cos(phi * x)
    assert window_average(x, U**2, 1.9e4, 0.0) == pytest.approx(1.0, abs=1e-3)


def test_window_outside_samples_rejected():
    x = np.linspace(0.0, 1.0, 11)
    with pytest.raises(ValueError):
        window_average(x, x, 2.0, 0.0)


@pytest.mark.parametrize("A, B", [
    ((1.0, 0.0, 0.0), (1.0, 0.0, 0.0)),
    ((1.0, 0.5, 0.0), (1.0, 0.0, 0.0)),
    ((1.0, 0.0, 2.0), (1.0, 0.3, 0.0)),
    ((1.0, 0.5, 0.0), (0.0, 0.0, 0.0)),
])
def test_averaged_equation_agrees(A, B):
    rep = check_averaged_equation(PhaseOdeSpec(A, B))
    assert rep.agree, rep


@pytest.mark.parametrize("p", [0.25, 1.0, 2.0])
def test_slow_variation_power(p):
    ok, worst = slow_variation_holds(lambda x: x ** -p)
    assert ok and worst <= 0.05


def test_slow_variation_fails_for_exponential():
    ok, worst = slow_variation_holds(lambda x: math.exp(-x))
    assert not ok
    assert worst == pytest.approx(math.exp(-1.0), rel=1e-6)
