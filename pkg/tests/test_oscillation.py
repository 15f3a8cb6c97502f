import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from qpspec.fd_box import box_count, box_count_converged
from qpspec.oscillation import (EssentialSpectrumError, SignDefinitenessError,
                                check_sturm_comparison, check_triangle,
                                check_wronskian_comparison, eigenvalue_count, relative_count,
                                sturm_pair, wronskian_triple, wronskian_zero_count)
from qpspec.potential import (FrequencyVector, PerturbationSpec, PotentialSpec,
                              TorusFunction)
from qpspec.repro import corpus, random_pair, random_triple

FREE = PotentialSpec.free()
INV_SQ = PotentialSpec.free(perturbation=PerturbationSpec.power(-1.0, 2.0))
UPPER_EDGE_03 = 2.006815438  # (1,1) upper edge of the 0.3 golden cosine


def _const(c):
    return PotentialSpec(FrequencyVector((1.0,)), TorusFunction.constant(1, c))


def _roots(f, a, b, n=20000):
    xs = np.linspace(a, b, n)
    v = f(xs)
    idx = np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]
    return np.array([brentq(f, xs[i], xs[i + 1]) for i in idx])


def test_identical_solutions_have_no_wronskian_zeros():
    pot = PotentialSpec.golden_cosine(0.3)
    assert wronskian_zero_count(pot, pot, 1.0, 1.0, 100.0, 0.4).count == 0


def test_constant_versus_sine():
    # u0 = 1 (E = 0), u1 = sin x (E = 1): W = cos x vanishes 6 times on (1, 20)
    tr = wronskian_zero_count(FREE, FREE, 0.0, 1.0, 20.0, math.pi / 2, 1.0)
    assert tr.count == 6
    expected = np.pi / 2 + np.pi * np.arange(6)
    assert np.allclose(tr.zero_positions, expected, atol=1e-6)


def test_count_equals_winding_and_zeros_alternate():
    pot0 = PotentialSpec.golden_cosine(0.3)
    pot1 = pot0.with_perturbation(PerturbationSpec.power(-2.0, 1.5))
    tr = wronskian_zero_count(pot0, pot1, 0.8, 0.8, 300.0, 0.2, 0.2)
    assert tr.count == tr.winding
    assert np.all(np.diff(tr.zero_positions) > 0)


def test_inverse_square_box_count_matches_fd():
    lam, L = -0.01, 1e3
    c, _ = relative_count(FREE, INV_SQ, lam, L, right_bc="dirichlet")
    q = lambda x: -1.0 / x**2
    fd1 = box_count(q, lam, 1.0, L, 4000, "log")
    fd2 = box_count(q, lam, 1.0, L, 8000, "log")
    assert fd1 == fd2
    assert abs(c - fd2) <= 2


def test_empty_window_counts_zero():
    pot1 = PotentialSpec.golden_cosine(0.3, perturbation=PerturbationSpec.power(1.0, 2.0))
    res = eigenvalue_count(pot1, 1.7, 1.7, 1e3)
    assert res.count == 0


def test_window_count_below_free_edge_matches_fd():
    res = eigenvalue_count(INV_SQ, -0.04, -0.0004, 4e3)
    q = lambda x: -1.0 / x**2
    hi, _ = box_count_converged(q, -0.0004, 1.0, 4e3, 4000, "log")
    lo, _ = box_count_converged(q, -0.04, 1.0, 4e3, 4000, "log")
    assert abs(res.count - (hi - lo)) <= res.slack


def test_quasiperiodic_window_near_upper_edge_matches_fd():
    pot0 = PotentialSpec.golden_cosine(0.3)
    pot1 = pot0.with_perturbation(PerturbationSpec.power(-1.0, 2.0))
    lam0, lam1, L = 1.75, UPPER_EDGE_03 - 1e-3, 1500.0

    def fd(pot, lam):
        n, ok = box_count_converged(lambda x: pot.evaluate(x), lam, 1.0, L, 75000)
        return n

    oracle = (fd(pot1, lam1) - fd(pot0, lam1)) - (fd(pot1, lam0) - fd(pot0, lam0))
    box = eigenvalue_count(pot1, lam0, lam1, L, right_bc="dirichlet")
    assert abs(box.count - oracle) <= 2
    wkb = eigenvalue_count(pot1, lam0, lam1, L)
    assert abs(wkb.count - oracle) <= 2


def test_window_touching_spectrum_rejected():
    with pytest.raises(EssentialSpectrumError):
        eigenvalue_count(INV_SQ, 0.5, 1.0, 1e3)


def test_sign_indefinite_difference_rejected():
    with pytest.raises(SignDefinitenessError):
        wronskian_zero_count(PotentialSpec.golden_cosine(0.3, n=(1, 0)),
                             PotentialSpec.free(2), 1.0, 1.0, 50.0)


def test_sturm_comparison_explicit_sinusoids():
    # q0 = 1, q1 = 0, E = 2: u0 = sin x, u1 = sin(sqrt2 x)
    r2 = math.sqrt(2.0)
    a, b = 1.0, 60.0
    z0 = _roots(np.sin, a, b)
    z1 = _roots(lambda x: np.sin(r2 * x), a, b)
    zw = _roots(lambda x: np.sin(x) * r2 * np.cos(r2 * x) - np.cos(x) * np.sin(r2 * x), a, b)
    assert check_sturm_comparison(z0, zw, z1).passed
    t0 = 1.0
    t1 = math.atan2(math.sin(r2), r2 * math.cos(r2)) % math.pi
    rep = sturm_pair(_const(1.0), FREE, 2.0, b, t0, t1)
    assert rep.passed and rep.intervals_checked > 0


def test_sturm_identical_is_skipped():
    rep = sturm_pair(FREE, FREE, 1.0, 50.0)
    assert rep.passed and rep.skipped


def test_sturm_detects_violation():
    # zeros of u1 removed between two zeros of u0
    rep = check_sturm_comparison([1.0, 2.0, 3.0], [], [1.5, 3.5])
    assert not rep.passed and rep.first_violation == (2.0, 3.0)


def test_wronskian_comparison_degenerate_pair_skipped():
    rep, tri, counts = wronskian_triple([(FREE, 1.0, 0.3), (FREE, 1.0, 0.3), (FREE, 2.0, 0.3)],
                                        50.0)
    assert rep.passed and counts[0] == 0 and "skipped" in rep.note


def test_wronskian_comparison_detects_missing_flip():
    rep = check_wronskian_comparison([1.0, 2.0], [5.0], [3.0])
    assert not rep.passed and rep.first_violation == (1.0, 2.0)
    assert check_wronskian_comparison([1.0, 2.0], [5.0], [1.5]).passed


def test_wronskian_comparison_free_triple():
    rep, tri, counts = wronskian_triple([(FREE, 0.0, 0.0), (FREE, 1.0, 0.0), (FREE, 2.0, 0.0)],
                                        60.0)
    assert rep.passed and tri
    assert counts[0] > 0 and counts[2] >= counts[0]


def test_wronskian_comparison_perturbed_triple():
    base = PotentialSpec.golden_cosine(0.3)
    triple = [(base.with_perturbation(PerturbationSpec.power(1.0, 2.0)), 2.0, 0.1),
              (base, 2.5, 0.7),
              (base.with_perturbation(PerturbationSpec.power(-1.0, 1.0)), 3.0, 2.0)]
    rep, tri, _ = wronskian_triple(triple, 200.0)
    assert rep.passed and tri


def test_ordering_precondition():
    with pytest.raises(ValueError):
        wronskian_triple([(FREE, 2.0, 0.0), (FREE, 1.0, 0.0), (FREE, 3.0, 0.0)], 30.0)


def test_triangle_predicate():
    assert check_triangle(3, 4, 6) and check_triangle(3, 4, 8)
    assert not check_triangle(3, 4, 5) and not check_triangle(3, 4, 9)


@given(st.integers(0, 10_000))
def test_triangle_and_comparison_on_random_triples(seed):
    triple, x_end = random_triple(np.random.default_rng(seed))
    rep, tri, counts = wronskian_triple(triple, x_end)
    assert tri, counts
    assert rep.passed, rep.note


@given(st.integers(0, 10_000))
def test_sturm_on_random_pairs(seed):
    pot0, pot1, E, x_end, t0, t1 = random_pair(np.random.default_rng(seed))
    assert sturm_pair(pot0, pot1, E, x_end, t0, t1).passed


def test_counts_stable_under_tolerance_halving():
    for _, pot, E, dists in corpus():
        for d in dists:
            lam = E - d
            x_end = min(40.0 / math.sqrt(d), 4e5)
            a, _ = relative_count(pot.background(), pot, lam, x_end, tol=1e-9)
            b, _ = relative_count(pot.background(), pot, lam, x_end, tol=5e-10)
            assert a == b


def test_fd_box_free_levels():
    # eigenvalues k^2 on a box of length pi
    assert box_count(lambda x: 0 * x, 10.0, 1.0, 1.0 + math.pi, 2000) == 3
    assert box_count(lambda x: 0 * x, 10.0, 1.0, 1.0 + math.pi, 4000, "log") == 3
