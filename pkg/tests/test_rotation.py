import math

import numpy as np
import pytest

from qpspec.fd_box import box_count_converged
from qpspec.potential import GOLDEN, PotentialSpec
from qpspec.rotation import (default_threshold_energy, find_edges, refine_edge,
                             rotation_number, rotation_scan)

GAP_MID = 1.7  # inside the (1,1) gap of the 0.3 golden cosine
PLATEAU = 0.5 * (1.0 + GOLDEN)


def _fd_ids(pot, E, L, h=0.02):
    n = int((L - 1.0) / h)
    count, ok = box_count_converged(lambda x: pot.evaluate(x), E, 1.0, L, n)
    assert ok
    return count / (L - 1.0)


def test_free_rotation_numbers():
    pot = PotentialSpec.free()
    assert rotation_number(pot, 4.0).rho == pytest.approx(2.0, abs=1e-3)
    assert rotation_number(pot, 0.0).rho == pytest.approx(0.0, abs=1e-3)


def test_short_horizon_rejected():
    with pytest.raises(ValueError):
        rotation_number(PotentialSpec.free(), 1.0, horizon=10.0)


def test_gap_plateau_matches_box_oracle():
    pot = PotentialSpec.golden_cosine(0.3)
    # oracle: Dirichlet box counts at two sizes sit on the plateau
    for L in (2000.0, 4000.0):
        assert math.pi * _fd_ids(pot, GAP_MID, L) == pytest.approx(PLATEAU, abs=2 * math.pi / L)
    assert rotation_number(pot, GAP_MID).rho == pytest.approx(PLATEAU, abs=1e-4)


def test_ids_matches_box_counts_in_bands():
    pot = PotentialSpec.golden_cosine(0.3)
    energies = [0.3, 0.6, 0.9, 1.2, 2.3, 2.6, 3.0, 3.5, 4.0, 4.5]
    for est in rotation_scan(pot, energies, horizon=4e3):
        k_fd = _fd_ids(pot, est.energy, 3000.0)
        assert est.ids == pytest.approx(k_fd, rel=0.02)


def test_rho_monotone_in_energy():
    pot = PotentialSpec.golden_cosine(0.3)
    ests = rotation_scan(pot, np.linspace(-0.5, 3.0, 15), horizon=2e3)
    for a, b in zip(ests[:-1], ests[1:]):
        assert b.rho >= a.rho - (a.error_bar + b.error_bar) - 1e-12


def test_error_bar_shrinks_on_average():
    pot = PotentialSpec.golden_cosine(0.3)
    Es = [0.5, 1.0, 2.5, 3.5]
    short = np.mean([e.error_bar for e in rotation_scan(pot, Es, horizon=1e3)])
    long = np.mean([e.error_bar for e in rotation_scan(pot, Es, horizon=1e4)])
    assert long < short


def test_free_spectrum_has_single_edge_at_zero():
    recs = find_edges(PotentialSpec.free(), (0.0, 4.0), [(1,), (2,), (3,)], grid=16)
    resolved = [r for r in recs if r.resolved]
    assert len(resolved) == 1
    assert resolved[0].side == "upper" and abs(resolved[0].energy) < 1e-7
    assert all(r.bracket_width <= 1e-8 for r in resolved)


def test_zero_label_rejected():
    with pytest.raises(ValueError):
        find_edges(PotentialSpec.golden_cosine(0.1), (1.0, 2.0), [(0, 0)])


@pytest.fixture(scope="module")
def small_gap():
    pot = PotentialSpec.golden_cosine(0.1)
    return pot, find_edges(pot, (1.5, 1.95), [(1, 1)], grid=16, include_bottom=False)


def test_small_coupling_gap_bracketed(small_gap):
    pot, recs = small_gap
    assert [r.side for r in recs] == ["lower", "upper"]
    assert all(r.resolved and r.bracket_width <= 1e-8 for r in recs)
    assert all(r.plateau == pytest.approx(PLATEAU) for r in recs)
    lo, hi = recs[0].energy, recs[1].energy
    # box oracle: the IDS is flat across the gap and rises outside it
    L = 3000.0
    inside = [_fd_ids(pot, E, L) for E in np.linspace(lo + 0.01, hi - 0.01, 3)]
    assert max(inside) - min(inside) <= 2.0 / L
    assert math.pi * inside[0] == pytest.approx(PLATEAU, abs=2 * math.pi / L)
    assert _fd_ids(pot, lo - 0.05, L) < inside[0] - 2.0 / L
    assert _fd_ids(pot, hi + 0.05, L) > inside[0] + 2.0 / L


def test_gap_interior_plateau_spread(small_gap):
    pot, recs = small_gap
    lo, hi = recs[0].energy, recs[1].energy
    horizon = 2e4
    rho_tol = 0.05 * math.pi / horizon
    vals = [e.rho for e in rotation_scan(pot, np.linspace(lo, hi, 7)[1:-1], horizon)]
    assert max(vals) - min(vals) <= 2 * rho_tol


def test_refined_edge_stays_in_bracket_scale(small_gap):
    pot, recs = small_gap
    for r in recs:
        rr = refine_edge(r, pot, horizon=2e4)
        assert abs(rr.energy - r.energy) <= 1e-6
        assert rr.side == r.side and rr.label == r.label


def test_threshold_energy_matches_proxy():
    pot = PotentialSpec.golden_cosine(0.3)
    E0 = default_threshold_energy(pot, 0.05)
    assert pot.sup_bound / (2 * math.sqrt(E0)) == pytest.approx(0.05)
