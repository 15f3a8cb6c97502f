import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qpspec.criticality import (CRITICAL, NONOSCILLATORY, OSCILLATORY, CriticalityRecord,
                                LevelConditionError, UnboundedSolutionError, birkhoff_K,
                                edge_accumulation_census, free_edge_record,
                                iterated_log_classify, kneser_classify)
from qpspec.potential import GOLDEN, FrequencyVector, PerturbationSpec, PotentialSpec
from qpspec.rotation import EdgeRecord

GOLDEN_03 = PotentialSpec.golden_cosine(0.3)
PLATEAU = 0.5 * (1.0 + GOLDEN)
# refined (1,1) edges of the 0.3 golden cosine
LOWER_E = 1.4071026383835223
UPPER_E = 2.00681543814734
# |K| from the band dispersion (rho(E) - plateau)^2 / |E - edge| at distance 1e-4
LOWER_K_DISPERSION = 0.09570
UPPER_K_DISPERSION = 0.08033


def _edge(side, E, label=(1, 1)):
    return EdgeRecord(label, side, E, (E, E), PLATEAU)


@pytest.fixture(scope="module")
def gap_records():
    return {s: birkhoff_K(_edge(s, E), GOLDEN_03)
            for s, E in (("lower", LOWER_E), ("upper", UPPER_E))}


def test_free_edge_constant():
    rec = birkhoff_K(0.0, PotentialSpec.free())
    assert rec.K == pytest.approx(1.0, rel=1e-2)
    assert rec.mu_crit == pytest.approx(-0.25, rel=1e-2)
    exact = free_edge_record()
    assert exact.K == 1.0 and exact.mu_crit == -0.25


def test_gap_edge_sign_law(gap_records):
    assert gap_records["upper"].K > 0
    assert gap_records["lower"].K < 0


def test_gap_edge_constants_match_dispersion(gap_records):
    assert abs(gap_records["lower"].K) == pytest.approx(LOWER_K_DISPERSION, rel=1e-2)
    assert gap_records["upper"].K == pytest.approx(UPPER_K_DISPERSION, rel=1e-2)


def test_gap_edge_window_spread(gap_records):
    for rec in gap_records.values():
        assert rec.spread <= 1e-2
        assert rec.K == rec.windows[-1][1]


def test_off_edge_energy_rejected():
    with pytest.raises(UnboundedSolutionError):
        birkhoff_K(0.5 * (LOWER_E + UPPER_E), GOLDEN_03)


@given(st.floats(0.01, 100.0), st.floats(0.01, 3.0), st.sampled_from([-1.0, 1.0]))
def test_rescaling_leaves_verdicts_unchanged(c, size, sign):
    mu = sign * size
    rec = free_edge_record()
    big = rec.rescaled(c)
    assert big.K == rec.K
    assert big.slope * big.mean_square == pytest.approx(rec.slope * rec.mean_square)
    for gamma in (1.0, 2.0, 3.0):
        pert = PerturbationSpec.power(mu, gamma)
        assert kneser_classify(big, pert) == kneser_classify(rec, pert)


@pytest.mark.parametrize("mu, gamma, verdict", [
    (-1.0, 2.0, OSCILLATORY),
    (-0.1, 2.0, NONOSCILLATORY),
    (-1.0, 3.0, NONOSCILLATORY),
    (-0.01, 1.0, OSCILLATORY),
    (1.0, 1.0, NONOSCILLATORY),
    (-0.25, 2.0, CRITICAL),
])
def test_kneser_power_laws_at_free_edge(mu, gamma, verdict):
    assert kneser_classify(free_edge_record(), PerturbationSpec.power(mu, gamma)) == verdict


def test_kneser_sampled_perturbation():
    xs = np.geomspace(1.0, 1e13, 400)
    rec = free_edge_record()
    strong = PerturbationSpec("custom", table=(tuple(xs), tuple(-0.3 / xs**2)))
    weak = PerturbationSpec("custom", table=(tuple(xs), tuple(-0.2 / xs**2)))
    assert kneser_classify(rec, strong) == OSCILLATORY
    assert kneser_classify(rec, weak) == NONOSCILLATORY


def test_kneser_lower_edge_uses_sign_of_K():
    lower = CriticalityRecord(_edge("lower", 1.0), -0.1, [], 1.0)
    assert kneser_classify(lower, PerturbationSpec.power(3.0, 2.0)) == OSCILLATORY
    assert kneser_classify(lower, PerturbationSpec.power(-3.0, 2.0)) == NONOSCILLATORY


@pytest.mark.parametrize("level", [1, 2])
def test_iterated_log_ladder(level):
    rec = free_edge_record()

    def pert(excess):
        return PerturbationSpec("iterated_log", level=level, K=1.0, excess=excess)

    assert iterated_log_classify(rec, pert(-0.3)) == OSCILLATORY
    assert iterated_log_classify(rec, pert(-0.2)) == NONOSCILLATORY
    # dq equal to the level-n reference potential itself
    assert iterated_log_classify(rec, pert(0.0)) == NONOSCILLATORY


def test_iterated_log_level_condition():
    rec = free_edge_record()
    wrong_K = PerturbationSpec("iterated_log", level=1, K=2.0, excess=-0.3)
    with pytest.raises(LevelConditionError):
        iterated_log_classify(rec, wrong_K)
    with pytest.raises(ValueError):
        iterated_log_classify(rec, PerturbationSpec.power(-1.0, 2.0))


def _synthetic_records(freq, C=0.5):
    recs = []
    for k in range(1, 8):
        E = 0.25 * (k * freq.array.sum()) ** 2
        K = C / (2 * k) ** freq.tau / math.sqrt(E)
        recs.append(CriticalityRecord(_edge("upper", E, (k, k)), K, [], 1.0))
        recs.append(CriticalityRecord(_edge("lower", E - 0.01, (k, k)), -K, [], 1.0))
    return recs


def test_census_power_laws():
    freq = FrequencyVector((1.0, GOLDEN))
    recs = _synthetic_records(freq)
    none = edge_accumulation_census(recs, PerturbationSpec.power(-1.0, 3.0), freq)
    assert none.positive == 0 and none.finite
    slow = edge_accumulation_census(recs, PerturbationSpec.power(-1.0, 1.0), freq)
    assert all(pos == (e.side == "upper") for e, pos in slow.verdicts)
    assert not slow.finite
    crit = edge_accumulation_census(recs, PerturbationSpec.power(-5.0, 2.0), freq)
    assert 0 < crit.positive < len(recs) // 2
    assert crit.finite and math.isfinite(crit.label_bound)
    for (e, pos), rec in zip(crit.verdicts, recs):
        assert pos == (-5.0 / rec.mu_crit > 1.0)
        if pos:
            assert sum(e.label) <= crit.label_bound


def test_census_needs_power_law():
    with pytest.raises(ValueError):
        edge_accumulation_census([free_edge_record()],
                                 PerturbationSpec("iterated_log", level=1, K=1.0))
