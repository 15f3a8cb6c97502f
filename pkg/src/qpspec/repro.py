"""Reproduction runs: one callable per acceptance check plus the regression corpus.

Every run returns a :class:`ReproResult` whose ``details`` are plain
JSON-serializable data.  :data:`RUNS` maps each name to its callable and
runtime budget in seconds.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import (counting_function, fit_counts, locate_eigenvalues,
                          verify_lower_bound, verify_upper_bound, weyl_count)
from .averaging import (MARGINAL, UNBOUNDED, PhaseOdeSpec, classify_grid,
                        classify_phase_ode)
from .criticality import (birkhoff_K, edge_accumulation_census, free_edge_record,
                          kneser_classify)
from .fd_box import box_count_converged
from .kam import run_reduction, verify_normal_form
from .oscillation import relative_count, sturm_pair, wronskian_triple
from .potential import (FrequencyVector, PerturbationSpec, PotentialSpec, TorusFunction,
                        golden_frequency)
from .rotation import find_edges, refine_edge, rotation_number

__all__ = ["ReproResult", "RUNS", "run", "corpus", "random_box_instance",
           "random_triple", "random_pair"]


@dataclass
class ReproResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    runtime: float = 0.0
    budget: float = math.inf

    @property
    def within_budget(self):
        return self.runtime <= self.budget

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} ({self.runtime:.1f} s, budget {self.budget:.0f} s)"


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    return v


def _power(mu, gamma):
    return PotentialSpec.free(perturbation=PerturbationSpec.power(mu, gamma))


# -- corpus -------------------------------------------------------------------

def corpus():
    """Instances ``(name, pot1, edge energy, distances)`` with inverse-square tails.

    All use the bottom of the free spectrum, where the background has no
    spectrum below the edge, so N(lam) is a single Wronskian count.
    """
    d = [1e-2, 1e-4, 1e-6, 1e-8]
    return [
        ("free-mu-1", _power(-1.0, 2.0), 0.0, d),
        ("free-mu-2", _power(-2.0, 2.0), 0.0, d),
        ("free-mu-0.5", _power(-0.5, 2.0), 0.0, d),
        ("free-mu-0.3", _power(-0.3, 2.0), 0.0, d),
        ("free-mu-0.1", _power(-0.1, 2.0), 0.0, d),
    ]


def _random_background(rng):
    if rng.random() < 0.5:
        freq, dim = FrequencyVector((1.0,)), 1
        labels = [(k,) for k in (1, 2, 3)]
    else:
        freq, dim = golden_frequency(), 2
        labels = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1)]
    picks = rng.choice(len(labels), size=int(rng.integers(1, 3)), replace=False)
    coeffs = {}
    for i in picks:
        c = complex(*rng.normal(size=2)) * 0.5
        n = labels[int(i)]
        coeffs[n] = c
        coeffs[tuple(-k for k in n)] = c.conjugate()
    coeffs[(0,) * dim] = float(rng.uniform(-0.5, 0.5))
    phase = tuple(rng.uniform(0, 2 * math.pi, dim))
    return PotentialSpec(freq, TorusFunction(dim, coeffs), phase)


def random_box_instance(rng):
    """Smooth background, sign-definite power-law difference, box and energy."""
    pot0 = _random_background(rng)
    mu = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 5.0))
    gamma = float(rng.uniform(1.0, 3.0))
    pot1 = pot0.with_perturbation(PerturbationSpec.power(mu, gamma))
    L = float(rng.uniform(15.0, 40.0))
    lam = float(rng.uniform(-1.0, 4.0))
    return pot0, pot1, L, lam


def random_triple(rng):
    """Three ``(pot, E, theta)`` with ``E_j - q_j`` nondecreasing in j.

    Energies lie above the potentials, where solutions oscillate: under a
    barrier two solutions of one equation align with the growing one and
    their angle difference underflows, which fakes Wronskian zeros.
    """
    base = _random_background(rng)
    top = base.sup_bound + 2.0
    mus = np.sort(rng.uniform(-2.0, 2.0, 3))[::-1]
    Es = np.sort(rng.uniform(top, top + 4.0, 3))
    if rng.random() < 0.2:
        Es[1] = Es[0]
        mus[1] = mus[0]
    triple = []
    for mu, E in zip(mus, Es):
        triple.append((base.with_perturbation(PerturbationSpec.power(float(mu), 2.0)),
                       float(E), float(rng.uniform(0, math.pi))))
    return triple, float(rng.uniform(30.0, 80.0))


def random_pair(rng):
    """Background and a strictly lower potential, shared energy and angles."""
    pot0 = _random_background(rng)
    mu = -float(rng.uniform(0.2, 3.0))
    pot1 = pot0.with_perturbation(PerturbationSpec.power(mu, float(rng.uniform(0.5, 2.5))))
    top = pot0.sup_bound
    return (pot0, pot1, float(rng.uniform(top, top + 4.0)), float(rng.uniform(30.0, 80.0)),
            float(rng.uniform(0, math.pi)), float(rng.uniform(0, math.pi)))


# -- runs ---------------------------------------------------------------------

def rotation_free(threads=None, seed=0):
    pot = PotentialSpec.free()
    rows, ok = [], True
    for E in (1.0, 4.0, 9.0, 25.0, 100.0):
        est = rotation_number(pot, E, horizon=1e4)
        err = abs(est.rho - math.sqrt(E)) / math.sqrt(E)
        ok &= err <= 1e-3
        rows.append({"E": E, "rho": est.rho, "rel_error": err, "error_bar": est.error_bar})
    return ok, {"rows": rows}


def kneser(threads=None, seed=0):
    lams = [-1e-2, -1e-3, -1e-4, -1e-5, -1e-6]
    table = []
    out = {}
    for mu in (-1.0, -0.1):
        pot = _power(mu, 2.0)
        verdict = kneser_classify(free_edge_record(), pot.perturbation)
        N = counting_function(pot, 0.0, lams, threads=threads)
        box = {}
        for X in (1e4, 1e5):
            box[X], _ = relative_count(pot.background(), pot, -1e-12, X, right_bc="dirichlet")
        table.append({"mu": mu, "verdict": verdict, "counts": [[l, n] for l, n in N],
                      "box_count_1e4": box[1e4], "box_count_1e5": box[1e5]})
        out[mu] = (N, box)
    N_strong = out[-1.0][0][-1][1]
    box_weak = out[-0.1][1]
    ok_strong = N_strong >= 25
    ok_weak = box_weak[1e4] == box_weak[1e5]
    return ok_strong and ok_weak, {"table": table, "strong_count": N_strong,
                                   "strong_ok": ok_strong, "weak_stable": ok_weak}


def log_law(threads=None, seed=0):
    pot = _power(-1.0, 2.0)
    ev = locate_eigenvalues(pot, 0.0, 1e-1, 1e-18)
    pts = [(lam, k - 0.5) for lam, k in ev]
    fit = fit_counts(pts, "log_law")
    target = math.sqrt(3.0) / (4.0 * math.pi)
    rel = abs(fit.coefficient - target) / target
    return rel <= 0.1, {"eigenvalues": [lam for lam, _ in ev], "slope": fit.coefficient,
                        "target": target, "rel_error": rel, "n_points": fit.n_points}


def power_law(threads=None, seed=0):
    pot = _power(-1.0, 1.0)
    lams = [float(v) for v in -np.geomspace(1e-2, 1e-6, 9)]
    N = counting_function(pot, 0.0, lams, threads=threads)
    fit = fit_counts(N, "power_law", gamma=1.0)
    target = 2.0 / math.pi
    exp_ok = abs(fit.exponent - 0.5) <= 0.05
    coef_rel = abs(fit.coefficient - target) / target
    checks = []
    weyl_ok = True
    for lam, n in N[4::2]:
        w = weyl_count(lambda x: -1.0 / x, lam)
        rel = abs(n - w) / w
        weyl_ok &= rel <= 0.05
        checks.append({"lambda": lam, "N": n, "weyl": w, "rel_error": rel})
    return exp_ok and coef_rel <= 0.1 and weyl_ok, {
        "counts": [[l, n] for l, n in N], "exponent": fit.exponent,
        "coefficient": fit.coefficient, "target_coefficient": target,
        "coefficient_rel_error": coef_rel, "weyl": checks}


def phase_ode(threads=None, seed=0):
    grid = classify_grid(threads=threads)
    mismatches, marginal = [], []
    for a, b, v in grid:
        if abs(4 * a * b - 1) < 0.1:
            marginal.append([a, b])
            continue
        if (v.verdict == UNBOUNDED) != (4 * a * b > 1) or v.verdict == MARGINAL:
            mismatches.append([a, b, v.verdict])
    v = classify_phase_ode(PhaseOdeSpec.constant(1.0, 1.0))
    target = math.sqrt(3.0) / 2.0
    rel = abs(v.rate - target) / target
    return not mismatches and rel <= 0.02, {"mismatches": mismatches, "excluded": marginal,
                                            "rate": v.rate, "rate_rel_error": rel}


def relative_count_check(threads=None, seed=0):
    rng = np.random.default_rng(seed)
    rows, ok = [], True
    for i in range(20):
        pot0, pot1, L, lam = random_box_instance(rng)
        c, _ = relative_count(pot0, pot1, lam, L, right_bc="dirichlet")
        s = 1 if pot1.perturbation.mu < 0 else -1
        n1, ok1 = box_count_converged(lambda x: pot1.evaluate(x), lam, 1.0, L, 4000)
        n0, ok0 = box_count_converged(lambda x: pot0.evaluate(x), lam, 1.0, L, 4000)
        diff = n1 - n0
        good = abs(s * c - diff) <= 2 and ok0 and ok1
        ok &= good
        rows.append({"instance": i, "L": L, "lambda": lam, "mu": pot1.perturbation.mu,
                     "gamma": pot1.perturbation.gamma, "wronskian": s * c, "fd": diff,
                     "fd_converged": ok0 and ok1, "ok": good})
    return ok, {"rows": rows}


def triangle(threads=None, seed=0):
    rng = np.random.default_rng(seed + 1)
    rows, ok = [], True
    for i in range(25):
        triple, x_end = random_triple(rng)
        rep, tri, counts = wronskian_triple(triple, x_end)
        good = rep.passed and tri
        ok &= good
        rows.append({"kind": "triple", "instance": i, "counts": list(counts),
                     "comparison": rep.passed, "triangle": tri, "note": rep.note})
    for i in range(25):
        pot0, pot1, E, x_end, t0, t1 = random_pair(rng)
        rep = sturm_pair(pot0, pot1, E, x_end, t0, t1)
        ok &= rep.passed
        rows.append({"kind": "pair", "instance": i, "comparison": rep.passed,
                     "note": rep.note, "intervals": rep.intervals_checked})
    return ok, {"rows": rows}


def edge_pipeline(threads=None, seed=0):
    pot = PotentialSpec.golden_cosine(0.3)
    found = find_edges(pot, (-0.5, 2.3), [(1, 1)], grid=64, threads=threads)
    edges = [refine_edge(r, pot) for r in found if r.resolved]
    recs = [birkhoff_K(e, pot) for e in edges]
    gap = {r.edge.side: r for r in recs if r.edge.label == (1, 1)}
    bracketed = set(gap) == {"lower", "upper"}
    sign_ok = bracketed and gap["upper"].K > 0 and gap["lower"].K < 0
    spread_ok = all(r.spread <= 0.01 for r in recs)
    c3 = edge_accumulation_census(recs, PerturbationSpec.power(-1.0, 3.0))
    c1 = edge_accumulation_census(recs, PerturbationSpec.power(-1.0, 1.0))
    upper_all = all(pos for e, pos in c1.verdicts if e.side == "upper")
    lower_none = not any(pos for e, pos in c1.verdicts if e.side == "lower")
    ok = bracketed and sign_ok and spread_ok and c3.positive == 0 and upper_all
    return ok, {
        "edges": [{"label": list(r.edge.label), "side": r.edge.side, "E": r.edge.energy,
                   "K": r.K, "mu_crit": r.mu_crit, "spread": r.spread} for r in recs],
        "bracketed": bracketed, "sign_law": sign_ok, "spread_ok": spread_ok,
        "census_gamma3_positive": c3.positive, "census_gamma1_upper_all": upper_all,
        "census_gamma1_lower_none": lower_none}


def kam_check(threads=None, seed=0):
    xs = np.linspace(0.0, 100.0, 201)
    details = {}
    free = PotentialSpec.free(2)
    r0 = run_reduction(free, 4.0)
    free_ok = r0.converged and len(r0.reports) == 1 and r0.reports[0].eps == 0.0
    details["free"] = {"iterations": len(r0.reports), "eps1": r0.reports[0].eps,
                       "converged": r0.converged}

    band = PotentialSpec.golden_cosine(0.1)
    r1 = run_reduction(band, 4.5)
    sizes = r1.sizes
    logs = [math.log(s) for s in sizes if s > 0]
    # superlinear: log eps_{j+1} / log eps_j > 1 at every step
    ratios = [b / a for a, b in zip(logs[:-1], logs[1:])]
    super_ok = len(sizes) >= 4 and all(q > 1.0 for q in ratios[:3])
    dev = verify_normal_form(r1.state, band, 4.5, xs)
    det_ok = r1.norms.det_defect <= 0.5
    details["band"] = {"sizes": sizes, "log_ratios": ratios, "deviation": dev,
                       "det_defect": r1.norms.det_defect, "violations": r1.violations}

    edge_pot = PotentialSpec.golden_cosine(0.05)
    found = find_edges(edge_pot, (1.6, 1.8), [(1, 1)], grid=16, include_bottom=False,
                       threads=threads)
    edge_rows, edge_ok = [], bool(found)
    for rec in found:
        rr = refine_edge(rec, edge_pot)
        run_e = run_reduction(edge_pot, rr.energy, label=(1, 1))
        nil = run_e.norms.A_nilpotency
        good = run_e.norms.label_ok and nil <= 1e-6
        edge_ok &= good
        edge_rows.append({"side": rr.side, "E": rr.energy,
                          "resonances": list(run_e.state.resonance_log),
                          "label_ok": run_e.norms.label_ok, "nilpotency": nil})
    details["edges"] = edge_rows
    ok = free_ok and super_ok and dev <= 1e-4 and det_ok and edge_ok
    return ok, details


def sandwich(threads=None, seed=0):
    rows, ok = [], True
    for name, pot, E, dists in corpus():
        for d in dists:
            lam = E - d
            N = counting_function(pot, E, [lam])[0][1]
            up = verify_upper_bound(pot, E, lam, measured=N)
            lo = verify_lower_bound(pot, E, lam, 0.5, measured=N)
            good = lo.bound <= N <= up.bound
            ok &= good
            rows.append({"instance": name, "lambda": lam, "N": N, "lower": lo.bound,
                         "upper": up.bound, "deflated_prediction":
                         lo.detail["deflated_prediction"], "ok": good})
    return ok, {"rows": rows}


RUNS = {
    "rotation-free": (rotation_free, 5.0),
    "kneser": (kneser, 60.0),
    "log-law": (log_law, 120.0),
    "power-law": (power_law, 120.0),
    "phase-ode": (phase_ode, 60.0),
    "relative-count": (relative_count_check, 180.0),
    "triangle": (triangle, 120.0),
    "edge-pipeline": (edge_pipeline, 600.0),
    "kam": (kam_check, 600.0),
    "sandwich": (sandwich, 300.0),
}


def run(name, threads=None, seed=0):
    """Execute one reproduction run by name."""
    if name not in RUNS:
        raise KeyError(f"unknown run {name!r}; choose from {', '.join(RUNS)}")
    func, budget = RUNS[name]
    t = time.perf_counter()
    passed, details = func(threads=threads, seed=seed)
    return ReproResult(name, bool(passed), _plain(details), time.perf_counter() - t, budget)
