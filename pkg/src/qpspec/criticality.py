"""Edge constant K(E), critical coupling and oscillation classifiers.

At a band edge E the minimal solution u0 stays bounded while a second
solution v0 with W(u0, v0) = 1 grows linearly, ``v0 ~ a x u0``.  Writing
``(v0, v0') = s (u0, u0') - (cos t, -sin t) / r`` in the Pruefer variables
(r, t) of u0 gives ``s' = -(1 + q - E) cos(2t) / r^2``, so ``a`` is the time
average of ``s'``.  The constant that decides oscillation for
``dq ~ mu / x^2`` is

    K = a * <u0^2>,

which does not depend on how u0 is scaled (u0 -> c u0 sends a -> a / c^2).
It equals the mean of u0^2 in the gauge where v0 ~ x u0; K > 0 at upper
edges (spectrum above) and K < 0 at lower edges.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._util import thread_map, weighted_mean
from .ode import IntegrationError
from .potential import L_scale, Q_ladder, iterated_log
from .prufer import SolutionSpec, fundamental_matrix, prufer_trajectory
from .rotation import EdgeRecord, sample_spacing

__all__ = [
    "UnboundedSolutionError",
    "LevelConditionError",
    "CriticalityRecord",
    "ScaleLadder",
    "minimal_solution_angle",
    "birkhoff_K",
    "free_edge_record",
    "kneser_classify",
    "iterated_log_classify",
    "CensusResult",
    "edge_accumulation_census",
    "OSCILLATORY",
    "NONOSCILLATORY",
    "CRITICAL",
]

OSCILLATORY = "oscillatory"
NONOSCILLATORY = "nonoscillatory"
CRITICAL = "critical_boundary"


class UnboundedSolutionError(RuntimeError):
    pass


class LevelConditionError(ValueError):
    pass


@dataclass
class CriticalityRecord:
    """K at one edge with its window diagnostics.

    ``windows`` holds ``(length, K estimate)`` pairs; ``slope`` and
    ``mean_square`` are ``a`` and ``<u0^2>`` in the gauge where the largest
    value of |(u0, u0')| over the last decade of the horizon is 1.
    """

    edge: EdgeRecord
    K: float
    windows: list
    minimal_solution_norm: float
    slope: float = math.nan
    mean_square: float = math.nan
    growth: float = 0.0

    @property
    def mu_crit(self):
        return -1.0 / (4.0 * self.K)

    @property
    def spread(self):
        """Relative change between the two largest windows."""
        if len(self.windows) < 2:
            return 0.0
        (_, a), (_, b) = self.windows[-2], self.windows[-1]
        return abs(b - a) / abs(b)

    def rescaled(self, c):
        """Same edge with u0 -> c u0 (and v0 -> v0 / c): K is unchanged."""
        return CriticalityRecord(self.edge, self.K, list(self.windows),
                                 abs(c) * self.minimal_solution_norm, self.slope / c**2,
                                 self.mean_square * c**2, self.growth)


def free_edge_record():
    """Exact record for the bottom of the free spectrum (u0 = 1, v0 = x)."""
    edge = EdgeRecord((0,), "upper", 0.0, (0.0, 0.0), 0.0)
    return CriticalityRecord(edge, 1.0, [(math.inf, 1.0)], 1.0, 1.0, 1.0)


@dataclass(frozen=True)
class ScaleLadder:
    """Iterated-logarithm scales L_j and reference potentials of level n."""

    level: int
    K: float = 1.0

    def L(self, x, j=None):
        return L_scale(x, self.level if j is None else j)

    def reference(self, x, n=None):
        return Q_ladder(x, self.level if n is None else n, self.K)

    @property
    def threshold(self):
        from .potential import e_tower
        return e_tower(self.level)


def minimal_solution_angle(pot, E, X, tol=1e-11, perturbed=False):
    """Initial Pruefer angle at x = 1 of the solution smallest at ``X``.

    That is the right singular vector of the fundamental matrix for the
    smallest singular value.  Returns ``(theta0, sigma_min, sigma_max)``.
    """
    try:
        end, _ = fundamental_matrix(pot, E, 1.0, X, tol=tol, perturbed=perturbed)
    except IntegrationError as exc:
        raise UnboundedSolutionError(
            f"solutions at E = {E!r} grow too fast to integrate up to {X!r}: {exc}") from exc
    _, sv, vt = np.linalg.svd(end)
    u, du = vt[-1]
    theta0 = math.atan2(u, du) % math.pi
    return theta0, float(sv[-1]), float(sv[0])


def birkhoff_K(edge, pot, windows=(1e2, 1e3, 1e4), horizon=None, tol=1e-10,
               max_growth=5.0):
    """Estimate K at ``edge`` from weighted time averages over ``[1, 1 + l]``.

    The minimal solution is the one smallest at ``horizon`` (default: ten
    times the largest window); its admixture of the growing solution then
    stays of relative size ``window / horizon`` and enters K only at second
    order.  Raises :class:`UnboundedSolutionError` when the mean square
    amplitude over the last tenth of the largest window exceeds the one over
    the first tenth by more than ``exp(max_growth)`` (either way), the
    symptom of an energy that is not at an edge.
    """
    E = float(edge.energy if isinstance(edge, EdgeRecord) else edge)
    if not isinstance(edge, EdgeRecord):
        edge = EdgeRecord((0,) * pot.freq.d, "upper", E, (E, E), float("nan"))
    windows = sorted(float(w) for w in windows)
    L = windows[-1]
    X = 1.0 + (10.0 * L if horizon is None else float(horizon))
    theta0, _, _ = minimal_solution_angle(pot, E, X)
    h = sample_spacing(pot, E)
    n = int(math.ceil(L / h))
    xs = 1.0 + np.linspace(0.0, L, n + 1)
    path = prufer_trajectory(SolutionSpec(pot, E, theta0, perturbed=False), xs[-1],
                             checkpoints=xs, tol=tol)
    th, lr = path.theta, path.log_r
    last = xs >= 1.0 + 0.9 * L
    first = xs <= 1.0 + 0.1 * L
    ref = np.max(lr)
    growth = 0.5 * float(np.log(np.mean(np.exp(2 * (lr[last] - ref)))
                                / np.mean(np.exp(2 * (lr[first] - ref)))))
    if abs(growth) > max_growth:
        raise UnboundedSolutionError(
            f"minimal solution not bounded at E = {E!r}: amplitude grew by exp({growth:.2f})")
    # gauge: peak |(u0, u0')| over the last decade equals 1
    lr = lr - np.max(lr[last])
    r2 = np.exp(2.0 * lr)
    q = pot.evaluate(xs, perturbed=False)
    ds = -(1.0 + q - E) * np.cos(2.0 * th) / r2
    u2 = r2 * np.sin(th) ** 2
    estimates = []
    slope = mean_sq = math.nan
    for w in windows:
        m = int(round(w / h))
        slope = weighted_mean(ds[: m + 1])
        mean_sq = weighted_mean(u2[: m + 1])
        estimates.append((w, slope * mean_sq))
    return CriticalityRecord(edge, estimates[-1][1], estimates, 1.0, slope, mean_sq, growth)


def _power_limit(K, mu, gamma):
    """lim K * mu * x^(2 - gamma)."""
    if gamma > 2:
        return 0.0
    if gamma == 2:
        return K * mu
    p = K * mu
    return math.copysign(math.inf, p) if p != 0 else 0.0


def _verdict(lo, hi, margin=0.0):
    if hi < -0.25 - margin:
        return OSCILLATORY
    if lo > -0.25 + margin:
        return NONOSCILLATORY
    return CRITICAL


def _tail_extremes(values, points=5):
    """limsup / liminf proxies: running max / min over ``points`` samples on the tail."""
    v = np.asarray(values)
    if v.size < points:
        return float(np.min(v)), float(np.max(v))
    win = np.lib.stride_tricks.sliding_window_view(v, points)
    return float(np.min(win.min(axis=1))), float(np.max(win.max(axis=1)))


def kneser_classify(record, pert, x_max=1e12, samples=400):
    """Oscillation verdict for ``dq`` at the edge described by ``record``.

    The criterion compares ``K dq(x) x^2`` with -1/4 at infinity.  Power laws
    are evaluated exactly; other perturbations through running extremes over
    the last two decades below ``x_max``.
    """
    K = record.K
    if pert.kind == "power_law":
        lim = _power_limit(K, pert.mu, pert.gamma)
        return _verdict(lim, lim)
    xs = np.geomspace(x_max / 100.0, x_max, samples)
    vals = K * pert(xs) * xs**2
    lo, hi = _tail_extremes(vals)
    return _verdict(lo, hi)


def _log_ratio(x, m, j):
    """``log(L_m(x) / L_j(x))``, a sum of ``log log_i(x)``."""
    lo, hi = min(m, j), max(m, j)
    out = np.zeros_like(x)
    for i in range(lo + 1, hi + 1):
        out = out + np.log(iterated_log(x, i))
    return out if m >= j else -out


def _scaled_excess(x, pert, K, m):
    """``L_m^2 (dq - Q_m(K))`` for an iterated-log ``dq``, free of overflow."""
    n = pert.level
    out = pert.excess * np.exp(2.0 * _log_ratio(x, m, n))
    both = min(n, m)
    coef = -0.25 * (1.0 / pert.K - 1.0 / K)
    for j in range(both):
        out = out + coef * np.exp(2.0 * _log_ratio(x, m, j))
    for j in range(both, n):
        out = out - 0.25 / pert.K * np.exp(2.0 * _log_ratio(x, m, j))
    for j in range(both, m):
        out = out + 0.25 / K * np.exp(2.0 * _log_ratio(x, m, j))
    return out


def iterated_log_classify(record, pert, x_max=None, samples=400, level_tol=0.05):
    """Verdict at scale ``n = pert.level`` of the iterated-logarithm ladder.

    Requires the level-(n-1) criticality condition
    ``L_{n-1}^2 (dq - Qtilde_{n-1}) -> -1/(4K)`` (checked on samples); the
    verdict compares ``K L_n^2 (dq - Qtilde_n)`` with -1/4.
    """
    if pert.kind != "iterated_log":
        raise ValueError("iterated_log_classify needs an iterated_log perturbation")
    K = record.K
    n = pert.level
    if x_max is None:
        x_max = 1e300 if n >= 2 else 1e200
    lo_x = max(pert.x_cut * 10.0, x_max ** 0.5)
    xs = np.geomspace(lo_x, x_max, samples)
    if n >= 1:
        # the perturbation's own K may differ from the record's K
        prev = _scaled_excess(xs, pert, K, n - 1)
        target = -1.0 / (4.0 * K)
        if np.max(np.abs(prev[-samples // 4:] - target)) > level_tol * abs(target):
            raise LevelConditionError(
                f"level {n - 1} criticality condition fails: "
                f"L_{n - 1}^2 (dq - Q_{n - 1}) does not approach -1/(4K)")
    vals = K * _scaled_excess(xs, pert, K, n)
    lo, hi = _tail_extremes(vals[-samples // 2:])
    return _verdict(lo, hi, margin=1e-9)


@dataclass
class CensusResult:
    verdicts: list
    positive: int
    finite: bool
    decay_constants: list = field(default_factory=list)
    label_bound: float = math.inf


def edge_accumulation_census(records, pert, freq=None):
    """Which edges accumulate eigenvalues for the power law ``mu / x^gamma``.

    ``gamma > 2``: none; ``gamma < 2``: the upper edges when mu < 0 and the
    lower edges when mu > 0; ``gamma = 2``: the edges with
    ``mu / mu_crit(E) > 1``.  ``decay_constants`` lists
    ``|K| |m|^tau sqrt(E)`` per labelled edge.  For ``gamma = 2`` their
    maximum C bounds the labels of accumulating edges by
    ``|m| <= (4 |mu| C / sqrt(E_min))^(1/tau)``; ``finite`` reports that every
    positive edge respects this bound (for ``gamma < 2`` every upper or
    every lower edge accumulates, so the set is not finite).
    """
    if pert.kind != "power_law":
        raise ValueError("the census needs a power-law perturbation")
    mu, gamma = pert.mu, pert.gamma
    verdicts = []
    for rec in records:
        if gamma > 2:
            pos = False
        elif gamma < 2:
            pos = (rec.K * mu) < 0
        else:
            pos = mu / rec.mu_crit > 1.0
        verdicts.append((rec.edge, pos))
    decay = []
    if freq is not None:
        for rec in records:
            m = rec.edge.label
            size = sum(abs(k) for k in m)
            if size and rec.edge.energy > 0:
                decay.append(abs(rec.K) * size**freq.tau * math.sqrt(rec.edge.energy))
    positive = sum(1 for _, p in verdicts if p)
    bound = math.inf
    if gamma > 2:
        finite = True
    elif gamma < 2:
        finite = positive == 0
    else:
        finite = True
        labelled = [r for r in records if any(r.edge.label) and r.edge.energy > 0]
        if decay and labelled:
            e_min = min(r.edge.energy for r in labelled)
            bound = (4.0 * abs(mu) * max(decay) / math.sqrt(e_min)) ** (1.0 / freq.tau)
            for edge, pos in verdicts:
                if pos and any(edge.label) and sum(abs(k) for k in edge.label) > bound:
                    finite = False
    return CensusResult(verdicts, positive, finite, decay, bound)


def birkhoff_K_many(edges, pot, windows=(1e2, 1e3, 1e4), threads=None, **kw):
    return thread_map(lambda e: birkhoff_K(e, pot, windows, **kw), edges, threads)


__all__.append("birkhoff_K_many")
