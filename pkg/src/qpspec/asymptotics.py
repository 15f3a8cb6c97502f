"""Eigenvalue accumulation at a band edge: predictions, measurements, bounds.

For ``dq = mu / x^gamma`` and an edge E with critical coupling
``mu_crit = -1 / (4K)``, the number N(lam) of eigenvalues between a fixed
reference and ``lam`` grows like

    (1 / 4 pi) sqrt(mu / mu_crit - 1) |log|E - lam||        (gamma = 2)
    c |E - lam|^(-(2 - gamma) / (2 gamma))                   (gamma < 2)

as lam approaches E.  Besides predictions and fits this module measures the
counts, locates the individual eigenvalues, integrates the Wronskian angle
at the edge energy, and checks the counting upper and lower bounds.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as qd
from scipy import optimize
from scipy.special import beta as beta_fn

from ._util import thread_map
from .criticality import minimal_solution_angle
from .oscillation import relative_count, wronskian_zero_count
from .potential import PerturbationSpec, PotentialSpec
from .prufer import DEFAULT_TOL, SolutionSpec, co_integrate

__all__ = [
    "NoAccumulationError",
    "AsymptoticPrediction",
    "FitResult",
    "predict",
    "weyl_coefficient",
    "weyl_count",
    "fit_counts",
    "turning_point",
    "count_horizon",
    "counting_function",
    "locate_eigenvalues",
    "PsiGrowth",
    "psi_growth",
    "BoundReport",
    "verify_upper_bound",
    "verify_lower_bound",
]


class NoAccumulationError(ValueError):
    pass


@dataclass(frozen=True)
class AsymptoticPrediction:
    energy: float
    mu: float
    gamma: float
    ratio: float
    form: str
    coefficient: float
    exponent: float

    def __call__(self, lam):
        d = abs(self.energy - np.asarray(lam, dtype=float))
        if self.form == "log_law":
            return self.coefficient * np.abs(np.log(d))
        return self.coefficient * d ** (-self.exponent)


def predict(E, mu, gamma, mu_crit):
    """Leading-order eigenvalue count at an edge with critical coupling ``mu_crit``."""
    ratio = mu / mu_crit
    if gamma == 2:
        if ratio < 1:
            raise NoAccumulationError(f"no accumulation at this edge: mu/mu_crit = {ratio:.6g} < 1")
        return AsymptoticPrediction(E, mu, gamma, ratio, "log_law",
                                    math.sqrt(ratio - 1.0) / (4.0 * math.pi), 0.0)
    if gamma < 2:
        if ratio <= 0:
            raise NoAccumulationError(f"no accumulation at this edge: mu/mu_crit = {ratio:.6g} <= 0")
        coeff = math.sqrt(ratio) / (math.pi * (2.0 - gamma))
        return AsymptoticPrediction(E, mu, gamma, ratio, "power_law", coeff,
                                    (2.0 - gamma) / (2.0 * gamma))
    raise NoAccumulationError("no accumulation at this edge: gamma > 2")


def weyl_coefficient(mu, gamma):
    """Coefficient of the semiclassical count for the free edge, gamma < 2.

    ``(1/pi) int (|mu| x^-gamma - |lam|)_+^(1/2) dx`` equals this number times
    ``|lam|^(-(2 - gamma) / (2 gamma))`` (integration from 0).
    """
    return beta_fn(1.0 / gamma - 0.5, 1.5) * abs(mu) ** (1.0 / gamma) / (math.pi * gamma)


def weyl_count(q, lam, x0=1.0):
    """``(1/pi) int_{x0}^inf (lam - q(x))_+^(1/2) dx`` for a decaying negative ``q``."""
    # the integrand vanishes beyond the last turning point, located by bisection
    hi = x0 * 2.0
    while lam - q(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            raise ValueError("integrand does not vanish at large x")
    xt = optimize.brentq(lambda x: lam - q(x), x0, hi) if lam - q(x0) > 0 else x0
    if xt <= x0:
        return 0.0
    f = lambda x: math.sqrt(max(lam - q(x), 0.0))
    # integrate in log x: the integrand spans many decades
    val, _ = qd.quad(lambda t: f(math.exp(t)) * math.exp(t), math.log(x0), math.log(xt),
                     limit=400, epsabs=0.0, epsrel=1e-10)
    return val / math.pi


@dataclass(frozen=True)
class FitResult:
    form: str
    coefficient: float
    exponent: float
    offset: float
    residual: float
    n_points: int


def fit_counts(points, form, gamma=2.0, E=0.0, exponent=None):
    """Least-squares fit of counts ``N`` at energies ``lam``.

    ``log_law``: ``N = c |log|E - lam|| + b``.  ``power_law``: ``N = c d^-p + b``
    with ``d = |E - lam|``; ``p`` is fitted unless ``exponent`` is given.
    Needs at least 5 points spanning at least two decades of ``d``.
    """
    lam = np.array([p[0] for p in points], dtype=float)
    N = np.array([p[1] for p in points], dtype=float)
    d = np.abs(E - lam)
    if lam.size < 5 or np.log10(d.max() / d.min()) < 2.0 - 1e-12:
        raise ValueError("insufficient span: need >= 5 points over >= 2 decades of |E - lam|")
    if form == "log_law":
        X = np.column_stack([np.abs(np.log(d)), np.ones_like(d)])
        (c, b), *_ = np.linalg.lstsq(X, N, rcond=None)
        p = 0.0
        model = c * np.abs(np.log(d)) + b
    elif form == "power_law":
        guess = (2.0 - gamma) / (2.0 * gamma) if exponent is None else exponent
        if exponent is None:
            def f(logd, c, b, p):
                return c * np.exp(-p * logd) + b
            c0 = max(N.max(), 1.0) * d.min() ** guess
            (c, b, p), _ = optimize.curve_fit(f, np.log(d), N, p0=(c0, 0.0, guess), maxfev=20000)
        else:
            p = exponent
            X = np.column_stack([d ** (-p), np.ones_like(d)])
            (c, b), *_ = np.linalg.lstsq(X, N, rcond=None)
        model = c * d ** (-p) + b
    else:
        raise ValueError(f"unknown form {form!r}")
    scale = max(np.linalg.norm(N), 1e-300)
    return FitResult(form, float(c), float(p), float(b),
                     float(np.linalg.norm(model - N) / scale), int(lam.size))


def turning_point(mu, gamma, distance):
    """Point beyond which ``|mu| / x^gamma <= distance``."""
    return (abs(mu) / abs(distance)) ** (1.0 / gamma)


def count_horizon(pert, distance, decay_lengths=40.0, x_min=50.0):
    """Integration length for counting at distance ``distance`` from the edge.

    Past the turning point the solutions separate at rate about
    ``sqrt(distance)``; ``decay_lengths`` such lengths are appended.
    """
    xt = turning_point(pert.mu, pert.gamma, distance) if pert.kind == "power_law" else 1.0
    return max(x_min, xt + decay_lengths / math.sqrt(abs(distance)))


def counting_function(pot1, E, lambdas, lam_ref=None, x_end=None, tol=DEFAULT_TOL,
                      threads=None):
    """N(lam): eigenvalues of H1 between ``lam_ref`` and ``lam``.

    With ``lam_ref=None`` the background is assumed to have no spectrum
    below the edge on that side (e.g. the bottom of the free spectrum) and
    the single Wronskian count at ``lam`` is returned.  Returns a list of
    ``(lam, N)``.
    """
    pot0 = pot1.background()
    pert = pot1.perturbation
    sign = 1 if pert.sign() < 0 else -1

    def one(lam):
        xe = count_horizon(pert, abs(E - lam)) if x_end is None else x_end
        c1, _ = relative_count(pot0, pot1, lam, xe, tol=tol)
        if lam_ref is None:
            return lam, c1
        c0, _ = relative_count(pot0, pot1, lam_ref, xe, tol=tol)
        return lam, sign * (c1 - c0)

    return thread_map(one, list(lambdas), threads)


def locate_eigenvalues(pot1, E, d_far, d_near, side="upper", lam_ref=None, rel_tol=1e-6,
                       tol=DEFAULT_TOL):
    """Eigenvalues of H1 at distances in ``[d_near, d_far]`` from the edge.

    Works on the counting function with bisection in ``log|E - lam|``.
    ``side="upper"`` means eigenvalues approach the edge from below.
    Returns a list of ``(lam_k, N just on the edge side of lam_k)``.
    """
    s = -1.0 if side == "upper" else 1.0

    def N(logd):
        lam = E + s * math.exp(logd)
        return counting_function(pot1, E, [lam], lam_ref, tol=tol)[0][1]

    def split(a, b, na, nb, out):
        # a: far end (log distance larger), counts na <= nb toward the edge
        if nb == na:
            return
        if a - b <= rel_tol:
            out.append((E + s * math.exp(0.5 * (a + b)), nb))
            return
        mid = 0.5 * (a + b)
        nm = N(mid)
        split(a, mid, na, nm, out)
        split(mid, b, nm, nb, out)

    out = []
    a, b = math.log(d_far), math.log(d_near)
    split(a, b, N(a), N(b), out)
    return sorted(out, key=lambda t: abs(E - t[0]), reverse=True)


@dataclass
class PsiGrowth:
    """Wronskian angle growth at the edge energy.

    ``coefficient`` is the measured growth rate of the angle against
    ``log x`` (gamma = 2) or ``x^(1 - gamma/2)`` (gamma < 2); ``predicted``
    the asymptotic value (``nan`` when the angle should stay bounded).
    """

    coefficient: float
    predicted: float
    bounded: bool
    zeros: int
    psi_end: float
    horizon: float


def _growth_variable(x, gamma):
    x = np.asarray(x, dtype=float)
    return np.log(x) if gamma == 2 else x ** (1.0 - gamma / 2.0)


def psi_growth(pert, horizon=1e6, K=1.0, pot=None, E=0.0, tol=1e-10):
    """Growth of the Wronskian angle between the edge solutions with and without ``pert``.

    u0 is the minimal solution of the background at the edge energy ``E``
    and u1 the solution of the perturbed equation with the same data at
    x = 1.  Their Wronskian vanishes exactly where the variation-of-constants
    angle ``psi`` (``u1 = u0 cos psi - v0 sin psi``, ``W(u0, v0) = 1``) meets a
    multiple of pi, so the rate is the slope of ``k pi`` against the growth
    variable at the k-th zero.  Without ``pot`` the free edge (u0 = 1, K = 1)
    is used.
    """
    if pert.kind != "power_law":
        raise ValueError("psi_growth needs a power-law perturbation")
    gamma = pert.gamma
    if pot is None:
        pot = PotentialSpec.free()
        theta0 = 0.5 * math.pi
    else:
        theta0, _, _ = minimal_solution_angle(pot, E, horizon)
    sols = [SolutionSpec(pot, E, theta0),
            SolutionSpec(pot.with_perturbation(pert), E, theta0, perturbed=True)]
    tr = co_integrate(sols, horizon, tol=tol, pairs=[(0, 1)])
    zeros = tr.wronskian_zeros[(0, 1)]
    ratio = -4.0 * K * pert.mu
    if gamma == 2:
        pred = 0.5 * math.sqrt(ratio - 1.0) if ratio > 1 else math.nan
    elif gamma < 2:
        pred = math.sqrt(ratio) / (2.0 - gamma) if ratio > 0 else math.nan
    else:
        pred = math.nan
    v = _growth_variable(zeros, gamma)
    if v.size >= 3:
        k = np.arange(1, v.size + 1) * math.pi
        slope = float(np.polyfit(v, k, 1)[0])
    else:
        span = float(_growth_variable(horizon, gamma) - _growth_variable(1.0, gamma))
        slope = v.size * math.pi / span
    gap = tr.angle_gap[(0, 1)] - tr.angle_gap_start[(0, 1)]
    return PsiGrowth(slope, pred, math.isnan(pred), int(v.size), float(gap), float(horizon))


@dataclass
class BoundReport:
    passed: bool
    lam: float
    measured: int
    bound: float
    detail: dict = field(default_factory=dict)


def verify_upper_bound(pot1, E, lam, lam_ref=None, measured=None, tol=DEFAULT_TOL):
    """Check ``N(lam) <= n + 3``.

    ``n`` counts the zeros of W(u1(E), u0(E)) (both Dirichlet at 1) on
    ``(1, x_lam)``, where beyond ``x_lam`` the perturbation is smaller than
    ``|E - lam|``.
    """
    pert = pot1.perturbation
    d = abs(E - lam)
    x_lam = turning_point(pert.mu, pert.gamma, d)
    if x_lam > 1.0:
        tr = wronskian_zero_count(pot1.background(), pot1, E, E, x_lam, tol=tol)
        n = tr.count
    else:
        n = 0
    if measured is None:
        measured = counting_function(pot1, E, [lam], lam_ref, tol=tol)[0][1]
    return BoundReport(measured <= n + 3, float(lam), int(measured), float(n + 3),
                       {"n": n, "x_lam": x_lam})


def verify_lower_bound(pot1, E, lam, delta=0.5, lam_ref=None, measured=None,
                       tol=DEFAULT_TOL, mu_crit=-0.25):
    """Check the deflated lower bound on ``(1, x_max)``.

    ``x_max = delta (|mu| / |E - lam|)^(1/gamma)``.  The lower count is the
    number of zeros of W(u0(E), u1(lam)) on ``(1, x_max)`` where u1 solves the
    equation with the reduced coupling ``mu (1 - delta)``.  The report passes
    when that count does not exceed the measured N(lam) and is itself at
    least the deflated prediction minus 2 (the count slack).
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    pert = pot1.perturbation
    d = abs(E - lam)
    x_max = delta * turning_point(pert.mu, pert.gamma, d)
    reduced = PerturbationSpec.power(pert.mu * (1.0 - delta), pert.gamma)
    pot_red = pot1.with_perturbation(reduced)
    if x_max > 1.0:
        tr = wronskian_zero_count(pot1.background(), pot_red, E, lam, x_max, tol=tol,
                                  check_sign=False)
        lower = tr.count
    else:
        lower = 0
    try:
        pred = predict(E, pert.mu * (1.0 - delta), pert.gamma, mu_crit)
        expected = float(pred(lam))
    except NoAccumulationError:
        expected = 0.0
    if measured is None:
        measured = counting_function(pot1, E, [lam], lam_ref, tol=tol)[0][1]
    ok = lower <= measured and lower >= expected - 2
    return BoundReport(ok, float(lam), int(measured), float(lower),
                       {"x_max": x_max, "deflated_prediction": expected})
