"""Relative oscillation theory: Wronskian zero counts and eigenvalue counts.

For solutions u0, u1 of -u'' + q_j u = E_j u the Wronskian
``W = u0 u1' - u0' u1`` vanishes exactly where the two Pruefer angles agree
modulo pi.  With a common angle scale (see :mod:`qpspec.prufer`) these are
the points where ``phi1 - phi0`` crosses a multiple of pi, and when
``(E1 - q1) - (E0 - q0)`` has a fixed sign every crossing goes the same way.
Counting crossings therefore needs only the (unwrapped) angles.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .prufer import (DEFAULT_TOL, SolutionSpec, co_integrate, default_scale,
                     prufer_integrate, theta_to_phi)
from .rotation import rotation_number

__all__ = [
    "SignDefinitenessError",
    "EssentialSpectrumError",
    "WronskianTrace",
    "CountResult",
    "ComparisonReport",
    "difference_sign",
    "wronskian_zero_count",
    "crossings_between",
    "relative_count",
    "eigenvalue_count",
    "check_sturm_comparison",
    "check_wronskian_comparison",
    "check_triangle",
    "sturm_pair",
    "wronskian_triple",
]


class SignDefinitenessError(ValueError):
    pass


class EssentialSpectrumError(ValueError):
    pass


def _sample_grid(x0, x_end, dense=0.05, dense_until=2e3, n_geom=2000):
    lo, hi = min(x0, x_end), max(x0, x_end)
    near = np.arange(lo, min(hi, lo + dense_until), dense)
    far = np.geomspace(max(lo, 1e-12), hi, n_geom) if hi > lo else np.array([lo])
    return np.concatenate([near, far, [hi]])


def difference_sign(pot0, pot1, E0, E1, x0=1.0, x_end=1e4, grid=None):
    """Sign of ``(E1 - q1) - (E0 - q0)`` on the sampled interval.

    +1 means u1 oscillates faster, -1 slower and 0 that the equations
    coincide.  Raises :class:`SignDefinitenessError` otherwise.
    """
    xs = _sample_grid(x0, x_end) if grid is None else np.asarray(grid)
    diff = (E1 - pot1.evaluate(xs)) - (E0 - pot0.evaluate(xs))
    scale = 1e-13 * (1.0 + abs(E0) + abs(E1) + pot0.sup_bound + pot1.sup_bound)
    pos = np.any(diff > scale)
    neg = np.any(diff < -scale)
    if pos and neg:
        raise SignDefinitenessError(
            "sign-definiteness violated: (E1 - q1) - (E0 - q0) changes sign on the interval")
    return 1 if pos else (-1 if neg else 0)


@dataclass
class WronskianTrace:
    """Zeros of W(u0, u1) on the open interval (x0, x_end).

    ``psi`` is the unwrapped Wronskian angle (difference of the scaled
    Pruefer angles of u1 and u0) at ``x_end``; ``psi0`` its initial value.
    """

    sol0: SolutionSpec
    sol1: SolutionSpec
    x_end: float
    zero_positions: np.ndarray
    psi: float
    psi0: float
    zeros0: np.ndarray = field(default_factory=lambda: np.empty(0))
    zeros1: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def count(self):
        return int(self.zero_positions.size)

    @property
    def winding(self):
        return crossings_between(self.psi0, self.psi)


def crossings_between(a, b, rel=1e-12):
    """Number of multiples of pi strictly between ``a`` and ``b``."""
    lo, hi = min(a, b), max(a, b)
    eps = rel * max(1.0, abs(lo), abs(hi))
    first = math.floor((lo + eps) / math.pi) + 1
    last = math.ceil((hi - eps) / math.pi) - 1
    return max(0, last - first + 1)


def wronskian_zero_count(pot0, pot1, E0, E1, x_end, theta0=0.0, theta1=None, x0=1.0,
                         tol=DEFAULT_TOL, check_sign=True):
    """Count the zeros of W(u0, u1) on (x0, x_end).

    ``u_j`` solves the equation of ``pot_j`` (its perturbation included, if
    any) at energy ``E_j`` with Pruefer angle ``theta_j`` at ``x0``.
    """
    theta1 = theta0 if theta1 is None else theta1
    if check_sign:
        difference_sign(pot0, pot1, E0, E1, x0, x_end)
    s0 = SolutionSpec(pot0, E0, theta0, x0)
    s1 = SolutionSpec(pot1, E1, theta1, x0)
    co = co_integrate([s0, s1], x_end, tol=tol)
    return WronskianTrace(s0, s1, float(x_end), co.wronskian_zeros[(0, 1)],
                          co.angle_gap[(0, 1)], co.angle_gap_start[(0, 1)],
                          co.zeros[0], co.zeros[1])


def _right_angle(pot, lam, x_end, bc):
    if bc == "dirichlet":
        return 0.0
    if bc != "wkb":
        raise ValueError(f"unknown right boundary condition {bc!r}")
    kappa2 = float(pot.evaluate(x_end)) - lam
    if kappa2 <= 0.0:
        return 0.5 * math.pi
    # decaying WKB branch u'/u = -kappa, angle in (pi/2, pi)
    return math.atan2(1.0, -math.sqrt(kappa2))


def relative_count(pot0, pot1, lam, x_end, theta=0.0, method="opposite", right_bc="wkb",
                   x0=1.0, tol=DEFAULT_TOL):
    """Wronskian zero count entering the eigenvalue-count identity at ``lam``.

    ``method="opposite"`` pairs the solution of ``pot1`` obeying the left
    boundary condition with the solution of ``pot0`` fixed at ``x_end``
    (Dirichlet there for a finite box, or a decaying WKB angle standing in
    for the square-integrable solution).  ``method="left"`` pairs the two
    left solutions instead.  Returns ``(count, continuous_index)``; the
    index is the Wronskian angle change divided by pi, a real-valued
    companion of the integer count.
    """
    if method == "left":
        tr = wronskian_zero_count(pot0, pot1, lam, lam, x_end, theta, theta, x0, tol,
                                  check_sign=False)
        return tr.count, abs(tr.psi - tr.psi0) / math.pi
    if method != "opposite":
        raise ValueError(f"unknown pairing {method!r}")
    k = default_scale(lam)
    s1 = SolutionSpec(pot1, lam, theta, x0)
    end1 = prufer_integrate(s1, x_end, tol, scale=k)
    s0 = SolutionSpec(pot0, lam, _right_angle(pot0, lam, x_end, right_bc), x_end)
    end0 = prufer_integrate(s0, x0, tol, scale=k)
    # unwrapped scaled angles at both ends of [x0, x_end]
    phi1_start = theta_to_phi(theta, k)
    phi1_end = theta_to_phi(end1.theta, k)
    phi0_end = theta_to_phi(s0.theta0, k)
    phi0_start = theta_to_phi(end0.theta, k)
    d_start = phi1_start - phi0_start
    d_end = phi1_end - phi0_end
    return crossings_between(d_start, d_end), abs(d_end - d_start) / math.pi


@dataclass(frozen=True)
class CountResult:
    """Eigenvalues of H1 in [lam0, lam1) minus those of H0 in (lam0, lam1]."""

    count: int
    slack: int
    counts: tuple
    index: float
    x_end: float
    method: str


def _check_gap(pot0, lam0, lam1, horizon=1e4):
    r0 = rotation_number(pot0, lam0, horizon)
    r1 = rotation_number(pot0, lam1, horizon)
    if abs(r1.rho - r0.rho) > 2 * math.pi / r0.horizon:
        raise EssentialSpectrumError(
            f"[{lam0}, {lam1}] touches the essential spectrum of the background "
            f"(rotation numbers {r0.rho:.8g} and {r1.rho:.8g})")


def eigenvalue_count(pot1, lam0, lam1, x_end, theta=0.0, method="opposite", right_bc="wkb",
                     check_gap=True, tol=DEFAULT_TOL):
    """Eigenvalue count of H1 relative to its background H0 on [lam0, lam1].

    The result is exact up to ``slack`` (the substitution of convenient
    solutions for the square-integrable ones costs at most 1 per endpoint).
    """
    if pot1.perturbation is None:
        raise ValueError("pot1 must carry a perturbation")
    if lam1 < lam0:
        raise ValueError("need lam0 <= lam1")
    pot0 = pot1.background()
    if lam0 == lam1:
        return CountResult(0, 0, (0, 0), 0.0, float(x_end), method)
    sign = pot1.perturbation.sign()
    if sign == 0:
        raise SignDefinitenessError("sign-definiteness violated")
    if check_gap:
        _check_gap(pot0, lam0, lam1)
    c0, i0 = relative_count(pot0, pot1, lam0, x_end, theta, method, right_bc, tol=tol)
    c1, i1 = relative_count(pot0, pot1, lam1, x_end, theta, method, right_bc, tol=tol)
    s = 1 if sign < 0 else -1
    return CountResult(s * (c1 - c0), 2, (c0, c1), s * (i1 - i0), float(x_end), method)


@dataclass(frozen=True)
class ComparisonReport:
    passed: bool
    skipped: bool = False
    note: str = ""
    first_violation: tuple = None
    intervals_checked: int = 0


def _has_point(points, a, b):
    i = np.searchsorted(points, a, side="right")
    return i < len(points) and points[i] < b


def _interlace(outer, inner, name):
    """Every open interval between consecutive points of ``outer`` holds one of ``inner``."""
    outer = np.sort(np.asarray(outer))
    inner = np.sort(np.asarray(inner))
    for a, b in zip(outer[:-1], outer[1:]):
        if not _has_point(inner, a, b):
            return (name, float(a), float(b))
    return None


def check_sturm_comparison(zeros_u0, zeros_w, zeros_u1, degenerate=False, merge=1e-8):
    """Interlacing checks of the Sturm comparison theorem for q0 - q1 > 0.

    (a) between two zeros of u0 there is a zero of u1;
    (b) between two zeros of W(u0, u1) there is a zero of u1;
    (c) between two zeros of u1 that are not zeros of u0 there is a zero of
        u0 or of W(u0, u1).
    """
    if degenerate:
        return ComparisonReport(True, True, "identical equations: nothing to compare")
    z0, zw, z1 = (np.sort(np.asarray(z, dtype=float)) for z in (zeros_u0, zeros_w, zeros_u1))
    for outer, name in ((z0, "u0"), (zw, "W(u0,u1)")):
        bad = _interlace(outer, z1, f"no zero of u1 between zeros of {name}")
        if bad:
            return ComparisonReport(False, note=bad[0], first_violation=bad[1:])
    common = np.array([z for z in z1 if z0.size and np.min(np.abs(z0 - z)) < merge])
    either = np.sort(np.concatenate([z0, zw]))
    for a, b in zip(z1[:-1], z1[1:]):
        if a in common or b in common:
            continue
        if not _has_point(either, a, b):
            return ComparisonReport(False, note="no zero of u0 or W between zeros of u1",
                                    first_violation=(float(a), float(b)))
    n = max(0, z0.size - 1) + max(0, zw.size - 1) + max(0, z1.size - 1)
    return ComparisonReport(True, intervals_checked=n)


def check_wronskian_comparison(w01, w12, w02, degenerate01=False, degenerate12=False):
    """Wronskian comparison for E0 - q0 <= E1 - q1 <= E2 - q2.

    Between two zeros of W(u0, u1) (resp. W(u1, u2)) lies a sign flip of
    W(u0, u2).  A pair that vanishes identically is skipped, and then so is
    the other one, since W(u0, u2) coincides with it.
    """
    if degenerate01 or degenerate12:
        which = "W(u0,u1)" if degenerate01 else "W(u1,u2)"
        return ComparisonReport(True, True, f"{which} vanishes identically: skipped")
    n = 0
    for w, name in ((w01, "W(u0,u1)"), (w12, "W(u1,u2)")):
        bad = _interlace(w, w02, f"no flip of W(u0,u2) between zeros of {name}")
        if bad:
            return ComparisonReport(False, note=bad[0], first_violation=bad[1:])
        n += max(0, len(w) - 1)
    return ComparisonReport(True, intervals_checked=n)


def check_triangle(n01, n12, n02):
    """Triangle inequality for Wronskian zero counts."""
    return n01 + n12 - 1 <= n02 <= n01 + n12 + 1


def _same_equation(pot_a, pot_b, E_a, E_b, x0, x_end):
    return difference_sign(pot_a, pot_b, E_a, E_b, x0, x_end) == 0


def sturm_pair(pot0, pot1, E, x_end, theta0=0.0, theta1=0.0, x0=1.0, tol=DEFAULT_TOL):
    """Co-integrate u0, u1 at energy E and run :func:`check_sturm_comparison`."""
    sign = difference_sign(pot0, pot1, E, E, x0, x_end)
    if sign == 0:
        return check_sturm_comparison([], [], [], degenerate=True)
    if sign < 0:
        raise ValueError("Sturm comparison needs q0 - q1 > 0")
    co = co_integrate([SolutionSpec(pot0, E, theta0, x0), SolutionSpec(pot1, E, theta1, x0)],
                      x_end, tol=tol)
    return check_sturm_comparison(co.zeros[0], co.wronskian_zeros[(0, 1)], co.zeros[1])


def wronskian_triple(triple, x_end, x0=1.0, tol=DEFAULT_TOL):
    """Co-integrate three (pot, E, theta) solutions and check comparison + triangle.

    Returns ``(comparison_report, triangle_ok, counts)`` with counts
    ``(#01, #12, #02)``.
    """
    (p0, e0, t0), (p1, e1, t1), (p2, e2, t2) = triple
    s01 = difference_sign(p0, p1, e0, e1, x0, x_end)
    s12 = difference_sign(p1, p2, e1, e2, x0, x_end)
    if s01 < 0 or s12 < 0:
        raise ValueError("need E0 - q0 <= E1 - q1 <= E2 - q2")
    sols = [SolutionSpec(p, e, t, x0) for p, e, t in triple]
    co = co_integrate(sols, x_end, tol=tol)
    w = co.wronskian_zeros
    deg01 = s01 == 0 and abs(t0 - t1) < 1e-15
    deg12 = s12 == 0 and abs(t1 - t2) < 1e-15
    rep = check_wronskian_comparison(w[(0, 1)], w[(1, 2)], w[(0, 2)], deg01, deg12)
    counts = (w[(0, 1)].size, w[(1, 2)].size, w[(0, 2)].size)
    return rep, check_triangle(*counts), counts
