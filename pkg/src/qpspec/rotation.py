"""Rotation number, integrated density of states and gap edges.

The rotation number is the mean angular speed of the Pruefer angle.  It is
estimated by a smoothly weighted time average of the angle's derivative over
``[1, 1 + L]`` and ``[1, 1 + 2L]``; the larger window is reported and the
difference between the two serves as error bar.  Inside a spectral gap the
rotation number sits on a plateau ``<omega, m> / 2``; edges are located by
bisection on the plateau test.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._util import thread_map, weighted_slope
from .prufer import DEFAULT_TOL, SolutionSpec, prufer_trajectory

__all__ = [
    "RotationEstimate",
    "EdgeRecord",
    "rotation_number",
    "ids",
    "rotation_scan",
    "find_edges",
    "refine_edge",
    "default_threshold_energy",
    "sample_spacing",
]


@dataclass(frozen=True)
class RotationEstimate:
    energy: float
    rho: float
    error_bar: float
    horizon: float
    lyapunov: float = 0.0

    @property
    def ids(self):
        return self.rho / math.pi


@dataclass(frozen=True)
class EdgeRecord:
    """One side of the gap labelled ``m``.

    ``bracket = (E_in, E_out)`` with ``E_in`` on the gap side.  ``resolved`` is
    False for gaps narrower than the bisection tolerance; such records carry
    the crossing energy in both bracket slots.
    """

    label: tuple
    side: str
    energy: float
    bracket: tuple
    plateau: float
    resolved: bool = True

    @property
    def bracket_width(self):
        return abs(self.bracket[1] - self.bracket[0])


def sample_spacing(pot, E):
    """Grid spacing that resolves the oscillations of the Pruefer angle.

    The angle oscillates at about twice the local wave number plus the
    potential's frequencies; the spacing keeps those well below Nyquist.
    """
    fmax = max((abs(pot.freq.dot(n)) for n in pot.q_torus.coeffs), default=0.0)
    speed = 2.0 * math.sqrt(max(E, 0.0) + pot.sup_bound) + 2.0 * fmax + 1.0
    return 1.0 / speed


def rotation_number(pot, E, horizon=1e4, tol=DEFAULT_TOL, perturbed=False):
    """Estimate ``lim theta(x) / x`` for the Dirichlet solution at energy ``E``."""
    if horizon < 1e3:
        raise ValueError("horizon must be at least 1e3")
    h = sample_spacing(pot, E)
    n = int(math.ceil(horizon / h))
    xs = 1.0 + np.linspace(0.0, 2.0 * horizon, 2 * n + 1)
    sol = SolutionSpec(pot, E, perturbed=perturbed)
    path = prufer_trajectory(sol, xs[-1], checkpoints=xs, tol=tol)
    short = weighted_slope(path.theta[: n + 1], horizon)
    long = weighted_slope(path.theta, 2.0 * horizon)
    lyap = weighted_slope(path.log_r, 2.0 * horizon)
    return RotationEstimate(float(E), max(long, 0.0), abs(long - short), 2.0 * horizon,
                            lyap)


def ids(pot, E, horizon=1e4, tol=DEFAULT_TOL):
    """Integrated density of states ``rho(E) / pi``."""
    return rotation_number(pot, E, horizon, tol).ids


def rotation_scan(pot, energies, horizon=1e4, tol=DEFAULT_TOL, threads=None):
    return thread_map(lambda E: rotation_number(pot, E, horizon, tol), energies, threads)


def default_threshold_energy(pot, eps1=0.05):
    """Energy above which ``sup|Q| / (2 sqrt(E)) <= eps1``."""
    return (pot.sup_bound / (2.0 * eps1)) ** 2


def _normal_label(pot, m):
    m = tuple(int(k) for k in m)
    if len(m) != pot.freq.d:
        raise ValueError(f"label {m} has the wrong dimension")
    if not any(m):
        raise ValueError("gap labels must be nonzero")
    if pot.freq.dot(m) < 0:
        m = tuple(-k for k in m)
    return m


def find_edges(pot, E_range, m_list, edge_tol=1e-8, horizon=2e4, rho_tol=None,
               grid=64, tol=DEFAULT_TOL, threads=None, include_bottom=True,
               min_growth=5.0):
    """Bracket both edges of every gap whose plateau lies inside ``rho(E_range)``.

    ``rho_tol`` is the plateau acceptance band; by default it tracks the
    resolution ``pi / horizon`` of a finite window.  With ``include_bottom``
    the bottom of the spectrum (plateau 0) is reported as the upper edge of
    the gap below the spectrum, with the zero label.  A gap counts as
    resolved when the mid-gap solution grows by at least ``exp(min_growth)``
    over the window.
    """
    labels = [_normal_label(pot, m) for m in m_list]
    lo, hi = map(float, E_range)
    rho_tol = 0.05 * math.pi / horizon if rho_tol is None else rho_tol
    cache = {}

    def estimate(E):
        if E not in cache:
            cache[E] = rotation_number(pot, E, horizon, tol)
        return cache[E]

    def rho(E):
        return estimate(E).rho

    energies = np.linspace(lo, hi, grid)
    for E, est in zip(energies, rotation_scan(pot, energies, horizon, tol, threads)):
        cache[float(E)] = est

    def side(E, plateau):
        r = rho(E)
        if r < plateau - rho_tol:
            return -1
        if r > plateau + rho_tol:
            return 1
        return 0

    def bisect(a, b, plateau, keep):
        # invariant: side(a) == keep, side(b) != keep
        while b - a > edge_tol:
            mid = 0.5 * (a + b)
            if side(mid, plateau) == keep:
                a = mid
            else:
                b = mid
        return a, b

    def edges_of(m, plateau):
        sides = [side(float(E), plateau) for E in energies]
        below = max((float(E) for E, s in zip(energies, sides) if s < 0), default=None)
        above = min((float(E) for E, s in zip(energies, sides) if s > 0), default=None)
        inside = [float(E) for E, s in zip(energies, sides) if s == 0]
        if not inside and (below is None or above is None):
            return []
        if inside:
            E_in = inside[0]
        else:
            a, b = below, above
            E_in = None
            while b - a > edge_tol:
                mid = 0.5 * (a + b)
                s = side(mid, plateau)
                if s == 0:
                    E_in = mid
                    break
                a, b = (mid, b) if s < 0 else (a, mid)
            if E_in is None:
                E = 0.5 * (a + b)
                return [EdgeRecord(m, "lower", E, (E, E), plateau, False),
                        EdgeRecord(m, "upper", E, (E, E), plateau, False)]
        out = []
        if below is not None:
            start = max(E for E in cache if E < E_in and side(E, plateau) < 0)
            outer, inner = bisect(start, E_in, plateau, -1)
            out.append(EdgeRecord(m, "lower", 0.5 * (outer + inner), (inner, outer), plateau))
        if above is not None:
            start = min(E for E in cache if E > E_in and side(E, plateau) > 0)
            inner, outer = bisect(E_in, start, plateau, 0)
            out.append(EdgeRecord(m, "upper", 0.5 * (outer + inner), (inner, outer), plateau))
        if out and any(m):
            # an in-band energy whose rho happens to sit within rho_tol of the
            # plateau mimics a gap; a true gap has exponential growth inside
            probe = 0.5 * (out[0].energy + out[1].energy) if len(out) == 2 else E_in
            mid = estimate(probe)
            if mid.lyapunov * mid.horizon < min_growth:
                out = [EdgeRecord(m, r.side, r.energy, r.bracket, plateau, False) for r in out]
        return out

    records = []
    if include_bottom and rho(lo) <= rho_tol:
        # bottom of the spectrum: upper edge of the semi-infinite gap, plateau 0
        records += [r for r in edges_of((0,) * pot.freq.d, 0.0) if r.side == "upper"]
    for m in labels:
        records += edges_of(m, 0.5 * pot.freq.dot(m))
    return records


def _edge_defect(pot, E, plateau, horizon, tol):
    # (rho - plateau)^2 - lyapunov^2 changes sign linearly across an edge
    est = rotation_number(pot, E, horizon, tol)
    return (est.rho - plateau) ** 2 - est.lyapunov ** 2


def refine_edge(record, pot, delta=1e-6, horizon=1e5, tol=1e-10):
    """Sharpen a bracketed edge by a secant step on the edge defect.

    Near an edge ``rho - plateau`` (band side) and the Lyapunov exponent
    (gap side) both vanish like a square root of the distance to the edge,
    so ``(rho - plateau)^2 - lyapunov^2`` is linear across it.  Two
    evaluations ``delta`` away on either side locate its zero.
    """
    if not record.resolved:
        return record
    E = record.energy
    a, b = E - delta, E + delta
    ga = _edge_defect(pot, a, record.plateau, horizon, tol)
    gb = _edge_defect(pot, b, record.plateau, horizon, tol)
    if ga == gb or ga * gb > 0:
        return record
    root = a - ga * (b - a) / (gb - ga)
    width = abs(record.bracket[1] - record.bracket[0])
    if abs(root - E) > max(delta, width):
        return record
    return EdgeRecord(record.label, record.side, float(root), record.bracket,
                      record.plateau, True)
