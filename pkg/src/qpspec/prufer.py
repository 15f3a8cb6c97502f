"""Pruefer-variable integration of -u'' + q u = E u.

Internally the scaled angle ``phi`` with ``tan(theta) = tan(phi) / k`` is
integrated (for ``k = sqrt(E)`` the free equation has constant angular
speed).  Both angles pass through multiples of pi / 2 at the same points, so
zeros, crossing counts and rotation numbers coincide; everything returned to
callers is converted back to the plain angle ``theta`` with
``u = r sin(theta)``, ``u' = r cos(theta)``.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .ode import integrate
from .potential import PotentialSpec

__all__ = [
    "SolutionSpec",
    "PruferState",
    "PruferPath",
    "prufer_integrate",
    "prufer_trajectory",
    "fundamental_matrix",
    "CoTrajectory",
    "co_integrate",
    "default_scale",
    "theta_to_phi",
    "phi_to_theta",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-9


def default_scale(E):
    return float(np.sqrt(max(float(E), 1.0)))


def theta_to_phi(theta, k):
    """Scaled angle with ``tan(phi) = k tan(theta)`` on the same branch."""
    s, c = np.sin(theta), np.cos(theta)
    return theta + np.arctan2(s * c * (k - 1.0), c * c + k * s * s)


def phi_to_theta(phi, log_rho, k):
    """Inverse of :func:`theta_to_phi`, also converting the log amplitude."""
    s, c = np.sin(phi), np.cos(phi)
    theta = phi + np.arctan2(s * c * (1.0 / k - 1.0), c * c + s * s / k)
    log_r = log_rho + 0.5 * np.log(s * s / k + k * c * c)
    return theta, log_r


def _scaled_initial(theta0, k):
    phi0 = theta_to_phi(theta0, k)
    s, c = np.sin(phi0), np.cos(phi0)
    return float(phi0), float(-0.5 * np.log(s * s / k + k * c * c))


@dataclass(frozen=True)
class SolutionSpec:
    """Solution of ``-u'' + q u = E u`` fixed by its Pruefer angle at ``x0``.

    ``theta0`` lies in [0, pi); ``theta0 = 0`` is the Dirichlet condition.
    ``perturbed`` selects q1 = q0 + dq instead of q0.
    """

    potential: PotentialSpec
    energy: float
    theta0: float = 0.0
    x0: float = 1.0
    perturbed: bool = True

    def __post_init__(self):
        if not 0.0 <= self.theta0 < np.pi:
            raise ValueError("initial Pruefer angle must lie in [0, pi)")

    def block(self):
        return self.potential.block(self.energy, perturbed=self.perturbed)

    def q(self, x):
        return self.potential.evaluate(x, perturbed=self.perturbed)


@dataclass(frozen=True)
class PruferState:
    x: float
    theta: float
    log_r: float

    @property
    def u(self):
        return np.exp(self.log_r) * np.sin(self.theta)

    @property
    def du(self):
        return np.exp(self.log_r) * np.cos(self.theta)


@dataclass
class PruferPath:
    """Sampled trajectory: ``theta``/``log_r`` at ``x``, zeros of u, end state."""

    x: np.ndarray
    theta: np.ndarray
    log_r: np.ndarray
    zeros: np.ndarray
    end: PruferState
    nsteps: int


def _run(sol, x_end, tol, checkpoints, zeros, scale):
    k = default_scale(sol.energy) if scale is None else float(scale)
    phi0, lr0 = _scaled_initial(sol.theta0, k)
    p = K.pack(sol.block(), aux=(k,))
    channels = np.array([[1.0, 0.0]]) if zeros else None
    tr = integrate(K.prufer_rhs, p, sol.x0, [phi0, lr0], x_end, tol=tol,
                   checkpoints=checkpoints, channels=channels)
    return tr, k


def prufer_integrate(sol, x_end, tol=DEFAULT_TOL, scale=None):
    """State of the solution at ``x_end`` (unwrapped angle, log amplitude)."""
    tr, k = _run(sol, x_end, tol, None, False, scale)
    theta, log_r = phi_to_theta(tr.y_end[0], tr.y_end[1], k)
    return PruferState(tr.x_end, float(theta), float(log_r))


def prufer_trajectory(sol, x_end, checkpoints=None, tol=DEFAULT_TOL, zeros=False,
                      scale=None):
    """Trajectory sampled at ``checkpoints``; ``zeros=True`` also records zeros of u."""
    tr, k = _run(sol, x_end, tol, checkpoints, zeros, scale)
    theta, log_r = phi_to_theta(tr.samples[:, 0], tr.samples[:, 1], k)
    th_end, lr_end = phi_to_theta(tr.y_end[0], tr.y_end[1], k)
    z = tr.events[0] if zeros else np.empty(0)
    return PruferPath(tr.checkpoints, theta, log_r, z,
                      PruferState(tr.x_end, float(th_end), float(lr_end)), tr.nsteps)


@dataclass
class CoTrajectory:
    """Several solutions integrated together with a common angle scale.

    ``theta`` has shape ``(n_checkpoints, n_solutions)``.  ``zeros[i]`` lists
    the zeros of solution ``i`` and ``wronskian_zeros[(i, j)]`` those of
    ``W(u_i, u_j)``, both restricted to the open integration interval.
    ``angle_gap[(i, j)]`` is the scaled angle difference ``phi_j - phi_i`` at
    the end point; its winding through multiples of pi counts Wronskian zeros.
    """

    x: np.ndarray
    theta: np.ndarray
    log_r: np.ndarray
    end: list
    zeros: list
    wronskian_zeros: dict
    angle_gap: dict
    angle_gap_start: dict


def _clean_events(ev, x0, x_end, merge=1e-8):
    lo, hi = min(x0, x_end), max(x0, x_end)
    ev = np.sort(np.asarray(ev))
    ev = ev[(ev > lo + merge * max(1.0, abs(lo))) & (ev < hi - merge * max(1.0, abs(hi)))]
    if ev.size > 1:
        keep = np.concatenate([[True], np.diff(ev) > merge * np.maximum(1.0, np.abs(ev[1:]))])
        ev = ev[keep]
    return ev


def co_integrate(solutions, x_end, checkpoints=None, tol=DEFAULT_TOL, pairs=None,
                 scale=None):
    """Integrate the solutions in ``solutions`` jointly from their common ``x0``.

    ``pairs`` selects which Wronskians to track (default: all pairs).  Zeros
    at the start point itself are excluded, as are zeros closer than 1e-8.
    """
    sols = list(solutions)
    x0 = sols[0].x0
    if any(sol.x0 != x0 for sol in sols):
        raise ValueError("co-integrated solutions must share the initial point")
    k = max(default_scale(sol.energy) for sol in sols) if scale is None else float(scale)
    n = len(sols)
    if pairs is None:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    y0 = []
    for sol in sols:
        y0.extend(_scaled_initial(sol.theta0, k))
    p = K.pack_solutions([sol.block() for sol in sols], k)
    rows = []
    for i in range(n):
        row = np.zeros(2 * n)
        row[2 * i] = 1.0
        rows.append(row)
    for i, j in pairs:
        row = np.zeros(2 * n)
        row[2 * j] = 1.0
        row[2 * i] = -1.0
        rows.append(row)
    tr = integrate(K.solutions_rhs, p, x0, y0, x_end, tol=tol, checkpoints=checkpoints,
                   channels=np.array(rows))
    phi = tr.samples[:, 0::2]
    theta, log_r = phi_to_theta(phi, tr.samples[:, 1::2], k)
    th_end, lr_end = phi_to_theta(tr.y_end[0::2], tr.y_end[1::2], k)
    end = [PruferState(tr.x_end, float(a), float(b)) for a, b in zip(th_end, lr_end)]
    zeros = [_clean_events(tr.events[i], x0, x_end) for i in range(n)]
    wz, gap, gap0 = {}, {}, {}
    for c, (i, j) in enumerate(pairs):
        wz[(i, j)] = _clean_events(tr.events[n + c], x0, x_end)
        gap[(i, j)] = float(tr.y_end[2 * j] - tr.y_end[2 * i])
        gap0[(i, j)] = float(y0[2 * j] - y0[2 * i])
    return CoTrajectory(tr.checkpoints, theta, log_r, end, zeros, wz, gap, gap0)


def fundamental_matrix(potential, E, x0, x_end, checkpoints=None, tol=1e-11,
                       perturbed=False, initial=None):
    """Fundamental matrix of ``(u, u')' = [[0,1],[q-E,0]](u, u')``.

    Returns ``(Phi(x_end), samples)`` with ``samples`` of shape ``(n, 2, 2)``.
    ``initial`` defaults to the identity at ``x0``.
    """
    X0 = np.eye(2) if initial is None else np.asarray(initial, dtype=float)
    y0 = X0.T.reshape(4)
    p = K.pack(potential.block(E, perturbed=perturbed))
    tr = integrate(K.matrix_rhs, p, x0, y0, x_end, tol=tol, checkpoints=checkpoints)
    end = tr.y_end.reshape(2, 2).T
    samples = tr.samples.reshape(-1, 2, 2).transpose(0, 2, 1)
    return end, samples
