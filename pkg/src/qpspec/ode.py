"""Adaptive Dormand-Prince 5(4) integration with PI step control.

The core loop is written so that numba can compile it with a jitted
right-hand side ``rhs(x, y, p, out)``; the very same function runs as plain
Python (``_dopri5.py_func``) for arbitrary Python callables.

Two extras beyond a textbook driver:

* the step is clipped so the solution is reported exactly at caller
  checkpoints (no interpolation error in sampled trajectories);
* "events": for every row ``c`` of a channel matrix, each crossing of
  ``c @ y`` through an integer multiple of pi is recorded with its position
  (linear interpolation inside the accepted step).  This is what zero
  counting of solutions and Wronskians is built on.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import cfunc, njit, types

__all__ = [
    "IntegrationError",
    "Trajectory",
    "compiled_rhs",
    "integrate",
    "integrate_phase",
]

RHS_SIGNATURE = types.void(types.float64, types.float64[::1], types.float64[::1],
                           types.float64[::1])

# jitted right-hand side -> typed twin; the driver specialised on the typed
# function signature is reusable from the on-disk cache, unlike one
# specialised on a particular dispatcher
_TYPED = {}


def compiled_rhs(fn):
    """Decorator for ``rhs(x, y, p, out)`` kernels: jit it and register a typed twin."""
    jitted = fn if hasattr(fn, "py_func") else njit(cache=True)(fn)
    _TYPED[jitted] = cfunc(RHS_SIGNATURE, cache=True)(jitted.py_func)
    return jitted

# Dormand-Prince coefficients
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array(
    [
        [0, 0, 0, 0, 0, 0],
        [1 / 5, 0, 0, 0, 0, 0],
        [3 / 40, 9 / 40, 0, 0, 0, 0],
        [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
        [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
    ]
)
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_E = np.array(
    [
        71 / 57600,
        0,
        -71 / 16695,
        71 / 1920,
        -17253 / 339200,
        22 / 525,
        -1 / 40,
    ]
)

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_MAXSTEPS = 2
STATUS_NONFINITE = 3


class IntegrationError(RuntimeError):
    """Raised when the integrator cannot proceed; ``x_last`` is the last good point."""

    def __init__(self, message, x_last):
        super().__init__(f"{message} (last good x = {x_last!r})")
        self.x_last = x_last


@njit(cache=True, nogil=True)
def _dopri5(rhs, p, x0, y0, x_end, checkpoints, rtol, atol, h0, max_steps,
            channels, max_events):
    n = y0.shape[0]
    direction = 1.0 if x_end >= x0 else -1.0
    ncp = checkpoints.shape[0]
    samples = np.empty((ncp, n))
    nch = channels.shape[0]
    ev_x = np.empty((nch, max_events))
    ev_dir = np.zeros((nch, max_events), dtype=np.int64)
    ev_n = np.zeros(nch, dtype=np.int64)
    ev_lost = 0

    k = np.empty((7, n))
    y = y0.copy()
    ytmp = np.empty(n)
    ynew = np.empty(n)
    out = np.empty(n)
    x = x0

    span = abs(x_end - x0)
    if span == 0.0:
        for i in range(ncp):
            samples[i] = y
        return samples, y, STATUS_OK, x, 0, ev_x, ev_dir, ev_n, ev_lost

    cx = np.empty(nch)
    for c in range(nch):
        s = 0.0
        for j in range(n):
            s += channels[c, j] * y[j]
        cx[c] = s

    icp = 0
    while icp < ncp and (checkpoints[icp] - x0) * direction <= 0.0:
        samples[icp] = y
        icp += 1

    rhs(x, y, p, out)
    for j in range(n):
        k[0, j] = out[j]

    h = h0 if h0 > 0.0 else min(1e-2, 1e-2 * span)
    err_old = 1e-4
    nsteps = 0
    status = STATUS_OK

    while (x_end - x) * direction > 0.0:
        if nsteps >= max_steps:
            status = STATUS_MAXSTEPS
            break
        target = x_end
        if icp < ncp:
            target = checkpoints[icp]
        dist = abs(target - x)
        hit = dist <= h * 1.0000001
        hstep = dist if hit else h
        hmin = 1e-14 * max(1.0, abs(x))
        if not hit and h < hmin:
            status = STATUS_UNDERFLOW
            break
        hs = hstep * direction
        for s in range(1, 7):
            for j in range(n):
                acc = y[j]
                for m in range(s):
                    acc += hs * _A[s, m] * k[m, j]
                ytmp[j] = acc
            rhs(x + _C[s] * hs, ytmp, p, out)
            for j in range(n):
                k[s, j] = out[j]
        err = 0.0
        for j in range(n):
            acc = y[j]
            e = 0.0
            for m in range(7):
                acc += hs * _B[m] * k[m, j]
                e += hs * _E[m] * k[m, j]
            ynew[j] = acc
            sc = atol + rtol * max(abs(y[j]), abs(acc))
            err += (e / sc) ** 2
        err = np.sqrt(err / n)
        if not np.isfinite(err):
            if hstep <= hmin:
                status = STATUS_NONFINITE
                break
            h = hstep * 0.1
            continue
        if err <= 1.0:
            xnew = target if hit else x + hs
            for c in range(nch):
                s = 0.0
                for j in range(n):
                    s += channels[c, j] * ynew[j]
                a = np.floor(cx[c] / np.pi)
                b = np.floor(s / np.pi)
                if a != b:
                    lo = min(a, b)
                    hi = max(a, b)
                    dirn = 1 if b > a else -1
                    mm = lo + 1.0
                    while mm <= hi:
                        frac = (mm * np.pi - cx[c]) / (s - cx[c])
                        if ev_n[c] < max_events:
                            ev_x[c, ev_n[c]] = x + frac * (xnew - x)
                            ev_dir[c, ev_n[c]] = dirn
                            ev_n[c] += 1
                        else:
                            ev_lost += 1
                        mm += 1.0
                cx[c] = s
            x = xnew
            for j in range(n):
                y[j] = ynew[j]
                k[0, j] = k[6, j]
            nsteps += 1
            if hit and icp < ncp and target == checkpoints[icp]:
                samples[icp] = y
                icp += 1
                while icp < ncp and checkpoints[icp] == x:
                    samples[icp] = y
                    icp += 1
            # PI controller (Gustafsson), alpha = 0.7/5 - 0.75*0.04, beta = 0.04
            fac = 0.9 * max(err, 1e-10) ** (-0.17) * err_old ** 0.04
            fac = min(10.0, max(0.2, fac))
            err_old = max(err, 1e-4)
            if not hit:
                h = h * fac
        else:
            h = hstep * max(0.2, 0.9 * err ** (-0.2))
    while icp < ncp:
        samples[icp] = y
        icp += 1
    return samples, y, status, x, nsteps, ev_x, ev_dir, ev_n, ev_lost


@dataclass
class Trajectory:
    """Result of one integration run.

    ``samples[i]`` is the state at ``checkpoints[i]``; ``events[c]`` lists the
    positions where channel ``c`` crossed a multiple of pi and
    ``event_dirs[c]`` the crossing direction (+1 upward, -1 downward).
    """

    x_end: float
    y_end: np.ndarray
    checkpoints: np.ndarray
    samples: np.ndarray
    nsteps: int
    events: list = field(default_factory=list)
    event_dirs: list = field(default_factory=list)



def integrate(rhs, p, x0, y0, x_end, *, tol=1e-9, atol=None, checkpoints=None,
              channels=None, h0=0.0, max_steps=50_000_000, max_events=200_000,
              python=False):
    """Integrate ``y' = rhs(x, y)`` from ``x0`` to ``x_end`` (either direction).

    ``tol`` is used as relative tolerance and, unless ``atol`` is given, also
    as absolute tolerance.  ``python=True`` runs the uncompiled driver, which
    is needed for right-hand sides that numba cannot compile.
    """
    y0 = np.ascontiguousarray(y0, dtype=np.float64)
    p = np.ascontiguousarray(p, dtype=np.float64)
    if checkpoints is None:
        cps = np.empty(0)
    else:
        cps = np.ascontiguousarray(checkpoints, dtype=np.float64)
        steps = np.diff(cps) if x_end >= x0 else -np.diff(cps)
        if np.any(steps < 0):
            raise ValueError("checkpoints must be ordered along the integration direction")
    if channels is None:
        ch = np.zeros((0, y0.size))
    else:
        ch = np.ascontiguousarray(np.atleast_2d(channels), dtype=np.float64)
        if ch.shape[1] != y0.size:
            raise ValueError("channel matrix width must match the state size")
    atol = tol if atol is None else atol
    if python:
        driver = _dopri5.py_func
    else:
        driver = _dopri5
        rhs = _TYPED.get(rhs, rhs)
    samples, y, status, x, nsteps, ev_x, ev_dir, ev_n, lost = driver(
        rhs, p, float(x0), y0, float(x_end), cps, float(tol), float(atol),
        float(h0), int(max_steps), ch, int(max_events))
    if status == STATUS_UNDERFLOW:
        raise IntegrationError("step size underflow", x)
    if status == STATUS_MAXSTEPS:
        raise IntegrationError("maximum number of steps exceeded", x)
    if status == STATUS_NONFINITE or not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite state", x)
    if lost:
        raise IntegrationError(f"event buffer overflow ({lost} events dropped)", x)
    events = [ev_x[c, : ev_n[c]].copy() for c in range(ch.shape[0])]
    dirs = [ev_dir[c, : ev_n[c]].copy() for c in range(ch.shape[0])]
    return Trajectory(x, y, cps, samples, int(nsteps), events, dirs)


def integrate_phase(f, phi0, x0, x_end, tol=1e-9, checkpoints=None):
    """Integrate a scalar phase equation ``phi' = f(x, phi)``.

    ``f`` is any Python callable.  Returns a :class:`Trajectory` whose single
    event channel records crossings of ``phi`` through multiples of pi.
    """

    def rhs(x, y, p, out):
        out[0] = f(x, y[0])

    return integrate(rhs, np.zeros(1), x0, [phi0], x_end, tol=tol,
                     checkpoints=checkpoints, channels=np.ones((1, 1)), python=True)
