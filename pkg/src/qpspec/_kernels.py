"""Compiled right-hand sides and potential evaluation.

Parameter layout: ``p[0:8]`` is an auxiliary header, ``p[0]`` holds the
offset of the second potential block (0 if absent) and ``p[1:8]`` are
kernel-specific scalars.  Potential blocks start at ``p[8]``; each is
``[E, M, kind, npp, x_cut, M * (freq, phase, re, im), pert params]`` as
produced by :meth:`PotentialSpec.block`.
"""

import math

import numpy as np
from numba import njit

from .ode import compiled_rhs

HEADER = 8


def pack(*blocks, aux=()):
    head = np.zeros(HEADER)
    head[1:1 + len(aux)] = aux
    if len(blocks) > 1:
        head[0] = HEADER + blocks[0].size
    return np.concatenate([head, *blocks])


@njit(cache=True)
def q_at(x, p, off):
    m = int(p[off + 1])
    kind = int(p[off + 2])
    base = off + 5
    s = 0.0
    for i in range(m):
        j = base + 4 * i
        arg = p[j] * x + p[j + 1]
        s += p[j + 2] * math.cos(arg) - p[j + 3] * math.sin(arg)
    pb = base + 4 * m
    if kind == 0 or x < p[off + 4]:
        return s
    if kind == 1:
        return s + p[pb] * x ** (-p[pb + 1])
    if kind == 2:
        level = int(p[pb])
        K = p[pb + 1]
        excess = p[pb + 2]
        lj = 1.0
        lg = x
        ladder = 0.0
        for j in range(level + 1):
            if j > 0:
                lg = math.log(abs(lg))
            lj *= lg
            if j < level:
                ladder += 1.0 / (lj * lj)
        return s - ladder / (4.0 * K) + excess / (lj * lj)
    # sampled table, interpolated linearly, zero beyond the last sample
    nt = int(p[pb])
    xs = p[pb + 1:pb + 1 + nt]
    vs = p[pb + 1 + nt:pb + 1 + 2 * nt]
    if x >= xs[nt - 1]:
        return s
    if x <= xs[0]:
        return s + vs[0]
    lo = 0
    hi = nt - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    t = (x - xs[lo]) / (xs[hi] - xs[lo])
    return s + (1 - t) * vs[lo] + t * vs[hi]


@njit(cache=True)
def q_grid(xs, p, off):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = q_at(xs[i], p, off)
    return out


@compiled_rhs
@njit(cache=True)
def prufer_rhs(x, y, p, out):
    """Scaled Pruefer equations with scale k = p[1].

    u = (rho / sqrt k) sin phi, u' = rho sqrt(k) cos phi:
    phi' = k cos^2 + ((E - q) / k) sin^2,  (log rho)' = (k - (E - q) / k) sin cos.
    """
    k = p[1]
    v = (p[HEADER] - q_at(x, p, HEADER)) / k
    c = math.cos(y[0])
    s = math.sin(y[0])
    out[0] = k * c * c + v * s * s
    out[1] = (k - v) * s * c


@compiled_rhs
@njit(cache=True)
def solutions_rhs(x, y, p, out):
    """Several scaled Pruefer solutions with common scale k = p[1].

    p[2] is the number of solutions n <= 5 and p[3:3+n] their block offsets;
    the state is [phi_0, lr_0, phi_1, lr_1, ...].
    """
    k = p[1]
    n = int(p[2])
    for i in range(n):
        off = int(p[3 + i])
        v = (p[off] - q_at(x, p, off)) / k
        c = math.cos(y[2 * i])
        s = math.sin(y[2 * i])
        out[2 * i] = k * c * c + v * s * s
        out[2 * i + 1] = (k - v) * s * c


def pack_solutions(blocks, k):
    """Parameter vector for :func:`solutions_rhs`."""
    if not 1 <= len(blocks) <= HEADER - 3:
        raise ValueError(f"between 1 and {HEADER - 3} solutions can be co-integrated")
    offsets, pos = [], HEADER
    for b in blocks:
        offsets.append(pos)
        pos += b.size
    head = np.zeros(HEADER)
    head[1] = k
    head[2] = len(blocks)
    head[3:3 + len(blocks)] = offsets
    return np.concatenate([head, *blocks])


@compiled_rhs
@njit(cache=True)
def matrix_rhs(x, y, p, out):
    """Fundamental matrix of (u, u')' = [[0, 1], [q - E, 0]] (u, u'), column-major."""
    w = q_at(x, p, HEADER) - p[HEADER]
    out[0] = y[1]
    out[1] = w * y[0]
    out[2] = y[3]
    out[3] = w * y[2]


@compiled_rhs
@njit(cache=True)
def frame_psi_rhs(x, y, p, out):
    """psi' = -dq (u0 cos psi - v0 sin psi)^2 with (u0, v0) co-integrated.

    State [psi, u0, u0', v0, v0']; block 0 carries q0 and E, block 1 the
    perturbation (its own Fourier part is empty).
    """
    off1 = int(p[0])
    w = q_at(x, p, HEADER) - p[HEADER]
    dq = q_at(x, p, off1)
    t = y[1] * math.cos(y[0]) - y[3] * math.sin(y[0])
    out[0] = -dq * t * t
    out[1] = y[2]
    out[2] = w * y[1]
    out[3] = y[4]
    out[4] = w * y[3]


@compiled_rhs
@njit(cache=True)
def free_psi_rhs(x, y, p, out):
    """psi' = -(mu / x^gamma) (cos psi - x sin psi)^2: free edge frame u0 = 1, v0 = x."""
    mu = p[1]
    gamma = p[2]
    t = math.cos(y[0]) - x * math.sin(y[0])
    out[0] = -mu * x ** (-gamma) * t * t


@njit(cache=True)
def _phase_coeff(x, p, j):
    return p[j] + p[j + 1] * math.sin(x) + p[j + 2] / x


@compiled_rhs
@njit(cache=True)
def phase_rhs(x, y, p, out):
    """phi' = rho(x) (A sin^2 + sin cos + B cos^2).

    aux: [rho_kind, c, power]; rho = c x^-power (kind 0) or c exp(-power x)
    (kind 1).  The block after the header holds [A0, A1, A2, B0, B1, B2]
    with A(x) = A0 + A1 sin(x) + A2 / x, likewise B.
    """
    if p[1] == 0.0:
        rho = p[2] * x ** (-p[3])
    else:
        rho = p[2] * math.exp(-p[3] * x)
    A = _phase_coeff(x, p, HEADER)
    B = _phase_coeff(x, p, HEADER + 3)
    c = math.cos(y[0])
    s = math.sin(y[0])
    out[0] = rho * (A * s * s + s * c + B * c * c)
