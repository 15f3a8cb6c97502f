"""Finite-difference Dirichlet eigenvalue counts on a box [x0, L].

Independent of the Pruefer machinery: the operator is discretized by the
three-point stencil and eigenvalues below ``lam`` are counted through the
inertia of ``T - lam M`` (Sylvester), i.e. the number of negative pivots of
its LDL^T factorization.

Two grids are offered.  ``uniform`` discretizes -u'' + q u directly.  ``log``
substitutes x = exp(t), u = exp(t/2) w, which turns the problem into
-w'' + (1/4 + x^2 q) w = lam x^2 w and resolves decaying potentials on long
boxes with few points.
"""

import math

import numpy as np
from numba import njit

__all__ = ["sturm_count", "box_operator", "box_count", "box_count_converged"]


@njit(cache=True)
def sturm_count(diag, off, weight, lam):
    """Number of negative pivots of the tridiagonal ``T - lam * diag(weight)``."""
    n = diag.shape[0]
    count = 0
    piv = diag[0] - lam * weight[0]
    if piv < 0:
        count += 1
    for i in range(1, n):
        if piv == 0.0:
            piv = 1e-300
        piv = diag[i] - lam * weight[i] - off[i - 1] * off[i - 1] / piv
        if piv < 0:
            count += 1
    return count


def box_operator(q, x0, L, n, grid="uniform"):
    """Tridiagonal pencil (diag, off, weight) for Dirichlet conditions at x0 and L.

    ``q`` is a vectorized callable.  ``n`` is the number of interior nodes.
    """
    if grid == "uniform":
        x = np.linspace(x0, L, n + 2)[1:-1]
        h = (L - x0) / (n + 1)
        diag = 2.0 / h**2 + q(x)
        off = np.full(n - 1, -1.0 / h**2)
        weight = np.ones(n)
    elif grid == "log":
        t = np.linspace(math.log(x0), math.log(L), n + 2)[1:-1]
        h = (math.log(L) - math.log(x0)) / (n + 1)
        x = np.exp(t)
        diag = 2.0 / h**2 + 0.25 + x**2 * q(x)
        off = np.full(n - 1, -1.0 / h**2)
        weight = x**2
    else:
        raise ValueError(f"unknown grid {grid!r}")
    return diag, off, weight


def box_count(q, lam, x0, L, n, grid="uniform"):
    """Number of Dirichlet eigenvalues below ``lam`` on [x0, L]."""
    diag, off, weight = box_operator(q, x0, L, n, grid)
    return int(sturm_count(diag, off, weight, float(lam)))


def box_count_converged(q, lam, x0, L, n, grid="uniform", refinements=3):
    """Box count on successively doubled grids until two agree.

    Returns ``(count, converged)``; ``converged`` is False when no two
    consecutive grids agreed.
    """
    prev = box_count(q, lam, x0, L, n, grid)
    for _ in range(refinements):
        n *= 2
        cur = box_count(q, lam, x0, L, n, grid)
        if cur == prev:
            return cur, True
        prev = cur
    return prev, False
