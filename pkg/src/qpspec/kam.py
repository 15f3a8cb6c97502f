"""Reducibility of the quasi-periodic Schroedinger cocycle by a KAM iteration.

The equation ``X' = [[0, 1], [Q(omega x) - E, 0]] X`` is brought to
``X1' = (A1 + F1(omega x)) X1`` with ``A1 = sqrt(E) J`` and small ``F1``.
Each step conjugates ``X_j = Y_{j+1} X_{j+1}``:

* if ``2 alpha_j`` (``alpha_j`` the rotation of ``A_j``) is close to some
  ``<omega, m>``, a rotation ``exp(<m, y>/2 * A_j / alpha_j)`` moves the
  rotation number by ``<omega, m>/2`` and shifts the modes of the part of F
  that anticommutes with ``A_j`` by ``-+m``;
* the mean of F is absorbed into the constant part and the modes
  ``0 < |k| <= N_j`` are removed to first order by ``exp(W)`` with
  ``W' - [A, W] = F`` solved mode by mode; the new F is computed exactly on a
  Fourier grid.

Matrix sizes use the max-entry norm.  The torus variable is
``y = omega x + phase``; fields are stored by their Fourier coefficients on
``|k|_inf <= N``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "J",
    "EnergyBelowThresholdError",
    "KamContractError",
    "MatrixTorusField",
    "KamState",
    "StepReport",
    "NormReport",
    "KamRun",
    "rotation_of",
    "setup_transform",
    "initial_state",
    "kam_step",
    "run_reduction",
    "conjugation_at",
    "normal_form_solution",
    "verify_normal_form",
    "free_normalization",
]

J = np.array([[0.0, 1.0], [-1.0, 0.0]])
N_CAP = 64


class EnergyBelowThresholdError(ValueError):
    pass


class KamContractError(RuntimeError):
    def __init__(self, violations):
        self.violations = violations
        msg = "; ".join(f"{name}: {value:.3e} > {bound:.3e}" for name, value, bound in violations)
        super().__init__(f"KAM step estimates violated ({msg})")


def mnorm(M):
    """Max-entry norm over the last two axes."""
    return np.max(np.abs(M), axis=(-2, -1))


def rotation_of(A):
    """Signed rotation ``alpha`` of a traceless 2x2 matrix: ``sgn(A_01) sqrt(det A)``
    when ``det A > 0`` (elliptic), else 0."""
    det = float(np.linalg.det(A))
    if det <= 0:
        return 0.0
    return math.copysign(math.sqrt(det), A[0, 1])


def _offsets(dim, N):
    ax = np.arange(-N, N + 1)
    grids = np.meshgrid(*([ax] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


class MatrixTorusField:
    """2x2 matrix valued trigonometric polynomial ``sum_k F_k exp(i <k, y>)``."""

    def __init__(self, dim, N, coeffs=None):
        self.dim = int(dim)
        self.N = int(N)
        shape = (2 * self.N + 1,) * self.dim + (2, 2)
        self.coeffs = np.zeros(shape, complex) if coeffs is None else np.asarray(coeffs, complex)
        if self.coeffs.shape != shape:
            raise ValueError(f"coefficient array has shape {self.coeffs.shape}, expected {shape}")

    @classmethod
    def zero(cls, dim, N=0):
        return cls(dim, N)

    @property
    def modes(self):
        return _offsets(self.dim, self.N)

    def flat(self):
        return self.coeffs.reshape(-1, 2, 2)

    def coeff(self, k):
        k = tuple(int(i) + self.N for i in k)
        if any(i < 0 or i > 2 * self.N for i in k):
            return np.zeros((2, 2), complex)
        return self.coeffs[k]

    def mean(self):
        return self.coeff((0,) * self.dim)

    def norm(self, r=0.0):
        """``sum_k |F_k| exp(r |k|_1)``."""
        w = np.exp(r * np.abs(self.modes).sum(axis=1))
        return float(np.sum(mnorm(self.flat()) * w))

    def reality_defect(self):
        rev = self.coeffs[(slice(None, None, -1),) * self.dim]
        return float(np.max(np.abs(rev - np.conj(self.coeffs)), initial=0.0))

    def support(self, floor=0.0):
        keep = mnorm(self.flat()) > floor
        return self.modes[keep], self.flat()[keep]

    def resized(self, N):
        out = MatrixTorusField(self.dim, N)
        n = min(N, self.N)
        src = tuple(slice(self.N - n, self.N + n + 1) for _ in range(self.dim))
        dst = tuple(slice(N - n, N + n + 1) for _ in range(self.dim))
        out.coeffs[dst] = self.coeffs[src]
        return out

    def cleaned(self, floor):
        out = MatrixTorusField(self.dim, self.N, self.coeffs.copy())
        small = mnorm(out.coeffs) <= floor
        out.coeffs[small] = 0.0
        return out

    def evaluate(self, y):
        """Real values at torus points ``y`` of shape (n, dim)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        ks, cs = self.support()
        if ks.shape[0] == 0:
            return np.zeros((y.shape[0], 2, 2))
        ph = np.exp(1j * (y @ ks.T))
        return np.einsum("nk,kab->nab", ph, cs).real

    def on_grid(self, G):
        if G < 2 * self.N + 1:
            raise ValueError("grid too coarse for the stored modes")
        spec = np.zeros((G,) * self.dim + (2, 2), complex)
        idx = tuple((self.modes[:, i] % G) for i in range(self.dim))
        spec[idx] = self.flat()
        axes = tuple(range(self.dim))
        return (np.fft.ifftn(spec, axes=axes) * G**self.dim).real

    @classmethod
    def from_grid(cls, values, N):
        dim = values.ndim - 2
        G = values.shape[0]
        axes = tuple(range(dim))
        spec = np.fft.fftn(values, axes=axes) / G**dim
        out = cls(dim, N)
        modes = out.modes
        idx = tuple((modes[:, i] % G) for i in range(dim))
        out.coeffs = spec[idx].reshape(out.coeffs.shape)
        return out


def torus_grid(dim, G):
    ax = 2.0 * math.pi * np.arange(G) / G
    grids = np.meshgrid(*([ax] * dim), indexing="ij")
    return np.stack(grids, axis=-1)


def _split(F, Jhat):
    """Parts of the coefficients commuting and anticommuting with ``Jhat``."""
    JFJ = Jhat @ F @ Jhat
    return 0.5 * (F - JFJ), 0.5 * (F + JFJ)


def _rotate_field(F, Jhat, m, N_out):
    """Coefficients of ``Y^-1 F Y`` for ``Y = exp(<m, y>/2 Jhat)``."""
    C, P = _split(F.coeffs, Jhat)
    N = max(F.N, N_out)
    big = F.resized(N)
    Cb = MatrixTorusField(F.dim, F.N, C).resized(N).coeffs
    Pb = MatrixTorusField(F.dim, F.N, P).resized(N).coeffs
    plus = 0.5 * (np.eye(2) + 1j * Jhat)
    minus = 0.5 * (np.eye(2) - 1j * Jhat)
    out = Cb.copy()
    # P'_k = (1 + i Jhat)/2 P_{k-m} + (1 - i Jhat)/2 P_{k+m}
    out += plus @ _shift(Pb, m)
    out += minus @ _shift(Pb, tuple(-i for i in m))
    big.coeffs = out
    return big.resized(N_out)


def _shift(a, m):
    """``b_k = a_{k-m}`` with zero fill."""
    out = np.zeros_like(a)
    src, dst = [], []
    for s in m:
        if s >= 0:
            src.append(slice(0, a.shape[len(src)] - s))
            dst.append(slice(s, None))
        else:
            src.append(slice(-s, None))
            dst.append(slice(0, a.shape[len(dst)] + s))
    out[tuple(dst)] = a[tuple(src)]
    return out


def _expm_traceless(W):
    """``exp(W)``, ``exp(-W)`` and the scalar functions of ``s^2 = -det W``."""
    s2 = -(W[..., 0, 0] * W[..., 1, 1] - W[..., 0, 1] * W[..., 1, 0])
    a = np.sqrt(np.abs(s2))
    pos = s2 >= 0
    small = a < 1e-4
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(pos, np.cosh(a), np.cos(a))
        S = np.where(small, 1.0 + s2 / 6.0 + s2**2 / 120.0,
                     np.where(pos, np.sinh(a), np.sin(a)) / np.where(small, 1.0, a))
        D = np.where(small, 1.0 / 3.0 + s2 / 30.0 + s2**2 / 840.0,
                     (c - S) / np.where(small, 1.0, s2))
    I = np.eye(2)
    E = c[..., None, None] * I + S[..., None, None] * W
    Einv = c[..., None, None] * I - S[..., None, None] * W
    return E, Einv, c, S, D


def _expm_derivative(W, dW, S, D):
    """Derivative of ``exp(W)`` along the flow given ``dW``."""
    t = 0.5 * np.einsum("...ab,...ba->...", W, dW)  # (s^2)' / 2
    I = np.eye(2)
    return (S * t)[..., None, None] * I + (D * t)[..., None, None] * W + S[..., None, None] * dW


@dataclass
class KamState:
    """Iteration state.  ``steps`` keeps the conjugations for reconstruction:
    each entry is ``(m, Jhat, W)`` with ``m`` None when no rotation was applied."""

    j: int
    A: np.ndarray
    F: MatrixTorusField
    eps: float
    N: int
    r: float
    sigma: float
    r1: float
    omega: np.ndarray
    phase: np.ndarray
    resonance_log: list = field(default_factory=list)
    rho_partial: float = 0.0
    steps: list = field(default_factory=list)
    tau: float = 1.0

    @property
    def alpha(self):
        return rotation_of(self.A)

    def F_norm(self):
        return self.F.norm(self.r)


def _r_sched(r1, j):
    return r1 * (0.5 + 2.0 ** (-j))


def _N_sched(sigma, r1, j, eps):
    if eps <= 0:
        return 0
    dr = r1 * 2.0 ** (-(j + 1))
    return int(math.floor(2.0 * sigma / dr * math.log(1.0 / eps)))


def setup_transform(pot, E, eps1=0.05):
    """Constant-coefficient transform ``A1 = sqrt(E) J``, ``F1 = Q/(2 sqrt E) [[-1,-1],[1,1]]``.

    Raises :class:`EnergyBelowThresholdError` when ``sup|Q| / (2 sqrt E) >= eps1``.
    """
    if E <= 0:
        raise ValueError("energy must be positive")
    s = math.sqrt(E)
    A1 = s * J
    d = pot.freq.d
    ks = [k for k in pot.q_torus.coeffs]
    N = max((max(abs(i) for i in k) for k in ks), default=0)
    F1 = MatrixTorusField(d, N)
    T = np.array([[-1.0, -1.0], [1.0, 1.0]]) / (2.0 * s)
    theta = np.array(pot.phase)
    for k, c in pot.q_torus.coeffs.items():
        idx = tuple(i + N for i in k)
        F1.coeffs[idx] = c * np.exp(1j * float(np.dot(k, theta))) * T
    if abs(np.trace(F1.mean())) > 1e-12:
        raise ValueError("mean of F1 is not traceless")
    if np.max(np.abs(A1 - s * J)) >= 2:
        raise ValueError("A1 too far from sqrt(E) J")
    proxy = pot.sup_bound / (2.0 * s)
    if proxy >= eps1:
        raise EnergyBelowThresholdError(
            f"energy below threshold: sup|Q|/(2 sqrt E) = {proxy:.4g} >= eps1 = {eps1:.4g}")
    return A1, F1


def initial_state(pot, E, sigma=0.1, r1=0.5, eps1=0.05):
    A1, F1 = setup_transform(pot, E, eps1)
    eps = pot.sup_bound / (2.0 * math.sqrt(E))
    N1 = _N_sched(sigma, r1, 1, eps)
    Nst = max(F1.N, min(4 * N1, N_CAP))
    return KamState(1, A1, F1.resized(Nst), eps, N1, _r_sched(r1, 1), sigma, r1,
                    np.asarray(pot.freq.array, dtype=float), np.array(pot.phase),
                    [], rotation_of(A1), [], float(pot.freq.tau))


@dataclass
class StepReport:
    """``F_norm`` is ``|F_{j+1}|_{r_{j+1}}``, ``F_size`` the unweighted ``sum_k |F_k|``."""

    j: int
    eps: float
    N: int
    m: tuple
    A_norm: float
    F_norm: float
    F_size: float
    rho: float
    divisor: float
    W_norm: float
    violations: list


def _find_resonance(state, F, alpha, N):
    """Mode ``m`` present in the anticommuting part of F minimizing ``|2 alpha - <omega, m>|``."""
    if alpha == 0.0 or N == 0:
        return None, math.inf
    Jhat = state.A / alpha
    _, P = _split(F.flat(), Jhat)
    modes = F.modes
    amp = mnorm(P)
    lim = np.max(np.abs(modes), axis=1)
    ok = (amp > 1e-15) & (lim > 0) & (lim <= N)
    if not ok.any():
        return None, math.inf
    div = np.abs(2.0 * alpha - modes @ state.omega)
    div = np.where(ok, div, np.inf)
    i = int(np.argmin(div))
    return tuple(int(t) for t in modes[i]), float(div[i])


def kam_step(state, strict=False, resonance_exponent=None, floor=1e-17, norm_floor=1e-15):
    """One conjugation step.  Returns ``(new_state, StepReport)``.

    With ``strict`` a violated step estimate raises :class:`KamContractError`.
    ``resonance_exponent`` (default sigma) sets the resonance window
    ``|2 alpha - <omega, m>| <= 2 eps^exponent``.  Coefficients below
    ``floor`` (relative to ``1 + |A|``) are dropped; the weighted norm
    ``|F|_r`` is evaluated after dropping those below ``norm_floor``, since
    the weights ``exp(r |k|)`` would otherwise amplify round-off in high modes.
    """
    dim, omega = state.F.dim, state.omega
    sigma = state.sigma
    eps, N = state.eps, state.N
    res_exp = sigma if resonance_exponent is None else resonance_exponent
    alpha = state.alpha
    F = state.F
    A = state.A.copy()

    m, div = _find_resonance(state, F, alpha, N)
    Jhat = None
    if m is not None and div <= 2.0 * eps**res_exp:
        Jhat = A / alpha
        F = _rotate_field(F, Jhat, m, F.N)
        A = (1.0 - float(np.dot(omega, m)) / (2.0 * alpha)) * A
    else:
        m = None

    mean = F.mean().real
    A_new = A + mean
    F = MatrixTorusField(F.dim, F.N, F.coeffs.copy())
    F.coeffs[(F.N,) * dim] = 0.0

    # homological equation  i<k, omega> W_k - [A_new, W_k] = F_k  for 0 < |k| <= N_h
    N_h = min(N, F.N)
    W = MatrixTorusField(dim, N_h)
    if N_h > 0:
        sub = F.resized(N_h)
        modes = sub.modes
        freq = modes @ omega
        I2 = np.eye(2)
        ad = np.kron(I2, A_new) - np.kron(A_new.T, I2)
        M = 1j * freq[:, None, None] * np.eye(4) - ad
        rhs = sub.flat().transpose(0, 2, 1).reshape(-1, 4)  # column-major vec
        zero = np.all(modes == 0, axis=1) | (mnorm(sub.flat()) == 0)
        M[zero] = np.eye(4)
        rhs[zero] = 0.0
        sol = np.linalg.solve(M, rhs[..., None])[..., 0]
        W.coeffs = sol.reshape(-1, 2, 2).transpose(0, 2, 1).reshape(W.coeffs.shape)

    j1 = state.j + 1
    r_new = _r_sched(state.r1, j1)
    eps_new = eps ** (1.0 + sigma) if eps > 0 else 0.0
    N_new = _N_sched(sigma, state.r1, j1, eps_new)
    N_st = max(min(4 * max(N_new, 1), N_CAP), N_h)
    G = 1
    while G < max(3 * max(N_st, F.N, N_h) + 1, 8):
        G *= 2

    Wg = W.on_grid(G)
    speed = (W.modes @ omega).reshape(W.coeffs.shape[:-2])
    dW = MatrixTorusField(dim, N_h, W.coeffs * (1j * speed)[..., None, None])
    dWg = dW.on_grid(G)
    Ey, Einv, c, S, D = _expm_traceless(Wg)
    dY = _expm_derivative(Wg, dWg, S, D)
    B = A_new + F.on_grid(G)
    Fg = Einv @ (B @ Ey - dY) - A_new
    F_new = MatrixTorusField.from_grid(Fg, N_st)
    scale = 1.0 + float(np.max(np.abs(A_new)))
    F_new = F_new.cleaned(floor * scale)
    W = W.cleaned(floor * scale)

    # estimates of the step
    viol = []
    W_dev = float(np.max(mnorm(Ey - np.eye(2)))) if N_h > 0 else 0.0
    Yres_max = 1.0 if Jhat is None else 1.0 + float(np.max(np.abs(Jhat)))
    if eps > 0:
        if W_dev * Yres_max > eps**0.5:
            viol.append(("Y estimate", W_dev * Yres_max, eps**0.5))
        if float(np.max(np.abs(mean))) > eps**0.5:
            viol.append(("A estimate", float(np.max(np.abs(mean))), eps**0.5))
        fn = F_new.cleaned(norm_floor * scale).norm(r_new)
        if fn >= eps_new:
            viol.append(("F estimate", fn, eps_new))
    alpha_new = rotation_of(A_new)
    tau = state.tau
    if N_new > 0 and abs(alpha_new) >= 0.25 * N_new ** (-tau):
        bound = 32.0 * abs(alpha_new) * N_new**tau
        if float(np.max(np.abs(A_new))) > bound:
            viol.append(("|A| vs alpha", float(np.max(np.abs(A_new))), bound))
    if abs(np.trace(A_new)) > 1e-10:
        viol.append(("trace", abs(np.trace(A_new)), 1e-10))
    if strict and viol:
        raise KamContractError(viol)

    log = state.resonance_log + [m if m is not None else (0,) * dim]
    shift = 0.5 * sum(float(np.dot(omega, k)) for k in log)
    new = replace(state, j=j1, A=A_new, F=F_new, eps=eps_new, N=N_new, r=r_new,
                  resonance_log=log, rho_partial=shift + alpha_new,
                  steps=state.steps + [(m, Jhat, W)])
    rep = StepReport(state.j, eps, N, log[-1], float(np.max(np.abs(A_new))),
                     F_new.cleaned(norm_floor * scale).norm(r_new), F_new.norm(0.0),
                     new.rho_partial, div, W_dev, viol)
    return new, rep


@dataclass
class NormReport:
    A_final: np.ndarray
    A_norm: float
    A_nilpotency: float
    last_resonance: int
    A_times_N: float
    Y_sup: float
    log_label: float
    det_defect: float
    label_sum: tuple
    label_ok: bool
    rho_trace: list


@dataclass
class KamRun:
    state: KamState
    reports: list
    converged: bool
    norms: NormReport
    energy: float
    tau: float
    initial_size: float = 0.0

    @property
    def sizes(self):
        """Measured ``sum_k |F_j,k|`` for j = 1, 2, ..."""
        return [self.initial_size] + [r.F_size for r in self.reports]

    @property
    def violations(self):
        return [(r.j, v) for r in self.reports for v in r.violations]


def run_reduction(pot, E, max_iters=12, sigma=0.1, r1=0.5, eps1=0.05, stop=1e-14,
                  label=None, x_sample=None, resonance_exponent=None):
    """Iterate :func:`kam_step` until ``sum_k |F_k| < stop`` or ``max_iters`` steps.

    ``label`` (a gap label) enables the check that the resonance labels sum
    to it.  ``x_sample`` is the grid where the conjugation is evaluated for
    the norm report (default ``linspace(0, 100, 201)``).
    """
    state = initial_state(pot, E, sigma, r1, eps1)
    size0 = state.F.norm(0.0)
    tau = state.tau
    reports = []
    converged = state.F.norm(0.0) < stop
    while not converged and len(reports) < max_iters:
        state, rep = kam_step(state, resonance_exponent=resonance_exponent)
        reports.append(rep)
        converged = rep.F_size < stop
    if not reports:
        # nothing to remove: a single trivial step documents the run
        state, rep = kam_step(state)
        reports.append(rep)
    xs = np.linspace(0.0, 100.0, 201) if x_sample is None else np.asarray(x_sample, float)
    Y = conjugation_at(state, xs)
    A = state.A
    A_norm = float(np.max(np.abs(A)))
    A2 = float(np.max(np.abs(A @ A)))
    res = [i for i, m in enumerate(state.resonance_log) if any(m)]
    K = res[-1] + 1 if res else 0
    N_K = reports[K - 1].N if K else 0
    labels = [m for m in state.resonance_log if any(m)]
    total = tuple(int(sum(c)) for c in zip(*labels)) if labels else (0,) * pot.freq.d
    lab = None if label is None else tuple(int(t) for t in label)
    label_ok = lab is None or total == lab or total == tuple(-t for t in lab)
    mlen = max((abs(t) for t in (lab or total)), default=0)
    norms = NormReport(
        A, A_norm, A2 / max(A_norm**2, 1e-300), K,
        A_norm * N_K ** (3 * tau) if N_K else A_norm,
        float(np.max(mnorm(Y))), math.log(mlen) if mlen >= 2 else 0.0,
        float(np.max(np.abs(np.linalg.det(Y) - 1.0))), total, label_ok,
        [r.rho for r in reports])
    return KamRun(state, reports, converged, norms, float(E), tau, size0)


def conjugation_at(state, xs):
    """Accumulated conjugation ``Y(x) = prod_j Yrot_j exp(W_j)`` at points ``xs``."""
    xs = np.asarray(xs, dtype=float)
    y = xs[:, None] * state.omega[None, :] + state.phase[None, :]
    Y = np.broadcast_to(np.eye(2), (xs.size, 2, 2)).copy()
    for m, Jhat, W in state.steps:
        if m is not None:
            t = 0.5 * (y @ np.asarray(m, dtype=float))
            R = np.cos(t)[:, None, None] * np.eye(2) + np.sin(t)[:, None, None] * Jhat
            Y = Y @ R
        if W.N > 0:
            Ew, _, _, _, _ = _expm_traceless(W.evaluate(y))
            Y = Y @ Ew
    return Y


def free_normalization(E):
    """``(1 / 2 sqrt E) [[1, 1], [-sqrt E, sqrt E]]``; its determinant is ``1 / (2 sqrt E)``."""
    s = math.sqrt(E)
    return np.array([[1.0, 1.0], [-s, s]]) / (2.0 * s)


def _expm_const(A, xs):
    Ex, _, _, _, _ = _expm_traceless(A[None, :, :] * xs[:, None, None])
    return Ex


def normal_form_solution(state, E, xs):
    """``Y1 Y(x) exp(A x)`` at ``xs``."""
    xs = np.asarray(xs, dtype=float)
    return free_normalization(E) @ conjugation_at(state, xs) @ _expm_const(state.A, xs)


def verify_normal_form(state, pot, E, xs, tol=1e-12):
    """Max entrywise deviation of the normal form from direct integration, relative
    to the solution's size at each point.

    The direct solution starts from the normal form's value at ``xs[0]``.
    """
    from .prufer import fundamental_matrix

    xs = np.asarray(xs, dtype=float)
    X = normal_form_solution(state, E, xs)
    _, direct = fundamental_matrix(pot, E, float(xs[0]), float(xs[-1]), checkpoints=xs,
                                   tol=tol, initial=X[0])
    dev = mnorm(X - direct) / np.maximum(mnorm(direct), 1e-300)
    return float(np.max(dev))
