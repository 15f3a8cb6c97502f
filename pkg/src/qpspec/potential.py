"""Quasiperiodic background potentials and decaying perturbations.

A background potential is ``q0(x) = Q(omega * x + phase)`` for a real
trigonometric polynomial ``Q`` on the d-torus, stored through its Fourier
coefficients.  A perturbed potential adds ``dq(x)`` which tends to zero.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DiophantineError",
    "FrequencyVector",
    "TorusFunction",
    "PerturbationSpec",
    "PotentialSpec",
    "GOLDEN",
    "golden_frequency",
    "torus_integral",
    "iterated_log",
    "L_scale",
    "Q_ladder",
    "e_tower",
]

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


class DiophantineError(ValueError):
    pass


def _lattice(d, radius, norm="l1"):
    """Nonzero integer vectors with |n| <= radius (one of each +-n pair)."""
    for n in itertools.product(range(-radius, radius + 1), repeat=d):
        if not any(n):
            continue
        if norm == "l1" and sum(abs(k) for k in n) > radius:
            continue
        # keep the representative whose first nonzero entry is positive
        first = next(k for k in n if k)
        if first > 0:
            yield n


def _folded(v):
    return abs((v + math.pi) % (2 * math.pi) - math.pi)


@dataclass(frozen=True)
class FrequencyVector:
    """Frequency vector omega together with Diophantine constants.

    The condition ``|<omega, n> mod 2pi| >= kappa / |n|^tau`` (``|n|`` the l1
    norm, the residue folded into [-pi, pi]) is verified for every
    ``0 < |n| <= n_check`` at construction.  When ``kappa`` is omitted it is
    fitted: ``tau`` defaults to ``d`` and ``kappa`` is 0.99 times the smallest
    observed ``|<omega,n>| |n|^tau``.
    """

    omega: tuple
    kappa: float = None
    tau: float = None
    n_check: int = 50

    def __post_init__(self):
        omega = tuple(float(w) for w in np.atleast_1d(self.omega))
        if not omega or not all(math.isfinite(w) for w in omega):
            raise ValueError("omega must be a nonempty vector of finite reals")
        object.__setattr__(self, "omega", omega)
        d = len(omega)
        tau = float(d) if self.tau is None else float(self.tau)
        if tau <= d - 1:
            raise DiophantineError(f"tau must exceed d - 1 = {d - 1}")
        object.__setattr__(self, "tau", tau)
        worst = self._worst(tau, self.n_check)
        if self.kappa is None:
            if worst[0] <= 0.0:
                raise DiophantineError(f"omega is resonant: <omega,{worst[1]}> = 0 mod 2pi")
            object.__setattr__(self, "kappa", 0.99 * worst[0])
        elif self.kappa <= 0:
            raise DiophantineError("kappa must be positive")
        elif worst[0] < self.kappa:
            raise DiophantineError(
                f"Diophantine condition fails at n = {worst[1]}: "
                f"|<omega,n>| |n|^tau = {worst[0]:.3e} < kappa = {self.kappa:.3e}")

    def _worst(self, tau, n_check):
        w = np.array(self.omega)
        best, arg = math.inf, None
        for n in _lattice(len(w), n_check):
            val = _folded(float(np.dot(w, n))) * sum(abs(k) for k in n) ** tau
            if val < best:
                best, arg = val, n
        return best, arg

    @property
    def d(self):
        return len(self.omega)

    @property
    def array(self):
        return np.array(self.omega)

    def dot(self, n):
        return float(np.dot(self.omega, n))

    def satisfies(self, n_check):
        """True when the stored (kappa, tau) hold for all 0 < |n| <= n_check."""
        return self._worst(self.tau, n_check)[0] >= self.kappa


def golden_frequency(n_check=50):
    return FrequencyVector((1.0, GOLDEN), n_check=n_check)


class TorusFunction:
    """Real trigonometric polynomial on T^d given by Fourier coefficients.

    ``f(z) = sum_n c_n exp(i <n, z>)`` with ``c_{-n} = conj(c_n)``.
    """

    def __init__(self, dim, coeffs=None, tol=1e-12):
        self.dim = int(dim)
        clean = {}
        for n, c in (coeffs or {}).items():
            n = tuple(int(k) for k in n)
            if len(n) != self.dim:
                raise ValueError(f"index {n} does not have dimension {self.dim}")
            c = complex(c)
            if c != 0:
                clean[n] = clean.get(n, 0) + c
        for n, c in clean.items():
            partner = clean.get(tuple(-k for k in n), 0)
            if abs(partner - c.conjugate()) > tol * max(1.0, abs(c)):
                raise ValueError(f"coefficients are not Hermitian symmetric at n = {n}")
        self.coeffs = clean

    @classmethod
    def zero(cls, dim):
        return cls(dim, {})

    @classmethod
    def constant(cls, dim, c):
        return cls(dim, {(0,) * dim: float(c)})

    @classmethod
    def cosine(cls, n, amplitude=1.0):
        """``amplitude * cos(<n, z>)``."""
        n = tuple(int(k) for k in n)
        minus = tuple(-k for k in n)
        if n == minus:
            return cls(len(n), {n: amplitude})
        return cls(len(n), {n: amplitude / 2, minus: amplitude / 2})

    def __add__(self, other):
        out = dict(self.coeffs)
        for n, c in other.coeffs.items():
            out[n] = out.get(n, 0) + c
        return TorusFunction(self.dim, out)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return TorusFunction(self.dim, {n: c * other for n, c in self.coeffs.items()})
        out = {}
        for n, a in self.coeffs.items():
            for m, b in other.coeffs.items():
                k = tuple(i + j for i, j in zip(n, m))
                out[k] = out.get(k, 0) + a * b
        return TorusFunction(self.dim, out)

    __rmul__ = __mul__

    def coeff(self, n):
        return self.coeffs.get(tuple(n), 0j)

    def mean(self):
        return self.coeff((0,) * self.dim).real

    def sup_bound(self):
        """Upper bound sum |c_n| for sup |f|."""
        return float(sum(abs(c) for c in self.coeffs.values()))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise ValueError("last axis of z must have length dim")
        total = np.zeros(z.shape[:-1])
        for n, c in self.coeffs.items():
            arg = z @ np.array(n, dtype=float)
            total = total + (c.real * np.cos(arg) - c.imag * np.sin(arg))
        return total

    def modes(self):
        """(frequencies-index, complex amplitude) pairs folded over +-n.

        Returns ``(const, [(n, 2 c_n), ...])`` so that
        ``f(z) = const + sum Re(2 c_n exp(i<n,z>))`` over one representative per pair.
        """
        const = self.mean()
        out = []
        for n, c in sorted(self.coeffs.items()):
            if not any(n):
                continue
            first = next(k for k in n if k)
            if first > 0:
                out.append((n, 2 * c))
        return const, out

    def __repr__(self):
        return f"TorusFunction(dim={self.dim}, nmodes={len(self.coeffs)})"


def torus_integral(f):
    """Mean value of ``f`` over the torus, i.e. its zeroth Fourier coefficient."""
    return f.mean()


def e_tower(n):
    """e_{-1} = -inf, e_k = exp(e_{k-1}); log_n is positive for x > e_n."""
    v = -math.inf
    for _ in range(n + 1):
        v = math.exp(v) if v != -math.inf else 0.0
    return v


def iterated_log(x, n):
    """log_0(x) = x, log_n(x) = log|log_{n-1}(x)|."""
    v = np.asarray(x, dtype=float)
    for _ in range(n):
        v = np.log(np.abs(v))
    return v


def L_scale(x, n):
    """L_n(x) = prod_{j<=n} log_j(x)."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    for j in range(n + 1):
        out = out * iterated_log(x, j)
    return out


def Q_ladder(x, n, K):
    """Reference potential -(1/4K) sum_{j<n} L_j(x)^-2."""
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    for j in range(n):
        total = total + 1.0 / L_scale(x, j) ** 2
    return -total / (4.0 * K)


_KIND_CODES = {"none": 0, "power_law": 1, "iterated_log": 2, "custom": 3}


@dataclass(frozen=True)
class PerturbationSpec:
    """Decaying perturbation dq.

    kinds:
      ``power_law``   dq = mu / x**gamma
      ``iterated_log`` dq = Q_ladder(x, level, K) + excess / L_level(x)**2,
                       switched on for x above ``level``-dependent cutoff
      ``custom``      linear interpolation in a sampled table, 0 beyond it
    """

    kind: str
    mu: float = 0.0
    gamma: float = 2.0
    level: int = 0
    K: float = 1.0
    excess: float = 0.0
    table: tuple = ()
    check_sign: bool = True

    def __post_init__(self):
        if self.kind not in ("power_law", "iterated_log", "custom"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "power_law" and not self.gamma > 0:
            raise ValueError("power_law perturbation needs gamma > 0")
        if self.kind == "iterated_log" and (self.level < 0 or self.K == 0):
            raise ValueError("iterated_log needs level >= 0 and K != 0")
        if self.kind == "custom":
            xs, vs = (np.asarray(a, dtype=float) for a in self.table)
            if xs.ndim != 1 or xs.shape != vs.shape or np.any(np.diff(xs) <= 0):
                raise ValueError("custom table needs increasing x samples")
            object.__setattr__(self, "table", (tuple(xs), tuple(vs)))
        if self.check_sign and self.sign() == 0:
            raise ValueError("perturbation is not of definite sign")

    @classmethod
    def power(cls, mu, gamma):
        return cls("power_law", mu=float(mu), gamma=float(gamma))

    @property
    def x_cut(self):
        if self.kind == "iterated_log":
            return 1.0 if self.level == 0 else e_tower(self.level) + 1.0
        return 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "power_law":
            return self.mu * x ** (-self.gamma)
        if self.kind == "iterated_log":
            xs = np.maximum(x, self.x_cut)
            val = Q_ladder(xs, self.level, self.K) + self.excess / L_scale(xs, self.level) ** 2
            return np.where(x >= self.x_cut, val, 0.0)
        xs, vs = self.table
        return np.interp(x, xs, vs, left=vs[0], right=0.0)

    def sign(self, x_max=1e8, samples=400):
        """+1 / -1 when dq has that sign (or vanishes) on the sampled domain, else 0."""
        lo = self.x_cut
        if self.kind == "custom":
            grid = np.asarray(self.table[0])
        else:
            grid = np.geomspace(lo, max(x_max, 10 * lo), samples)
        vals = self(grid)
        if np.all(vals >= 0) and np.any(vals > 0):
            return 1
        if np.all(vals <= 0) and np.any(vals < 0):
            return -1
        return 0

    def params(self):
        code = _KIND_CODES[self.kind]
        if self.kind == "power_law":
            return code, [self.mu, self.gamma]
        if self.kind == "iterated_log":
            return code, [float(self.level), self.K, self.excess]
        xs, vs = self.table
        return code, [float(len(xs)), *xs, *vs]


@dataclass(frozen=True)
class PotentialSpec:
    freq: FrequencyVector
    q_torus: TorusFunction
    phase: tuple = None
    perturbation: PerturbationSpec = None

    def __post_init__(self):
        d = self.freq.d
        if self.q_torus.dim != d:
            raise ValueError("torus function and frequency vector dimensions differ")
        phase = (0.0,) * d if self.phase is None else tuple(float(t) for t in self.phase)
        if len(phase) != d:
            raise ValueError("phase must have length d")
        object.__setattr__(self, "phase", phase)

    @classmethod
    def free(cls, d=1, perturbation=None):
        freq = FrequencyVector((1.0,)) if d == 1 else golden_frequency()
        return cls(freq, TorusFunction.zero(freq.d), perturbation=perturbation)

    @classmethod
    def golden_cosine(cls, coupling, n=(1, 1), perturbation=None):
        """Q(z) = coupling * 2cos(<n, z>) with omega = (1, golden)."""
        return cls(golden_frequency(), TorusFunction.cosine(n, 2.0 * coupling),
                   perturbation=perturbation)

    def with_perturbation(self, perturbation):
        return PotentialSpec(self.freq, self.q_torus, self.phase, perturbation)

    def background(self):
        return self.with_perturbation(None)

    @property
    def sup_bound(self):
        return self.q_torus.sup_bound()

    def evaluate(self, x, perturbed=True):
        """q0(x), or q1(x) = q0(x) + dq(x) when ``perturbed`` and a perturbation is set."""
        x = np.asarray(x, dtype=float)
        z = np.multiply.outer(x, self.freq.array) + np.array(self.phase)
        val = self.q_torus(z)
        if perturbed and self.perturbation is not None:
            val = val + self.perturbation(x)
        return val

    def block(self, E, perturbed=True, only_perturbation=False):
        """Flat parameter block consumed by the compiled kernels."""
        const, modes = self.q_torus.modes()
        rows = []
        if not only_perturbation:
            if const:
                rows.extend([0.0, 0.0, const, 0.0])
            w, th = self.freq.array, np.array(self.phase)
            for n, c in modes:
                rows.extend([float(np.dot(w, n)), float(np.dot(th, n)), c.real, c.imag])
        code, pp, xcut = 0, [], 1.0
        if perturbed and self.perturbation is not None:
            code, pp = self.perturbation.params()
            xcut = self.perturbation.x_cut
        return np.array([float(E), len(rows) // 4, code, len(pp), xcut, *rows, *pp])
