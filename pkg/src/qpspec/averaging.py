"""Slowly driven phase equations and their averaged versions.

The phase equation

    phi' = rho(x) (A(x) sin^2 phi + sin phi cos phi + B(x) cos^2 phi)

with a slowly varying, non-integrable rate ``rho`` has, for constant A and
B, only bounded solutions when ``4AB < 1`` and only unbounded ones when
``4AB > 1``; in the latter case ``phi / int rho -> sgn(A) sqrt(4AB - 1) / 2``.
Oscillating coefficients may be replaced by their window averages.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate as qd

from . import _kernels as kern
from ._util import thread_map
from .ode import integrate

__all__ = [
    "BOUNDED",
    "UNBOUNDED",
    "MARGINAL",
    "PhaseOdeSpec",
    "PhaseVerdict",
    "AveragingReport",
    "classify_phase_ode",
    "window_average",
    "slow_variation_holds",
    "check_averaged_equation",
    "classify_grid",
]

BOUNDED = "bounded"
UNBOUNDED = "unbounded"
MARGINAL = "marginal"

_CAP_SMOOTH = 1e100
_CAP_OSCILLATING = 1e6


@dataclass(frozen=True)
class PhaseOdeSpec:
    """Coefficients of the phase equation.

    ``rho = c x^-power`` (``rho_kind="power"``) or ``c exp(-power x)``
    (``"exp"``).  ``A = (A0, A1, A2)`` means ``A0 + A1 sin x + A2 / x``,
    likewise ``B``.  ``remainder`` is a caller-asserted bound on the
    ``o(rho)`` term, carried for reporting only.
    """

    A: tuple = (1.0, 0.0, 0.0)
    B: tuple = (1.0, 0.0, 0.0)
    rho_kind: str = "power"
    c: float = 1.0
    power: float = 1.0
    remainder: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "A", _coeffs(self.A))
        object.__setattr__(self, "B", _coeffs(self.B))
        if self.rho_kind not in ("power", "exp"):
            raise ValueError(f"unknown rho kind {self.rho_kind!r}")
        if self.c == 0:
            raise ValueError("rho must not vanish")

    @classmethod
    def constant(cls, A, B, **kw):
        return cls((A, 0.0, 0.0), (B, 0.0, 0.0), **kw)

    def rho(self, x):
        x = np.asarray(x, dtype=float)
        if self.rho_kind == "power":
            return self.c * x ** (-self.power)
        return self.c * np.exp(-self.power * x)

    def A_at(self, x):
        a0, a1, a2 = self.A
        return a0 + a1 * np.sin(x) + a2 / np.asarray(x, dtype=float)

    def B_at(self, x):
        b0, b1, b2 = self.B
        return b0 + b1 * np.sin(x) + b2 / np.asarray(x, dtype=float)

    @property
    def oscillating(self):
        return self.A[1] != 0 or self.B[1] != 0

    @property
    def integrable(self):
        return self.rho_kind == "exp" or self.power > 1

    def averaged(self):
        """Equation with A, B replaced by their limits of window averages."""
        return replace(self, A=(self.A[0], 0.0, 0.0), B=(self.B[0], 0.0, 0.0))

    def discriminant(self):
        """``4 A B - 1`` for the averaged coefficients."""
        return 4.0 * self.A[0] * self.B[0] - 1.0

    def predicted_rate(self):
        d = self.discriminant()
        if d <= 0:
            return 0.0
        return math.copysign(0.5 * math.sqrt(d), self.A[0])

    def rho_integral(self, x):
        """``int_1^x rho``."""
        x = np.asarray(x, dtype=float)
        if self.rho_kind == "exp":
            k = self.power
            return self.c * (math.exp(-k) - np.exp(-k * x)) / k
        if self.power == 1:
            return self.c * np.log(x)
        e = 1.0 - self.power
        return self.c * (x ** e - 1.0) / e

    def rho_integral_inverse(self, R):
        R = np.asarray(R, dtype=float)
        if self.rho_kind == "exp":
            raise ValueError("exponential rho is integrable")
        if self.power == 1:
            return np.exp(R / self.c)
        e = 1.0 - self.power
        return (1.0 + e * R / self.c) ** (1.0 / e)

    def params(self):
        kind = 0.0 if self.rho_kind == "power" else 1.0
        return kern.pack(np.array([*self.A, *self.B]), aux=(kind, self.c, self.power))


def _coeffs(v):
    if np.isscalar(v):
        return (float(v), 0.0, 0.0)
    v = tuple(float(t) for t in v)
    return v + (0.0,) * (3 - len(v))


@dataclass(frozen=True)
class PhaseVerdict:
    """``rate`` is the fitted ``phi / int rho``; ``variation`` and ``range`` are
    measured over the final half of ``int rho``."""

    verdict: str
    rate: float
    variation: float
    range: float
    discriminant: float
    horizon: float
    crossings: int


def _default_horizon(spec, target=20.0):
    # final half of R should hold at least four turns at the averaged rate
    rate = abs(spec.predicted_rate())
    if rate > 0:
        target = max(target, 8.0 * math.pi / rate)
    cap = _CAP_OSCILLATING if spec.oscillating else _CAP_SMOOTH
    x = float(spec.rho_integral_inverse(target))
    return min(max(x, 10.0), cap)


def _fit_rate(R, phi):
    """Slope of phi against R from its crossings of multiples of pi."""
    k = np.floor(phi / math.pi)
    idx = np.nonzero(np.diff(k))[0]
    if idx.size < 2:
        return (phi[-1] - phi[0]) / (R[-1] - R[0]), int(idx.size)
    pos, level = [], []
    for i in idx:
        # crossing level between consecutive samples
        lev = max(k[i], k[i + 1]) * math.pi
        t = (lev - phi[i]) / (phi[i + 1] - phi[i])
        pos.append(R[i] + t * (R[i + 1] - R[i]))
        level.append(lev)
    return float(np.polyfit(pos, level, 1)[0]), int(idx.size)


def classify_phase_ode(spec, horizon=None, phi0=1.0, samples=4000, tol=1e-10,
                       margin=0.1):
    """Bounded/unbounded verdict for the phase equation started at x = 1.

    The solution is judged over the final half of ``R = int_1^x rho``:
    bounded when its total variation there is below pi and its range below
    2 pi.  A discriminant ``|4AB - 1| < margin`` (averaged coefficients)
    gives ``marginal`` with the measured diagnostics.
    """
    if spec.integrable:
        raise ValueError("rho must have a non-integrable tail")
    X = _default_horizon(spec) if horizon is None else float(horizon)
    R_end = float(spec.rho_integral(X))
    R = np.linspace(0.5 * R_end, R_end, samples)
    xs = spec.rho_integral_inverse(R)
    xs[-1] = X
    tr = integrate(kern.phase_rhs, spec.params(), 1.0, [phi0], X, tol=tol, checkpoints=xs)
    phi = tr.samples[:, 0]
    variation = float(np.sum(np.abs(np.diff(phi))))
    rng = float(phi.max() - phi.min())
    rate, crossings = _fit_rate(R, phi)
    disc = spec.discriminant()
    if abs(disc) < margin:
        verdict = MARGINAL
    elif variation < math.pi and rng < 2.0 * math.pi:
        verdict = BOUNDED
    else:
        verdict = UNBOUNDED
    return PhaseVerdict(verdict, float(rate), variation, rng, disc, X, crossings)


def window_average(x, g, ell, start):
    """``(1/ell) int_start^{start+ell} g`` by the trapezoid rule on the samples.

    The end points are linearly interpolated between samples.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    end = start + ell
    if ell <= 0:
        raise ValueError("window length must be positive")
    if x[0] > start or x[-1] < end:
        raise ValueError(f"samples cover [{x[0]}, {x[-1]}], window needs [{start}, {end}]")
    inner = (x > start) & (x < end)
    xs = np.concatenate([[start], x[inner], [end]])
    gs = np.concatenate([[np.interp(start, x, g)], g[inner], [np.interp(end, x, g)]])
    return float(qd.trapezoid(gs, xs) / ell)


def slow_variation_holds(rho, eps=0.05, ell=1.0, xs=None):
    """Sampled check of ``(1/ell) int_0^ell |rho(x+t) - rho(x)| dt <= eps rho(x)``.

    Returns ``(holds, worst_ratio)``; a vanishing ``rho(x)`` counts as failure.
    """
    xs = np.geomspace(50.0, 500.0, 8) if xs is None else np.asarray(xs, dtype=float)
    worst = 0.0
    for x in xs:
        r = float(rho(x))
        if r == 0.0:
            return False, math.inf
        val, _ = qd.quad(lambda t: abs(float(rho(x + t)) - r), 0.0, ell, epsabs=0.0,
                         epsrel=1e-9)
        worst = max(worst, val / (ell * abs(r)))
    return worst <= eps, worst


@dataclass(frozen=True)
class AveragingReport:
    raw: PhaseVerdict
    averaged: PhaseVerdict
    agree: bool
    rate_gap: float


def check_averaged_equation(spec, horizon=None, rate_tol=0.05, tol=1e-10):
    """Compare the phase equation with its averaged version.

    They agree when the verdicts coincide and, if unbounded, the rates
    differ by at most ``rate_tol`` relative.
    """
    if spec.integrable:
        raise ValueError("rho must have a non-integrable tail")
    X = _default_horizon(spec) if horizon is None else float(horizon)
    raw = classify_phase_ode(spec, X, tol=tol)
    avg = classify_phase_ode(spec.averaged(), X, tol=tol)
    gap = 0.0
    if raw.verdict == UNBOUNDED and avg.verdict == UNBOUNDED:
        gap = abs(raw.rate - avg.rate) / max(abs(avg.rate), 1e-300)
    agree = raw.verdict == avg.verdict and gap <= rate_tol
    return AveragingReport(raw, avg, agree, gap)


def classify_grid(values=(-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5), horizon=None, threads=None,
                  **kw):
    """Verdicts for constant coefficients on the grid ``values x values``.

    Returns a list of ``(A, B, PhaseVerdict)``.
    """
    pairs = [(a, b) for a in values for b in values]

    def one(ab):
        return ab[0], ab[1], classify_phase_ode(PhaseOdeSpec.constant(*ab, **kw), horizon)

    return thread_map(one, pairs, threads)
