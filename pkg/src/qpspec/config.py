"""Run configuration: TOML files describing a potential and run parameters.

A config file looks like::

    omega = [1.0, 1.618033988749895]
    fourier = [[1, 1, 0.3, 0.0]]          # n..., Re c_n, Im c_n
    phase = [0.0, 0.0]
    perturbation = {kind = "power_law", mu = -1.0, gamma = 2.0}

    [tolerances]
    ode = 1e-9

    [edges]
    E_range = [0.0, 3.0]
    labels = [[1, 1]]

Rows of ``fourier`` whose partner ``-n`` is absent are completed by
Hermitian symmetry.  Every table not listed in :data:`DEFAULTS` is kept as
subcommand parameters.
"""

import copy
import math
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .potential import FrequencyVector, PerturbationSpec, PotentialSpec, TorusFunction

__all__ = ["DEFAULTS", "RunConfig", "ConfigError", "load_config", "potential_from_dict",
           "potential_to_dict", "defaults_toml"]

GOLDEN_OMEGA = [1.0, (1.0 + math.sqrt(5.0)) / 2.0]

DEFAULTS = {
    "tolerances": {"ode": 1e-9, "edge": 1e-8, "kam_stop": 1e-14},
    "horizons": {"rotation": 1e4, "edges": 2e4, "refine": 1e5, "psi": 1e6},
    "threshold": {"eps1": 0.05, "E0": None},
    "output": {"dir": ".", "prefix": ""},
    "seed": 0,
    "ids": {"energies": [0.5, 1.0, 2.0, 4.0]},
    "edges": {"E_range": [0.0, 4.0], "labels": [], "grid": 64, "refine": False},
    "count": {"edge": 0.0, "side": "upper", "lambdas": [-1e-2, -1e-3, -1e-4], "reference": None},
    "kcrit": {"windows": [1e2, 1e3, 1e4]},
    "classify": {"x_max": 1e12},
    "asympt": {"edge": 0.0, "side": "upper", "d_far": 1e-1, "d_near": 1e-12, "K": None},
    "avg-check": {"values": [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5]},
    "kam": {"E": 4.0, "sigma": 0.1, "r1": 0.5, "max_iters": 12, "label": None},
}

_POTENTIAL_KEYS = ("omega", "fourier", "phase", "perturbation")


class ConfigError(ValueError):
    pass


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _strip_none(d):
    if isinstance(d, dict):
        return {k: _strip_none(v) for k, v in d.items() if v is not None}
    return d


def potential_from_dict(d):
    """Build a :class:`PotentialSpec` from the potential keys of a config."""
    omega = d.get("omega", [1.0])
    freq = FrequencyVector(tuple(omega))
    dim = freq.d
    coeffs = {}
    for row in d.get("fourier", []):
        if len(row) != dim + 2:
            raise ConfigError(f"fourier row {row} must hold {dim} indices, Re and Im")
        n = tuple(int(k) for k in row[:dim])
        coeffs[n] = complex(row[dim], row[dim + 1])
    for n, c in list(coeffs.items()):
        minus = tuple(-k for k in n)
        if minus not in coeffs:
            coeffs[minus] = c.conjugate()
    q = TorusFunction(dim, coeffs)
    pert = None
    p = d.get("perturbation")
    if p:
        kind = p.get("kind", "power_law")
        if kind in ("power", "power_law"):
            pert = PerturbationSpec.power(p["mu"], p.get("gamma", 2.0))
        elif kind == "iterated_log":
            pert = PerturbationSpec("iterated_log", level=int(p["level"]), K=float(p["K"]),
                                    excess=float(p.get("excess", 0.0)))
        elif kind == "custom":
            pert = PerturbationSpec("custom", table=(tuple(p["x"]), tuple(p["values"])))
        else:
            raise ConfigError(f"unknown perturbation kind {kind!r}")
    phase = d.get("phase")
    return PotentialSpec(freq, q, None if phase is None else tuple(phase), pert)


def potential_to_dict(pot):
    out = {"omega": list(pot.freq.array.tolist()),
           "fourier": [[*n, c.real, c.imag] for n, c in sorted(pot.q_torus.coeffs.items())],
           "phase": list(pot.phase)}
    p = pot.perturbation
    if p is not None:
        if p.kind == "power_law":
            out["perturbation"] = {"kind": "power_law", "mu": p.mu, "gamma": p.gamma}
        elif p.kind == "iterated_log":
            out["perturbation"] = {"kind": "iterated_log", "level": p.level, "K": p.K,
                                   "excess": p.excess}
        else:
            out["perturbation"] = {"kind": "custom", "x": list(p.table[0]),
                                   "values": list(p.table[1])}
    return out


@dataclass
class RunConfig:
    potential: dict = field(default_factory=dict)
    settings: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, d):
        pot = {k: d[k] for k in _POTENTIAL_KEYS if k in d}
        rest = {k: v for k, v in d.items() if k not in _POTENTIAL_KEYS}
        return cls(pot, _merge(DEFAULTS, rest))

    def to_dict(self):
        out = dict(self.potential)
        out.update(self.settings)
        return _strip_none(out)

    def dumps(self):
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def loads(cls, text):
        try:
            return cls.from_dict(tomllib.loads(text))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(exc)) from exc

    def section(self, name):
        return self.settings.get(name, {})

    def build_potential(self):
        return potential_from_dict(self.potential)

    @property
    def ode_tol(self):
        return float(self.settings["tolerances"]["ode"])

    def threshold_energy(self, pot):
        E0 = self.settings["threshold"].get("E0")
        if E0 is not None:
            return float(E0)
        eps1 = float(self.settings["threshold"]["eps1"])
        return (pot.sup_bound / (2.0 * eps1)) ** 2


def load_config(path):
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return RunConfig.from_dict(data)


def defaults_toml():
    """Text of the default settings (the potential defaults to the free operator)."""
    return tomli_w.dumps(_strip_none(DEFAULTS))
