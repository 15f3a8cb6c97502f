"""Spectral diagnostics for perturbed quasiperiodic Schroedinger operators.

The operators act on the half line (1, infinity) as ``-u'' + (q0 + dq) u``
with a quasiperiodic background ``q0(x) = Q(omega x + theta)`` and a decaying
perturbation ``dq``.  Subpackages cover rotation numbers and gap edges,
relative oscillation counts, the critical coupling at an edge, eigenvalue
asymptotics, averaged phase equations and the reducibility iteration.
"""

__version__ = "0.1.0"

from .potential import (FrequencyVector, PerturbationSpec, PotentialSpec, TorusFunction,
                        golden_frequency)
from .rotation import EdgeRecord, RotationEstimate, find_edges, refine_edge, rotation_number

__all__ = ["__version__", "FrequencyVector", "PerturbationSpec", "PotentialSpec",
           "TorusFunction", "golden_frequency", "EdgeRecord", "RotationEstimate",
           "find_edges", "refine_edge", "rotation_number"]
