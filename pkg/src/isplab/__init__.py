"""Finite-dimensional audit of a Krylov-basis invariant-subspace construction.

Operators are dense complex matrices. The package builds the orthonormal
Krylov basis of a cyclic vector, evaluates the weighted e-norm, tests
membership in window-indexed constraint sets over diagonal positive
contractions, and searches those sets for a common element.
"""

from .constraints import Window, check_inclusion, embed, in_A, in_B, in_F, phi_k, psi_k, witness
from .enorm import compression_defect, enorm
from .krylov import KrylovForm, is_cyclic, orthonormalize, projection
from .operator_core import adjoint, graph_norm, is_positive, operator_norm, spectrum
from .solver import (
    Budget,
    FeasibilityProblem,
    default_windows,
    diagonal_windows,
    evaluate_candidate,
    fip_audit,
    grid_oracle,
    penalty,
    search,
)

__version__ = "0.1.0"
