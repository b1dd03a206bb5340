"""Dense complex operator kernel.

Operators are plain ``numpy`` complex arrays of shape ``(N, N)``; entry
``(i, j)`` stores ``<e_i, A e_j>`` with the inner product conjugate-linear in
the first slot. This module validates them, and provides adjoints, norms,
a positivity test, spectra and the truncated graph norm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, DomainError, NumericalError

__all__ = [
    "GraphNorm",
    "adjoint",
    "as_operator",
    "graph_norm",
    "is_positive",
    "operator_from_json",
    "operator_norm",
    "operator_to_json",
    "spectrum",
]

#: Number of trailing terms whose relative increments must all be small
#: before the graph-norm series is declared stable.
STABILIZATION_WINDOW = 5


def as_operator(A) -> np.ndarray:
    """Validate ``A`` and return it as a complex ``(N, N)`` array."""
    arr = np.asarray(A)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionError(f"operator must be a non-empty square matrix, got shape {arr.shape}")
    arr = arr.astype(complex, copy=False)
    if not np.all(np.isfinite(arr)):
        raise DomainError("operator has non-finite entries")
    return arr


def adjoint(A) -> np.ndarray:
    """Conjugate transpose."""
    return as_operator(A).conj().T.copy()


def operator_norm(A) -> float:
    """Largest singular value of ``A``."""
    A = as_operator(A)
    return float(np.linalg.norm(A, 2))


def is_positive(A, tol: float = 1e-12) -> bool:
    """True iff ``A`` is Hermitian and positive semidefinite up to ``tol``.

    Hermiticity is measured relative to ``max(1, ||A||)``; the spectrum
    test is applied to the Hermitian part ``(A + A*)/2``.
    """
    A = as_operator(A)
    scale = max(1.0, operator_norm(A))
    if operator_norm(A - A.conj().T) > tol * scale:
        return False
    herm = 0.5 * (A + A.conj().T)
    return bool(np.linalg.eigvalsh(herm).min() >= -tol)


def spectrum(A) -> np.ndarray:
    """Eigenvalues of ``A`` with algebraic multiplicity.

    Diagonal input returns its diagonal verbatim, so exact values such as
    ``1/2`` survive without rounding.
    """
    A = as_operator(A)
    if np.count_nonzero(A - np.diag(np.diag(A))) == 0:
        return np.diag(A).copy()
    try:
        return np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue routine did not converge: {exc}", payload=A) from exc


@dataclass(frozen=True)
class GraphNorm:
    """Result of :func:`graph_norm`.

    ``value`` is only meaningful when ``diverged`` is false; otherwise
    ``partial_sum`` holds the last (squared) partial sum reached.
    """

    value: float
    diverged: bool
    partial_sum: float
    terms: int


def graph_norm(x, T, max_terms: int = 50, growth_tol: float = 1e-12) -> GraphNorm:
    """Truncated graph norm ``(sum_n ||T^n x||^2)^(1/2)``.

    The series is summed for ``n = 0 .. max_terms`` and accepted once the
    relative increment stays below ``growth_tol`` for
    ``STABILIZATION_WINDOW`` consecutive terms. If that never happens (or
    the sum overflows) the result is flagged as divergent.
    """
    T = as_operator(T)
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1 or x.shape[0] != T.shape[0]:
        raise DimensionError(f"vector of length {x.shape} does not match operator of dim {T.shape[0]}")
    if max_terms < 1 or growth_tol <= 0:
        raise DomainError("max_terms must be positive and growth_tol > 0")

    total = 0.0
    quiet = 0
    y = x.copy()
    for n in range(max_terms + 1):
        term = float(np.vdot(y, y).real)
        total += term
        if not math.isfinite(total):
            return GraphNorm(math.inf, True, total, n + 1)
        if total == 0.0 or term <= growth_tol * total:
            quiet += 1
        else:
            quiet = 0
        if quiet >= STABILIZATION_WINDOW:
            return GraphNorm(math.sqrt(total), False, total, n + 1)
        y = T @ y
    return GraphNorm(math.sqrt(total), True, total, max_terms + 1)


def operator_to_json(A) -> dict:
    """Encode as ``{"n": N, "re": [[...]], "im": [[...]]}``."""
    A = as_operator(A)
    return {"n": int(A.shape[0]), "re": A.real.tolist(), "im": A.imag.tolist()}


def operator_from_json(obj) -> np.ndarray:
    """Decode the format written by :func:`operator_to_json`.

    Accepts a dict or a JSON string. Ragged or mis-sized arrays are rejected.
    """
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    if not isinstance(obj, dict) or set(obj) != {"n", "re", "im"}:
        raise DomainError('operator JSON must have exactly the keys "n", "re", "im"')
    n = obj["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise DomainError(f"invalid operator dimension {n!r}")
    parts = []
    for key in ("re", "im"):
        rows = obj[key]
        if not isinstance(rows, list) or len(rows) != n:
            raise DomainError(f'"{key}" must have {n} rows')
        for row in rows:
            if not isinstance(row, list) or len(row) != n:
                raise DomainError(f'"{key}" is ragged or has wrong row length')
            for v in row:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise DomainError(f'"{key}" contains a non-numeric entry {v!r}')
        parts.append(np.array(rows, dtype=float))
    return as_operator(parts[0] + 1j * parts[1])
