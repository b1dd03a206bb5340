"""Weighted entrywise norm ``||A||_e = sum_{k,l} 2^-(k+l) |A(k,l)|``.

Weights are exact powers of two, and the weighted terms are accumulated
anti-diagonal by anti-diagonal with ``math.fsum`` (correctly rounded), so
the value is identical on every platform.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .exceptions import DomainError, NumericalError
from .krylov import KrylovForm, projection
from .operator_core import as_operator, operator_norm

__all__ = ["CompressionDefect", "ENormValue", "compression_defect", "enorm", "tail_mass"]

#: Agreement required between brute-force and closed-form defects.
CLOSED_FORM_TOL = 1e-13


class ENormValue(NamedTuple):
    value: float
    truncation_bound: float


class CompressionDefect(NamedTuple):
    value: float
    closed_form: float
    degenerate: bool


@lru_cache(maxsize=None)
def _antidiagonal_order(N: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # 0-based (row, col) pairs sorted by row+col, then row; weight 2^-(k+l) in 1-based terms.
    rows, cols = [], []
    for s in range(2 * N - 1):
        for i in range(max(0, s - N + 1), min(s, N - 1) + 1):
            rows.append(i)
            cols.append(s - i)
    rows = np.array(rows)
    cols = np.array(cols)
    weights = np.ldexp(1.0, -(rows + cols + 2))
    return rows, cols, weights


def tail_mass(N: int) -> float:
    """Total weight of index pairs with ``max(k, l) > N``: ``1 - (1 - 2^-N)^2``."""
    inner = 1.0 - math.ldexp(1.0, -N)
    return 1.0 - inner * inner


def enorm(A) -> ENormValue:
    """e-norm of ``A`` (given in the basis ``e``) plus a bound on the neglected tail.

    The tail bound uses ``|<e_k, A e_l>| <= ||A||`` on every index pair the
    truncation drops.
    """
    A = as_operator(A)
    N = A.shape[0]
    rows, cols, weights = _antidiagonal_order(N)
    terms = weights * np.abs(A[rows, cols])
    value = math.fsum(terms.tolist())
    return ENormValue(value, operator_norm(A) * tail_mass(N))


def compression_defect(K: KrylovForm, k: int) -> CompressionDefect:
    """``||E_k H E_k - H E_k||_e`` for the Hessenberg matrix of ``K``.

    Computed by brute force and cross-checked against the closed form
    ``2^-(2k+1) |subdiag(k)|``; a disagreement beyond ``CLOSED_FORM_TOL``
    raises :class:`NumericalError`. At ``k = N`` the defect is exactly zero
    and flagged degenerate.
    """
    N = K.dim
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= N):
        raise DomainError(f"defect index {k!r} outside 1..{N}")
    if k == N:
        return CompressionDefect(0.0, 0.0, True)
    E = projection(k, N)
    brute = enorm(E @ K.H @ E - K.H @ E).value
    closed = math.ldexp(abs(float(K.subdiag[k - 1])), -(2 * k + 1))
    if abs(brute - closed) > CLOSED_FORM_TOL:
        raise NumericalError(
            f"compression defect at k={k}: brute force {brute!r} != closed form {closed!r}",
            payload=K.H,
        )
    return CompressionDefect(brute, closed, False)
