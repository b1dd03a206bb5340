"""Orthonormal Krylov basis of a cyclic vector and the Hessenberg form of T.

Gram-Schmidt on ``v, Tv, T^2 v, ...`` is carried out Arnoldi style: the
next basis vector is obtained by orthogonalizing ``T e_n`` against
``e_1 .. e_n``. This spans the same nested subspaces as orthogonalizing
the raw powers, but never forms them, so it stays stable at N = 64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import DimensionError, DomainError
from .operator_core import as_operator, operator_norm, operator_to_json

__all__ = ["KrylovForm", "is_cyclic", "orthonormalize", "projection"]


@dataclass(frozen=True, eq=False)
class KrylovForm:
    """Basis change ``Q`` and Hessenberg matrix ``H = Q* T Q``.

    Attributes
    ----------
    Q : ndarray
        Unitary; column ``n`` is ``e_{n+1}`` in input coordinates.
    H : ndarray
        Matrix of ``T`` in the basis ``e``; upper Hessenberg by construction.
    breakdown_index : int or None
        1-based step ``b`` at which the Krylov sequence stopped growing, in
        which case ``span(e_1..e_b)`` is ``T``-invariant and ``v`` is not
        cyclic. The basis is then completed by restarting from a fresh
        orthogonal direction, so ``Q`` is still unitary and
        ``subdiag[b-1] == 0``.
    subdiag : ndarray
        Real nonnegative ``H[k, k-1]`` entries, length ``N - 1``.
    """

    Q: np.ndarray
    H: np.ndarray
    breakdown_index: int | None
    subdiag: np.ndarray
    breakdowns: tuple[int, ...] = field(default=())

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @cached_property
    def defects(self) -> np.ndarray:
        """Compression defects for ``k = 1 .. N`` (index ``k - 1``)."""
        from .enorm import compression_defect

        return np.array([compression_defect(self, k).value for k in range(1, self.dim + 1)])

    def to_json(self) -> dict:
        return {
            "Q": operator_to_json(self.Q),
            "H": operator_to_json(self.H),
            "breakdown": self.breakdown_index,
            "subdiag": self.subdiag.tolist(),
        }


def _restart_vector(Q: np.ndarray, n: int) -> np.ndarray:
    # Coordinate vector with the largest component outside span(Q[:, :n]).
    N = Q.shape[0]
    basis = Q[:, :n]
    resid = np.eye(N, dtype=complex) - basis @ basis.conj().T
    j = int(np.argmax(np.linalg.norm(resid, axis=0)))
    w = resid[:, j]
    for _ in range(2):
        w = w - basis @ (basis.conj().T @ w)
    return w / np.linalg.norm(w)


def orthonormalize(T, v, breakdown_tol: float = 1e-12) -> KrylovForm:
    """Build the Krylov basis of ``T`` started at the unit vector ``v``.

    Modified Gram-Schmidt with one full reorthogonalization pass per step.
    A step whose residual norm is at most ``breakdown_tol * max(1, ||T||)``
    is a breakdown: the index is recorded, the subdiagonal entry is set to
    zero, and the basis is continued from a new orthogonal direction.
    """
    T = as_operator(T)
    N = T.shape[0]
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1 or v.shape[0] != N:
        raise DimensionError(f"start vector of shape {v.shape} does not match dim {N}")
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise DomainError(f"start vector must have unit norm, got {np.linalg.norm(v)!r}")
    if breakdown_tol <= 0:
        raise DomainError("breakdown_tol must be positive")

    threshold = breakdown_tol * max(1.0, operator_norm(T))
    Q = np.zeros((N, N), dtype=complex)
    H = np.zeros((N, N), dtype=complex)
    Q[:, 0] = v
    breakdowns = []
    for n in range(N):
        w = T @ Q[:, n]
        for _ in range(2):
            for i in range(n + 1):
                c = np.vdot(Q[:, i], w)
                H[i, n] += c
                w = w - c * Q[:, i]
        if n == N - 1:
            break
        beta = float(np.linalg.norm(w))
        if beta <= threshold:
            breakdowns.append(n + 1)
            Q[:, n + 1] = _restart_vector(Q, n + 1)
        else:
            H[n + 1, n] = beta
            Q[:, n + 1] = w / beta
    subdiag = np.array([H[k + 1, k].real for k in range(N - 1)])
    return KrylovForm(
        Q=Q,
        H=H,
        breakdown_index=breakdowns[0] if breakdowns else None,
        subdiag=subdiag,
        breakdowns=tuple(breakdowns),
    )


def is_cyclic(T, v, breakdown_tol: float = 1e-12) -> bool:
    return orthonormalize(T, v, breakdown_tol).breakdown_index is None


def projection(k: int, N: int) -> np.ndarray:
    """``E_k`` in the basis ``e``: ``diag(1, .., 1, 0, .., 0)`` with ``k`` ones."""
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= N):
        raise DomainError(f"projection index {k!r} outside 1..{N}")
    d = np.zeros(N)
    d[:k] = 1.0
    return np.diag(d).astype(complex)
