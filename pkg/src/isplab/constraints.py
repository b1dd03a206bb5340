"""Constraint families over diagonal elements of the unit ball.

Candidate operators ``A`` are positive contractions that commute with every
``E_n``; in the basis ``e`` these are exactly the diagonal matrices with
entries in ``[0, 1]``. They are carried as real vectors ``a`` of length ``N``
(``a[n-1]`` is the ``n``-th diagonal entry) and turned into matrices by
:func:`embed`.

Three window-indexed families are provided, each returning a
:class:`MembershipVerdict`:

* :func:`in_A` -- ``a_1 = 0`` and ``a_{s+1} >= 1/2`` for ``k <= s <= l``.
* :func:`in_F` -- ``||A E_k H E_k A - H E_k A||_e <= ||E_s H E_s - H E_s||_e``
  for every ``k <= s <= l``; the left side is fixed at the window's ``k``.
* :func:`in_B` -- ``a_1 = 0`` and ``1/2`` in the spectrum of ``A E_n`` for
  ``k <= n <= l``.

Indices ``k, l, s, n`` are 1-based throughout, matching the windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .enorm import enorm
from .exceptions import DimensionError, DomainError
from .krylov import KrylovForm, projection
from .operator_core import as_operator, spectrum

__all__ = [
    "DEFAULT_TOL",
    "InclusionResult",
    "MembershipVerdict",
    "Window",
    "as_diagonal",
    "check_inclusion",
    "embed",
    "f_lhs",
    "f_lhs_batch",
    "in_A",
    "in_B",
    "in_F",
    "phi_k",
    "psi_k",
    "witness",
]

DEFAULT_TOL = 1e-10
#: Box violations tolerated by :func:`as_diagonal` before it refuses input.
BOX_TOL = 1e-12
HALF = 0.5


class Window(NamedTuple):
    """Index pair ``(k, l)`` naming a constraint set."""

    k: int
    l: int

    def validate(self, N: int, allow_degenerate: bool = False) -> "Window":
        """Check ``1 <= k <= l`` and ``l + 1 <= N``.

        ``allow_degenerate`` relaxes the upper bound to ``l <= N``; the
        ``s = N`` inequality then has right-hand side zero.
        """
        top = N if allow_degenerate else N - 1
        if not (1 <= self.k <= self.l <= top):
            raise DomainError(f"window {tuple(self)} invalid at N={N} (need 1 <= k <= l <= {top})")
        return self

    def __str__(self) -> str:
        return f"({self.k},{self.l})"


@dataclass(frozen=True)
class MembershipVerdict:
    member: bool
    margin: float
    worst_constraint: str


def as_diagonal(a) -> np.ndarray:
    """Validate a diagonal element and return it as a float array clipped to ``[0, 1]``."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.shape[0] < 1:
        raise DimensionError(f"diagonal element must be a non-empty vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or a.min() < -BOX_TOL or a.max() > 1 + BOX_TOL:
        raise DomainError("diagonal element has entries outside [0, 1]")
    return np.clip(a, 0.0, 1.0)


def embed(a) -> np.ndarray:
    return np.diag(as_diagonal(a)).astype(complex)


def witness(w: Window, N: int) -> np.ndarray:
    """``A_{k,l} = (E_{l+1} - E_k) / 2``: entries ``k+1 .. l+1`` equal ``1/2``."""
    w = Window(*w).validate(N)
    a = np.zeros(N)
    a[w.k : w.l + 1] = HALF
    return a


def _verdict(slacks: list[tuple[float, str]], tol: float) -> MembershipVerdict:
    margin, name = min(slacks, key=lambda t: t[0])
    return MembershipVerdict(bool(margin >= -tol), float(margin), name)


def in_A(a, w: Window, tol: float = DEFAULT_TOL, allow_degenerate: bool = False) -> MembershipVerdict:
    a = as_diagonal(a)
    N = a.shape[0]
    w = Window(*w).validate(N, allow_degenerate)
    slacks = [(-float(a[0]), "AE_1=0")]
    for s in range(w.k, w.l + 1):
        if s + 1 <= N:
            slacks.append((float(a[s]) - HALF, f"s={s}"))
    return _verdict(slacks, tol)


def f_lhs(a, k: int, K: KrylovForm) -> float:
    """Left side ``||A E_k H E_k A - H E_k A||_e`` of the F inequalities."""
    A = embed(a)
    E = projection(k, K.dim)
    H = K.H
    return enorm(A @ E @ H @ E @ A - H @ E @ A).value


def f_lhs_batch(X: np.ndarray, k: int, K: KrylovForm) -> np.ndarray:
    """:func:`f_lhs` for each row of ``X`` using the diagonal closed form.

    ``L_k = sum_{j<=k} |a_j| (sum_{i<=k} w_ij |h_ij| |a_i - 1| + sum_{i>k} w_ij |h_ij|)``
    with ``w_ij = 2^-(i+j)``.
    """
    N = K.dim
    idx = np.arange(N)
    WH = np.ldexp(1.0, -(idx[:, None] + idx[None, :] + 2)) * np.abs(K.H)
    X = np.atleast_2d(X)
    C = np.abs(X[:, :k] - 1.0)
    return np.sum(np.abs(X[:, :k]) * (C @ WH[:k, :k] + WH[k:, :k].sum(axis=0)), axis=1)


def in_F(
    a, w: Window, K: KrylovForm, tol: float = DEFAULT_TOL, allow_degenerate: bool = False
) -> MembershipVerdict:
    a = as_diagonal(a)
    N = a.shape[0]
    if N != K.dim:
        raise DimensionError(f"diagonal element of length {N} vs Krylov form of dim {K.dim}")
    w = Window(*w).validate(N, allow_degenerate)
    L = f_lhs(a, w.k, K)
    slacks = [(float(K.defects[s - 1]) - L, f"s={s}") for s in range(w.k, w.l + 1)]
    return _verdict(slacks, tol)


def in_B(a, w: Window, tol: float = DEFAULT_TOL, allow_degenerate: bool = False) -> MembershipVerdict:
    a = as_diagonal(a)
    N = a.shape[0]
    w = Window(*w).validate(N, allow_degenerate)
    A = embed(a)
    slacks = [(-float(a[0]), "AE_1=0")]
    for n in range(w.k, w.l + 1):
        sigma = spectrum(A @ projection(n, N))
        slacks.append((-float(np.min(np.abs(sigma - HALF))), f"n={n}"))
    return _verdict(slacks, tol)


def phi_k(B, k: int) -> np.ndarray:
    B = as_operator(B)
    return projection(k, B.shape[0]) @ B


def psi_k(B, k: int, K: KrylovForm) -> np.ndarray:
    """``B E_k H E_k B - H E_k B``."""
    B = as_operator(B)
    if B.shape != K.H.shape:
        raise DimensionError(f"operator of shape {B.shape} vs Krylov form of dim {K.dim}")
    E = projection(k, K.dim)
    H = K.H
    return B @ E @ H @ E @ B - H @ E @ B


@dataclass(frozen=True)
class InclusionResult:
    """Outcome of :func:`check_inclusion`.

    ``status`` is ``"holds"`` (every sampled member of the first set lies in
    the second), ``"counterexample"`` or ``"vacuous"`` (no member of the
    first set was found at all).
    """

    status: str
    samples: int
    min_margin: float = math.inf
    counterexample: np.ndarray | None = None
    verdict: MembershipVerdict | None = None

    @property
    def holds(self) -> bool:
        return self.status == "holds"


def _sub_box(family: str, w: Window, N: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.zeros(N)
    hi = np.ones(N)
    if family == "A":
        hi[0] = 0.0
        lo[w.k : min(w.l + 1, N)] = HALF
    return lo, hi


def _a_margins(X: np.ndarray, w: Window) -> np.ndarray:
    # Batched in_A margins, one row per sample.
    cols = X[:, w.k : w.l + 1] - HALF
    return np.minimum(-X[:, 0], cols.min(axis=1)) if cols.shape[1] else -X[:, 0]


def check_inclusion(
    family: str,
    w: Window,
    w2: Window,
    N: int,
    K: KrylovForm | None = None,
    samples: int = 500,
    seed=0,
    tol: float = DEFAULT_TOL,
    max_rejections: int = 20000,
) -> InclusionResult:
    """Sample members of ``family(w)`` and test them against ``family(w2)``.

    The witness ``A_w`` is always tested first; further samples are drawn
    uniformly from the box implied by ``family(w)`` and, for ``"F"``,
    rejected unless they satisfy the ``w`` inequalities. Returns the first
    counterexample met, else ``holds`` with the number of members tested.
    """
    if family not in ("A", "F"):
        raise DomainError(f"unknown family {family!r}")
    if family == "F" and K is None:
        raise DomainError("family F needs a Krylov form")
    w = Window(*w).validate(N)
    w2 = Window(*w2).validate(N)
    rng = np.random.default_rng(seed)
    lo, hi = _sub_box(family, w, N)

    if family == "A":
        X = witness(w, N)[None]
        if samples > 1:
            X = np.vstack([X, rng.uniform(lo, hi, size=(samples - 1, N))])
        X = X[_a_margins(X, w) >= -tol]
        if X.shape[0] == 0:
            return InclusionResult("vacuous", 0)
        m2 = _a_margins(X, w2)
        bad = np.flatnonzero(m2 < -tol)
        if bad.size:
            c = X[bad[0]]
            v2 = in_A(c, w2, tol)
            return InclusionResult("counterexample", int(bad[0]) + 1, v2.margin, c, v2)
        return InclusionResult("holds", X.shape[0], float(m2.min()))

    # Cheap batched pre-filter; every accepted draw is re-checked with in_F.
    tested = 0
    drawn = 0
    lowest = math.inf
    queue = [witness(w, N)]
    rhs = float(K.defects[w.k - 1 : w.l].min())
    while tested < samples:
        if not queue:
            if drawn >= max_rejections:
                break
            batch = rng.uniform(lo, hi, size=(min(4096, max_rejections - drawn), N))
            drawn += batch.shape[0]
            queue = list(batch[f_lhs_batch(batch, w.k, K) <= rhs + 2 * tol])
            continue
        candidate = queue.pop(0)
        if not in_F(candidate, w, K, tol).member:
            continue
        tested += 1
        v2 = in_F(candidate, w2, K, tol)
        lowest = min(lowest, v2.margin)
        if not v2.member:
            return InclusionResult("counterexample", tested, v2.margin, candidate, v2)
    if tested == 0:
        return InclusionResult("vacuous", 0)
    return InclusionResult("holds", tested, lowest)
