"""Feasibility search over the diagonal box and evaluation of candidates.

A :class:`FeasibilityProblem` asks for a diagonal ``a`` that belongs to
``A(k,l) & F(k,l)`` (family ``"AF"``) or ``B(k,l) & F(k,l)`` (family
``"BF"``) for every listed window simultaneously.

Two independent routes answer it:

* :func:`search` -- multi-start projected descent on a squared-hinge
  penalty, a simulated-annealing fallback, and finally a vectorized
  layer-by-layer sweep of the grid ``{0} u {1/2, 1/2 + r, .., 1}``.
* :func:`grid_oracle` -- a depth-first enumeration of the same grid that
  calls the membership predicates of :mod:`isplab.constraints` directly.

Both exploit that every constraint only reads a prefix ``a_1 .. a_d`` of
the vector, so a prefix violating a constraint can be discarded together
with all its completions without changing the result.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import (
    DEFAULT_TOL,
    HALF,
    MembershipVerdict,
    Window,
    as_diagonal,
    embed,
    in_A,
    in_B,
    in_F,
    witness,
)
from .enorm import enorm
from .exceptions import DomainError, GridGuardError
from .krylov import KrylovForm
from .operator_core import operator_norm, operator_to_json

__all__ = [
    "Budget",
    "FamilyAudit",
    "FeasibilityProblem",
    "FeasibilityReport",
    "FipAudit",
    "GridResult",
    "SubspaceCandidate",
    "default_windows",
    "diagonal_windows",
    "evaluate_candidate",
    "fip_audit",
    "grid_oracle",
    "grid_values",
    "penalty",
    "search",
    "window_margins",
]

log = logging.getLogger(__name__)

FAMILIES = ("AF", "BF")
GRID_MAX_N = 8
GRID_MAX_NODES = 10**7
FIP_MAX_WINDOWS = 10


@dataclass(frozen=True)
class Budget:
    restarts: int = 12
    iterations: int = 150
    grid_resolution: float | None = 0.05
    sa_iterations: int = 1500
    fd_step: float = 1e-6
    max_frontier: int = 2_000_000

    def validate(self) -> "Budget":
        if self.restarts < 1 or self.iterations < 1 or self.sa_iterations < 0:
            raise DomainError("budget counts must be positive")
        if self.grid_resolution is not None and not (0 < self.grid_resolution <= 0.5):
            raise DomainError(f"grid resolution must lie in (0, 1/2], got {self.grid_resolution!r}")
        if self.fd_step <= 0 or self.max_frontier < 1:
            raise DomainError("fd_step and max_frontier must be positive")
        return self


def default_windows(N: int, include_degenerate: bool = False) -> tuple[Window, ...]:
    """All ``(k, l)`` with ``1 <= k <= l <= N - 1`` (``<= N`` if degenerate)."""
    top = N if include_degenerate else N - 1
    return tuple(Window(k, l) for k in range(1, top + 1) for l in range(k, top + 1))


def diagonal_windows(N: int) -> tuple[Window, ...]:
    return tuple(Window(k, k) for k in range(1, N))


@dataclass(frozen=True)
class FeasibilityProblem:
    K: KrylovForm
    windows: tuple[Window, ...]
    family: str = "AF"
    tol: float = DEFAULT_TOL
    budget: Budget = field(default_factory=Budget)
    include_degenerate: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"family must be one of {FAMILIES}, got {self.family!r}")
        ws = tuple(Window(*w).validate(self.N, self.include_degenerate) for w in self.windows)
        object.__setattr__(self, "windows", ws)
        self.budget.validate()

    @property
    def N(self) -> int:
        return self.K.dim


def window_margins(a, P: FeasibilityProblem) -> dict[Window, tuple[MembershipVerdict, MembershipVerdict]]:
    """Per window: (``A``- or ``B``-side verdict, ``F``-side verdict)."""
    first = in_A if P.family == "AF" else in_B
    out = {}
    for w in P.windows:
        out[w] = (
            first(a, w, P.tol, P.include_degenerate),
            in_F(a, w, P.K, P.tol, P.include_degenerate),
        )
    return out


def penalty(a, P: FeasibilityProblem) -> float:
    """Sum over windows of the squared hinge of both side margins."""
    total = 0.0
    for va, vf in window_margins(a, P).values():
        total += max(0.0, -va.margin) ** 2 + max(0.0, -vf.margin) ** 2
    return total


class _Model:
    """Batched closed-form margins of a problem.

    For diagonal ``a`` the F left side is
    ``L_k = sum_{j<=k} |a_j| (sum_{i<=k} w_ij |h_ij| |a_i - 1| + sum_{i>k} w_ij |h_ij|)``
    which this class evaluates for many rows at once.
    """

    def __init__(self, P: FeasibilityProblem):
        N = P.N
        self.P = P
        self.N = N
        idx = np.arange(N)
        weights = np.ldexp(1.0, -(idx[:, None] + idx[None, :] + 2))
        self.WH = weights * np.abs(P.K.H)
        self.ks = sorted({w.k for w in P.windows})
        self.tails = {k: self.WH[k:, :k].sum(axis=0) for k in self.ks}
        defects = P.K.defects
        self.rhs = np.array([defects[w.k - 1 : w.l].min() for w in P.windows])
        self.kpos = np.array([self.ks.index(w.k) for w in P.windows], dtype=int)

        lower = np.zeros(N)
        upper = np.ones(N)
        upper[0] = 0.0
        if P.family == "AF":
            for w in P.windows:
                lower[w.k : min(w.l + 1, N)] = HALF
        self.lower = lower
        self.upper = upper
        # 1-based depth at which each window's sides become fully determined.
        self.depth_first = [min(w.l + 1, N) if P.family == "AF" else w.l for w in P.windows]
        self.depth_f = [w.k for w in P.windows]

    def lhs(self, X: np.ndarray, k: int) -> np.ndarray:
        head = np.abs(X[:, :k])
        C = np.abs(X[:, :k] - 1.0)
        return np.sum(head * (C @ self.WH[:k, :k] + self.tails[k][None, :]), axis=1)

    def f_margins(self, X: np.ndarray) -> np.ndarray:
        L = np.stack([self.lhs(X, k) for k in self.ks], axis=1)
        return self.rhs[None, :] - L[:, self.kpos]

    def first_margins(self, X: np.ndarray) -> np.ndarray:
        out = np.empty((X.shape[0], len(self.P.windows)))
        a1 = -X[:, 0]
        if self.P.family == "AF":
            for c, w in enumerate(self.P.windows):
                cols = X[:, w.k : min(w.l + 1, self.N)]
                out[:, c] = np.minimum(a1, cols.min(axis=1) - HALF) if cols.shape[1] else a1
        else:
            dist = np.minimum.accumulate(np.abs(X - HALF), axis=1)
            for c, w in enumerate(self.P.windows):
                out[:, c] = np.minimum(a1, -dist[:, w.k - 1 : w.l].max(axis=1))
        return out

    def penalty(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if not self.P.windows:
            return np.zeros(X.shape[0])
        h1 = np.maximum(0.0, -self.first_margins(X))
        h2 = np.maximum(0.0, -self.f_margins(X))
        return np.sum(h1 * h1 + h2 * h2, axis=1)

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


def _descend(model: _Model, x0: np.ndarray, budget: Budget, target: float) -> tuple[np.ndarray, float]:
    """Projected normalized-gradient descent with backtracking."""
    x = model.project(x0.astype(float))
    f = float(model.penalty(x)[0])
    free = model.upper > model.lower
    h = budget.fd_step
    eye = np.eye(model.N)[free]
    step = 0.1
    for _ in range(budget.iterations):
        if f <= target:
            break
        probes = np.vstack([x + h * eye, x - h * eye])
        vals = model.penalty(probes)
        m = eye.shape[0]
        g = np.zeros(model.N)
        g[free] = (vals[:m] - vals[m:]) / (2 * h)
        gn = float(np.linalg.norm(g))
        if gn == 0.0 or not math.isfinite(gn):
            break
        d = g / gn
        t = min(1.0, 2.0 * step)
        moved = False
        while t >= 1e-12:
            cand = model.project(x - t * d)
            fc = float(model.penalty(cand)[0])
            if fc < f:
                x, f, step, moved = cand, fc, t, True
                break
            t *= 0.5
        if not moved:
            break
    return x, f


def _anneal(model: _Model, x0: np.ndarray, budget: Budget, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    x = model.project(x0.copy())
    f = float(model.penalty(x)[0])
    best_x, best_f = x.copy(), f
    scale = max(f, 1e-30)
    free = np.flatnonzero(model.upper > model.lower)
    if free.size == 0:
        return best_x, best_f
    n = budget.sa_iterations
    for i in range(n):
        frac = i / max(1, n - 1)
        temp = 1.0 * (1e-4 / 1.0) ** frac
        sigma = 0.25 * (1e-3 / 0.25) ** frac
        j = free[rng.integers(free.size)]
        cand = x.copy()
        cand[j] += sigma * rng.standard_normal()
        cand = model.project(cand)
        fc = float(model.penalty(cand)[0])
        if fc <= f or rng.random() < math.exp(-(fc - f) / (temp * scale)):
            x, f = cand, fc
            if f < best_f:
                best_x, best_f = x.copy(), f
    return best_x, best_f


def grid_values(resolution: float) -> np.ndarray:
    """``{0} u {1/2, 1/2 + r, .., 1}`` in ascending order."""
    if not (0 < resolution <= 0.5):
        raise DomainError(f"grid resolution must lie in (0, 1/2], got {resolution!r}")
    m = int(math.floor(0.5 / resolution + 1e-9))
    vals = [0.0] + [HALF + i * resolution for i in range(m + 1)]
    if vals[-1] < 1.0 - 1e-12:
        vals.append(1.0)
    vals[-1] = min(vals[-1], 1.0)
    return np.array(vals)


def _grid_sweep(model: _Model, resolution: float, max_rows: int) -> tuple[str, np.ndarray | None]:
    """Lexicographically first feasible grid point, layer by layer.

    Returns ``("feasible", a)``, ``("infeasible", None)`` or
    ``("guard", None)`` when the frontier outgrows ``max_rows``.
    """
    N = model.N
    P = model.P
    vals = grid_values(resolution)
    max_depth = max([1, *model.depth_first, *model.depth_f])
    frontier = np.zeros((1, N))
    for d in range(1, max_depth + 1):
        allowed = vals[(vals >= model.lower[d - 1]) & (vals <= model.upper[d - 1])]
        rows = frontier.shape[0] * allowed.size
        if rows > max_rows:
            return "guard", None
        nxt = np.repeat(frontier, allowed.size, axis=0)
        nxt[:, d - 1] = np.tile(allowed, frontier.shape[0])
        keep = np.ones(nxt.shape[0], dtype=bool)
        due_f = [c for c, dep in enumerate(model.depth_f) if dep == d]
        due_first = [c for c, dep in enumerate(model.depth_first) if dep == d]
        if due_f:
            keep &= (model.f_margins(nxt)[:, due_f] >= -P.tol).all(axis=1)
        if due_first:
            keep &= (model.first_margins(nxt)[:, due_first] >= -P.tol).all(axis=1)
        frontier = nxt[keep]
        if frontier.shape[0] == 0:
            return "infeasible", None
    return "feasible", frontier[0].copy()


@dataclass(frozen=True)
class SubspaceCandidate:
    P: np.ndarray
    rank: int
    kernel_dim: int
    invariance_defect: float

    @property
    def trivial(self) -> bool:
        return self.rank == 0 or self.kernel_dim == 0

    def to_json(self) -> dict:
        return {
            "P": operator_to_json(self.P),
            "rank": self.rank,
            "kernel_dim": self.kernel_dim,
            "invariance_defect": self.invariance_defect,
            "trivial": self.trivial,
        }


def evaluate_candidate(a, K: KrylovForm, rank_tol: float = 1e-12) -> tuple[float, SubspaceCandidate]:
    """Commutation residual ``||MHM - HM||_e`` and the closed range of ``M``.

    For diagonal ``M`` the closed range is the coordinate span of the
    entries above ``rank_tol``, i.e. the orthogonal complement of the kernel.
    """
    a = as_diagonal(a)
    N = a.shape[0]
    M = embed(a)
    H = K.H
    residual = enorm(M @ H @ M - H @ M).value
    support = (a > rank_tol).astype(float)
    P = np.diag(support).astype(complex)
    rank = int(support.sum())
    defect = operator_norm((np.eye(N) - P) @ H @ P)
    return residual, SubspaceCandidate(P, rank, N - rank, defect)


@dataclass
class FeasibilityReport:
    verdict: str
    point: np.ndarray
    best_penalty: float
    per_window_margins: dict
    residual: float
    subspace: SubspaceCandidate | None
    family: str
    stage: str
    vacuous: bool = False
    restarts_used: int = 0
    grid_resolution: float | None = None
    oracle_agreement: bool | None = None

    @property
    def feasible(self) -> bool:
        return self.verdict == "feasible"

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "family": self.family,
            "stage": self.stage,
            "vacuous": self.vacuous,
            "point": {"a": self.point.tolist()},
            "best_penalty": self.best_penalty,
            "per_window_margins": {f"{w.k},{w.l}": m for w, m in self.per_window_margins.items()},
            "residual": self.residual,
            "subspace": None if self.subspace is None else self.subspace.to_json(),
            "restarts_used": self.restarts_used,
            "grid_resolution": self.grid_resolution,
            "oracle_agreement": self.oracle_agreement,
        }


def _structured_starts(model: _Model) -> list[np.ndarray]:
    N = model.N
    P = model.P
    starts = []
    if P.windows:
        k = min(w.k for w in P.windows)
        l = min(max(w.l for w in P.windows), N - 1)
        starts.append(witness((k, l), N))
    ones = np.ones(N)
    ones[0] = 0.0
    starts.append(ones)
    half = np.full(N, HALF)
    half[0] = 0.0
    starts.append(half)
    return starts


def _report(a, P: FeasibilityProblem, stage: str, restarts_used: int, vacuous: bool = False) -> FeasibilityReport:
    margins = window_margins(a, P)
    per_window = {w: min(va.margin, vf.margin) for w, (va, vf) in margins.items()}
    pen = sum(max(0.0, -va.margin) ** 2 + max(0.0, -vf.margin) ** 2 for va, vf in margins.values())
    ok = all(m >= -P.tol for m in per_window.values()) and pen <= P.tol**2
    residual, sub = evaluate_candidate(a, P.K)
    return FeasibilityReport(
        verdict="feasible" if ok else "budget_exhausted",
        point=np.asarray(a, dtype=float),
        best_penalty=pen,
        per_window_margins=per_window,
        residual=residual,
        subspace=sub,
        family=P.family,
        stage=stage,
        vacuous=vacuous,
        restarts_used=restarts_used,
        grid_resolution=P.budget.grid_resolution,
    )


def search(P: FeasibilityProblem, seed: int = 0) -> FeasibilityReport:
    """Look for a point of the intersection over ``P.windows``.

    Stages run in order until one yields a point whose predicate margins
    are all ``>= -tol``: structured starts and seeded random restarts of
    projected descent (restart ``r`` uses ``default_rng([seed, r])``),
    annealing from the best point once half the restarts fail to improve
    it, then the grid sweep when ``N <= 8`` and a resolution is set. A
    completed sweep without survivors gives ``infeasible_on_grid``;
    anything else unresolved gives ``budget_exhausted``.
    """
    N = P.N
    if not P.windows:
        return _report(witness((1, 1), N), P, "vacuous", 0, vacuous=True)

    model = _Model(P)
    budget = P.budget
    target = P.tol**2
    starts = _structured_starts(model)
    best_x, best_f, best_r = None, math.inf, -1
    stale = 0
    annealed = False
    used = 0
    stage = "descent"
    for r in range(budget.restarts):
        used = r + 1
        rng = np.random.default_rng([seed, r])
        x0 = starts[r] if r < len(starts) else rng.uniform(model.lower, model.upper)
        x, f = _descend(model, x0, budget, target)
        if f < best_f:
            best_x, best_f, best_r = x, f, r
            stale = 0
        else:
            stale += 1
        if best_f <= target:
            break
        if not annealed and stale >= max(1, budget.restarts // 2):
            annealed = True
            xa, fa = _anneal(model, best_x, budget, np.random.default_rng([seed, budget.restarts]))
            xa, fa = _descend(model, xa, budget, target)
            if fa < best_f:
                best_x, best_f, stage = xa, fa, "annealing"
            if best_f <= target:
                break
    log.debug("descent best penalty %.3e from restart %d", best_f, best_r)

    if best_f <= target:
        rep = _report(best_x, P, stage, used)
        if rep.feasible:
            return rep

    if budget.grid_resolution is not None and N <= GRID_MAX_N:
        status, pt = _grid_sweep(model, budget.grid_resolution, budget.max_frontier)
        if status == "feasible":
            x, _ = _descend(model, pt, budget, target)
            rep = _report(x, P, "grid", used)
            if rep.feasible:
                return rep
            rep = _report(pt, P, "grid", used)
            if rep.feasible:
                return rep
        elif status == "infeasible":
            rep = _report(best_x, P, stage, used)
            rep.verdict = "infeasible_on_grid"
            return rep

    rep = _report(best_x, P, stage, used)
    rep.verdict = "feasible" if rep.feasible else "budget_exhausted"
    return rep


@dataclass(frozen=True)
class GridResult:
    feasible: bool
    point: np.ndarray | None
    nodes: int

    @property
    def verdict(self) -> str:
        return "feasible" if self.feasible else "infeasible_on_grid"


def grid_oracle(P: FeasibilityProblem, resolution: float) -> GridResult:
    """Exhaustive depth-first enumeration of the grid, lexicographic order.

    ``a_1`` is fixed to 0 and the remaining entries range over
    :func:`grid_values`. A prefix is abandoned as soon as a window part
    whose value it fully determines fails its membership predicate. The
    guard refuses ``N > 8`` and stops after ``10**7`` visited nodes.
    """
    N = P.N
    if N > GRID_MAX_N:
        raise GridGuardError(f"grid oracle limited to N <= {GRID_MAX_N}, got {N}")
    vals = grid_values(resolution).tolist()
    first = in_A if P.family == "AF" else in_B
    due: dict[int, list[tuple[str, Window]]] = {}
    for w in P.windows:
        d_first = min(w.l + 1, N) if P.family == "AF" else w.l
        due.setdefault(d_first, []).append(("first", w))
        due.setdefault(w.k, []).append(("F", w))

    a = np.zeros(N)
    nodes = 0

    def ok(depth: int) -> bool:
        for side, w in due.get(depth, ()):
            if side == "first":
                v = first(a, w, P.tol, P.include_degenerate)
            else:
                v = in_F(a, w, P.K, P.tol, P.include_degenerate)
            if not v.member:
                return False
        return True

    def visit(depth: int) -> bool:
        # a[:depth] assigned; try to extend to depth + 1.
        nonlocal nodes
        if depth == N:
            return True
        for v in vals:
            nodes += 1
            if nodes > GRID_MAX_NODES:
                raise GridGuardError(f"grid oracle exceeded {GRID_MAX_NODES} nodes")
            a[depth] = v
            if ok(depth + 1) and visit(depth + 1):
                return True
        a[depth] = 0.0
        return False

    a[0] = 0.0
    nodes = 1
    if ok(1) and visit(1):
        return GridResult(True, a.copy(), nodes)
    return GridResult(False, None, nodes)


@dataclass(frozen=True)
class FamilyAudit:
    window: Window
    a_margin: float
    f_margin: float


@dataclass(frozen=True)
class FipAudit:
    """Finite-intersection check for a list of windows.

    ``hull`` is ``(min k_i, max l_i)``; each row holds the hull witness's
    margins in ``A(k_i, l_i)`` and ``F(k_i, l_i)``.
    """

    hull: Window
    rows: tuple[FamilyAudit, ...]
    tol: float

    @property
    def a_side_ok(self) -> bool:
        return all(r.a_margin >= -self.tol for r in self.rows)

    @property
    def f_side_ok(self) -> bool:
        return all(r.f_margin >= -self.tol for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.a_side_ok and self.f_side_ok

    @property
    def margin(self) -> float:
        return min(min(r.a_margin, r.f_margin) for r in self.rows)

    def failures(self) -> list[tuple[Window, str]]:
        out = []
        for r in self.rows:
            if r.a_margin < -self.tol:
                out.append((r.window, "A"))
            if r.f_margin < -self.tol:
                out.append((r.window, "F"))
        return out


def fip_audit(windows, K: KrylovForm, tol: float = DEFAULT_TOL) -> FipAudit:
    N = K.dim
    ws = [Window(*w).validate(N) for w in windows]
    if not 1 <= len(ws) <= FIP_MAX_WINDOWS:
        raise DomainError(f"fip_audit takes 1..{FIP_MAX_WINDOWS} windows, got {len(ws)}")
    hull = Window(min(w.k for w in ws), max(w.l for w in ws))
    a = witness(hull, N)
    rows = tuple(
        FamilyAudit(w, in_A(a, w, tol).margin, in_F(a, w, K, tol).margin) for w in ws
    )
    return FipAudit(hull, rows, tol)
