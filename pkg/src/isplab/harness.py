"""Audit, feasibility and sweep runs driven by a JSON configuration.

A run never fails because a checked claim is false; a false claim is a
``fail`` row. Only configuration or runtime problems raise.

Audit rows have the columns of :data:`CSV_COLUMNS`. ``verdict`` is one of
``pass``, ``fail``, ``vacuous`` (the premise needed to check the claim is
absent), ``inconclusive`` (search budget exhausted) or ``skip``
(orthonormalization broke down before the claim could be set up).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .constraints import DEFAULT_TOL, Window, check_inclusion, embed, in_A, in_F, witness
from .enorm import compression_defect
from .exceptions import ConfigError
from .krylov import KrylovForm, orthonormalize, projection
from .operator_core import operator_norm
from .solver import (
    Budget,
    FeasibilityProblem,
    FeasibilityReport,
    default_windows,
    diagonal_windows,
    fip_audit,
    grid_oracle,
    search,
)
from .zoo import ZooSpec, build

__all__ = [
    "CLAIMS",
    "CSV_COLUMNS",
    "AuditRow",
    "RunConfig",
    "audit_operator",
    "fip_sets",
    "load_config",
    "run_audit",
    "run_feasibility",
    "sweep",
]

log = logging.getLogger(__name__)

CLAIMS = ("2.13", "2.16", "2.17", "2.18", "2.19", "2.31", "2.32", "2.33", "2.35", "2.44", "2.48", "2.51")
CSV_COLUMNS = ("claim_id", "operator_id", "N", "params", "verdict", "margin", "witness_path")
FEASIBILITY_CLAIMS = {"2.35", "2.48", "2.51"}
VERDICTS = ("pass", "fail", "vacuous", "inconclusive", "skip")
_TOP_KEYS = {
    "zoo",
    "claims",
    "solver",
    "master_seed",
    "output",
    "samples",
    "families",
    "diagonal_windows_only",
    "include_degenerate_windows",
    "grid_oracle",
    "sweep",
    "workers",
    "tol",
    "breakdown_tol",
}
_SOLVER_KEYS = {"restarts", "iterations", "grid_resolution", "sa_iterations", "fd_step", "max_frontier"}


@dataclass(frozen=True)
class RunConfig:
    zoo: tuple[ZooSpec, ...]
    claims: tuple[str, ...] = CLAIMS
    budget: Budget = field(default_factory=Budget)
    master_seed: int = 0
    output: str = "out"
    samples: int = 64
    families: tuple[str, ...] = ("AF",)
    diagonal_windows_only: bool = False
    include_degenerate_windows: bool = False
    grid_oracle: bool = False
    sweep_seeds: int = 1
    workers: int = 1
    tol: float = DEFAULT_TOL
    breakdown_tol: float = 1e-12

    def validate(self) -> "RunConfig":
        if not self.zoo:
            raise ConfigError("zoo is empty")
        bad = [c for c in self.claims if c not in CLAIMS]
        if bad:
            raise ConfigError(f"unknown claim ids {bad}; known: {list(CLAIMS)}")
        bad = [f for f in self.families if f not in ("AF", "BF")]
        if bad or not self.families:
            raise ConfigError(f"families must be a non-empty subset of ['AF', 'BF'], got {list(self.families)}")
        if self.samples < 1 or self.sweep_seeds < 1 or self.workers < 1:
            raise ConfigError("samples, sweep.seeds and workers must be positive")
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ConfigError("master_seed must be a nonnegative integer")
        try:
            self.budget.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def windows(self, N: int) -> tuple[Window, ...]:
        if self.diagonal_windows_only:
            return diagonal_windows(N)
        return default_windows(N, self.include_degenerate_windows)


def _expect(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def config_from_dict(d: dict) -> RunConfig:
    _expect(isinstance(d, dict), "config must be a JSON object")
    unknown = set(d) - _TOP_KEYS
    _expect(not unknown, f"unknown config keys: {sorted(unknown)}")
    _expect(isinstance(d.get("zoo"), list), '"zoo" must be a list')
    solver = d.get("solver", {})
    _expect(isinstance(solver, dict), '"solver" must be an object')
    unknown = set(solver) - _SOLVER_KEYS
    _expect(not unknown, f"unknown solver keys: {sorted(unknown)}")
    sweep_cfg = d.get("sweep", {})
    _expect(isinstance(sweep_cfg, dict) and set(sweep_cfg) <= {"seeds"}, '"sweep" accepts only "seeds"')
    kwargs = {
        "zoo": tuple(ZooSpec.from_dict(z) for z in d["zoo"]),
        "budget": Budget(**solver),
        "sweep_seeds": int(sweep_cfg.get("seeds", 1)),
    }
    for key in ("master_seed", "output", "samples", "workers", "tol", "breakdown_tol"):
        if key in d:
            kwargs[key] = d[key]
    for key in ("diagonal_windows_only", "include_degenerate_windows", "grid_oracle"):
        if key in d:
            _expect(isinstance(d[key], bool), f'"{key}" must be a boolean')
            kwargs[key] = d[key]
    if "claims" in d:
        kwargs["claims"] = tuple(str(c) for c in d["claims"])
    if "families" in d:
        kwargs["families"] = tuple(d["families"])
    return RunConfig(**kwargs).validate()


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


@dataclass(frozen=True)
class AuditRow:
    claim_id: str
    operator_id: str
    N: int
    params: str
    verdict: str
    margin: float | None = None
    witness_path: str = ""

    def as_csv(self) -> list[str]:
        margin = "" if self.margin is None else format(self.margin, ".17g")
        return [self.claim_id, self.operator_id, str(self.N), self.params, self.verdict, margin, self.witness_path]


def fip_sets(N: int) -> list[tuple[Window, ...]]:
    """Window lists audited for the finite-intersection claims.

    Every single window, plus the neighbouring pairs ``{(k,l), (k+1,l)}``
    and ``{(k,l), (k,l+1)}``.
    """
    ws = default_windows(N)
    out: list[tuple[Window, ...]] = [(w,) for w in ws]
    for w in ws:
        if w.k + 1 <= w.l:
            out.append((w, Window(w.k + 1, w.l)))
    for w in ws:
        if w.l + 1 <= N - 1:
            out.append((w, Window(w.k, w.l + 1)))
    return out


def _wstr(ws) -> str:
    return "+".join(str(w) for w in ws)


def _pf(ok: bool) -> str:
    return "pass" if ok else "fail"


class _Writer:
    """Collects rows and the counterexample files they point to."""

    def __init__(self, operator_id: str):
        self.operator_id = operator_id
        self.rows: list[AuditRow] = []
        self.files: dict[str, str] = {}

    def save_point(self, claim: str, a: np.ndarray) -> str:
        rel = f"witnesses/{self.operator_id}_{claim}_{len(self.files):04d}.json"
        self.files[rel] = json.dumps({"a": [float(x) for x in a]}) + "\n"
        return rel


def _telescoping_gap(w: Window, N: int) -> float:
    A = embed(witness(w, N))
    E = lambda j: projection(j, N) if j >= 1 else np.zeros((N, N), dtype=complex)  # noqa: E731
    gap = 0.0
    tele = sum(0.5 * (E(j + 1) - E(j)) for j in range(w.k, w.l + 1))
    gap = max(gap, float(np.abs(tele - 0.5 * (E(w.l + 1) - E(w.k))).max()))
    gap = max(gap, float(np.abs(A - 0.5 * (E(w.l + 1) - E(w.k))).max()))
    for s in range(w.k, w.l + 1):
        D = E(s + 1) - E(s)
        gap = max(gap, float(np.abs(A @ D - 0.5 * D).max()))
    return gap


def audit_operator(z: ZooSpec, cfg: RunConfig, index: int = 0) -> tuple[list[AuditRow], dict[str, str]]:
    """All requested claim rows for one zoo operator.

    Returns the rows and the witness files (relative path -> content) the
    rows refer to.
    """
    T, v = build(z)
    N = z.N
    K = orthonormalize(T, v, cfg.breakdown_tol)
    wr = _Writer(z.operator_id)

    def row(cid, params, verdict, margin=None, path=""):
        wr.rows.append(AuditRow(cid, z.operator_id, N, params, verdict, margin, path))

    if K.breakdown_index is not None:
        b = K.breakdown_index
        for cid in cfg.claims:
            row(cid, f"breakdown at step {b}: invariant subspace found (span of e_1..e_{b})", "skip")
        return wr.rows, wr.files

    tol = cfg.tol
    claims = set(cfg.claims)
    windows = default_windows(N)
    seed_base = [cfg.master_seed, index]

    if "2.44" in claims:
        tnorm = operator_norm(T)
        for k in range(1, N):
            d = compression_defect(K, k)
            envelope = math.ldexp(tnorm, -(2 * k + 1))
            ok = abs(d.value - d.closed_form) <= 1e-13 and d.value <= envelope * (1 + 1e-12)
            row("2.44", f"k={k};defect={d.value!r};closed_form={d.closed_form!r}", _pf(ok), envelope - d.value)

    for w in windows:
        a = witness(w, N)
        va = in_A(a, w, tol) if claims & {"2.16", "2.19"} else None
        vf = in_F(a, w, K, tol) if claims & {"2.18", "2.19"} else None
        if "2.16" in claims:
            row("2.16", f"window={w};worst={va.worst_constraint}", _pf(va.member), va.margin)
        if "2.17" in claims:
            gap = _telescoping_gap(w, N)
            row("2.17", f"window={w}", _pf(gap <= tol), -gap)
        if "2.18" in claims:
            row("2.18", f"window={w};worst={vf.worst_constraint}", _pf(vf.member), vf.margin)
        if "2.19" in claims:
            row("2.19", f"window={w}", _pf(va.member and vf.member), min(va.margin, vf.margin))

    if "2.13" in claims:
        pair = 0
        for w in windows:
            for w2 in windows:
                if w == w2 or not (w.k <= w2.k <= w2.l <= w.l):
                    continue
                res = check_inclusion("A", w, w2, N, samples=cfg.samples, seed=[*seed_base, 13, pair], tol=tol)
                pair += 1
                path = wr.save_point("2.13", res.counterexample) if res.status == "counterexample" else ""
                verdict = {"holds": "pass", "counterexample": "fail", "vacuous": "vacuous"}[res.status]
                margin = None if res.status == "vacuous" else res.min_margin
                row("2.13", f"from={w};to={w2};samples={res.samples}", verdict, margin, path)

    sets = fip_sets(N)
    for j, ws in enumerate(sets):
        hull = Window(min(w.k for w in ws), max(w.l for w in ws))
        multi = len(ws) > 1
        for fam, cid in (("A", "2.31"), ("F", "2.32")):
            if cid not in claims or not multi:
                continue
            for i, wi in enumerate(ws):
                res = check_inclusion(
                    fam, hull, wi, N, K=K, samples=cfg.samples, seed=[*seed_base, int(cid[2:]), j, i], tol=tol
                )
                path = wr.save_point(cid, res.counterexample) if res.status == "counterexample" else ""
                verdict = {"holds": "pass", "counterexample": "fail", "vacuous": "vacuous"}[res.status]
                margin = None if res.status == "vacuous" else res.min_margin
                row(cid, f"set={_wstr(ws)};from={hull};to={wi};samples={res.samples}", verdict, margin, path)
        if "2.33" in claims:
            fa = fip_audit(ws, K, tol)
            fails = ",".join(f"{w}:{side}" for w, side in fa.failures()) or "none"
            row("2.33", f"set={_wstr(ws)};hull={fa.hull};failing={fails}", _pf(fa.passed), fa.margin)

    if claims & FEASIBILITY_CLAIMS:
        for fam in cfg.families:
            P = FeasibilityProblem(K, cfg.windows(N), fam, tol, cfg.budget, cfg.include_degenerate_windows)
            rep = search(P, seed=cfg.master_seed * 1_000_003 + index)
            margin = min(rep.per_window_margins.values()) if rep.per_window_margins else None
            if "2.35" in claims:
                verdict = {"feasible": "pass", "infeasible_on_grid": "fail", "budget_exhausted": "inconclusive"}[
                    rep.verdict
                ]
                path = wr.save_point("2.35", rep.point) if rep.point is not None else ""
                row("2.35", f"family={fam};windows={len(P.windows)};result={rep.verdict}", verdict, margin, path)
            sub = rep.subspace
            if "2.48" in claims:
                if rep.feasible:
                    row("2.48", f"family={fam};residual={rep.residual!r}", _pf(rep.residual <= tol), -rep.residual)
                else:
                    row("2.48", f"family={fam};no feasible M ({rep.verdict})", "vacuous")
            if "2.51" in claims:
                if rep.feasible:
                    ok = sub.invariance_defect <= tol and not sub.trivial
                    row(
                        "2.51",
                        f"family={fam};rank={sub.rank};kernel_dim={sub.kernel_dim}",
                        _pf(ok),
                        -sub.invariance_defect,
                    )
                else:
                    row("2.51", f"family={fam};no feasible M ({rep.verdict})", "vacuous")
    return wr.rows, wr.files


def _rows_csv(rows: list[AuditRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.as_csv())
    return buf.getvalue()


def summarize(rows: list[AuditRow], cfg: RunConfig) -> dict:
    counts = {cid: {v: 0 for v in VERDICTS} for cid in cfg.claims}
    for r in rows:
        counts[r.claim_id][r.verdict] += 1
    return {
        "master_seed": cfg.master_seed,
        "operators": [z.operator_id for z in cfg.zoo],
        "rows": len(rows),
        "claims": counts,
    }


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _map(fn, items, workers: int):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, *zip(*items)))
    return [fn(*it) for it in items]


def _write(out: Path, files: dict[str, str]):
    for rel, text in files.items():
        p = out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)


def run_audit(cfg: RunConfig, out: Path | None = None) -> dict:
    """Audit every zoo operator; writes ``audit.csv``, ``summary.json`` and witnesses."""
    cfg.validate()
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    results = _map(audit_operator, [(z, cfg, i) for i, z in enumerate(cfg.zoo)], cfg.workers)
    rows: list[AuditRow] = []
    files: dict[str, str] = {}
    for r, f in results:
        rows.extend(r)
        files.update(f)
    summary = summarize(rows, cfg)
    _write(out, {"audit.csv": _rows_csv(rows), "summary.json": _dump(summary), **files})
    log.info("audit: %d rows written to %s", len(rows), out)
    return summary


def feasibility_operator(z: ZooSpec, cfg: RunConfig, index: int = 0) -> list[dict]:
    T, v = build(z)
    N = z.N
    K = orthonormalize(T, v, cfg.breakdown_tol)
    reports = []
    for fam in cfg.families:
        head = {"operator_id": z.operator_id, "N": N, "family": fam}
        if K.breakdown_index is not None:
            reports.append({**head, "skipped": f"breakdown at step {K.breakdown_index}"})
            continue
        P = FeasibilityProblem(K, cfg.windows(N), fam, cfg.tol, cfg.budget, cfg.include_degenerate_windows)
        rep: FeasibilityReport = search(P, seed=cfg.master_seed * 1_000_003 + index)
        if cfg.grid_oracle and N <= 8:
            g = grid_oracle(P, cfg.budget.grid_resolution or 0.05)
            rep.oracle_agreement = rep.feasible == g.feasible
        body = rep.to_json()
        body["windows"] = "diagonal" if cfg.diagonal_windows_only else "all"
        reports.append({**head, **body})
    return reports


def run_feasibility(cfg: RunConfig, out: Path | None = None) -> list[dict]:
    """One ``report-<operator>-<family>.json`` per (operator, family)."""
    cfg.validate()
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    results = _map(feasibility_operator, [(z, cfg, i) for i, z in enumerate(cfg.zoo)], cfg.workers)
    reports = [r for batch in results for r in batch]
    _write(out, {f"report-{r['operator_id']}-{r['family']}.json": _dump(r) for r in reports})
    return reports


def decay_fit(K: KrylovForm) -> dict:
    """Least-squares fit ``log defect_k ~ log c + k log rate`` over nonzero defects."""
    N = K.dim
    ks = np.arange(1, N)
    d = np.array([compression_defect(K, int(k)).value for k in ks])
    mask = d > 0
    if mask.sum() < 2:
        return {"rate": None, "points": int(mask.sum())}
    slope, intercept = np.polyfit(ks[mask], np.log(d[mask]), 1)
    return {"rate": float(np.exp(slope)), "scale": float(np.exp(intercept)), "points": int(mask.sum())}


def _sweep_zoo(cfg: RunConfig) -> tuple[ZooSpec, ...]:
    out = []
    for z in cfg.zoo:
        if z.kind.startswith("random_"):
            base = int(z.params.get("seed", 0))
            for i in range(cfg.sweep_seeds):
                out.append(replace(z, params={**z.params, "seed": base + i}, name=None))
        else:
            out.append(z)
    return tuple(out)


def _sweep_one(z: ZooSpec, cfg: RunConfig, index: int) -> dict:
    rows, _ = audit_operator(z, cfg, index)
    reps = feasibility_operator(z, cfg, index) if set(cfg.claims) & FEASIBILITY_CLAIMS else []
    T, v = build(z)
    K = orthonormalize(T, v, cfg.breakdown_tol)
    fit = decay_fit(K) if K.breakdown_index is None else {"rate": None, "points": 0}
    return {
        "operator_id": z.operator_id,
        "rows": [(r.claim_id, r.verdict) for r in rows],
        "feasibility": [r.get("verdict", "skipped") for r in reps],
        "fit": fit,
    }


def sweep(cfg: RunConfig, out: Path | None = None) -> dict:
    """Audit over seed ranges; writes ``sweep.json``.

    Every ``random_*`` zoo entry is expanded into ``sweep_seeds`` copies
    with consecutive seeds starting at its own. The feasibility stage runs
    only when one of :data:`FEASIBILITY_CLAIMS` is requested.
    """
    cfg.validate()
    zoo = _sweep_zoo(cfg)
    results = _map(_sweep_one, [(z, cfg, i) for i, z in enumerate(zoo)], cfg.workers)
    counts = {cid: {v: 0 for v in VERDICTS} for cid in cfg.claims}
    feas: dict[str, int] = {}
    fits = []
    for res in results:
        for cid, verdict in res["rows"]:
            counts[cid][verdict] += 1
        for verdict in res["feasibility"]:
            feas[verdict] = feas.get(verdict, 0) + 1
        fits.append({"operator_id": res["operator_id"], **res["fit"]})
    claims = {}
    for cid, c in counts.items():
        decided = c["pass"] + c["fail"]
        claims[cid] = {**c, "pass_rate": (c["pass"] / decided) if decided else None}
    agg = {
        "master_seed": cfg.master_seed,
        "operators": [z.operator_id for z in zoo],
        "claims": claims,
        "feasibility": dict(sorted(feas.items())),
        "decay_fits": fits,
    }
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(_dump(agg))
    return agg
