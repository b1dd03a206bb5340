"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline;
they are also repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from isplab.cli import verify_golden
from isplab.constraints import (
    InclusionResult,
    Window,
    _a_margins,
    check_inclusion,
    embed,
    f_lhs,
    f_lhs_batch,
    in_A,
    in_F,
    psi_k,
    witness,
)
from isplab.enorm import compression_defect, enorm
from isplab.krylov import orthonormalize
from isplab.operator_core import operator_norm
from isplab.solver import (
    Budget,
    FeasibilityProblem,
    default_windows,
    diagonal_windows,
    fip_audit,
    grid_oracle,
    grid_values,
    search,
)
from isplab.zoo import ZooSpec, build, default_zoo

from conftest import ACCEPTANCE, e1, shift


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE.append(line)
    assert ok, line


def nested_pairs(N):
    ws = default_windows(N)
    return [(w, w2) for w in ws for w2 in ws if w.k <= w2.k <= w2.l <= w.l]


def test_criterion_01_hessenberg_and_unitarity():
    t0 = time.perf_counter()
    worst_h = worst_q = 0.0
    for z in default_zoo(64):
        K = orthonormalize(*build(z))
        worst_h = max(worst_h, float(np.abs(np.tril(K.H, -2)).max()))
        worst_q = max(worst_q, float(np.linalg.norm(K.Q.conj().T @ K.Q - np.eye(64), 2)))
    dt = time.perf_counter() - t0
    ok = worst_h <= 1e-10 and worst_q <= 1e-10 and dt < 5
    report(1, ok, f"max|H below subdiag|={worst_h:.1e} max||Q*Q-I||={worst_q:.1e} time={dt:.2f}s")


def test_criterion_02_defect_closed_form():
    worst = 0.0
    for z in default_zoo(32):
        K = orthonormalize(*build(z))
        for k in range(1, 32):
            d = compression_defect(K, k)
            worst = max(worst, abs(d.value - math.ldexp(abs(K.subdiag[k - 1]), -(2 * k + 1))))
    K = orthonormalize(shift(32), e1(32))
    shift_err = max(abs(compression_defect(K, k).value - 2.0 ** -(2 * k + 1)) for k in range(1, 11))
    ok = worst <= 1e-13 and shift_err <= 1e-15
    report(2, ok, f"max closed-form gap={worst:.1e} shift gap={shift_err:.1e}")


def test_criterion_03_enorm_domination():
    rng = np.random.default_rng(3)
    violations = 0
    scales = 10.0 ** rng.uniform(-3, 3, 200)
    for s in scales:
        A = s * (rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32)))
        violations += enorm(A).value > operator_norm(A)
    report(3, violations == 0, f"violations={violations}/200")


def test_criterion_04_witness_chain():
    fails = []
    worst_lhs = 0.0
    for z in default_zoo(16):
        K = orthonormalize(*build(z))
        for w in default_windows(16):
            a = witness(w, 16)
            worst_lhs = max(worst_lhs, f_lhs(a, w.k, K))
            if not (in_A(a, w).member and in_F(a, w, K).member):
                fails.append((z.operator_id, w))
    ok = not fails and worst_lhs <= 1e-14
    report(4, ok, f"failing={len(fails)} max left value={worst_lhs:.1e}")


def test_criterion_05_inclusion_audit():
    pairs = nested_pairs(16)
    bad = []
    for i, (w, w2) in enumerate(pairs):
        res = check_inclusion("A", w, w2, 16, samples=500, seed=[5, i])
        if not (res.holds and res.samples == 500):
            bad.append((w, w2, res.status))
    K = orthonormalize(shift(8), e1(8))
    res: InclusionResult = check_inclusion("F", Window(1, 3), Window(2, 3), 8, K=K, samples=500, seed=0)
    cex_ok = (
        res.status == "counterexample"
        and np.array_equal(res.counterexample, witness(Window(1, 3), 8))
        and abs(res.min_margin + 1 / 128) <= 1e-15
    )
    ok = not bad and cex_ok
    report(5, ok, f"A pairs={len(pairs)} failing={len(bad)}; F counterexample margin={res.min_margin!r}")


def test_criterion_06_fip_audit():
    single_fail = []
    for z in default_zoo(8):
        K = orthonormalize(*build(z))
        for w in default_windows(8):
            if not fip_audit([w], K).passed:
                single_fail.append((z.operator_id, w))
    K = orthonormalize(shift(8), e1(8))
    fa = fip_audit([Window(1, 3), Window(2, 3)], K)
    two_ok = (not fa.passed) and fa.a_side_ok and fa.failures() == [(Window(2, 3), "F")]
    row = next(r for r in fa.rows if r.window == Window(2, 3))
    margin_ok = abs(row.f_margin + 1 / 128) <= 1e-15
    ok = not single_fail and two_ok and margin_ok
    report(6, ok, f"single-window failures={len(single_fail)}; pair failures={fa.failures()} margin={row.f_margin!r}")


def _oracle_problems():
    ops = [
        ("shift", ZooSpec("shift", 5)),
        ("jordan0", ZooSpec("jordan", 5, params={"lam": 0.0})),
        ("ginibre", ZooSpec("random_ginibre", 5, params={"seed": 0})),
    ]
    ws = default_windows(5)
    sets = {"all": ws, "diagonal": diagonal_windows(5)}
    sets.update({f"single{w}": (w,) for w in ws})
    sets.update({f"pair{w}{w2}": (w, w2) for w in ws for w2 in ws if w2 in {(w.k + 1, w.l), (w.k, w.l + 1)}})
    for name, z in ops:
        K = orthonormalize(*build(z))
        for label, windows in sets.items():
            for fam in ("AF", "BF"):
                yield f"{name}/{label}/{fam}", K, windows, fam


def test_criterion_07_search_matches_oracle():
    t0 = time.perf_counter()
    budget = Budget(grid_resolution=0.1)
    disagree = []
    n = feasible = 0
    for label, K, windows, fam in _oracle_problems():
        P = FeasibilityProblem(K, windows, fam, budget=budget)
        rep = search(P, seed=0)
        g = grid_oracle(P, 0.1)
        n += 1
        feasible += g.feasible
        if rep.feasible != g.feasible or rep.verdict == "budget_exhausted":
            disagree.append((label, rep.verdict, g.verdict))
    dt = time.perf_counter() - t0
    ok = not disagree and dt < 60
    report(7, ok, f"problems={n} oracle-feasible={feasible} disagreements={disagree[:3]} time={dt:.1f}s")


def test_criterion_08_positive_control():
    K = orthonormalize(shift(8), e1(8))
    rep = search(FeasibilityProblem(K, diagonal_windows(8)), seed=0)
    sub = rep.subspace
    ok = (
        rep.verdict == "feasible"
        and rep.point[0] == 0
        and np.all(rep.point[1:] > 0)
        and rep.residual <= 1e-12
        and sub.rank == 7
        and sub.kernel_dim == 1
        and sub.invariance_defect <= 1e-12
    )
    report(
        8,
        ok,
        f"verdict={rep.verdict} point={np.round(rep.point, 3).tolist()} residual={rep.residual:.1e} "
        f"rank={sub.rank} kernel_dim={sub.kernel_dim} invariance_defect={sub.invariance_defect:.1e}",
    )


def test_criterion_09_negative_control():
    K = orthonormalize(shift(8), e1(8))
    P = FeasibilityProblem(K, default_windows(8), budget=Budget(grid_resolution=0.05))
    rep = search(P, seed=0)
    # Any a with a_{k} >= 1/2 (forced by the A side of window (k-1,k-1)) has
    # L_k >= 2^-(2k+2), while window (k,k+1) caps L_k by the defect at k+1.
    vals = grid_values(0.05)
    bound_ok = True
    rng = np.random.default_rng(9)
    for k in range(2, 7):
        X = rng.choice(vals, size=(4000, 8))
        X[:, 0] = 0
        X[:, k - 1] = rng.choice(vals[vals >= 0.5], size=4000)
        L = f_lhs_batch(X, k, K)
        cap = compression_defect(K, k + 1).value
        bound_ok &= bool(L.min() >= 2.0 ** -(2 * k + 2) > cap == 2.0 ** -(2 * k + 3))
    ok = rep.verdict == "infeasible_on_grid" and bound_ok
    report(9, ok, f"verdict={rep.verdict} analytic bound holds={bound_ok}")


def test_criterion_10_psi_continuity():
    rng = np.random.default_rng(10)
    Ks = [orthonormalize(*build(z)) for z in default_zoo(16)]
    violations = 0
    for i in range(100):
        K = Ks[i % len(Ks)]
        k = int(rng.integers(1, 17))
        B = embed(rng.uniform(0, 1, 16))
        B2 = embed(rng.uniform(0, 1, 16))
        lhs = enorm(psi_k(B, k, K) - psi_k(B2, k, K)).value
        rhs = 3 * operator_norm(K.H) * operator_norm(B - B2)
        violations += lhs > rhs
    report(10, violations == 0, f"violations={violations}/100")


def test_criterion_11_golden_determinism(tmp_path):
    first = verify_golden(tmp_path / "one")
    second = verify_golden(tmp_path / "two")
    same = all(
        (tmp_path / "one" / f).read_bytes() == (tmp_path / "two" / f).read_bytes() for f in ("audit.csv", "summary.json")
    )
    ok = not first and not second and same
    report(11, ok, f"mismatches vs checked-in files={first + second} repeat identical={same}")


@pytest.mark.parametrize("N", [6, 10])
def test_a_margins_match_predicate(N):
    # the vectorized A margins used by criterion 5 agree with in_A
    rng = np.random.default_rng(N)
    X = rng.uniform(0, 1, (50, N))
    X[::2, 0] = 0
    for w in default_windows(N):
        m = _a_margins(X, w)
        assert np.allclose(m, [in_A(x, w).margin for x in X], atol=0, rtol=0)
