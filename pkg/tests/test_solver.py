import json

import numpy as np
import pytest

from isplab.constraints import Window, embed, in_F, witness
from isplab.enorm import compression_defect, enorm
from isplab.exceptions import DomainError, GridGuardError
from isplab.krylov import orthonormalize, projection
from isplab.solver import (
    Budget,
    FeasibilityProblem,
    _Model,
    default_windows,
    diagonal_windows,
    evaluate_candidate,
    fip_audit,
    grid_oracle,
    grid_values,
    penalty,
    search,
    window_margins,
)
from isplab.zoo import ZooSpec, build

from conftest import e1, shift

FAST = Budget(restarts=4, iterations=60, sa_iterations=300, grid_resolution=0.1)


@pytest.fixture(scope="module")
def shift5():
    return orthonormalize(shift(5), e1(5))


def test_windows():
    assert default_windows(3) == (Window(1, 1), Window(1, 2), Window(2, 2))
    assert Window(3, 3) in default_windows(3, include_degenerate=True)
    assert diagonal_windows(4) == (Window(1, 1), Window(2, 2), Window(3, 3))


def test_grid_values():
    assert grid_values(0.25).tolist() == [0, 0.5, 0.75, 1.0]
    v = grid_values(0.05)
    assert len(v) == 12 and v[-1] == 1.0 and v[1] == 0.5
    assert grid_values(0.3).tolist() == [0, 0.5, 0.8, 1.0]


def test_penalty_examples(shift8):
    N = 8
    P = FeasibilityProblem(shift8, (Window(1, 1),))
    assert penalty(witness((1, 1), N), P) == 0
    P = FeasibilityProblem(shift8, default_windows(N))
    assert penalty(np.zeros(N), P) > 0
    P = FeasibilityProblem(shift8, (Window(2, 3),))
    a = np.array([0] + [1.0] * 7)
    va, vf = window_margins(a, P)[Window(2, 3)]
    assert va.margin == 0
    assert vf.margin == 1 / 128 - 1 / 32
    assert penalty(a, P) == (1 / 32 - 1 / 128) ** 2


def test_model_matches_predicates(rng):
    for z in (ZooSpec("random_ginibre", 7, params={"seed": 2}), ZooSpec("shift", 7)):
        K = orthonormalize(*build(z))
        for fam in ("AF", "BF"):
            P = FeasibilityProblem(K, default_windows(7), fam)
            model = _Model(P)
            X = rng.uniform(0, 1, (15, 7))
            X[:, 0] = 0
            X[:3, 2] = 0.5
            for x, p in zip(X, model.penalty(X)):
                assert p == pytest.approx(penalty(x, P), rel=1e-9, abs=1e-24)


def test_search_diagonal_windows_positive_control(shift8):
    P = FeasibilityProblem(shift8, diagonal_windows(8))
    rep = search(P, seed=3)
    assert rep.verdict == "feasible"
    assert rep.point[0] == 0
    assert all(m >= -P.tol for m in rep.per_window_margins.values())
    a = np.array([0] + [1.0] * 7)
    assert penalty(a, P) == 0
    assert all(in_F(a, w, shift8).margin == 0 for w in diagonal_windows(8) if w.k >= 2)


def test_search_all_windows_infeasible(shift8):
    P = FeasibilityProblem(shift8, default_windows(8))
    rep = search(P, seed=0)
    assert rep.verdict == "infeasible_on_grid"
    assert rep.best_penalty > 0


def test_search_empty_window_list(shift8):
    rep = search(FeasibilityProblem(shift8, ()), seed=0)
    assert rep.verdict == "feasible" and rep.vacuous


def test_shift_lower_bound_matches_verdict(shift8):
    """Any a with a_2 >= 1/2 has L_2 >= 2^-6 > 2^-7 = defect at s = 3."""
    rng = np.random.default_rng(0)
    E = projection(2, 8)
    H = shift8.H
    for _ in range(200):
        a = rng.uniform(0, 1, 8)
        a[0] = 0
        a[1] = rng.uniform(0.5, 1)
        A = embed(a)
        L = enorm(A @ E @ H @ E @ A - H @ E @ A).value
        assert L >= 2.0**-6 * (1 - 1e-15) > compression_defect(shift8, 3).value


def test_grid_oracle_examples(shift5):
    P = FeasibilityProblem(shift5, diagonal_windows(5))
    g = grid_oracle(P, 0.25)
    assert g.feasible
    a = np.array([0, 0.5, 1, 1, 1])
    assert penalty(a, P) == 0
    assert tuple(g.point) <= tuple(a)
    assert penalty(g.point, P) == 0

    g = grid_oracle(FeasibilityProblem(shift5, default_windows(5)), 0.05)
    assert not g.feasible and g.verdict == "infeasible_on_grid"

    g = grid_oracle(FeasibilityProblem(shift5, ()), 0.1)
    assert g.feasible


def test_grid_oracle_is_lexicographic_minimum(shift5):
    """Compare against a plain itertools enumeration with no pruning."""
    import itertools

    P = FeasibilityProblem(shift5, (Window(2, 3), Window(1, 1)))
    vals = grid_values(0.25)
    first = None
    for tail in itertools.product(vals, repeat=4):
        a = np.array((0.0, *tail))
        if penalty(a, P) <= P.tol**2 and all(
            min(va.margin, vf.margin) >= -P.tol for va, vf in window_margins(a, P).values()
        ):
            first = a
            break
    g = grid_oracle(P, 0.25)
    assert (first is None) == (not g.feasible)
    if first is not None:
        assert np.array_equal(first, g.point)


def test_grid_guard():
    K = orthonormalize(shift(9), e1(9))
    with pytest.raises(GridGuardError):
        grid_oracle(FeasibilityProblem(K, diagonal_windows(9)), 0.1)


def test_fip_audit_examples(shift8):
    for w in default_windows(8):
        assert fip_audit([w], shift8).passed
    fa = fip_audit([(1, 3), (2, 3)], shift8)
    assert fa.a_side_ok and not fa.f_side_ok
    assert fa.failures() == [(Window(2, 3), "F")]
    row = [r for r in fa.rows if r.window == Window(2, 3)][0]
    assert abs(row.f_margin + 1 / 128) <= 1e-15
    assert fip_audit([(2, 4)] * 3, shift8).passed
    with pytest.raises(DomainError):
        fip_audit([(1, 1)] * 11, shift8)
    with pytest.raises(DomainError):
        fip_audit([], shift8)


def test_evaluate_candidate_examples(shift8):
    res, sub = evaluate_candidate([0] + [1] * 7, shift8)
    assert res == 0
    assert sub.rank == 7 and sub.kernel_dim == 1 and sub.invariance_defect == 0
    assert np.array_equal(sub.P, np.diag([0] + [1] * 7))
    assert not sub.trivial

    res, sub = evaluate_candidate(np.zeros(8), shift8)
    assert res == 0 and sub.trivial and sub.rank == 0

    res, sub = evaluate_candidate(witness((1, 1), 8), shift8)
    assert res == 2**-5 * 0.5 == 1 / 64
    assert sub.invariance_defect == pytest.approx(1.0)


def test_residual_triangle_chain(rng):
    K = orthonormalize(*build(ZooSpec("random_ginibre", 10, params={"seed": 4})))
    H = K.H
    for _ in range(30):
        M = embed(rng.uniform(0, 1, 10))
        lhs = enorm(M @ H @ M - H @ M).value
        for k in range(1, 11):
            E = projection(k, 10)
            rhs = (
                enorm(M @ H @ M - M @ E @ H @ E @ M).value
                + enorm(M @ E @ H @ E @ M - H @ E @ M).value
                + enorm(H @ E @ M - H @ M).value
            )
            assert lhs <= rhs + 1e-12


def test_defect_bound_chain(shift8):
    P = FeasibilityProblem(shift8, diagonal_windows(8))
    rep = search(P, seed=1)
    assert rep.feasible
    M = embed(rep.point)
    H = shift8.H
    for k in range(1, 8):
        E = projection(k, 8)
        assert enorm(M @ E @ H @ E @ M - H @ E @ M).value <= compression_defect(shift8, k).value + P.tol


def test_kernel_range_duality(rng, shift8):
    for _ in range(20):
        a = rng.uniform(0, 1, 8) * (rng.uniform(size=8) > 0.3)
        _, sub = evaluate_candidate(a, shift8)
        assert sub.rank + sub.kernel_dim == 8
        M = embed(a)
        assert np.abs(sub.P @ M - M).max() <= 1e-12
        assert np.allclose(sub.P @ sub.P, sub.P) and np.allclose(sub.P.conj().T, sub.P)


def test_search_is_deterministic():
    K = orthonormalize(*build(ZooSpec("random_ginibre", 6, params={"seed": 11})))
    P = FeasibilityProblem(K, default_windows(6), budget=FAST)
    a = json.dumps(search(P, seed=42).to_json(), sort_keys=True)
    b = json.dumps(search(P, seed=42).to_json(), sort_keys=True)
    assert a == b


def test_bf_family_feasible_case(shift5):
    P = FeasibilityProblem(shift5, (Window(2, 2),), "BF", budget=FAST)
    rep = search(P, seed=0)
    g = grid_oracle(P, 0.1)
    assert rep.feasible and g.feasible
    assert abs(rep.point[1] - 0.5) <= 1e-10


def test_budget_validation(shift5):
    with pytest.raises(DomainError):
        FeasibilityProblem(shift5, (), budget=Budget(restarts=0))
    with pytest.raises(DomainError):
        FeasibilityProblem(shift5, (), family="XX")
    with pytest.raises(DomainError):
        FeasibilityProblem(shift5, ((1, 5),))
