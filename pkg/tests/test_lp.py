"""LP/QP solver certificates checked against independent oracles."""

import itertools

import numpy as np
import pytest

from ppsm.lp import (
    LinearProgram,
    LpSolution,
    Status,
    dual_objective,
    solve_lp,
    solve_qp,
    verify_kkt,
)


def test_single_active_bound():
    # min x s.t. x >= 3
    lp = LinearProgram.build([1.0], lb=[3.0])
    sol = solve_lp(lp)
    assert sol.status is Status.OPTIMAL
    assert sol.x[0] == pytest.approx(3.0, abs=1e-9)
    assert sol.objective == pytest.approx(3.0, abs=1e-9)
    assert sol.mu_lo[0] == pytest.approx(1.0, abs=1e-9)


def test_contradictory_bounds_infeasible():
    # min x s.t. x <= -1 and x >= 0
    lp = LinearProgram.build([1.0], a_ub=[[1.0]], b_ub=[-1.0], lb=[0.0])
    assert solve_lp(lp).status is Status.INFEASIBLE


def test_unbounded():
    lp = LinearProgram.build([-1.0], lb=[0.0])
    assert solve_lp(lp).status is Status.UNBOUNDED


def _vertex_enumeration_minimum(lp: LinearProgram) -> float:
    """Independent oracle: minimum over all basic feasible vertices.

    Stacks every constraint (eq rows, ub rows, finite bounds) and solves all
    n-subsets as equalities, keeping feasible solutions.
    """
    n = lp.n_vars
    rows = [(lp.a_eq[i], lp.b_eq[i]) for i in range(lp.a_eq.shape[0])]
    rows += [(lp.a_ub[i], lp.b_ub[i]) for i in range(lp.a_ub.shape[0])]
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        if np.isfinite(lp.lb[j]):
            rows.append((e.copy(), lp.lb[j]))
        if np.isfinite(lp.ub[j]):
            rows.append((e.copy(), lp.ub[j]))
    best = np.inf
    for subset in itertools.combinations(range(len(rows)), n):
        a = np.array([rows[i][0] for i in subset])
        b = np.array([rows[i][1] for i in subset])
        if abs(np.linalg.det(a)) < 1e-10:
            continue
        x = np.linalg.solve(a, b)
        ok = (
            np.all(np.abs(lp.a_eq @ x - lp.b_eq) <= 1e-8)
            and np.all(lp.a_ub @ x - lp.b_ub <= 1e-8)
            and np.all(x - lp.lb >= -1e-8)
            and np.all(lp.ub - x >= -1e-8)
        )
        if ok:
            best = min(best, float(lp.c @ x))
    return best


def _random_lp(rng, n=4, m=5) -> LinearProgram:
    c = rng.normal(size=n)
    a_ub = rng.normal(size=(m, n))
    # rhs keeps the box center feasible so most draws are feasible
    b_ub = a_ub @ np.zeros(n) + rng.uniform(0.5, 3.0, size=m)
    return LinearProgram.build(c, a_ub=a_ub, b_ub=b_ub, lb=-5 * np.ones(n), ub=5 * np.ones(n))


@pytest.mark.parametrize("seed", range(25))
def test_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(1000 + seed)
    lp = _random_lp(rng)
    sol = solve_lp(lp)
    assert sol.status is Status.OPTIMAL
    oracle = _vertex_enumeration_minimum(lp)
    assert sol.objective == pytest.approx(oracle, abs=1e-7)
    rep = verify_kkt(lp, sol)
    assert rep.max_residual() <= 1e-8


def test_strong_duality_and_complementarity():
    rng = np.random.default_rng(7)
    for _ in range(20):
        lp = _random_lp(rng)
        sol = solve_lp(lp)
        assert sol.status is Status.OPTIMAL
        gap = abs(sol.objective - dual_objective(lp, sol))
        assert gap <= 1e-8 * (1.0 + abs(sol.objective))
        slack = lp.b_ub - lp.a_ub @ sol.x
        assert np.all(np.abs(sol.lam_ub * slack) <= 1e-8 * (1.0 + np.abs(lp.b_ub)))


def test_broken_certificate_detected():
    lp = LinearProgram.build(
        [1.0, 1.0], a_ub=[[-1.0, -1.0]], b_ub=[-2.0], lb=[0.0, 0.0]
    )
    sol = solve_lp(lp)
    assert sol.lam_ub[0] > 0.1  # the row is active with nonzero dual
    broken = LpSolution(
        sol.status, sol.x, sol.objective,
        sol.y_eq, np.zeros_like(sol.lam_ub), sol.mu_lo, sol.mu_hi,
    )
    rep = verify_kkt(lp, broken)
    assert rep.stationarity > 1e-3


def test_determinism():
    rng = np.random.default_rng(3)
    lp = _random_lp(rng)
    a = solve_lp(lp)
    b = solve_lp(lp)
    assert np.array_equal(a.x, b.x)
    assert a.objective == b.objective
    assert np.array_equal(a.lam_ub, b.lam_ub)


def test_qp_projection_matches_hand_solution():
    # min ||x - (2, -1)||^2 over the box [0,1]^2: solution (1, 0)
    lp = LinearProgram.build([-4.0, 2.0], lb=[0.0, 0.0], ub=[1.0, 1.0])
    sol = solve_qp(lp, [2.0, 2.0])
    assert sol.status is Status.OPTIMAL
    np.testing.assert_allclose(sol.x, [1.0, 0.0], atol=1e-7)
    rep = verify_kkt(lp, sol, np.array([2.0, 2.0]))
    assert rep.max_residual() <= 1e-7


def test_qp_equality_constrained():
    # min ||x||^2 s.t. x0 + x1 = 2: solution (1, 1), price = 2 since dObj/db = 2b/2
    lp = LinearProgram.build([0.0, 0.0], a_eq=[[1.0, 1.0]], b_eq=[2.0])
    sol = solve_qp(lp, [2.0, 2.0])
    np.testing.assert_allclose(sol.x, [1.0, 1.0], atol=1e-7)
    assert sol.y_eq[0] == pytest.approx(2.0, abs=1e-6)


def test_qp_infeasible_detected():
    lp = LinearProgram.build([0.0], a_ub=[[1.0]], b_ub=[-1.0], lb=[0.0])
    assert solve_qp(lp, [2.0]).status is Status.INFEASIBLE


def test_malformed_program_rejected():
    with pytest.raises(ValueError):
        LinearProgram.build([1.0, 2.0], a_ub=[[1.0]], b_ub=[0.0])
    with pytest.raises(ValueError):
        LinearProgram.build([1.0], lb=[2.0], ub=[1.0])
