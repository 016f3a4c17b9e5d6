"""Branch-and-bound over binary variables with pluggable convex node solver.

Deterministic by construction: best-bound node selection with an insertion
counter as tie-breaker, branching always on the lowest-index unfixed binary
whose relaxation value is fractional.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass

import numpy as np

from .lp import LinearProgram, LpSolution, Status, solve_lp, solve_qp

INT_TOL = 1e-7
PRUNE_TOL = 1e-9


class NodeLimitExceeded(RuntimeError):
    """Search budget exhausted before proving optimality (recorded as timeout)."""


@dataclass(frozen=True)
class MixedBinaryProgram:
    """An LP, optionally with a separable PSD quadratic term, plus binary indices.

    Objective: c.x + 0.5 x.diag(q_diag).x + obj_const.
    """

    lp: LinearProgram
    binary_idx: np.ndarray
    q_diag: np.ndarray | None = None
    obj_const: float = 0.0

    def __post_init__(self):
        idx = np.asarray(self.binary_idx, dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= self.lp.n_vars):
            raise ValueError("binary index out of range")
        if idx.size != np.unique(idx).size:
            raise ValueError("duplicate binary indices")
        object.__setattr__(self, "binary_idx", idx)
        if self.q_diag is not None:
            q = np.asarray(self.q_diag, dtype=float)
            if q.size != self.lp.n_vars:
                raise ValueError("q_diag length mismatch")
            if np.any(q < 0):
                raise ValueError("quadratic term must be PSD")
            object.__setattr__(self, "q_diag", q)

    @property
    def is_quadratic(self) -> bool:
        return self.q_diag is not None and bool(np.any(self.q_diag > 0))


@dataclass(frozen=True)
class MbpSolution:
    status: Status
    x: np.ndarray
    objective: float
    nodes: int


def default_node_solver(p: MixedBinaryProgram):
    # node certificates only screen for solver failure; callers of solve_mbp
    # re-certify the final answer at their own tolerance
    if p.is_quadratic:
        return lambda lp: solve_qp(lp, p.q_diag, feas_tol=2e-6)
    return solve_lp


def _node_bounds(p: MixedBinaryProgram, fixes: dict[int, int]):
    lb = p.lp.lb.copy()
    ub = p.lp.ub.copy()
    for j in p.binary_idx:
        lb[j] = max(lb[j], 0.0)
        ub[j] = min(ub[j], 1.0)
    for j, v in fixes.items():
        lb[j] = float(v)
        ub[j] = float(v)
    return lb, ub


def solve_mbp(p: MixedBinaryProgram, node_solver=None, *, node_limit: int = 200_000,
              time_limit: float | None = None, opt_tol: float = PRUNE_TOL,
              incumbent: tuple[np.ndarray, float] | None = None) -> MbpSolution:
    """Global optimum of a mixed-binary convex program by branch and bound.

    ``incumbent`` optionally provides a known feasible (x, objective) pair
    used for pruning from the start; the caller vouches for its feasibility.
    Raises NodeLimitExceeded when either budget runs out before the
    incumbent is proved optimal.
    """
    if node_solver is None:
        node_solver = default_node_solver(p)
    bin_idx = p.binary_idx
    t0 = time.monotonic()

    best_obj = np.inf
    best_x = None
    if incumbent is not None:
        best_x = np.asarray(incumbent[0], dtype=float).copy()
        best_obj = float(incumbent[1]) - p.obj_const
    nodes = 0
    counter = 0
    # heap entries: (bound, counter, fixes)
    heap = [(-np.inf, counter, {})]

    while heap:
        bound, _, fixes = heapq.heappop(heap)
        if bound >= best_obj - opt_tol:
            continue
        nodes += 1
        if nodes > node_limit:
            raise NodeLimitExceeded(f"node limit {node_limit} hit")
        if time_limit is not None and time.monotonic() - t0 > time_limit:
            raise NodeLimitExceeded(f"time limit {time_limit}s hit")

        lb, ub = _node_bounds(p, fixes)
        sol = node_solver(p.lp.with_bounds(lb, ub))
        if sol.status is Status.INFEASIBLE:
            continue
        if sol.status is Status.UNBOUNDED:
            unfixed = [j for j in bin_idx if j not in fixes]
            if not unfixed:
                return MbpSolution(Status.UNBOUNDED, np.zeros(p.lp.n_vars), -np.inf, nodes)
            # unbounded relaxation proves nothing until binaries are pinned
            for v in (0, 1):
                counter += 1
                child = dict(fixes)
                child[unfixed[0]] = v
                heapq.heappush(heap, (bound, counter, child))
            continue
        if sol.objective >= best_obj - opt_tol:
            continue

        frac = [j for j in bin_idx
                if j not in fixes and abs(sol.x[j] - round(sol.x[j])) > INT_TOL]
        if not frac:
            # integral relaxation: its value is exact for the implied pattern
            if sol.objective < best_obj:
                best_obj = sol.objective
                best_x = sol.x.copy()
                for j in bin_idx:
                    best_x[j] = round(best_x[j])
            continue
        j = frac[0]
        for v in (0, 1):
            counter += 1
            child = dict(fixes)
            child[j] = v
            heapq.heappush(heap, (sol.objective, counter, child))

    if best_x is None:
        return MbpSolution(Status.INFEASIBLE, np.zeros(p.lp.n_vars), np.nan, nodes)

    # polish: re-solve with the winning pattern fixed so the reported point
    # satisfies the node solver's KKT tolerances exactly
    fixes = {int(j): int(round(best_x[j])) for j in bin_idx}
    lb, ub = _node_bounds(p, fixes)
    polished = node_solver(p.lp.with_bounds(lb, ub))
    if polished.status is Status.OPTIMAL and polished.objective <= best_obj + 1e-9:
        best_x = polished.x.copy()
        for j in bin_idx:
            best_x[j] = round(best_x[j])
        best_obj = polished.objective
    return MbpSolution(Status.OPTIMAL, best_x, best_obj + p.obj_const, nodes)


def enumerate_mbp(p: MixedBinaryProgram, node_solver=None) -> MbpSolution:
    """Brute-force reference: try every binary assignment (<= 16 binaries)."""
    if p.binary_idx.size > 16:
        raise ValueError("enumeration capped at 16 binaries")
    if node_solver is None:
        node_solver = default_node_solver(p)
    best_obj = np.inf
    best_x = None
    n_solved = 0
    for mask in range(1 << p.binary_idx.size):
        fixes = {int(j): (mask >> k) & 1 for k, j in enumerate(p.binary_idx)}
        lb, ub = _node_bounds(p, fixes)
        if np.any(lb > ub):
            continue
        sol = node_solver(p.lp.with_bounds(lb, ub))
        n_solved += 1
        if sol.status is Status.UNBOUNDED:
            return MbpSolution(Status.UNBOUNDED, np.zeros(p.lp.n_vars), -np.inf, n_solved)
        if sol.status is Status.OPTIMAL and sol.objective < best_obj:
            best_obj = sol.objective
            best_x = sol.x.copy()
            for j in p.binary_idx:
                best_x[j] = round(best_x[j])
    if best_x is None:
        return MbpSolution(Status.INFEASIBLE, np.zeros(p.lp.n_vars), np.nan, n_solved)
    return MbpSolution(Status.OPTIMAL, best_x, best_obj + p.obj_const, n_solved)
