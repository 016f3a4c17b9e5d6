"""Exact linear and convex-quadratic programming with dual certificates.

All follower solves go through :func:`solve_lp`, which returns primal and
dual vectors in one fixed sign convention:

    minimize    c.x  (+ 0.5 x.diag(q).x for QPs)
    subject to  a_eq x  = b_eq     multipliers y_eq   (free)
                a_ub x <= b_ub     multipliers lam_ub (>= 0)
                lb <= x <= ub      multipliers mu_lo, mu_hi (>= 0)

``y_eq`` equals the sensitivity of the optimal value to ``b_eq`` (shadow
price), so the gas-balance duals read off as market prices directly.

LP solves are delegated to HiGHS (via scipy); QP solves to Clarabel. Both
are wrapped behind this module's contract and every optimal solution is
re-checked by :func:`verify_kkt`, an independent numpy evaluation of the
KKT residuals.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

import clarabel

FEAS_TOL = 1e-8
DUALITY_TOL = 1e-8

_INF = np.inf


class NumericalFailure(RuntimeError):
    """Solver could not produce a certified solution on this instance."""


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


def _as_matrix(a, n_cols: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, n_cols))
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != n_cols:
        raise ValueError(f"constraint matrix shape {arr.shape} incompatible with {n_cols} variables")
    return arr


def _as_vector(b, n: int, default=None) -> np.ndarray:
    if b is None:
        if default is None:
            return np.zeros(n)
        return np.full(n, default, dtype=float)
    arr = np.asarray(b, dtype=float).reshape(-1)
    if arr.size != n:
        raise ValueError(f"vector length {arr.size}, expected {n}")
    return arr


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True)
class LinearProgram:
    """Standard-form LP data. Unbounded variables use +/- inf sentinels."""

    c: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        n = self.c.size
        if self.a_eq.shape[0] != self.b_eq.size or self.a_ub.shape[0] != self.b_ub.size:
            raise ValueError("row counts do not match rhs lengths")
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bound lengths do not match variable count")
        if np.any(self.lb > self.ub):
            raise ValueError("lb > ub for some variable")
        _freeze(self.c, self.a_eq, self.b_eq, self.a_ub, self.b_ub, self.lb, self.ub)

    @classmethod
    def build(cls, c, a_eq=None, b_eq=None, a_ub=None, b_ub=None, lb=None, ub=None) -> "LinearProgram":
        c = np.asarray(c, dtype=float).reshape(-1).copy()
        n = c.size
        a_eq = _as_matrix(a_eq, n).copy()
        a_ub = _as_matrix(a_ub, n).copy()
        return cls(
            c=c,
            a_eq=a_eq,
            b_eq=_as_vector(b_eq, a_eq.shape[0]).copy(),
            a_ub=a_ub,
            b_ub=_as_vector(b_ub, a_ub.shape[0]).copy(),
            lb=_as_vector(lb, n, default=-_INF).copy(),
            ub=_as_vector(ub, n, default=_INF).copy(),
        )

    @property
    def n_vars(self) -> int:
        return self.c.size

    def with_bounds(self, lb, ub) -> "LinearProgram":
        return LinearProgram.build(self.c, self.a_eq, self.b_eq, self.a_ub, self.b_ub, lb, ub)


@dataclass(frozen=True)
class LpSolution:
    """Primal/dual certificate of one solve. Dual arrays are empty unless Optimal."""

    status: Status
    x: np.ndarray
    objective: float
    y_eq: np.ndarray
    lam_ub: np.ndarray
    mu_lo: np.ndarray
    mu_hi: np.ndarray


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    primal_feasibility: float
    dual_feasibility: float
    complementarity: float

    def max_residual(self) -> float:
        return max(self.stationarity, self.primal_feasibility, self.dual_feasibility, self.complementarity)


_cert_checked = 0
_cert_failed = 0


def certification_stats() -> tuple[int, int]:
    """(number of certified solves, number of certificate failures) in this process."""
    return _cert_checked, _cert_failed


def verify_kkt(lp: LinearProgram, sol: LpSolution, q_diag: np.ndarray | None = None) -> KktReport:
    """Independent KKT residual evaluation; all four residuals are relative-scaled."""
    if sol.status is not Status.OPTIMAL:
        raise ValueError("verify_kkt needs an Optimal solution")
    x = sol.x
    grad = lp.c.copy()
    if q_diag is not None:
        grad = grad + q_diag * x
    res = grad
    if lp.a_eq.shape[0]:
        res = res - lp.a_eq.T @ sol.y_eq
    if lp.a_ub.shape[0]:
        res = res + lp.a_ub.T @ sol.lam_ub
    res = res - sol.mu_lo + sol.mu_hi
    stationarity = float(np.max(np.abs(res) / (1.0 + np.abs(grad)))) if res.size else 0.0

    primal = 0.0
    if lp.a_eq.shape[0]:
        primal = max(primal, float(np.max(np.abs(lp.a_eq @ x - lp.b_eq) / (1.0 + np.abs(lp.b_eq)))))
    if lp.a_ub.shape[0]:
        viol = (lp.a_ub @ x - lp.b_ub) / (1.0 + np.abs(lp.b_ub))
        primal = max(primal, float(np.max(viol)), 0.0)
    lo_fin = np.isfinite(lp.lb)
    hi_fin = np.isfinite(lp.ub)
    if lo_fin.any():
        primal = max(primal, float(np.max((lp.lb[lo_fin] - x[lo_fin]) / (1.0 + np.abs(lp.lb[lo_fin])))))
    if hi_fin.any():
        primal = max(primal, float(np.max((x[hi_fin] - lp.ub[hi_fin]) / (1.0 + np.abs(lp.ub[hi_fin])))))
    primal = max(primal, 0.0)

    dual = 0.0
    for arr in (sol.lam_ub, sol.mu_lo, sol.mu_hi):
        if arr.size:
            dual = max(dual, float(np.max(-arr)))
    dual = max(dual, 0.0)

    comp = 0.0
    if lp.a_ub.shape[0]:
        slack = lp.b_ub - lp.a_ub @ x
        comp = max(comp, float(np.max(np.abs(sol.lam_ub * slack) / (1.0 + np.abs(lp.b_ub)))))
    if lo_fin.any():
        gap = (x - lp.lb)[lo_fin]
        comp = max(comp, float(np.max(np.abs(sol.mu_lo[lo_fin] * gap) / (1.0 + np.abs(lp.lb[lo_fin])))))
    if hi_fin.any():
        gap = (lp.ub - x)[hi_fin]
        comp = max(comp, float(np.max(np.abs(sol.mu_hi[hi_fin] * gap) / (1.0 + np.abs(lp.ub[hi_fin])))))

    return KktReport(stationarity, primal, dual, comp)


def dual_objective(lp: LinearProgram, sol: LpSolution) -> float:
    val = 0.0
    if lp.b_eq.size:
        val += float(lp.b_eq @ sol.y_eq)
    if lp.b_ub.size:
        val -= float(lp.b_ub @ sol.lam_ub)
    lo_fin = np.isfinite(lp.lb)
    hi_fin = np.isfinite(lp.ub)
    if lo_fin.any():
        val += float(lp.lb[lo_fin] @ sol.mu_lo[lo_fin])
    if hi_fin.any():
        val -= float(lp.ub[hi_fin] @ sol.mu_hi[hi_fin])
    return val


def _certify(lp: LinearProgram, sol: LpSolution, q_diag=None, feas_tol=FEAS_TOL, duality_tol=DUALITY_TOL) -> None:
    global _cert_checked, _cert_failed
    _cert_checked += 1
    rep = verify_kkt(lp, sol, q_diag)
    gap_ok = True
    if q_diag is None:
        gap = abs(sol.objective - dual_objective(lp, sol))
        gap_ok = gap <= duality_tol * (1.0 + abs(sol.objective))
    if rep.max_residual() > feas_tol or not gap_ok:
        _cert_failed += 1
        raise NumericalFailure(
            f"certificate check failed: residuals={rep}, duality_gap_ok={gap_ok}"
        )


def solve_lp(lp: LinearProgram, *, feas_tol: float = FEAS_TOL, duality_tol: float = DUALITY_TOL,
             certify: bool = True) -> LpSolution:
    """Solve an LP to optimality with dual extraction.

    Returns a status-correct LpSolution; raises NumericalFailure when the
    backend cannot certify the result.
    """
    n = lp.n_vars
    bounds = [(lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None)
              for lo, hi in zip(lp.lb, lp.ub)]
    res = linprog(
        lp.c,
        A_ub=lp.a_ub if lp.a_ub.shape[0] else None,
        b_ub=lp.b_ub if lp.b_ub.size else None,
        A_eq=lp.a_eq if lp.a_eq.shape[0] else None,
        b_eq=lp.b_eq if lp.b_eq.size else None,
        bounds=bounds,
        method="highs",
        options={
            "presolve": True,
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
    )
    if res.status == 2:
        return LpSolution(Status.INFEASIBLE, np.zeros(n), np.nan,
                          np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))
    if res.status == 3:
        return LpSolution(Status.UNBOUNDED, np.zeros(n), -np.inf,
                          np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))
    if res.status != 0:
        raise NumericalFailure(f"HiGHS status {res.status}: {res.message}")

    y_eq = np.asarray(res.eqlin.marginals, dtype=float) if lp.a_eq.shape[0] else np.zeros(0)
    lam_ub = -np.asarray(res.ineqlin.marginals, dtype=float) if lp.a_ub.shape[0] else np.zeros(0)
    mu_lo = np.asarray(res.lower.marginals, dtype=float)
    mu_hi = -np.asarray(res.upper.marginals, dtype=float)
    # clip away negative dust so dual-sign invariants hold exactly
    lam_ub = np.maximum(lam_ub, 0.0)
    mu_lo = np.maximum(mu_lo, 0.0)
    mu_hi = np.maximum(mu_hi, 0.0)
    sol = LpSolution(Status.OPTIMAL, np.asarray(res.x, dtype=float), float(res.fun),
                     y_eq, lam_ub, mu_lo, mu_hi)
    if certify:
        _certify(lp, sol, None, feas_tol, duality_tol)
    return sol


def solve_qp(lp: LinearProgram, q_diag: np.ndarray, *, feas_tol: float = 1e-7,
             certify: bool = True) -> LpSolution:
    """Solve min c.x + 0.5 x.diag(q).x over the LP feasible set (q >= 0).

    Same contract and dual conventions as solve_lp.
    """
    q_diag = np.asarray(q_diag, dtype=float).reshape(-1)
    n = lp.n_vars
    if q_diag.size != n:
        raise ValueError("q_diag length mismatch")
    if np.any(q_diag < 0):
        raise ValueError("quadratic term must be PSD (q_diag >= 0)")

    rows = []
    rhs = []
    n_eq = lp.a_eq.shape[0]
    if n_eq:
        rows.append(sparse.csc_matrix(lp.a_eq))
        rhs.append(lp.b_eq)
    n_ub = lp.a_ub.shape[0]
    if n_ub:
        rows.append(sparse.csc_matrix(lp.a_ub))
        rhs.append(lp.b_ub)
    hi_idx = np.flatnonzero(np.isfinite(lp.ub))
    lo_idx = np.flatnonzero(np.isfinite(lp.lb))
    if hi_idx.size:
        e = sparse.csc_matrix((np.ones(hi_idx.size), (np.arange(hi_idx.size), hi_idx)),
                              shape=(hi_idx.size, n))
        rows.append(e)
        rhs.append(lp.ub[hi_idx])
    if lo_idx.size:
        e = sparse.csc_matrix((-np.ones(lo_idx.size), (np.arange(lo_idx.size), lo_idx)),
                              shape=(lo_idx.size, n))
        rows.append(e)
        rhs.append(-lp.lb[lo_idx])
    n_cone = n_ub + hi_idx.size + lo_idx.size
    if rows:
        a = sparse.vstack(rows).tocsc()
        b = np.concatenate(rhs)
    else:
        a = sparse.csc_matrix((0, n))
        b = np.zeros(0)
    cones = []
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))
    if n_cone:
        cones.append(clarabel.NonnegativeConeT(n_cone))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = 1e-10
    settings.tol_gap_rel = 1e-10
    settings.tol_feas = 1e-10
    solver = clarabel.DefaultSolver(sparse.diags(q_diag).tocsc(), lp.c, a, b, cones, settings)
    out = solver.solve()
    name = str(out.status)

    if name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return LpSolution(Status.INFEASIBLE, np.zeros(n), np.nan,
                          np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))
    if name in ("DualInfeasible", "AlmostDualInfeasible"):
        return LpSolution(Status.UNBOUNDED, np.zeros(n), -np.inf,
                          np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))
    if name not in ("Solved", "AlmostSolved"):
        raise NumericalFailure(f"clarabel status {name}")

    x = np.asarray(out.x, dtype=float)
    z = np.asarray(out.z, dtype=float)
    pos = 0
    y_eq = -z[pos:pos + n_eq]
    pos += n_eq
    lam_ub = np.maximum(z[pos:pos + n_ub], 0.0)
    pos += n_ub
    mu_hi = np.zeros(n)
    mu_hi[hi_idx] = np.maximum(z[pos:pos + hi_idx.size], 0.0)
    pos += hi_idx.size
    mu_lo = np.zeros(n)
    mu_lo[lo_idx] = np.maximum(z[pos:pos + lo_idx.size], 0.0)

    obj = float(lp.c @ x + 0.5 * (q_diag * x) @ x)
    sol = LpSolution(Status.OPTIMAL, x, obj, y_eq, lam_ub, mu_lo, mu_hi)
    if certify:
        _certify(lp, sol, q_diag, feas_tol, duality_tol=np.inf)
    return sol
