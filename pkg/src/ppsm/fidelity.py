"""Fidelity restoration: project the noisy release onto demands that keep
the follower problem solvable near the estimated objective and prices.

The restored vector solves

    min  || d_hat - d_noisy ||^2
    s.t. | O(d_hat) - O_est |        <= eta_p        (objective band)
         | y(d_hat) - y_est |        <= eta_d        (price band, full variant)
         (x_hat, y_hat) optimal for the follower LP at d_hat

Optimality of the lower level is embedded through its KKT conditions; the
complementarity products are switched by binaries via big-M rows, giving a
mixed-integer convex QP solved exactly by branch and bound. A pattern
enumeration oracle (no big-M, no search) cross-checks small instances.

Stacked variable layout everywhere in this module:

    [ d (n_d) | x (n) | y (m_eq) | lam (m_ub) | mu_lo (n_lo) | mu_hi (n_hi) | z (K) ]

Complementarity pairs are ordered: ub rows, then finite lower bounds, then
finite upper bounds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .bnb import MixedBinaryProgram, NodeLimitExceeded, _node_bounds, solve_mbp
from .lp import LinearProgram, LpSolution, NumericalFailure, Status, solve_lp, solve_qp, verify_kkt
from .markets import EmCache, PublicMarketData
from .predictors import FollowerEstimates
from .privacy import ObfuscatedDemand


class Variant(enum.Enum):
    LAPLACE = "laplace"
    PPSM_P = "ppsm_p"     # objective band only
    PPSM = "ppsm"         # objective and price bands


class TooLarge(ValueError):
    """Pattern enumeration requested above its pair cap."""


class BigMSaturated(RuntimeError):
    """A returned dual or slack sits at its big-M cap: bound was too tight."""


@dataclass(frozen=True)
class FidelityProblem:
    """Inputs of one restoration solve. ``lower`` is the follower LP with the
    demand contribution removed from its rhs; ``s_eq``/``s_ub`` inject the
    demand variable back (rhs_effective = b + S d)."""

    lower: LinearProgram
    s_eq: np.ndarray
    s_ub: np.ndarray
    obf: ObfuscatedDemand
    x_uc_fixed: np.ndarray
    estimates: FollowerEstimates
    eta_p: float
    eta_d: float
    variant: Variant
    d_lb: np.ndarray | None = None
    d_ub: np.ndarray | None = None

    def __post_init__(self):
        if self.eta_p < 0 or self.eta_d < 0:
            raise ValueError("fidelity half-widths must be >= 0")
        if self.s_eq.shape[0] != self.lower.a_eq.shape[0]:
            raise ValueError("s_eq row count mismatch")
        if self.s_ub.shape[0] != self.lower.a_ub.shape[0]:
            raise ValueError("s_ub row count mismatch")
        if self.s_eq.shape[1] != self.n_demand or self.s_ub.shape[1] != self.n_demand:
            raise ValueError("demand column mismatch")

    @property
    def n_demand(self) -> int:
        return self.obf.values.size


def make_fidelity_problem(pub: PublicMarketData, x_uc: np.ndarray, obf: ObfuscatedDemand,
                          estimates: FollowerEstimates, eta_p: float, eta_d: float,
                          variant: Variant, em_cache: EmCache | None = None) -> FidelityProblem:
    """Bind the gas clearing at the fixed commitment as the lower level.

    The electricity dispatch is a deterministic public function of the
    commitment, so the demand is the only free rhs input left.
    """
    em = (em_cache or EmCache(pub)).solve(np.asarray(x_uc, dtype=float))
    if em.status is not Status.OPTIMAL:
        raise ValueError("commitment does not clear the electricity market")
    lower = pub.gm_lp(em.x, np.zeros(pub.n_prices))
    n_d = pub.n_prices
    return FidelityProblem(
        lower=lower,
        s_eq=np.eye(n_d),
        s_ub=np.zeros((0, n_d)),
        obf=obf,
        x_uc_fixed=np.asarray(x_uc, dtype=float),
        estimates=estimates,
        eta_p=eta_p,
        eta_d=eta_d,
        variant=variant,
    )


# ---------------------------------------------------------------------------
# KKT embedding


@dataclass(frozen=True)
class ComplementarityPair:
    """One (slack, dual) product. kind is 'row', 'lo' or 'hi'; index points
    into ub rows or variables; dual_col into the stacked vector."""

    kind: str
    index: int
    dual_col: int


@dataclass(frozen=True)
class KktSystem:
    """Constraint system over (d, x, y, lam, mu_lo, mu_hi) whose solutions are
    exactly the (demand, primal-optimal, dual-optimal) triples of ``lower``."""

    lower: LinearProgram
    s_eq: np.ndarray
    s_ub: np.ndarray
    n_d: int
    lo_idx: np.ndarray
    hi_idx: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    pairs: tuple[ComplementarityPair, ...]

    @property
    def off_x(self) -> int:
        return self.n_d

    @property
    def off_y(self) -> int:
        return self.n_d + self.lower.n_vars

    @property
    def off_lam(self) -> int:
        return self.off_y + self.lower.a_eq.shape[0]

    @property
    def off_mu_lo(self) -> int:
        return self.off_lam + self.lower.a_ub.shape[0]

    @property
    def off_mu_hi(self) -> int:
        return self.off_mu_lo + self.lo_idx.size

    @property
    def n_total(self) -> int:
        return self.off_mu_hi + self.hi_idx.size


def build_kkt(lower: LinearProgram, s_eq: np.ndarray | None = None,
              s_ub: np.ndarray | None = None, n_demand: int | None = None) -> KktSystem:
    """Stationarity, primal feasibility, dual signs and the complementarity
    pair list for ``lower`` with a linear demand term in the rhs."""
    n = lower.n_vars
    m_eq = lower.a_eq.shape[0]
    m_ub = lower.a_ub.shape[0]
    if s_eq is None and s_ub is None:
        if n_demand is None:
            raise ValueError("give s_eq/s_ub or n_demand")
        s_eq = np.zeros((m_eq, n_demand))
        s_ub = np.zeros((m_ub, n_demand))
    s_eq = np.zeros((m_eq, 0)) if s_eq is None else np.asarray(s_eq, dtype=float)
    s_ub = np.zeros((m_ub, s_eq.shape[1])) if s_ub is None else np.asarray(s_ub, dtype=float)
    n_d = s_eq.shape[1]
    lo_idx = np.flatnonzero(np.isfinite(lower.lb))
    hi_idx = np.flatnonzero(np.isfinite(lower.ub))
    n_lo, n_hi = lo_idx.size, hi_idx.size
    n_total = n_d + n + m_eq + m_ub + n_lo + n_hi
    off_x = n_d
    off_y = off_x + n
    off_lam = off_y + m_eq
    off_lo = off_lam + m_ub
    off_hi = off_lo + n_lo

    # equalities: primal eq rows (a_eq x - s_eq d = b_eq), then stationarity
    # (-a_eq' y + a_ub' lam - mu_lo + mu_hi = -c)
    a_eq = np.zeros((m_eq + n, n_total))
    b_eq = np.zeros(m_eq + n)
    if m_eq:
        a_eq[:m_eq, off_x:off_y] = lower.a_eq
        a_eq[:m_eq, :n_d] = -s_eq
        b_eq[:m_eq] = lower.b_eq
    st = a_eq[m_eq:]
    if m_eq:
        st[:, off_y:off_lam] = -lower.a_eq.T
    if m_ub:
        st[:, off_lam:off_lo] = lower.a_ub.T
    st[lo_idx, off_lo + np.arange(n_lo)] = -1.0
    st[hi_idx, off_hi + np.arange(n_hi)] = +1.0
    b_eq[m_eq:] = -lower.c

    # inequalities: primal ub rows with demand moved to the LHS
    a_ub = np.zeros((m_ub, n_total))
    b_ub = np.zeros(m_ub)
    if m_ub:
        a_ub[:, off_x:off_y] = lower.a_ub
        a_ub[:, :n_d] = -s_ub
        b_ub[:] = lower.b_ub

    lb = np.full(n_total, -np.inf)
    ub = np.full(n_total, np.inf)
    lb[off_x:off_y] = lower.lb
    ub[off_x:off_y] = lower.ub
    lb[off_lam:off_lo] = 0.0
    lb[off_lo:off_hi] = 0.0
    lb[off_hi:] = 0.0

    pairs = []
    for i in range(m_ub):
        pairs.append(ComplementarityPair("row", i, off_lam + i))
    for k, j in enumerate(lo_idx):
        pairs.append(ComplementarityPair("lo", int(j), off_lo + k))
    for k, j in enumerate(hi_idx):
        pairs.append(ComplementarityPair("hi", int(j), off_hi + k))

    return KktSystem(lower=lower, s_eq=s_eq, s_ub=s_ub, n_d=n_d,
                     lo_idx=lo_idx, hi_idx=hi_idx,
                     a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub,
                     lb=lb, ub=ub, pairs=tuple(pairs))


def _pair_slack_row(kkt: KktSystem, pair: ComplementarityPair):
    """Coefficients (over the stacked vector, z excluded) and constant of the
    pair's slack expression, slack = const - coeff . v >= 0."""
    n_total = kkt.n_total
    coeff = np.zeros(n_total)
    if pair.kind == "row":
        coeff[kkt.off_x:kkt.off_y] = kkt.lower.a_ub[pair.index]
        coeff[:kkt.n_d] = -kkt.s_ub[pair.index]
        const = kkt.lower.b_ub[pair.index]
    elif pair.kind == "lo":
        coeff[kkt.off_x + pair.index] = -1.0
        const = -kkt.lower.lb[pair.index]
    else:
        coeff[kkt.off_x + pair.index] = 1.0
        const = kkt.lower.ub[pair.index]
    return coeff, const


def big_m_linearize(kkt: KktSystem, m_primal: np.ndarray, m_dual: np.ndarray,
                    target: np.ndarray, obj_scale: float = 1.0) -> MixedBinaryProgram:
    """Switch each complementarity pair by a binary: slack <= M_p (1-z) and
    dual <= M_d z, with the squared distance to ``target`` as objective.

    ``obj_scale`` divides the distance (in each coordinate) so node solves
    work near unit magnitude; minimizers are unaffected.
    """
    m_primal = np.broadcast_to(np.asarray(m_primal, dtype=float), (len(kkt.pairs),))
    m_dual = np.broadcast_to(np.asarray(m_dual, dtype=float), (len(kkt.pairs),))
    if np.any(m_primal <= 0) or np.any(m_dual <= 0):
        raise ValueError("big-M vectors must be positive")
    target = np.asarray(target, dtype=float).reshape(-1)
    if target.size != kkt.n_d:
        raise ValueError("target length mismatch")
    k = len(kkt.pairs)
    n_base = kkt.n_total
    n_all = n_base + k

    def widen(m):
        out = np.zeros((m.shape[0], n_all))
        out[:, :n_base] = m
        return out

    a_eq = widen(kkt.a_eq)
    rows = [widen(kkt.a_ub)]
    rhs = [kkt.b_ub]
    for t, pair in enumerate(kkt.pairs):
        coeff, const = _pair_slack_row(kkt, pair)
        # slack <= M_p (1 - z):  -coeff.v + M_p z <= M_p - const
        row = np.zeros(n_all)
        row[:n_base] = -coeff
        row[n_base + t] = m_primal[t]
        rows.append(row.reshape(1, -1))
        rhs.append(np.array([m_primal[t] - const]))
        # dual <= M_d z
        row = np.zeros(n_all)
        row[pair.dual_col] = 1.0
        row[n_base + t] = -m_dual[t]
        rows.append(row.reshape(1, -1))
        rhs.append(np.array([0.0]))

    lb = np.concatenate([kkt.lb, np.zeros(k)])
    ub = np.concatenate([kkt.ub, np.ones(k)])
    s2 = float(obj_scale) ** 2
    c = np.zeros(n_all)
    c[:kkt.n_d] = -2.0 * target / s2
    q = np.zeros(n_all)
    q[:kkt.n_d] = 2.0 / s2
    lp = LinearProgram.build(c, a_eq=a_eq, b_eq=kkt.b_eq,
                             a_ub=np.vstack(rows), b_ub=np.concatenate(rhs),
                             lb=lb, ub=ub)
    return MixedBinaryProgram(lp, n_base + np.arange(k), q_diag=q,
                              obj_const=float(target @ target) / s2)


@dataclass(frozen=True)
class FidelityResult:
    status: Status | str          # Status.* or "timeout"
    d_hat: np.ndarray
    follower_primal: np.ndarray
    follower_duals: np.ndarray    # balance-row duals (gas prices)
    distance: float               # || d_hat - d_noisy ||_2^2
    residuals: float              # max violation of the band/KKT conditions
    nodes: int = 0


@dataclass(frozen=True)
class FidelitySolveConfig:
    node_limit: int = 100_000
    time_limit: float | None = 60.0
    max_escalations: int = 3
    feas_tol: float = 1e-6
    opt_tol: float = 1e-9      # on the scale-normalized distance objective
    m_dual_factor: float = 10.0
    m_primal_factor: float = 10.0


def _demand_magnitude(fp: FidelityProblem) -> float:
    mags = [np.max(np.abs(fp.obf.values)) if fp.obf.values.size else 1.0]
    if fp.d_ub is not None:
        mags.append(np.max(np.abs(fp.d_ub)))
    if fp.d_lb is not None:
        mags.append(np.max(np.abs(fp.d_lb)))
    return float(max(mags))


def _initial_big_m(fp: FidelityProblem, kkt: KktSystem, cfg: FidelitySolveConfig):
    m_dual = cfg.m_dual_factor * max(1.0, float(np.max(np.abs(kkt.lower.c))))
    d_mag = _demand_magnitude(fp)
    m_primal = np.zeros(len(kkt.pairs))
    box = np.maximum(np.abs(kkt.lower.lb), np.abs(kkt.lower.ub))
    box = np.where(np.isfinite(box), box, 0.0)
    for t, pair in enumerate(kkt.pairs):
        if pair.kind == "row":
            i = pair.index
            reach = float(np.abs(kkt.lower.a_ub[i]) @ box + np.abs(kkt.s_ub[i]).sum() * d_mag)
            m_primal[t] = cfg.m_primal_factor * (1.0 + abs(kkt.lower.b_ub[i]) + reach)
        else:
            j = pair.index
            width = kkt.lower.ub[j] - kkt.lower.lb[j]
            if not np.isfinite(width):
                width = 1.0 + 2.0 * box[j]
            m_primal[t] = cfg.m_primal_factor * max(width, 1.0)
    return m_primal, np.full(len(kkt.pairs), m_dual)


def _band_rows(fp: FidelityProblem, kkt: KktSystem, n_all: int):
    """Extra inequality rows enforcing |c.x - O_est| <= eta_p."""
    c = kkt.lower.c
    row = np.zeros(n_all)
    row[kkt.off_x:kkt.off_y] = c
    o = fp.estimates.objective_estimate
    rows = np.vstack([row, -row])
    rhs = np.array([o + fp.eta_p, -(o - fp.eta_p)])
    return rows, rhs


def _apply_bands(fp: FidelityProblem, kkt: KktSystem, mbp: MixedBinaryProgram) -> MixedBinaryProgram:
    lp = mbp.lp
    n_all = lp.n_vars
    rows, rhs = _band_rows(fp, kkt, n_all)
    a_ub = np.vstack([lp.a_ub, rows])
    b_ub = np.concatenate([lp.b_ub, rhs])
    lb = lp.lb.copy()
    ub = lp.ub.copy()
    if fp.variant is Variant.PPSM:
        y = fp.estimates.dual_estimates
        lb[kkt.off_y:kkt.off_lam] = y - fp.eta_d
        ub[kkt.off_y:kkt.off_lam] = y + fp.eta_d
    if fp.d_lb is not None:
        lb[:kkt.n_d] = np.maximum(lb[:kkt.n_d], fp.d_lb)
    if fp.d_ub is not None:
        ub[:kkt.n_d] = np.minimum(ub[:kkt.n_d], fp.d_ub)
    lp2 = LinearProgram.build(lp.c, a_eq=lp.a_eq, b_eq=lp.b_eq, a_ub=a_ub, b_ub=b_ub,
                              lb=lb, ub=ub)
    return MixedBinaryProgram(lp2, mbp.binary_idx, q_diag=mbp.q_diag, obj_const=mbp.obj_const)


def _check_saturation(kkt: KktSystem, v: np.ndarray, z: np.ndarray,
                      m_primal: np.ndarray, m_dual: np.ndarray) -> bool:
    """True when some active cap is within 1e-4 M of binding the solution."""
    for t, pair in enumerate(kkt.pairs):
        if z[t] > 0.5:
            if v[pair.dual_col] >= m_dual[t] * (1.0 - 1e-4):
                return True
        else:
            coeff, const = _pair_slack_row(kkt, pair)
            slack = const - coeff @ v
            if slack >= m_primal[t] * (1.0 - 1e-4):
                return True
    return False


def _result_residual(fp: FidelityProblem, d_hat: np.ndarray, x_hat: np.ndarray,
                     y_hat: np.ndarray, lam: np.ndarray, mu_lo: np.ndarray,
                     mu_hi: np.ndarray) -> float:
    """Certify against a fresh lower-level solve: the re-solved optimal value
    must match within the bands, and (x_hat, y_hat) must be a valid KKT
    certificate of the actual LP at d_hat."""
    lower = fp.lower
    rhs_eq = lower.b_eq + fp.s_eq @ d_hat
    rhs_ub = lower.b_ub + fp.s_ub @ d_hat if lower.a_ub.shape[0] else lower.b_ub
    lp = LinearProgram.build(lower.c, a_eq=lower.a_eq, b_eq=rhs_eq,
                             a_ub=lower.a_ub, b_ub=rhs_ub, lb=lower.lb, ub=lower.ub)
    fresh = solve_lp(lp)
    if fresh.status is not Status.OPTIMAL:
        return np.inf
    obj_here = float(lower.c @ x_hat)
    res = abs(obj_here - fresh.objective) / (1.0 + abs(fresh.objective))
    cert = LpSolution(Status.OPTIMAL, x_hat, obj_here, y_hat, lam, mu_lo, mu_hi)
    res = max(res, verify_kkt(lp, cert).max_residual())
    res = max(res, abs(obj_here - fp.estimates.objective_estimate) - fp.eta_p)
    if fp.variant is Variant.PPSM:
        res = max(res, float(np.max(np.abs(y_hat - fp.estimates.dual_estimates))) - fp.eta_d)
    return res


def _band_pattern_fixes(fp: FidelityProblem, kkt: KktSystem) -> dict[int, int]:
    """Pattern bits forced by the price band (full variant, bound pairs only).

    With y confined to [y_est - eta_d, y_est + eta_d] and no inequality rows
    in the lower level, stationarity pins the sign of each reduced cost
    r_j = c_j - (a_eq' y)_j whenever the band is narrower than |r_j|; a
    strictly positive reduced cost forces x_j to its lower bound and vice
    versa. Fixing those bits is an exact domain reduction.
    """
    if fp.variant is not Variant.PPSM or kkt.lower.a_ub.shape[0]:
        return {}
    lower = kkt.lower
    y_bar = fp.estimates.dual_estimates
    r_mid = lower.c - lower.a_eq.T @ y_bar
    spread = fp.eta_d * np.abs(lower.a_eq).sum(axis=0)
    margin = 1e-6 * (1.0 + np.abs(lower.c))
    pair_of = {(p.kind, p.index): t for t, p in enumerate(kkt.pairs)}
    fixes: dict[int, int] = {}
    for j in range(lower.n_vars):
        lo = ("lo", j) in pair_of
        hi = ("hi", j) in pair_of
        if r_mid[j] - spread[j] > margin[j]:
            # reduced cost surely positive: variable sits at its lower bound
            if lo:
                fixes[pair_of[("lo", j)]] = 1
            if hi and lower.lb[j] < lower.ub[j]:
                fixes[pair_of[("hi", j)]] = 0
        elif r_mid[j] + spread[j] < -margin[j]:
            if hi:
                fixes[pair_of[("hi", j)]] = 1
            if lo and lower.lb[j] < lower.ub[j]:
                fixes[pair_of[("lo", j)]] = 0
    return fixes


def _apply_pattern_fixes(mbp: MixedBinaryProgram, kkt: KktSystem,
                         fixes: dict[int, int]) -> MixedBinaryProgram:
    if not fixes:
        return mbp
    lb = mbp.lp.lb.copy()
    ub = mbp.lp.ub.copy()
    for t, v in fixes.items():
        j = kkt.n_total + t
        lb[j] = float(v)
        ub[j] = float(v)
    return MixedBinaryProgram(mbp.lp.with_bounds(lb, ub), mbp.binary_idx,
                              q_diag=mbp.q_diag, obj_const=mbp.obj_const)


def _seed_incumbent(fp: FidelityProblem, kkt: KktSystem,
                    mbp: MixedBinaryProgram) -> tuple[np.ndarray, float] | None:
    """Feasible warm start: take the lower level's own active set at the raw
    (then nonnegative-clipped) release and solve that single pattern."""
    lower = fp.lower
    for d0 in (fp.obf.values, np.maximum(fp.obf.values, 0.0)):
        rhs_eq = lower.b_eq + fp.s_eq @ d0
        rhs_ub = lower.b_ub + fp.s_ub @ d0 if lower.a_ub.shape[0] else lower.b_ub
        probe = solve_lp(LinearProgram.build(lower.c, a_eq=lower.a_eq, b_eq=rhs_eq,
                                             a_ub=lower.a_ub, b_ub=rhs_ub,
                                             lb=lower.lb, ub=lower.ub))
        if probe.status is not Status.OPTIMAL:
            continue
        fixes = {}
        for t, pair in enumerate(kkt.pairs):
            if pair.kind == "row":
                slack = rhs_ub[pair.index] - lower.a_ub[pair.index] @ probe.x
                scale = 1.0 + abs(rhs_ub[pair.index])
            elif pair.kind == "lo":
                slack = probe.x[pair.index] - lower.lb[pair.index]
                scale = 1.0 + abs(lower.lb[pair.index])
            else:
                slack = lower.ub[pair.index] - probe.x[pair.index]
                scale = 1.0 + abs(lower.ub[pair.index])
            fixes[int(kkt.n_total + t)] = 1 if slack <= 1e-7 * scale else 0
        lb, ub = _node_bounds(mbp, fixes)
        try:
            node = solve_qp(mbp.lp.with_bounds(lb, ub), mbp.q_diag, feas_tol=2e-6)
        except NumericalFailure:
            continue
        if node.status is Status.OPTIMAL:
            x = node.x.copy()
            for j in mbp.binary_idx:
                x[j] = round(x[j])
            return x, node.objective + mbp.obj_const
    return None


def _unpack(kkt: KktSystem, x_full: np.ndarray):
    v = x_full[:kkt.n_total]
    d_hat = v[:kkt.n_d].copy()
    x_hat = v[kkt.off_x:kkt.off_y].copy()
    y_hat = v[kkt.off_y:kkt.off_lam].copy()
    lam = v[kkt.off_lam:kkt.off_mu_lo].copy()
    mu_lo = np.zeros(kkt.lower.n_vars)
    mu_lo[kkt.lo_idx] = v[kkt.off_mu_lo:kkt.off_mu_hi]
    mu_hi = np.zeros(kkt.lower.n_vars)
    mu_hi[kkt.hi_idx] = v[kkt.off_mu_hi:kkt.n_total]
    return v, d_hat, x_hat, y_hat, lam, mu_lo, mu_hi


def solve_fidelity(fp: FidelityProblem, cfg: FidelitySolveConfig | None = None) -> FidelityResult:
    """Exact restoration solve via big-M branch and bound, with a-posteriori
    certification and automatic big-M escalation on saturation."""
    if fp.variant is Variant.LAPLACE:
        raise ValueError("the plain Laplace variant bypasses the fidelity phase")
    cfg = cfg or FidelitySolveConfig()
    kkt = build_kkt(fp.lower, fp.s_eq, fp.s_ub)
    m_primal, m_dual = _initial_big_m(fp, kkt, cfg)
    target = fp.obf.values
    obj_scale = max(1.0, float(np.max(np.abs(target))) if target.size else 1.0)
    pattern_fixes = _band_pattern_fixes(fp, kkt)

    last_err: Exception | None = None
    infeasible_confirm = False
    for _ in range(cfg.max_escalations + 1):
        mbp = _apply_bands(fp, kkt, big_m_linearize(kkt, m_primal, m_dual, target, obj_scale))
        mbp = _apply_pattern_fixes(mbp, kkt, pattern_fixes)
        seed = _seed_incumbent(fp, kkt, mbp)
        try:
            res = solve_mbp(mbp, node_limit=cfg.node_limit, time_limit=cfg.time_limit,
                            opt_tol=cfg.opt_tol, incumbent=seed)
        except NodeLimitExceeded:
            return FidelityResult("timeout", np.zeros(kkt.n_d), np.zeros(0), np.zeros(0),
                                  np.nan, np.inf)
        if res.status is not Status.OPTIMAL:
            # rule out infeasibility manufactured by a too-small dual cap
            if not infeasible_confirm:
                infeasible_confirm = True
                m_primal = m_primal * 10.0
                m_dual = m_dual * 10.0
                continue
            return FidelityResult(Status.INFEASIBLE, np.zeros(kkt.n_d), np.zeros(0),
                                  np.zeros(0), np.nan, np.inf, res.nodes)
        v, d_hat, x_hat, y_hat, lam, mu_lo, mu_hi = _unpack(kkt, res.x)
        z = res.x[kkt.n_total:]
        if _check_saturation(kkt, v, z, m_primal, m_dual):
            last_err = BigMSaturated("escalating big-M by 10x")
            m_primal = m_primal * 10.0
            m_dual = m_dual * 10.0
            continue
        residual = _result_residual(fp, d_hat, x_hat, y_hat, lam, mu_lo, mu_hi)
        if residual > cfg.feas_tol:
            raise BigMSaturated(f"restoration certificate failed: residual {residual:.2e}")
        distance = float(np.sum((d_hat - target) ** 2))
        return FidelityResult(Status.OPTIMAL, d_hat, x_hat, y_hat, distance,
                              residual, res.nodes)
    raise last_err or BigMSaturated("big-M escalation budget exhausted")


def enumerate_fidelity_oracle(fp: FidelityProblem, cfg: FidelitySolveConfig | None = None,
                              max_pairs: int = 14) -> FidelityResult:
    """Exhaustive reference: fix every complementarity pattern and take the
    best convex QP. Independent of big-M and of the search path; the dual
    side separates from the primal side once a pattern is fixed."""
    if fp.variant is Variant.LAPLACE:
        raise ValueError("the plain Laplace variant bypasses the fidelity phase")
    cfg = cfg or FidelitySolveConfig()
    kkt = build_kkt(fp.lower, fp.s_eq, fp.s_ub)
    k = len(kkt.pairs)
    if k > max_pairs:
        raise TooLarge(f"{k} complementarity pairs exceeds cap {max_pairs}")

    lower = fp.lower
    n, m_eq, m_ub = lower.n_vars, lower.a_eq.shape[0], lower.a_ub.shape[0]
    n_lo, n_hi = kkt.lo_idx.size, kkt.hi_idx.size

    # dual-side template: variables (y, lam, mu_lo, mu_hi)
    nd_vars = m_eq + m_ub + n_lo + n_hi
    st = np.zeros((n, nd_vars))
    if m_eq:
        st[:, :m_eq] = -lower.a_eq.T
    if m_ub:
        st[:, m_eq:m_eq + m_ub] = lower.a_ub.T
    st[kkt.lo_idx, m_eq + m_ub + np.arange(n_lo)] = -1.0
    st[kkt.hi_idx, m_eq + m_ub + n_lo + np.arange(n_hi)] = +1.0
    dual_lb = np.concatenate([np.full(m_eq, -np.inf), np.zeros(m_ub + n_lo + n_hi)])
    dual_ub = np.full(nd_vars, np.inf)
    if fp.variant is Variant.PPSM:
        dual_lb[:m_eq] = fp.estimates.dual_estimates - fp.eta_d
        dual_ub[:m_eq] = fp.estimates.dual_estimates + fp.eta_d

    # primal-side template: variables (d, x)
    np_vars = kkt.n_d + n
    p_eq = np.zeros((m_eq, np_vars))
    if m_eq:
        p_eq[:, :kkt.n_d] = -fp.s_eq
        p_eq[:, kkt.n_d:] = lower.a_eq
    p_ub = np.zeros((m_ub, np_vars))
    if m_ub:
        p_ub[:, :kkt.n_d] = -fp.s_ub
        p_ub[:, kkt.n_d:] = lower.a_ub
    band = np.zeros((2, np_vars))
    band[0, kkt.n_d:] = lower.c
    band[1, kkt.n_d:] = -lower.c
    o = fp.estimates.objective_estimate
    band_rhs = np.array([o + fp.eta_p, -(o - fp.eta_p)])
    p_lb = np.concatenate([np.full(kkt.n_d, -np.inf) if fp.d_lb is None else fp.d_lb, lower.lb])
    p_ub_b = np.concatenate([np.full(kkt.n_d, np.inf) if fp.d_ub is None else fp.d_ub, lower.ub])
    s2 = max(1.0, float(np.max(np.abs(fp.obf.values))) if fp.obf.values.size else 1.0) ** 2
    q = np.zeros(np_vars)
    q[:kkt.n_d] = 2.0 / s2
    c_lin = np.zeros(np_vars)
    c_lin[:kkt.n_d] = -2.0 * fp.obf.values / s2
    const = float(fp.obf.values @ fp.obf.values) / s2

    best: FidelityResult | None = None
    for mask in range(1 << k):
        bits = [(mask >> t) & 1 for t in range(k)]
        # dual side: zero the inactive duals, keep stationarity
        lb_d = dual_lb.copy()
        ub_d = dual_ub.copy()
        for t, pair in enumerate(kkt.pairs):
            if not bits[t]:
                col = pair.dual_col - kkt.off_y
                lb_d[col] = 0.0
                ub_d[col] = 0.0
        dual_lp = LinearProgram.build(np.zeros(nd_vars), a_eq=st, b_eq=-lower.c,
                                      lb=lb_d, ub=ub_d)
        dual_sol = solve_lp(dual_lp)
        if dual_sol.status is not Status.OPTIMAL:
            continue
        # primal side: force active slacks to zero
        eq_rows = [p_eq]
        eq_rhs = [lower.b_eq]
        lb_p = p_lb.copy()
        ub_p = p_ub_b.copy()
        for t, pair in enumerate(kkt.pairs):
            if not bits[t]:
                continue
            if pair.kind == "row":
                eq_rows.append(p_ub[pair.index].reshape(1, -1))
                eq_rhs.append(np.array([lower.b_ub[pair.index]]))
            elif pair.kind == "lo":
                j = kkt.n_d + pair.index
                ub_p[j] = min(ub_p[j], lower.lb[pair.index])
            else:
                j = kkt.n_d + pair.index
                lb_p[j] = max(lb_p[j], lower.ub[pair.index])
        if np.any(lb_p > ub_p):
            continue
        qp = LinearProgram.build(c_lin, a_eq=np.vstack(eq_rows), b_eq=np.concatenate(eq_rhs),
                                 a_ub=np.vstack([p_ub, band]) if m_ub else band,
                                 b_ub=np.concatenate([lower.b_ub, band_rhs]) if m_ub else band_rhs,
                                 lb=lb_p, ub=ub_p)
        qp_sol = solve_qp(qp, q)
        if qp_sol.status is not Status.OPTIMAL:
            continue
        value = qp_sol.objective + const
        if best is None or value < best_scaled - 1e-12:
            best_scaled = value
            d_hat = qp_sol.x[:kkt.n_d].copy()
            x_hat = qp_sol.x[kkt.n_d:].copy()
            y_hat = dual_sol.x[:m_eq].copy()
            best = FidelityResult(Status.OPTIMAL, d_hat, x_hat, y_hat,
                                  float(np.sum((d_hat - fp.obf.values) ** 2)), 0.0)
    if best is None:
        return FidelityResult(Status.INFEASIBLE, np.zeros(kkt.n_d), np.zeros(0),
                              np.zeros(0), np.nan, np.inf)
    return best
