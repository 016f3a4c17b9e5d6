"""End-to-end privacy-preserving coordination: obfuscate, predict, commit,
restore, then evaluate the released demand against the true game.

The release path never touches the sensitive vector after the Laplace step:
it works exclusively on :class:`PublicMarketData` plus the obfuscated
release, so everything downstream is post-processing of a private output.
Evaluation and the bound checkers are verification-only code and may read
ground truth; they live behind separate entry points taking the full
instance so the firewall stays auditable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .fidelity import (
    FidelityResult,
    FidelitySolveConfig,
    Variant,
    make_fidelity_problem,
    solve_fidelity,
)
from .lp import LinearProgram, Status, solve_lp
from .markets import (
    ChainInfeasible,
    EmCache,
    LeaderInfeasible,
    MarketInstance,
    StackelbergInfeasible,
    StackelbergSolution,
    solve_follower_chain,
    solve_full_stackelberg,
    solve_leader_given_duals,
)
from .predictors import (
    FollowerEstimates,
    PredictionFailed,
    PredictorConfig,
    fallback_leader_view,
    predict_follower_view,
    predict_leader_view,
)
from .privacy import ObfuscatedDemand, PrivacyParams, obfuscate
from .serialize import Doc


class MechanismError(RuntimeError):
    """A pipeline step failed; ``step`` identifies which one."""

    def __init__(self, step: str, reason: str, timeout: bool = False):
        super().__init__(f"{step}: {reason}")
        self.step = step
        self.reason = reason
        self.timeout = timeout


@dataclass(frozen=True)
class PpsmConfig:
    privacy: PrivacyParams
    eta_p_pct: float = 25.0
    eta_d_pct: float = 25.0
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    variant: Variant = Variant.PPSM
    fidelity: FidelitySolveConfig = field(default_factory=FidelitySolveConfig)
    seed: int = 0

    def __post_init__(self):
        if self.eta_p_pct < 0 or self.eta_d_pct < 0:
            raise ValueError("fidelity percentages must be >= 0")


@dataclass
class MechanismTrace:
    """Every intermediate of one release, for golden files and bound checks."""

    variant: Variant
    seed: int
    obf: ObfuscatedDemand | None = None
    price_estimates: np.ndarray | None = None
    leader_fallback: bool = False
    x_uc: np.ndarray | None = None
    estimates: FollowerEstimates | None = None
    eta_p_abs: float = np.nan
    eta_d_abs: float = np.nan
    fidelity: FidelityResult | None = None
    d_release: np.ndarray | None = None
    failed_step: str = ""
    wall_time: float = 0.0


def _derived_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1, np.uint64)[0])


def eta_from_estimates(estimates: FollowerEstimates, eta_p_pct: float,
                       eta_d_pct: float) -> tuple[float, float]:
    """Absolute half-widths from percentages of the *estimated* quantities,
    so the conversion never peeks at ground truth."""
    eta_p = eta_p_pct / 100.0 * abs(estimates.objective_estimate)
    duals = np.abs(estimates.dual_estimates)
    eta_d = eta_d_pct / 100.0 * (float(duals.mean()) if duals.size else 0.0)
    return eta_p, eta_d


def run_mechanism(inst: MarketInstance, cfg: PpsmConfig,
                  em_cache: EmCache | None = None) -> tuple[np.ndarray, MechanismTrace]:
    """Execute the release pipeline and return (released demand, trace).

    Raises MechanismError with the failing step identified; the trace up to
    the failure is attached to the exception as ``.trace``.
    """
    t_start = time.monotonic()
    trace = MechanismTrace(variant=cfg.variant, seed=cfg.seed)

    def fail(step: str, reason: str, timeout: bool = False):
        trace.failed_step = step
        trace.wall_time = time.monotonic() - t_start
        err = MechanismError(step, reason, timeout)
        err.trace = trace
        return err

    # step 1: the only read of the sensitive vector
    obf = obfuscate(inst.sensitive_demand, cfg.privacy, _derived_seed(cfg.seed, 1))
    trace.obf = obf
    pub = inst.public()
    if em_cache is None:
        em_cache = EmCache(pub)

    if cfg.variant is Variant.LAPLACE:
        trace.d_release = obf.values.copy()
        trace.wall_time = time.monotonic() - t_start
        return obf.values.copy(), trace

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))

    # step 2a: leader-side price anticipation
    try:
        y_bar = predict_leader_view(pub, obf, cfg.predictor, rng, em_cache)
    except PredictionFailed:
        trace.leader_fallback = True
        try:
            y_bar = fallback_leader_view(pub, obf, cfg.predictor, rng, em_cache)
        except (PredictionFailed, LeaderInfeasible) as err:
            raise fail("predict_leader", str(err)) from err
    trace.price_estimates = y_bar

    # step 2b: commitment at the anticipated prices
    try:
        x_uc, _ = solve_leader_given_duals(pub, y_bar)
    except LeaderInfeasible as err:
        raise fail("leader", str(err)) from err
    trace.x_uc = x_uc

    # step 3a: follower-side estimates at that commitment
    try:
        estimates = predict_follower_view(x_uc, pub, obf, cfg.predictor, rng, em_cache)
    except ChainInfeasible as err:
        raise fail("follower_view", str(err)) from err
    trace.estimates = estimates
    eta_p, eta_d = eta_from_estimates(estimates, cfg.eta_p_pct, cfg.eta_d_pct)
    trace.eta_p_abs, trace.eta_d_abs = eta_p, eta_d

    # step 3b: fidelity restoration
    fp = make_fidelity_problem(pub, x_uc, obf, estimates, eta_p, eta_d,
                               cfg.variant, em_cache)
    res = solve_fidelity(fp, cfg.fidelity)
    trace.fidelity = res
    if res.status == "timeout":
        raise fail("fidelity", "wall-clock or node budget exhausted", timeout=True)
    if res.status is not Status.OPTIMAL:
        raise fail("fidelity", "no demand satisfies the fidelity bands")
    trace.d_release = res.d_hat.copy()
    trace.wall_time = time.monotonic() - t_start
    return res.d_hat.copy(), trace


@dataclass(frozen=True)
class RunRecord:
    """Per-run metrics; deltas are NaN when the run is unsatisfied."""

    variant: str
    alpha: float
    eta: float
    stress_e: float
    stress_g: float
    seed: int
    satisfied: bool
    timeout: bool
    baseline_feasible: bool
    l1_demand_error: float
    delta_o_uc_pct: float
    delta_o_e_pct: float
    delta_o_g_pct: float
    thm4_premise: bool
    thm4_lhs: float
    thm4_rhs: float
    thm4_holds: bool
    thm5_applicable: bool
    thm5_lhs: float
    thm5_rhs: float
    thm5_holds: bool
    failure_step: str
    wall_time: float


def _pct(true_val: float, released_val: float) -> float:
    return abs(true_val - released_val) / abs(true_val) * 100.0


def evaluate(inst: MarketInstance, d_release: np.ndarray | None,
             baseline: StackelbergSolution | None = None,
             em_cache: EmCache | None = None,
             meta: dict | None = None) -> RunRecord:
    """Score one release: the leader clears the game seeing the released
    demand, then the followers clear at the resulting commitment with the
    true demand, and all objectives are compared to the true-demand
    baseline. Infeasibility becomes satisfied=False, never an exception."""
    meta = dict(meta or {})
    pub = inst.public()
    if em_cache is None:
        em_cache = EmCache(pub)
    base_feasible = True
    if baseline is None:
        try:
            baseline = solve_full_stackelberg(pub, inst.sensitive_demand, em_cache)
        except StackelbergInfeasible:
            base_feasible = False

    fields_common = dict(
        variant=meta.get("variant", ""),
        alpha=meta.get("alpha", np.nan),
        eta=meta.get("eta", np.nan),
        stress_e=inst.stress_e,
        stress_g=inst.stress_g,
        seed=meta.get("seed", -1),
        thm4_premise=meta.get("thm4_premise", False),
        thm4_lhs=meta.get("thm4_lhs", np.nan),
        thm4_rhs=meta.get("thm4_rhs", np.nan),
        thm4_holds=meta.get("thm4_holds", False),
        thm5_applicable=meta.get("thm5_applicable", False),
        thm5_lhs=meta.get("thm5_lhs", np.nan),
        thm5_rhs=meta.get("thm5_rhs", np.nan),
        thm5_holds=meta.get("thm5_holds", False),
        failure_step=meta.get("failure_step", ""),
        timeout=meta.get("timeout", False),
        wall_time=meta.get("wall_time", np.nan),
    )

    def unsat(reason: str) -> RunRecord:
        if reason and not fields_common["failure_step"]:
            fields_common["failure_step"] = reason
        return RunRecord(satisfied=False, baseline_feasible=base_feasible,
                         l1_demand_error=np.nan, delta_o_uc_pct=np.nan,
                         delta_o_e_pct=np.nan, delta_o_g_pct=np.nan, **fields_common)

    if not base_feasible:
        return unsat("baseline_infeasible")
    if d_release is None or fields_common["timeout"]:
        return unsat("")

    try:
        released = solve_full_stackelberg(pub, d_release, em_cache)
    except StackelbergInfeasible:
        return unsat("release_clearing")
    # the committed units now face the real demand
    try:
        em_true, gm_true = solve_follower_chain(pub, released.x_uc,
                                                inst.sensitive_demand, em_cache)
    except ChainInfeasible:
        return unsat("true_clearing_at_released_commitment")

    leader_obj = float(pub.c_uc @ released.x_uc + em_true.objective)
    return RunRecord(
        satisfied=True,
        baseline_feasible=True,
        l1_demand_error=float(np.sum(np.abs(inst.sensitive_demand - d_release))),
        delta_o_uc_pct=_pct(baseline.leader_objective, leader_obj),
        delta_o_e_pct=_pct(baseline.em_objective, em_true.objective),
        delta_o_g_pct=_pct(baseline.gm_objective, gm_true.objective),
        **fields_common,
    )


# ---------------------------------------------------------------------------
# bound checkers (verification-only: may read ground truth)


@dataclass(frozen=True)
class Theorem4Report:
    premise_feasible: bool
    lhs: float             # || d_hat - d_true ||_2
    rhs: float             # 2 || d_noisy - d_true ||_2
    triangle_holds: bool
    noise_sq: float        # || d_noisy - d_true ||_2^2 (Monte-Carlo hook)


def check_theorem4(inst: MarketInstance, trace: MechanismTrace,
                   em_cache: EmCache | None = None) -> Theorem4Report:
    """Per-run restoration-error bound: when the true demand satisfies the
    fidelity bands, optimality of the projection forces
    ||d_hat - d|| <= 2 ||d_noisy - d||."""
    if trace.obf is None or trace.d_release is None or trace.estimates is None:
        raise ValueError("trace must come from a completed restoration run")
    d_true = inst.sensitive_demand
    noise_vec = trace.obf.values - d_true
    noise_sq = float(noise_vec @ noise_vec)
    lhs = float(np.linalg.norm(trace.d_release - d_true))
    rhs = 2.0 * float(np.linalg.norm(noise_vec))

    premise = False
    try:
        _, gm = solve_follower_chain(inst.public(), trace.x_uc, d_true,
                                     em_cache or EmCache(inst.public()))
        ok_obj = abs(gm.objective - trace.estimates.objective_estimate) <= trace.eta_p_abs
        ok_dual = True
        if trace.variant is Variant.PPSM:
            ok_dual = bool(np.all(np.abs(gm.y_eq - trace.estimates.dual_estimates)
                                  <= trace.eta_d_abs + 1e-9))
        premise = ok_obj and ok_dual
    except ChainInfeasible:
        premise = False
    return Theorem4Report(premise, lhs, rhs, lhs <= rhs + 1e-6, noise_sq)


@dataclass(frozen=True)
class Theorem5Report:
    applicable: bool
    reason: str
    lhs: float             # | O_leader(restored prices) - O_leader(true prices) |
    rhs: float             # eta_d * || B^T y_leader ||_1
    holds: bool


def _relaxed_leader_lp(pub, y: np.ndarray) -> tuple[LinearProgram, slice]:
    """Leader subproblem with commitments relaxed to [0,1]; returns the LP and
    the slice of ub rows holding the bid-validity block (for dual extraction)."""
    n_uc, n_e = pub.n_gen, pub.c_e.size

    def wide(m_uc, m_e):
        out = np.zeros((m_uc.shape[0], n_uc + n_e))
        out[:, :n_uc] = m_uc
        if m_e is not None:
            out[:, n_uc:] = m_e
        return out

    blocks = []
    rhs = []
    if pub.uc_mat.shape[0]:
        blocks.append(-wide(pub.uc_mat, None))
        rhs.append(-pub.uc_rhs)
    bid_start = sum(b.shape[0] for b in blocks)
    blocks.append(-wide(pub.bid_uc, None))
    rhs.append(-(pub.bid_rhs - pub.bid_y @ y))
    bid_rows = slice(bid_start, bid_start + pub.bid_uc.shape[0])
    blocks.append(-wide(pub.coup_uc, pub.coup_e))
    rhs.append(-pub.coup_rhs)
    if pub.em_ub.shape[0]:
        rows = np.zeros((pub.em_ub.shape[0], n_uc + n_e))
        rows[:, n_uc:] = pub.em_ub
        blocks.append(rows)
        rhs.append(pub.em_ub_rhs)
    eq = np.zeros((pub.em_eq.shape[0], n_uc + n_e))
    eq[:, n_uc:] = pub.em_eq
    lp = LinearProgram.build(
        np.concatenate([pub.c_uc, pub.c_e]),
        a_eq=eq, b_eq=pub.em_eq_rhs,
        a_ub=np.vstack(blocks), b_ub=np.concatenate(rhs),
        lb=np.concatenate([np.zeros(n_uc), pub.lb_e]),
        ub=np.concatenate([np.ones(n_uc), pub.ub_e]),
    )
    return lp, bid_rows


def check_theorem5(inst: MarketInstance, cfg: PpsmConfig,
                   em_cache: EmCache | None = None) -> Theorem5Report:
    """Leader cost-of-privacy bound on the convex (relaxed-commitment) leader
    with accurate estimates: |O(y_restored) - O(y_true)| <= eta_d ||B' y_L||_1.

    Requires zero predictor noise; otherwise reported NotApplicable. The run
    bypasses the predictors and feeds the exact ground-truth estimates, the
    accuracy premise of the analysis.
    """
    def na(reason: str) -> Theorem5Report:
        return Theorem5Report(False, reason, np.nan, np.nan, False)

    if cfg.predictor.noise_fraction > 0:
        return na("predictor noise present")
    if cfg.variant is not Variant.PPSM:
        return na("price band absent in this variant")
    pub = inst.public()
    em_cache = em_cache or EmCache(pub)
    try:
        base = solve_full_stackelberg(pub, inst.sensitive_demand, em_cache)
    except StackelbergInfeasible:
        return na("true game infeasible")

    estimates = FollowerEstimates(base.gm_objective, base.gas_prices.copy())
    eta_p, eta_d = eta_from_estimates(estimates, cfg.eta_p_pct, cfg.eta_d_pct)
    obf = obfuscate(inst.sensitive_demand, cfg.privacy, _derived_seed(cfg.seed, 1))
    fp = make_fidelity_problem(pub, base.x_uc, obf, estimates, eta_p, eta_d,
                               cfg.variant, em_cache)
    res = solve_fidelity(fp, cfg.fidelity)
    if res.status is not Status.OPTIMAL:
        return na(f"fidelity phase {res.status}")

    lp_true, bid_rows = _relaxed_leader_lp(pub, base.gas_prices)
    sol_true = solve_lp(lp_true)
    if sol_true.status is not Status.OPTIMAL:
        return na("relaxed leader infeasible at true prices")
    lp_rel, _ = _relaxed_leader_lp(pub, res.follower_duals)
    sol_rel = solve_lp(lp_rel)
    if sol_rel.status is not Status.OPTIMAL:
        return na("relaxed leader infeasible at restored prices")

    y_leader = sol_true.lam_ub[bid_rows]
    rhs = float(eta_d * np.sum(np.abs(pub.bid_y.T @ y_leader)))
    lhs = abs(sol_rel.objective - sol_true.objective)
    return Theorem5Report(True, "", lhs, rhs, lhs <= rhs + 1e-6)


def trace_to_doc(inst: MarketInstance, trace: MechanismTrace) -> Doc:
    """Step-labeled release trace in the instance text format."""
    doc = Doc()
    doc.set_str("kind", "mechanism-trace")
    doc.set_str("variant", trace.variant.value)
    doc.set_int("seed", trace.seed)
    doc.set_int("instance_seed", inst.seed)
    doc.set_str("failed_step", trace.failed_step or "none")
    if trace.obf is not None:
        doc.set_vec("step1.obfuscated", trace.obf.values)
        doc.set_int("step1.noise_seed", trace.obf.seed_record)
        doc.set_float("step1.alpha", trace.obf.params.alpha)
        doc.set_float("step1.epsilon", trace.obf.params.epsilon)
    if trace.price_estimates is not None:
        doc.set_vec("step2a.price_estimates", trace.price_estimates)
        doc.set_int("step2a.fallback", int(trace.leader_fallback))
    if trace.x_uc is not None:
        doc.set_vec("step2b.commitment", trace.x_uc)
    if trace.estimates is not None:
        doc.set_float("step3a.objective_estimate", trace.estimates.objective_estimate)
        doc.set_vec("step3a.dual_estimates", trace.estimates.dual_estimates)
        doc.set_str("step3a.fallback", trace.estimates.fallback)
        doc.set_float("step3b.eta_p", trace.eta_p_abs)
        doc.set_float("step3b.eta_d", trace.eta_d_abs)
    if trace.fidelity is not None and trace.d_release is not None:
        doc.set_vec("step3b.restored", trace.d_release)
        doc.set_float("step3b.distance", trace.fidelity.distance)
        doc.set_float("step3b.residual", trace.fidelity.residuals)
    return doc
