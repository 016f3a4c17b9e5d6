"""Synthetic coupled electricity/gas market instances and their exact oracle.

The model is a desk-scale analog of a gas-aware unit commitment sitting on
top of two sequential clearings:

* leader: commit generators (binary) under a reserve rule and bid-validity
  rows linking committed gas-fired plants to gas prices;
* electricity clearing: transport-network dispatch of committed units
  against a public electricity demand;
* gas clearing: transport-network dispatch of gas supplies against nodal
  gas demand, where gas-fired plants add demand proportional to their
  electricity dispatch.  The balance-row duals are the gas prices fed back
  into the leader's bid-validity rows.

The leader optimum is computed by exhaustive commitment enumeration, which
is exact at this scale and doubles as the ground-truth oracle for the
privacy pipeline.  Gas prices returned by the chain are the balance-row
duals of the simplex solve; under dual degeneracy this selector is pinned
and recorded, never re-derived elsewhere.

Variable layout (period-major blocks, period index t fastest):

    EM vars: [dispatch g(i,t) ..., line flow f(l,t) ...]
    GM vars: [supply s(k,t) ...,  pipe flow h(e,t) ...]
    gas demand / gas prices: node-major, (node v, period t) -> v * T + t
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .bnb import MixedBinaryProgram, solve_mbp
from .lp import FEAS_TOL, LinearProgram, LpSolution, Status, solve_lp
from .serialize import Doc


class GenerationFailed(RuntimeError):
    """Feasibility repair loop did not converge for this seed."""


class ChainInfeasible(RuntimeError):
    def __init__(self, stage: str):
        super().__init__(f"{stage} clearing infeasible")
        self.stage = stage


class LeaderInfeasible(RuntimeError):
    """No commitment satisfies the leader rows at the given price estimates."""


class StackelbergInfeasible(RuntimeError):
    """No commitment yields a feasible, bid-valid follower chain."""


@dataclass(frozen=True, eq=False)
class PublicMarketData:
    """Everything both agents may see: all parameters except the gas demand."""

    n_gen: int
    n_gfpp: int
    n_buses: int
    n_gas_nodes: int
    n_periods: int
    stress_e: float
    stress_g: float
    seed: int
    # leader
    c_uc: np.ndarray
    uc_mat: np.ndarray      # uc_mat @ x_uc >= uc_rhs
    uc_rhs: np.ndarray
    bid_uc: np.ndarray      # bid_uc @ x_uc + bid_y @ y >= bid_rhs
    bid_y: np.ndarray
    bid_rhs: np.ndarray
    # electricity clearing
    c_e: np.ndarray
    em_eq: np.ndarray
    em_eq_rhs: np.ndarray
    em_ub: np.ndarray
    em_ub_rhs: np.ndarray
    coup_e: np.ndarray      # coup_e @ x_e + coup_uc @ x_uc >= coup_rhs
    coup_uc: np.ndarray
    coup_rhs: np.ndarray
    lb_e: np.ndarray
    ub_e: np.ndarray
    # gas clearing
    c_g: np.ndarray
    gm_bal: np.ndarray      # gm_bal @ x_g + gm_from_e @ x_e = demand
    gm_from_e: np.ndarray
    lb_g: np.ndarray
    ub_g: np.ndarray

    @property
    def n_prices(self) -> int:
        return self.n_gas_nodes * self.n_periods

    def em_lp(self, x_uc: np.ndarray) -> LinearProgram:
        a_ub = np.vstack([self.em_ub, -self.coup_e]) if self.coup_e.size else self.em_ub
        b_ub = np.concatenate([self.em_ub_rhs, -(self.coup_rhs - self.coup_uc @ x_uc)])
        return LinearProgram.build(self.c_e, a_eq=self.em_eq, b_eq=self.em_eq_rhs,
                                   a_ub=a_ub, b_ub=b_ub, lb=self.lb_e, ub=self.ub_e)

    def gm_lp(self, x_e: np.ndarray, demand: np.ndarray) -> LinearProgram:
        demand = np.asarray(demand, dtype=float).reshape(-1)
        if demand.size != self.n_prices:
            raise ValueError(f"demand length {demand.size}, expected {self.n_prices}")
        rhs = demand - self.gm_from_e @ x_e
        return LinearProgram.build(self.c_g, a_eq=self.gm_bal, b_eq=rhs,
                                   lb=self.lb_g, ub=self.ub_g)

    def uc_rows_ok(self, x_uc: np.ndarray, tol: float = FEAS_TOL) -> bool:
        if not self.uc_mat.shape[0]:
            return True
        return bool(np.all(self.uc_mat @ x_uc >= self.uc_rhs - tol))

    def bid_rows_ok(self, x_uc: np.ndarray, y: np.ndarray, tol: float = FEAS_TOL) -> bool:
        if not self.bid_uc.shape[0]:
            return True
        lhs = self.bid_uc @ x_uc + self.bid_y @ y
        scale = 1.0 + np.abs(self.bid_rhs)
        return bool(np.all(lhs - self.bid_rhs >= -tol * scale))

    @property
    def n_gas_supplies(self) -> int:
        # supply columns have one balance entry, flow columns a +/- pair
        cols = self.gm_bal.shape[1] // self.n_periods
        return sum(
            1 for c in range(cols)
            if np.count_nonzero(self.gm_bal[:, c * self.n_periods]) == 1
        )

    def supply_capacity(self) -> float:
        """Total gas supply capacity per period (public projection bound)."""
        n_sup = self.n_gas_supplies
        return float(np.sum(self.ub_g[: n_sup * self.n_periods]) / self.n_periods)

    def deliverable_demand_cap(self) -> np.ndarray:
        """Per-(node, period) upper bound on servable demand: local supply
        plus the capacity of every incident pipe. Public network data."""
        T = self.n_periods
        cap = np.zeros(self.n_prices)
        cols = self.gm_bal.shape[1] // T
        for k in range(cols):
            col = self.gm_bal[:, k * T]
            nodes = np.flatnonzero(col)
            for t in range(T):
                width = self.ub_g[k * T + t]
                for row in nodes:
                    v = row // T
                    cap[v * T + t] += abs(width)
        return cap


@dataclass(frozen=True, eq=False)
class MarketInstance(PublicMarketData):
    """Public data plus the follower's sensitive nodal gas demand (MWh)."""

    sensitive_demand: np.ndarray = None

    def __post_init__(self):
        if self.sensitive_demand is None:
            raise ValueError("sensitive_demand required")
        if self.sensitive_demand.size != self.n_prices:
            raise ValueError("sensitive_demand length mismatch")

    def public(self) -> PublicMarketData:
        vals = {f.name: getattr(self, f.name) for f in fields(PublicMarketData)}
        return PublicMarketData(**vals)


@dataclass(frozen=True)
class StackelbergSolution:
    x_uc: np.ndarray
    em_solution: LpSolution
    gm_solution: LpSolution
    leader_objective: float
    em_objective: float
    gm_objective: float

    @property
    def gas_prices(self) -> np.ndarray:
        # balance-row duals of the gm solve, same object, no copy
        return self.gm_solution.y_eq


class EmCache:
    """Memo for electricity clearings keyed by commitment (demand-independent)."""

    def __init__(self, pub: PublicMarketData):
        self.pub = pub
        self._memo: dict[bytes, LpSolution] = {}

    def solve(self, x_uc: np.ndarray) -> LpSolution:
        key = np.asarray(x_uc, dtype=np.int8).tobytes()
        if key not in self._memo:
            self._memo[key] = solve_lp(self.pub.em_lp(np.asarray(x_uc, dtype=float)))
        return self._memo[key]


def solve_follower_chain(pub: PublicMarketData, x_uc: np.ndarray, demand: np.ndarray,
                         em_cache: EmCache | None = None) -> tuple[LpSolution, LpSolution]:
    """Sequential clearing: electricity with commitments fixed, then gas."""
    x_uc = np.asarray(x_uc, dtype=float).reshape(-1)
    if x_uc.size != pub.n_gen:
        raise ValueError("commitment vector length mismatch")
    em = em_cache.solve(x_uc) if em_cache is not None else solve_lp(pub.em_lp(x_uc))
    if em.status is not Status.OPTIMAL:
        raise ChainInfeasible("em")
    gm = solve_lp(pub.gm_lp(em.x, demand))
    if gm.status is not Status.OPTIMAL:
        raise ChainInfeasible("gm")
    return em, gm


def iter_commitments(n: int):
    """All binary vectors of length n in lexicographic order (x[0] most significant)."""
    for mask in range(1 << n):
        yield np.array([(mask >> (n - 1 - j)) & 1 for j in range(n)], dtype=float)


def solve_full_stackelberg(pub: PublicMarketData, demand: np.ndarray,
                           em_cache: EmCache | None = None) -> StackelbergSolution:
    """Exact bilevel optimum by commitment enumeration (<= 16 binaries).

    Keeps commitments whose follower chain clears and whose bid-validity
    rows hold at the resulting gas prices; minimizes the leader objective,
    ties broken by lexicographically smallest commitment.
    """
    if pub.n_gen > 16:
        raise ValueError("commitment enumeration capped at 16 binaries")
    if em_cache is None:
        em_cache = EmCache(pub)
    best = None
    for x_uc in iter_commitments(pub.n_gen):
        if not pub.uc_rows_ok(x_uc):
            continue
        try:
            em, gm = solve_follower_chain(pub, x_uc, demand, em_cache)
        except ChainInfeasible:
            continue
        if not pub.bid_rows_ok(x_uc, gm.y_eq):
            continue
        leader_obj = float(pub.c_uc @ x_uc + em.objective)
        if best is None or leader_obj < best.leader_objective - 1e-12:
            best = StackelbergSolution(x_uc.copy(), em, gm, leader_obj,
                                       em.objective, gm.objective)
    if best is None:
        raise StackelbergInfeasible("no bid-valid feasible commitment")
    return best


def solve_leader_given_duals(pub: PublicMarketData, y_estimates: np.ndarray,
                             *, node_limit: int = 100_000,
                             include_bid_rows: bool = True) -> tuple[np.ndarray, float]:
    """Leader subproblem with gas prices fixed to estimates (mixed-binary LP).

    ``include_bid_rows=False`` yields the unconstrained commitment problem
    (no price coordination), used as a prediction fallback.
    """
    y = np.asarray(y_estimates, dtype=float).reshape(-1)
    if y.size != pub.n_prices:
        raise ValueError("price estimate length mismatch")
    n_uc, n_e = pub.n_gen, pub.c_e.size
    c = np.concatenate([pub.c_uc, pub.c_e])

    def wide(m_uc, m_e):
        out = np.zeros((m_uc.shape[0], n_uc + n_e))
        out[:, :n_uc] = m_uc
        if m_e is not None:
            out[:, n_uc:] = m_e
        return out

    a_ub_blocks = []
    b_ub_blocks = []
    if pub.uc_mat.shape[0]:
        a_ub_blocks.append(-wide(pub.uc_mat, None))
        b_ub_blocks.append(-pub.uc_rhs)
    if include_bid_rows and pub.bid_uc.shape[0]:
        a_ub_blocks.append(-wide(pub.bid_uc, None))
        b_ub_blocks.append(-(pub.bid_rhs - pub.bid_y @ y))
    if pub.coup_e.shape[0]:
        a_ub_blocks.append(-wide(pub.coup_uc, pub.coup_e))
        b_ub_blocks.append(-pub.coup_rhs)
    if pub.em_ub.shape[0]:
        ub_rows = np.zeros((pub.em_ub.shape[0], n_uc + n_e))
        ub_rows[:, n_uc:] = pub.em_ub
        a_ub_blocks.append(ub_rows)
        b_ub_blocks.append(pub.em_ub_rhs)
    eq_rows = np.zeros((pub.em_eq.shape[0], n_uc + n_e))
    eq_rows[:, n_uc:] = pub.em_eq
    lp = LinearProgram.build(
        c,
        a_eq=eq_rows,
        b_eq=pub.em_eq_rhs,
        a_ub=np.vstack(a_ub_blocks) if a_ub_blocks else None,
        b_ub=np.concatenate(b_ub_blocks) if b_ub_blocks else None,
        lb=np.concatenate([np.zeros(n_uc), pub.lb_e]),
        ub=np.concatenate([np.ones(n_uc), pub.ub_e]),
    )
    res = solve_mbp(MixedBinaryProgram(lp, np.arange(n_uc)), node_limit=node_limit)
    if res.status is not Status.OPTIMAL:
        raise LeaderInfeasible("leader subproblem infeasible at given prices")
    return res.x[:n_uc].copy(), res.objective


# ---------------------------------------------------------------------------
# instance generation


def _spanning_edges(n_nodes: int, rng) -> list[tuple[int, int]]:
    edges = [(int(rng.integers(0, j)), j) for j in range(1, n_nodes)]
    if n_nodes >= 4:
        while True:
            a, b = sorted(rng.integers(0, n_nodes, size=2))
            if a != b and (a, b) not in edges:
                edges.append((a, b))
                break
    return edges


def _incidence(n_nodes: int, edges, n_periods: int) -> np.ndarray:
    """Signed node-edge incidence, expanded per period (flow defined a->b)."""
    m = np.zeros((n_nodes * n_periods, len(edges) * n_periods))
    for e, (a, b) in enumerate(edges):
        for t in range(n_periods):
            m[a * n_periods + t, e * n_periods + t] = -1.0
            m[b * n_periods + t, e * n_periods + t] = +1.0
    return m


def _build_base(n_gen: int, n_gfpp: int, n_gas_nodes: int, n_periods: int,
                n_buses: int, seed: int, scale: dict) -> MarketInstance:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9e3779b9]))
    T = n_periods

    # --- electricity network: generators on buses arranged in a ring ------
    gen_bus = np.arange(n_gen) % n_buses
    gen_cap = rng.uniform(60.0, 140.0, size=n_gen) * scale["e_cap"]
    gen_cost = rng.uniform(28.0, 48.0, size=n_gen)
    heat_rate = rng.uniform(1.2, 2.0, size=n_gfpp)
    # gas plants procure fuel near the cheap tiers, undercutting mid merit
    ref_price = scale["gas_price_ref"]
    gen_cost[:n_gfpp] = heat_rate * ref_price * rng.uniform(0.5, 0.8, size=n_gfpp)

    # demand anchored to the gas-free fleet: covered without gas at base
    # stress, short of it at the stressed end of the suite
    anchor = float(np.sum(gen_cap[n_gfpp:])) if n_gfpp < n_gen else float(np.sum(gen_cap))
    demand_e_total = anchor * scale["e_load_frac"]
    bus_share = rng.dirichlet(np.ones(n_buses) * 4.0)
    profile = 1.0 + 0.15 * np.sin(np.linspace(0.0, np.pi, T)) if T > 1 else np.ones(1)
    demand_e = np.outer(bus_share, profile).reshape(-1) * demand_e_total  # (bus, t)

    e_lines = [(b, (b + 1) % n_buses) for b in range(n_buses)] if n_buses > 1 else []
    line_cap = rng.uniform(0.35, 0.6, size=len(e_lines)) * demand_e_total

    n_e = n_gen * T + len(e_lines) * T
    c_e = np.concatenate([np.repeat(gen_cost, T), np.zeros(len(e_lines) * T)])

    em_eq = np.zeros((n_buses * T, n_e))
    for i in range(n_gen):
        for t in range(T):
            em_eq[gen_bus[i] * T + t, i * T + t] = 1.0
    if e_lines:
        em_eq[:, n_gen * T:] = _incidence(n_buses, e_lines, T)
    em_eq_rhs = demand_e.copy()

    # ramp rows couple consecutive periods when T > 1
    em_ub_rows = []
    em_ub_rhs = []
    if T > 1:
        ramp = 0.4 * gen_cap
        for i in range(n_gen):
            for t in range(1, T):
                row = np.zeros(n_e)
                row[i * T + t] = 1.0
                row[i * T + t - 1] = -1.0
                em_ub_rows.append(row.copy())
                em_ub_rhs.append(ramp[i])
                em_ub_rows.append(-row)
                em_ub_rhs.append(ramp[i])
    em_ub = np.array(em_ub_rows).reshape(len(em_ub_rows), n_e)
    em_ub_rhs = np.array(em_ub_rhs, dtype=float)

    # dispatch <= cap * committed
    coup_e = np.zeros((n_gen * T, n_e))
    coup_uc = np.zeros((n_gen * T, n_gen))
    for i in range(n_gen):
        for t in range(T):
            coup_e[i * T + t, i * T + t] = -1.0
            coup_uc[i * T + t, i] = gen_cap[i]
    coup_rhs = np.zeros(n_gen * T)

    lb_e = np.concatenate([np.zeros(n_gen * T), -np.repeat(line_cap, T)])
    ub_e = np.concatenate([np.repeat(gen_cap, T), np.repeat(line_cap, T)])

    # --- gas network: random tree plus one chord --------------------------
    g_edges = _spanning_edges(n_gas_nodes, rng) if n_gas_nodes > 1 else []
    n_sites = max(1, int(round(n_gas_nodes / 3)))
    site_node = rng.choice(n_gas_nodes, size=n_sites, replace=False)
    # plants sit at supply hubs: their fuel price tracks the tier ladder
    # (total system load) rather than single-node fluctuations
    gfpp_gas_node = rng.choice(site_node, size=n_gfpp, replace=True)
    # several cost tiers per site plus one deep emergency tier: the marginal
    # price climbs a dense ladder under load and explodes (rather than the
    # market failing) when demand runs far past its normal range
    tiers = scale["supply_tiers"]
    n_sup = n_sites * (tiers + 1)
    sup_node = np.repeat(site_node, tiers + 1)
    site_base = rng.uniform(0.6, 1.0, size=(n_sites, 1))
    regular_cost = (site_base * np.linspace(1.0, 1.25, tiers)[None, :]
                    * rng.uniform(0.97, 1.03, size=(n_sites, tiers)))
    emergency_cost = site_base * rng.uniform(2.8, 3.8, size=(n_sites, 1))
    sup_cost = (np.hstack([regular_cost, emergency_cost])
                * scale["gas_price_ref"]).reshape(-1)

    demand_mask = rng.random(n_gas_nodes) < 0.9
    if not demand_mask.any():
        demand_mask[int(rng.integers(0, n_gas_nodes))] = True
    node_demand = np.where(demand_mask, rng.uniform(0.4, 1.0, size=n_gas_nodes), 0.0)
    node_demand *= scale["g_load"]
    demand = np.outer(node_demand, profile).reshape(-1)

    total_gas = float(demand.sum()) / T + scale["gfpp_gas_margin"]
    site_cap = rng.dirichlet(np.ones(n_sites) * 3.0) * total_gas * scale["g_sup_frac"]
    tier_split = rng.dirichlet(np.ones(tiers) * 2.0, size=n_sites)
    regular_cap = site_cap[:, None] * tier_split
    emergency_cap = np.full((n_sites, 1), scale["g_emergency_frac"] * total_gas / n_sites)
    sup_cap = np.hstack([regular_cap, emergency_cap]).reshape(-1)
    pipe_cap = rng.uniform(0.55, 0.9, size=len(g_edges)) * total_gas

    n_g = n_sup * T + len(g_edges) * T
    c_g = np.concatenate([np.repeat(sup_cost, T), np.zeros(len(g_edges) * T)])
    gm_bal = np.zeros((n_gas_nodes * T, n_g))
    for k in range(n_sup):
        for t in range(T):
            gm_bal[sup_node[k] * T + t, k * T + t] = 1.0
    if g_edges:
        gm_bal[:, n_sup * T:] = _incidence(n_gas_nodes, g_edges, T)
    gm_from_e = np.zeros((n_gas_nodes * T, n_e))
    for j in range(n_gfpp):
        for t in range(T):
            gm_from_e[gfpp_gas_node[j] * T + t, j * T + t] = -heat_rate[j]
    lb_g = np.concatenate([np.zeros(n_sup * T), -np.repeat(pipe_cap, T)])
    ub_g = np.concatenate([np.repeat(sup_cap, T), np.repeat(pipe_cap, T)])

    # --- leader rows -------------------------------------------------------
    # reserve: committed capacity covers peak electricity demand with margin
    peak = float(demand_e.reshape(n_buses, T).sum(axis=0).max())
    uc_mat = gen_cap.reshape(1, n_gen)
    uc_rhs = np.array([scale["reserve"] * peak])
    c_uc = gen_cap * rng.uniform(3.0, 7.0, size=n_gen)

    # bid validity: a committed gas plant's fuel price may not exceed its bid.
    # The bid clears every regular tier of the plant's own hub with margin but
    # never its emergency tier, so commitments flip exactly when prices leave
    # the normal operating band.
    bid_margin = rng.uniform(*scale["bid_margin"], size=n_gfpp)
    # imports price a hub at the remote marginal, so the margin is taken over
    # the most expensive regular tier anywhere in the system
    top_regular = float(np.max(regular_cost)) * scale["gas_price_ref"]
    big_bid = 10.0 * float(np.max(heat_rate) * np.max(sup_cost) + np.max(gen_cost))
    bid_uc = np.zeros((n_gfpp * T, n_gen))
    bid_y = np.zeros((n_gfpp * T, n_gas_nodes * T))
    bid_rhs = np.zeros(n_gfpp * T)
    for j in range(n_gfpp):
        p_bid = heat_rate[j] * top_regular * bid_margin[j]
        for t in range(T):
            r = j * T + t
            bid_uc[r, j] = -big_bid
            bid_y[r, gfpp_gas_node[j] * T + t] = -heat_rate[j]
            bid_rhs[r] = -big_bid - p_bid

    return MarketInstance(
        n_gen=n_gen, n_gfpp=n_gfpp, n_buses=n_buses, n_gas_nodes=n_gas_nodes,
        n_periods=T, stress_e=1.0, stress_g=1.0, seed=seed,
        c_uc=c_uc, uc_mat=uc_mat, uc_rhs=uc_rhs,
        bid_uc=bid_uc, bid_y=bid_y, bid_rhs=bid_rhs,
        c_e=c_e, em_eq=em_eq, em_eq_rhs=em_eq_rhs, em_ub=em_ub, em_ub_rhs=em_ub_rhs,
        coup_e=coup_e, coup_uc=coup_uc, coup_rhs=coup_rhs, lb_e=lb_e, ub_e=ub_e,
        c_g=c_g, gm_bal=gm_bal, gm_from_e=gm_from_e, lb_g=lb_g, ub_g=ub_g,
        sensitive_demand=demand,
    )


DEFAULT_SCALE = {
    "e_cap": 1.0,           # generator size multiplier
    "e_load_frac": 0.8,     # electricity demand over gas-free capacity at stress 1
    "g_load": 250.0,        # nodal gas demand magnitude (MWh)
    "g_sup_frac": 1.45,     # regular supply capacity over base total demand
    "g_emergency_frac": 0.8,  # emergency tier depth over base total demand
    "gfpp_gas_margin": 350.0,
    "gas_price_ref": 30.0,  # $/MWh reference for supply tiers and fuel costs
    "supply_tiers": 2,      # regular cost tiers per site (plus the emergency tier)
    "reserve": 1.05,        # committed capacity over peak demand
    "bid_margin": (1.3, 3.3),   # bid spread over the top regular price
}


def _scale_demands(inst: MarketInstance, stress_e: float, stress_g: float) -> MarketInstance:
    demand_e = inst.em_eq_rhs * stress_e
    peak_row = inst.uc_rhs * stress_e
    return replace(inst, stress_e=stress_e, stress_g=stress_g,
                   em_eq_rhs=demand_e, uc_rhs=peak_row,
                   sensitive_demand=inst.sensitive_demand * stress_g)


def _repair(inst: MarketInstance, max_rounds: int = 20) -> MarketInstance:
    """Scale capacities up until the stress-(1,1) game clears."""
    for _ in range(max_rounds):
        try:
            solve_full_stackelberg(inst.public(), inst.sensitive_demand)
            return inst
        except StackelbergInfeasible:
            pass
        inst = replace(
            inst,
            ub_g=inst.ub_g * 1.3,
            lb_g=np.where(np.isfinite(inst.lb_g) & (inst.lb_g < 0), inst.lb_g * 1.3, inst.lb_g),
            ub_e=inst.ub_e * 1.15,
            lb_e=np.where(inst.lb_e < 0, inst.lb_e * 1.15, inst.lb_e),
            coup_uc=inst.coup_uc * 1.15,
            bid_rhs=inst.bid_rhs - 0.1 * np.abs(inst.bid_rhs),
        )
    raise GenerationFailed(f"repair loop exceeded {max_rounds} rounds (seed {inst.seed})")


def generate_instance(n_gen: int, n_gfpp: int, n_gas_nodes: int, n_periods: int,
                      stress_e: float, stress_g: float, seed: int,
                      *, n_buses: int = 3, scale: dict | None = None) -> MarketInstance:
    """Deterministic synthetic instance, feasible at stress (1, 1).

    Stress factors scale the electricity and gas demand profiles of the
    repaired base instance; feasibility away from (1, 1) is not guaranteed.
    """
    if min(n_gen, n_gfpp, n_gas_nodes, n_periods, n_buses) < 1:
        raise ValueError("all counts must be >= 1")
    if n_gfpp > n_gen:
        raise ValueError("n_gfpp cannot exceed n_gen")
    if stress_e < 0 or stress_g < 0:
        raise ValueError("stress factors must be nonnegative")
    s = dict(DEFAULT_SCALE)
    if scale:
        s.update(scale)
    base = _build_base(n_gen, n_gfpp, n_gas_nodes, n_periods, n_buses, seed, s)
    base = _repair(base)
    return _scale_demands(base, stress_e, stress_g)


def instances_equal(a: MarketInstance, b: MarketInstance) -> bool:
    for f in fields(MarketInstance):
        va, vb = getattr(a, f.name), getattr(b, f.name)
        if isinstance(va, np.ndarray):
            if not np.array_equal(va, vb):
                return False
        elif va != vb:
            return False
    return True


_SCALARS = ("n_gen", "n_gfpp", "n_buses", "n_gas_nodes", "n_periods", "seed")
_FLOATS = ("stress_e", "stress_g")
_VECTORS = ("c_uc", "uc_rhs", "bid_rhs", "c_e", "em_eq_rhs", "em_ub_rhs",
            "coup_rhs", "lb_e", "ub_e", "c_g", "lb_g", "ub_g", "sensitive_demand")
_MATRICES = ("uc_mat", "bid_uc", "bid_y", "em_eq", "em_ub", "coup_e", "coup_uc",
             "gm_bal", "gm_from_e")


def instance_to_doc(inst: MarketInstance) -> Doc:
    doc = Doc()
    doc.set_str("kind", "market-instance")
    for k in _SCALARS:
        doc.set_int(k, getattr(inst, k))
    for k in _FLOATS:
        doc.set_float(k, getattr(inst, k))
    for k in _VECTORS:
        doc.set_vec(k, getattr(inst, k))
    for k in _MATRICES:
        doc.set_mat(k, getattr(inst, k))
    return doc


def instance_from_doc(doc: Doc) -> MarketInstance:
    if doc.get_str("kind") != "market-instance":
        raise ValueError("not a market-instance document")
    kwargs = {}
    for k in _SCALARS:
        kwargs[k] = doc.get_int(k)
    for k in _FLOATS:
        kwargs[k] = doc.get_float(k)
    for k in _VECTORS:
        kwargs[k] = doc.get_vec(k)
    for k in _MATRICES:
        kwargs[k] = doc.get_mat(k)
    return MarketInstance(**kwargs)
