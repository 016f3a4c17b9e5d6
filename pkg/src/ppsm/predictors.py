"""Forecast stand-ins: exact solves on the obfuscated release plus noise.

Both predictors see only public market data and the obfuscated demand, so
everything they emit inherits the release's privacy guarantee. Noise
follows the reference protocol: Normal with one shared standard deviation
equal to ``noise_fraction`` times the mean absolute dual (and times the
absolute objective for the objective estimate).

Fallbacks for releases that break the clearing chain are explicit and
deterministic: clip the release to the public supply-capacity box, then
fall back to the zero demand vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp import LpSolution
from .markets import (
    ChainInfeasible,
    EmCache,
    PublicMarketData,
    StackelbergInfeasible,
    solve_follower_chain,
    solve_full_stackelberg,
    solve_leader_given_duals,
)


class PredictionFailed(RuntimeError):
    """Leader-side oracle infeasible on the obfuscated data."""


@dataclass(frozen=True)
class PredictorConfig:
    noise_fraction: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if self.noise_fraction < 0:
            raise ValueError("noise_fraction must be >= 0")


@dataclass(frozen=True)
class FollowerEstimates:
    objective_estimate: float
    dual_estimates: np.ndarray
    fallback: str = "none"  # none | clipped | zeros


def _rng_for(cfg: PredictorConfig, rng) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(cfg.seed)


def _noisy_duals(y: np.ndarray, cfg: PredictorConfig, rng) -> np.ndarray:
    if cfg.noise_fraction == 0.0 or y.size == 0:
        return y.copy()
    sigma = cfg.noise_fraction * float(np.mean(np.abs(y)))
    return y + rng.normal(0.0, sigma, size=y.size) if sigma > 0 else y.copy()


def _clip_release(pub: PublicMarketData, values: np.ndarray) -> np.ndarray:
    """Plausibility projection from public network data: nonnegative, within
    per-node deliverability, and totalling at most half the system supply
    capacity (the comfortable operating range of the ladder)."""
    clipped = np.clip(values, 0.0, pub.deliverable_demand_cap())
    budget = 0.38 * pub.supply_capacity() * pub.n_periods
    total = float(clipped.sum())
    if total > budget > 0:
        clipped = clipped * (budget / total)
    return clipped


def predict_leader_view(pub: PublicMarketData, obf, cfg: PredictorConfig,
                        rng: np.random.Generator | None = None,
                        em_cache: EmCache | None = None) -> np.ndarray:
    """Estimate the gas prices the leader should anticipate, from public data
    and the release only. Raises PredictionFailed when the anticipated game
    has no solution on the obfuscated demand."""
    rng = _rng_for(cfg, rng)
    try:
        sol = solve_full_stackelberg(pub, obf.values, em_cache)
    except StackelbergInfeasible as err:
        raise PredictionFailed(str(err)) from err
    return _noisy_duals(sol.gas_prices, cfg, rng)


def fallback_leader_view(pub: PublicMarketData, obf, cfg: PredictorConfig,
                         rng: np.random.Generator | None = None,
                         em_cache: EmCache | None = None) -> np.ndarray:
    """Price estimate when the anticipated game fails: clear the follower
    chain under the unconstrained commitment (bid-validity rows dropped)."""
    rng = _rng_for(cfg, rng)
    x_uc, _ = solve_leader_given_duals(pub, np.zeros(pub.n_prices), include_bid_rows=False)
    for demand in (obf.values, _clip_release(pub, obf.values), np.zeros(pub.n_prices)):
        try:
            _, gm = solve_follower_chain(pub, x_uc, demand, em_cache)
        except ChainInfeasible:
            continue
        return _noisy_duals(gm.y_eq, cfg, rng)
    raise PredictionFailed("no fallback demand clears the chain")


def predict_follower_view(x_uc: np.ndarray, pub: PublicMarketData, obf,
                          cfg: PredictorConfig,
                          rng: np.random.Generator | None = None,
                          em_cache: EmCache | None = None) -> FollowerEstimates:
    """Estimate the follower objective and duals at the given commitment."""
    rng = _rng_for(cfg, rng)
    gm: LpSolution | None = None
    used = "none"
    for label, demand in (
        ("none", obf.values),
        ("clipped", _clip_release(pub, obf.values)),
        ("zeros", np.zeros(pub.n_prices)),
    ):
        try:
            _, gm = solve_follower_chain(pub, x_uc, demand, em_cache)
            used = label
            break
        except ChainInfeasible as err:
            if err.stage == "em":
                raise  # a broken commitment cannot be repaired by demand choice
    if gm is None:
        raise ChainInfeasible("gm")
    obj = float(gm.objective)
    if cfg.noise_fraction > 0 and obj != 0.0:
        obj += rng.normal(0.0, cfg.noise_fraction * abs(obj))
    return FollowerEstimates(obj, _noisy_duals(gm.y_eq, cfg, rng), used)
