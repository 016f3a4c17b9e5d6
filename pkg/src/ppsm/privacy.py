"""Metric differential privacy for demand vectors: adjacency and Laplace noise.

Adjacency hides one coordinate's change up to magnitude alpha, so the
identity query has sensitivity alpha and the release adds i.i.d. Laplace
noise of scale alpha/epsilon. Noise is sampled by inverse CDF from a
PCG64 stream so a recorded integer seed reproduces the exact release on
any platform:

    u ~ U[0,1),  t = u - 1/2,  noise = -scale * sign(t) * log(1 - 2|t|)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PrivacyParams:
    """Indistinguishability radius alpha (MWh) and privacy loss epsilon."""

    alpha: float
    epsilon: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


@dataclass(frozen=True)
class ObfuscatedDemand:
    """Laplace release of a demand vector. May be negative: no clipping,
    plausibility is restored by the fidelity phase, never here."""

    values: np.ndarray
    params: PrivacyParams
    seed_record: int

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).reshape(-1))
        self.values.setflags(write=False)


def adjacent(d1, d2, alpha: float) -> bool:
    """True iff the vectors differ in at most one slot by at most alpha."""
    a = np.asarray(d1, dtype=float).reshape(-1)
    b = np.asarray(d2, dtype=float).reshape(-1)
    if a.size != b.size:
        raise ValueError("length mismatch")
    diff = np.abs(a - b)
    changed = np.flatnonzero(diff > 0)
    if changed.size == 0:
        return True
    return changed.size == 1 and diff[changed[0]] <= alpha


def identity_sensitivity(params: PrivacyParams) -> float:
    """Max L1 change of the identity query across adjacent vectors: alpha."""
    return params.alpha


def laplace_noise(n: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF Laplace(0, scale) draws; one uniform consumed per draw."""
    u = rng.random(n)
    t = u - 0.5
    # u == 0 occurs with probability 2^-53; clamp keeps log finite
    mag = np.maximum(1.0 - 2.0 * np.abs(t), np.finfo(float).tiny)
    return -scale * np.sign(t) * np.log(mag)


def obfuscate(demand, params: PrivacyParams, rng) -> ObfuscatedDemand:
    """Laplace release: demand + Lap(identity_sensitivity/epsilon)^n.

    ``rng`` is an integer seed (recorded for exact regeneration) or an
    existing Generator (recorded as -1).
    """
    demand = np.asarray(demand, dtype=float).reshape(-1)
    if isinstance(rng, (int, np.integer)):
        seed_record = int(rng)
        gen = np.random.default_rng(seed_record)
    else:
        seed_record = -1
        gen = rng
    scale = identity_sensitivity(params) / params.epsilon
    noise = laplace_noise(demand.size, scale, gen)
    return ObfuscatedDemand(demand + noise, params, seed_record)


def regenerate_noise(obf: ObfuscatedDemand) -> np.ndarray:
    """Replay the recorded stream: the exact noise vector added in obfuscate."""
    if obf.seed_record < 0:
        raise ValueError("release was made from an unseeded generator")
    gen = np.random.default_rng(obf.seed_record)
    scale = identity_sensitivity(obf.params) / obf.params.epsilon
    return laplace_noise(obf.values.size, scale, gen)
