"""Empirical verification of the two restoration error bounds.

Bound 1 (restoration error): whenever the true demand satisfies the
fidelity bands, the projected release lands within twice the noise radius
of the truth.

Bound 2 (cost of privacy): with accurate estimates and a convex
(relaxed-commitment) leader, the leader objective moves by at most
eta_d * ||B' y_leader||_1, where y_leader prices the bid-validity rows.

Run: python demos/03_error_bounds.py
"""

import numpy as np

from ppsm import (
    EmCache,
    MechanismError,
    PpsmConfig,
    PredictorConfig,
    PrivacyParams,
    Variant,
    check_theorem4,
    check_theorem5,
    generate_instance,
    run_mechanism,
)

print("=== restoration-error bound, 20 noisy runs ===")
held = checked = 0
for seed in range(20):
    inst = generate_instance(5, 2, 5, 1, 1.0, 1.0, seed=100 + seed)
    cache = EmCache(inst.public())
    cfg = PpsmConfig(privacy=PrivacyParams(60.0),
                     predictor=PredictorConfig(0.10, seed),
                     variant=Variant.PPSM, seed=seed)
    try:
        _, trace = run_mechanism(inst, cfg, cache)
    except MechanismError:
        continue
    rep = check_theorem4(inst, trace, cache)
    tag = "premise holds" if rep.premise_feasible else "premise idle "
    print(f"seed {seed:2d}: {tag}  ||d^-d|| = {rep.lhs:8.2f}  2||d~-d|| = {rep.rhs:8.2f}")
    if rep.premise_feasible:
        checked += 1
        held += rep.triangle_holds
print(f"bound held on {held}/{checked} premise-holding runs")

print("\n=== cost-of-privacy bound, noise-free runs ===")
for seed in range(8):
    inst = generate_instance(5, 2, 5, 1, 1.05, 1.1, seed=300 + seed)
    cfg = PpsmConfig(privacy=PrivacyParams(40.0),
                     predictor=PredictorConfig(0.0, seed),
                     variant=Variant.PPSM, eta_p_pct=5.0, eta_d_pct=5.0, seed=seed)
    rep = check_theorem5(inst, cfg)
    if not rep.applicable:
        print(f"seed {seed}: not applicable ({rep.reason})")
        continue
    print(f"seed {seed}: |dO_leader| = {rep.lhs:10.4f} <= bound {rep.rhs:10.4f}"
          f"  -> {'OK' if rep.holds else 'VIOLATED'}")
