"""Walk through one synthetic coupled-market instance.

Generates a desk-scale system, solves the exact leader problem by
commitment enumeration, and prints the resulting dispatch and gas prices.
Run: python demos/01_market_clearing.py
"""

import numpy as np

from ppsm import generate_instance, solve_follower_chain, solve_full_stackelberg

inst = generate_instance(n_gen=6, n_gfpp=3, n_gas_nodes=6, n_periods=1,
                         stress_e=1.1, stress_g=1.2, seed=7)
pub = inst.public()

print("=== instance ===")
print(f"generators: {inst.n_gen} ({inst.n_gfpp} gas-fired), buses: {inst.n_buses}, "
      f"gas nodes: {inst.n_gas_nodes}")
print("gas demand (MWh):", inst.sensitive_demand.round(1))
print("electricity demand (MWh):", inst.em_eq_rhs.round(1))

sol = solve_full_stackelberg(pub, inst.sensitive_demand)
print("\n=== exact leader optimum ===")
print("commitment:", sol.x_uc.astype(int))
print(f"leader objective: {sol.leader_objective:,.0f} $")
print(f"electricity dispatch cost: {sol.em_objective:,.0f} $")
print(f"gas dispatch cost: {sol.gm_objective:,.0f} $")
print("gas prices ($/MWh):", sol.gas_prices.round(2))

print("\n=== what-if: force every unit on ===")
em, gm = solve_follower_chain(pub, np.ones(inst.n_gen), inst.sensitive_demand)
print(f"dispatch cost: {em.objective:,.0f} $ (vs {sol.em_objective:,.0f} at the optimum)")
print("gas prices ($/MWh):", gm.y_eq.round(2))
