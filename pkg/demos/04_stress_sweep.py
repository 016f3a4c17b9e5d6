"""A small stress sweep with summary table and heatmap grids.

A 2x2 stress grid, two privacy levels, five repetitions: enough to see the
satisfaction gap and error ordering emerge without waiting for the full
desk suite. The same thing is available from the command line:

    ppsm write-spec --out spec.txt
    ppsm sweep --spec spec.txt --out runs/ --threads 4
    ppsm summarize --in runs/
    ppsm heatmap --in runs/ --metric delta_o_uc_pct

Run: python demos/04_stress_sweep.py
"""

import numpy as np

from ppsm import InstanceDims, SweepSpec, heatmap_data, run_sweep, summarize
from ppsm.sweep import summary_to_text

spec = SweepSpec(
    alpha_list=(50.0, 800.0),
    eta_list=(25.0,),
    stress_e_list=(1.0, 1.25),
    stress_g_list=(1.0, 1.4),
    variants=("laplace", "ppsm_p", "ppsm"),
    repetitions=5,
    base_seed=99,
    dims=InstanceDims(),
)

records = run_sweep(spec, workers=2)
print(summary_to_text(summarize(records, group_by="alpha")))

print("mean leader error (%) by stress cell, laplace at the largest alpha:")
grids = heatmap_data([r for r in records], "delta_o_uc_pct")
se, sg, grid, n_sat, n_tot = grids[("laplace", 800.0)]
print("stress_e \\ stress_g:", sg)
for i, row in enumerate(grid):
    cells = "  ".join("   gray" if not np.isfinite(v) else f"{v:7.2f}" for v in row)
    print(f"  {se[i]:4.2f}: {cells}")
print("(gray marks cells where no run produced a feasible clearing)")
