"""Reproducible experiment sweeps over privacy, fidelity and stress grids.

Seeds derive from a stable hash of the cell coordinates, so results are
identical no matter how work is scheduled. The same market instance (one
per repetition) is stressed across every grid cell, mirroring a fixed
system under varying operating conditions, and every mechanism variant
sees the same instances.

Results files are deterministic: records are sorted before writing,
floats carry full precision, and wall-clock timings go to a separate
sidecar file so the main results are byte-stable across reruns.
"""

from __future__ import annotations

import hashlib
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .fidelity import FidelitySolveConfig, Variant
from .markets import (
    EmCache,
    GenerationFailed,
    StackelbergInfeasible,
    generate_instance,
    solve_full_stackelberg,
)
from .mechanism import (
    MechanismError,
    PpsmConfig,
    RunRecord,
    check_theorem4,
    evaluate,
    run_mechanism,
)
from .predictors import PredictorConfig
from .privacy import PrivacyParams
from .serialize import Doc

RESULTS_SCHEMA = "ppsm-results 1"
RESULTS_COLUMNS = (
    "variant", "alpha", "eta", "stress_e", "stress_g", "seed",
    "satisfied", "timeout", "baseline_feasible",
    "l1_demand_error", "delta_o_uc_pct", "delta_o_e_pct", "delta_o_g_pct",
    "thm4_premise", "thm4_lhs", "thm4_rhs", "thm4_holds",
    "thm5_applicable", "thm5_lhs", "thm5_rhs", "thm5_holds",
    "failure_step",
)


@dataclass(frozen=True)
class InstanceDims:
    n_gen: int = 6
    n_gfpp: int = 3
    n_gas_nodes: int = 6
    n_periods: int = 1
    n_buses: int = 3


@dataclass(frozen=True)
class SweepSpec:
    alpha_list: tuple = (50.0, 250.0, 800.0)
    eta_list: tuple = (25.0,)
    stress_e_list: tuple = (0.95, 1.1, 1.25, 1.4)
    stress_g_list: tuple = (0.85, 1.1, 1.35, 1.6)
    variants: tuple = ("laplace", "ppsm_p", "ppsm")
    repetitions: int = 30
    base_seed: int = 20240

    dims: InstanceDims = field(default_factory=InstanceDims)
    noise_fraction: float = 0.10
    fidelity_node_limit: int = 50_000
    fidelity_time_limit: float = 60.0

    def __post_init__(self):
        for name in ("alpha_list", "eta_list", "stress_e_list", "stress_g_list", "variants"):
            if not len(getattr(self, name)):
                raise ValueError(f"{name} must be nonempty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        for v in self.variants:
            Variant(v)  # validates


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from heterogeneous parts (order-sensitive)."""
    text = "|".join("%.17g" % p if isinstance(p, float) else str(p) for p in parts)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def spec_to_doc(spec: SweepSpec) -> Doc:
    doc = Doc()
    doc.set_str("kind", "sweep-spec")
    doc.set_vec("alpha_list", spec.alpha_list)
    doc.set_vec("eta_list", spec.eta_list)
    doc.set_vec("stress_e_list", spec.stress_e_list)
    doc.set_vec("stress_g_list", spec.stress_g_list)
    doc.set_str("variants", ",".join(spec.variants))
    doc.set_int("repetitions", spec.repetitions)
    doc.set_int("base_seed", spec.base_seed)
    for f in fields(InstanceDims):
        doc.set_int(f"dims.{f.name}", getattr(spec.dims, f.name))
    doc.set_float("noise_fraction", spec.noise_fraction)
    doc.set_int("fidelity_node_limit", spec.fidelity_node_limit)
    doc.set_float("fidelity_time_limit", spec.fidelity_time_limit)
    return doc


def spec_from_doc(doc: Doc) -> SweepSpec:
    if doc.get_str("kind") != "sweep-spec":
        raise ValueError("not a sweep-spec document")
    dims = InstanceDims(**{f.name: doc.get_int(f"dims.{f.name}") for f in fields(InstanceDims)})
    return SweepSpec(
        alpha_list=tuple(doc.get_vec("alpha_list")),
        eta_list=tuple(doc.get_vec("eta_list")),
        stress_e_list=tuple(doc.get_vec("stress_e_list")),
        stress_g_list=tuple(doc.get_vec("stress_g_list")),
        variants=tuple(doc.get_str("variants").split(",")),
        repetitions=doc.get_int("repetitions"),
        base_seed=doc.get_int("base_seed"),
        dims=dims,
        noise_fraction=doc.get_float("noise_fraction"),
        fidelity_node_limit=doc.get_int("fidelity_node_limit"),
        fidelity_time_limit=doc.get_float("fidelity_time_limit"),
    )


def _unit_records(spec: SweepSpec, stress_e: float, stress_g: float, rep: int) -> list[RunRecord]:
    """All runs sharing one (instance, baseline): every variant, alpha, eta."""
    d = spec.dims
    inst_seed = derive_seed(spec.base_seed, "instance", rep)
    records = []
    try:
        inst = generate_instance(d.n_gen, d.n_gfpp, d.n_gas_nodes, d.n_periods,
                                 stress_e, stress_g, inst_seed, n_buses=d.n_buses)
    except GenerationFailed:
        inst = None
    cache = EmCache(inst.public()) if inst is not None else None
    baseline = None
    if inst is not None:
        try:
            baseline = solve_full_stackelberg(inst.public(), inst.sensitive_demand, cache)
        except StackelbergInfeasible:
            baseline = None

    for variant in spec.variants:
        for alpha in spec.alpha_list:
            for eta in spec.eta_list:
                run_seed = derive_seed(spec.base_seed, variant, float(alpha), float(eta),
                                       float(stress_e), float(stress_g), rep)
                meta = dict(variant=variant, alpha=float(alpha), eta=float(eta), seed=run_seed)
                if inst is None:
                    meta["failure_step"] = "generation"
                    records.append(RunRecord(
                        variant=variant, alpha=float(alpha), eta=float(eta),
                        stress_e=stress_e, stress_g=stress_g, seed=run_seed,
                        satisfied=False, timeout=False, baseline_feasible=False,
                        l1_demand_error=np.nan, delta_o_uc_pct=np.nan,
                        delta_o_e_pct=np.nan, delta_o_g_pct=np.nan,
                        thm4_premise=False, thm4_lhs=np.nan, thm4_rhs=np.nan,
                        thm4_holds=False, thm5_applicable=False, thm5_lhs=np.nan,
                        thm5_rhs=np.nan, thm5_holds=False,
                        failure_step="generation", wall_time=np.nan))
                    continue
                cfg = PpsmConfig(
                    privacy=PrivacyParams(alpha=float(alpha)),
                    eta_p_pct=float(eta), eta_d_pct=float(eta),
                    predictor=PredictorConfig(spec.noise_fraction, run_seed),
                    variant=Variant(variant),
                    fidelity=FidelitySolveConfig(node_limit=spec.fidelity_node_limit,
                                                 time_limit=spec.fidelity_time_limit),
                    seed=run_seed,
                )
                t0 = time.monotonic()
                trace = None
                try:
                    d_release, trace = run_mechanism(inst, cfg, cache)
                except MechanismError as err:
                    d_release = None
                    meta["failure_step"] = err.step
                    meta["timeout"] = err.timeout
                if trace is not None and trace.d_release is not None \
                        and cfg.variant is not Variant.LAPLACE:
                    rep4 = check_theorem4(inst, trace, cache)
                    meta.update(thm4_premise=rep4.premise_feasible, thm4_lhs=rep4.lhs,
                                thm4_rhs=rep4.rhs, thm4_holds=rep4.triangle_holds)
                meta["wall_time"] = time.monotonic() - t0
                records.append(evaluate(inst, d_release, baseline, cache, meta))
    return records


def _sort_key(r: RunRecord):
    return (r.variant, r.alpha, r.eta, r.stress_e, r.stress_g, r.seed)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def records_to_csv(records: list[RunRecord]) -> str:
    lines = ["# " + RESULTS_SCHEMA, ",".join(RESULTS_COLUMNS)]
    for r in records:
        lines.append(",".join(_fmt(getattr(r, c)) for c in RESULTS_COLUMNS))
    return "\n".join(lines) + "\n"


def records_from_csv(text: str) -> list[RunRecord]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "# " + RESULTS_SCHEMA:
        raise ValueError(f"missing {RESULTS_SCHEMA!r} header")
    header = lines[1].split(",")
    if tuple(header) != RESULTS_COLUMNS:
        raise ValueError("unexpected column layout")
    out = []
    bool_cols = {"satisfied", "timeout", "baseline_feasible", "thm4_premise",
                 "thm4_holds", "thm5_applicable", "thm5_holds"}
    int_cols = {"seed"}
    str_cols = {"variant", "failure_step"}
    for ln in lines[2:]:
        vals = ln.split(",")
        kwargs = {}
        for col, raw in zip(RESULTS_COLUMNS, vals):
            if col in str_cols:
                kwargs[col] = raw
            elif col in bool_cols:
                kwargs[col] = raw == "1"
            elif col in int_cols:
                kwargs[col] = int(raw)
            else:
                kwargs[col] = float(raw)
        kwargs["wall_time"] = np.nan
        out.append(RunRecord(**kwargs))
    return out


def run_sweep(spec: SweepSpec, out_dir: str | None = None, workers: int = 1,
              progress=None) -> list[RunRecord]:
    """Execute the whole grid; per-run failures are recorded, never raised.

    Returns records sorted by (variant, alpha, eta, stress_e, stress_g,
    seed); writes results.csv, timings.csv and the spec into ``out_dir``.
    """
    units = [(se, sg, rep)
             for se in spec.stress_e_list
             for sg in spec.stress_g_list
             for rep in range(spec.repetitions)]
    records: list[RunRecord] = []
    if workers <= 1:
        for k, (se, sg, rep) in enumerate(units):
            records.extend(_unit_records(spec, se, sg, rep))
            if progress:
                progress(k + 1, len(units))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_unit_records, spec, se, sg, rep)
                       for se, sg, rep in units]
            for k, fut in enumerate(futures):
                records.extend(fut.result())
                if progress:
                    progress(k + 1, len(units))
    records.sort(key=_sort_key)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "results.csv"), "a") as fh:
            fh.write(records_to_csv(records))
        with open(os.path.join(out_dir, "timings.csv"), "w") as fh:
            fh.write("variant,alpha,eta,stress_e,stress_g,seed,wall_time\n")
            for r in records:
                fh.write(",".join(_fmt(v) for v in (
                    r.variant, r.alpha, r.eta, r.stress_e, r.stress_g, r.seed,
                    r.wall_time)) + "\n")
        spec_to_doc(spec).dump(os.path.join(out_dir, "spec.txt"))
    return records


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class SummaryRow:
    variant: str
    key: float              # alpha or eta
    n_runs: int
    n_skipped: int          # baseline-infeasible or generation failures
    sat_pct: float
    mean_l1: float
    mean_delta_uc: float
    mean_delta_e: float
    mean_delta_g: float


@dataclass(frozen=True)
class SummaryTable:
    group_by: str
    rows: tuple


def summarize(records: list[RunRecord], group_by: str = "alpha") -> SummaryTable:
    """Per-(variant, alpha|eta) satisfaction and mean errors.

    Skipped instances (no feasible baseline) leave both the satisfaction
    denominator and the error means; error means run over satisfied runs
    only.
    """
    if group_by not in ("alpha", "eta"):
        raise ValueError("group_by must be 'alpha' or 'eta'")
    if not records:
        raise ValueError("no records to summarize")
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.variant, getattr(r, group_by)), []).append(r)
    rows = []
    for (variant, key), rs in sorted(groups.items()):
        counted = [r for r in rs if r.baseline_feasible]
        skipped = len(rs) - len(counted)
        sat = [r for r in counted if r.satisfied]
        if not counted:
            continue  # whole group skipped: omitted with a warning upstream

        def mean_over_sat(attr):
            vals = [getattr(r, attr) for r in sat]
            return float(np.mean(vals)) if vals else np.nan

        rows.append(SummaryRow(
            variant=variant, key=float(key), n_runs=len(counted), n_skipped=skipped,
            sat_pct=100.0 * len(sat) / len(counted),
            mean_l1=mean_over_sat("l1_demand_error"),
            mean_delta_uc=mean_over_sat("delta_o_uc_pct"),
            mean_delta_e=mean_over_sat("delta_o_e_pct"),
            mean_delta_g=mean_over_sat("delta_o_g_pct"),
        ))
    return SummaryTable(group_by=group_by, rows=tuple(rows))


def summary_to_text(table: SummaryTable) -> str:
    head = (f"{'variant':10s} {table.group_by:>8s} {'sat(%)':>8s} {'dD_L1':>12s} "
            f"{'dO_uc(%)':>10s} {'dO_e(%)':>10s} {'dO_g(%)':>10s} {'skipped':>8s}")
    lines = [head, "-" * len(head)]
    for r in table.rows:
        lines.append(f"{r.variant:10s} {r.key:8.3g} {r.sat_pct:8.2f} {r.mean_l1:12.4g} "
                     f"{r.mean_delta_uc:10.4g} {r.mean_delta_e:10.4g} "
                     f"{r.mean_delta_g:10.4g} {r.n_skipped:8d}")
    return "\n".join(lines) + "\n"


def summary_to_csv(table: SummaryTable) -> str:
    lines = ["# ppsm-summary 1",
             f"variant,{table.group_by},n_runs,n_skipped,sat_pct,mean_l1,"
             "mean_delta_uc,mean_delta_e,mean_delta_g"]
    for r in table.rows:
        lines.append(",".join(_fmt(v) for v in (
            r.variant, r.key, r.n_runs, r.n_skipped, r.sat_pct, r.mean_l1,
            r.mean_delta_uc, r.mean_delta_e, r.mean_delta_g)))
    return "\n".join(lines) + "\n"


def heatmap_data(records: list[RunRecord], metric: str):
    """Stress-grid means of one RunRecord metric per (variant, alpha).

    Returns {(variant, alpha): (stress_e_axis, stress_g_axis, mean_grid,
    satisfied_counts, total_counts)}; cells with zero satisfied runs carry
    NaN as the flag value.
    """
    numeric = {"l1_demand_error", "delta_o_uc_pct", "delta_o_e_pct",
               "delta_o_g_pct", "thm4_lhs", "thm4_rhs", "wall_time"}
    if metric not in numeric:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(numeric)}")
    se_axis = sorted({r.stress_e for r in records})
    sg_axis = sorted({r.stress_g for r in records})
    out = {}
    for key in sorted({(r.variant, r.alpha) for r in records}):
        variant, alpha = key
        grid = np.full((len(se_axis), len(sg_axis)), np.nan)
        n_sat = np.zeros_like(grid, dtype=int)
        n_tot = np.zeros_like(grid, dtype=int)
        for i, se in enumerate(se_axis):
            for j, sg in enumerate(sg_axis):
                cell = [r for r in records
                        if r.variant == variant and r.alpha == alpha
                        and r.stress_e == se and r.stress_g == sg]
                n_tot[i, j] = len(cell)
                vals = [getattr(r, metric) for r in cell if r.satisfied]
                n_sat[i, j] = len(vals)
                if vals:
                    grid[i, j] = float(np.mean(vals))
        out[key] = (np.array(se_axis), np.array(sg_axis), grid, n_sat, n_tot)
    return out


def heatmap_to_doc(variant: str, alpha: float, metric: str, data) -> Doc:
    se_axis, sg_axis, grid, n_sat, n_tot = data
    doc = Doc()
    doc.set_str("kind", "heatmap")
    doc.set_str("variant", variant)
    doc.set_float("alpha", alpha)
    doc.set_str("metric", metric)
    doc.set_str("flag", "nan marks cells with zero satisfied runs")
    doc.set_vec("stress_e_axis", se_axis)
    doc.set_vec("stress_g_axis", sg_axis)
    doc.set_mat("mean", grid)
    doc.set_mat("n_satisfied", n_sat.astype(float))
    doc.set_mat("n_total", n_tot.astype(float))
    return doc
