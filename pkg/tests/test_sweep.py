"""Sweep harness: determinism, aggregation, heatmaps, CLI wiring."""

import os

import numpy as np
import pytest

from ppsm.cli import main as cli_main
from ppsm.fidelity import Variant
from ppsm.markets import EmCache, generate_instance, solve_full_stackelberg
from ppsm.mechanism import PpsmConfig, RunRecord, evaluate, run_mechanism
from ppsm.predictors import PredictorConfig
from ppsm.privacy import PrivacyParams
from ppsm.serialize import Doc
from ppsm.sweep import (
    InstanceDims,
    SweepSpec,
    derive_seed,
    heatmap_data,
    records_from_csv,
    records_to_csv,
    run_sweep,
    spec_from_doc,
    spec_to_doc,
    summarize,
    summary_to_csv,
    summary_to_text,
)

TINY = SweepSpec(
    alpha_list=(40.0,),
    eta_list=(25.0,),
    stress_e_list=(1.0,),
    stress_g_list=(1.0,),
    variants=("laplace", "ppsm"),
    repetitions=2,
    base_seed=7,
    dims=InstanceDims(n_gen=4, n_gfpp=2, n_gas_nodes=4, n_periods=1, n_buses=2),
)


def test_single_cell_sweep_matches_direct_run():
    records = run_sweep(TINY)
    assert len(records) == 4  # 2 variants x 2 repetitions
    r = next(r for r in records if r.variant == "laplace")
    d = TINY.dims
    inst_seed = derive_seed(TINY.base_seed, "instance", 0)
    run_seed = derive_seed(TINY.base_seed, "laplace", 40.0, 25.0, 1.0, 1.0, 0)
    assert {rec.seed for rec in records if rec.variant == "laplace"} >= {run_seed}
    inst = generate_instance(d.n_gen, d.n_gfpp, d.n_gas_nodes, d.n_periods,
                             1.0, 1.0, inst_seed, n_buses=d.n_buses)
    cache = EmCache(inst.public())
    cfg = PpsmConfig(privacy=PrivacyParams(40.0), eta_p_pct=25.0, eta_d_pct=25.0,
                     predictor=PredictorConfig(0.10, run_seed),
                     variant=Variant.LAPLACE, seed=run_seed)
    d_release, _ = run_mechanism(inst, cfg, cache)
    direct = evaluate(inst, d_release, em_cache=cache,
                      meta=dict(variant="laplace", alpha=40.0, eta=25.0, seed=run_seed))
    mine = next(rec for rec in records if rec.seed == run_seed)
    assert mine.satisfied == direct.satisfied
    if mine.satisfied:
        assert mine.l1_demand_error == direct.l1_demand_error
        assert mine.delta_o_uc_pct == direct.delta_o_uc_pct


def test_rerun_is_byte_identical(tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    run_sweep(TINY, out_dir=str(out_a))
    run_sweep(TINY, out_dir=str(out_b), workers=2)
    text_a = (out_a / "results.csv").read_text()
    text_b = (out_b / "results.csv").read_text()
    assert text_a == text_b


def test_records_csv_roundtrip(tmp_path):
    records = run_sweep(TINY)
    text = records_to_csv(records)
    back = records_from_csv(text)
    assert records_to_csv(back) == text


def _hand_records():
    def rec(variant, alpha, satisfied, duc, se=1.0, sg=1.0, baseline=True):
        return RunRecord(variant=variant, alpha=alpha, eta=1.0, stress_e=se,
                         stress_g=sg, seed=0, satisfied=satisfied, timeout=False,
                         baseline_feasible=baseline,
                         l1_demand_error=10.0 if satisfied else np.nan,
                         delta_o_uc_pct=duc if satisfied else np.nan,
                         delta_o_e_pct=2 * duc if satisfied else np.nan,
                         delta_o_g_pct=3 * duc if satisfied else np.nan,
                         thm4_premise=False, thm4_lhs=np.nan, thm4_rhs=np.nan,
                         thm4_holds=False, thm5_applicable=False, thm5_lhs=np.nan,
                         thm5_rhs=np.nan, thm5_holds=False, failure_step="",
                         wall_time=0.0)

    return [
        rec("laplace", 1.0, True, 4.0),
        rec("laplace", 1.0, False, np.nan),
        rec("laplace", 1.0, True, 8.0),
        rec("laplace", 1.0, False, np.nan, baseline=False),  # skipped
    ]


def test_summarize_hand_aggregation():
    table = summarize(_hand_records(), group_by="alpha")
    row = table.rows[0]
    assert row.n_runs == 3          # the skipped record leaves the denominator
    assert row.n_skipped == 1
    assert row.sat_pct == pytest.approx(100.0 * 2 / 3)
    assert row.mean_delta_uc == pytest.approx(6.0)
    assert row.mean_delta_e == pytest.approx(12.0)
    assert row.mean_l1 == pytest.approx(10.0)
    text = summary_to_text(table)
    assert "laplace" in text
    csv = summary_to_csv(table)
    assert csv.startswith("# ppsm-summary 1")


def test_summarize_all_zero_records():
    recs = [r for r in _hand_records() if r.satisfied]
    for r in recs:
        object.__setattr__(r, "delta_o_uc_pct", 0.0)
    table = summarize(recs)
    assert table.rows[0].sat_pct == 100.0
    assert table.rows[0].mean_delta_uc == 0.0


def test_summarize_rejects_empty():
    with pytest.raises(ValueError):
        summarize([])


def test_heatmap_single_cell_equals_summary():
    records = [r for r in _hand_records() if r.baseline_feasible]
    grids = heatmap_data(records, "delta_o_uc_pct")
    (se, sg, grid, n_sat, n_tot) = grids[("laplace", 1.0)]
    assert grid.shape == (1, 1)
    assert grid[0, 0] == pytest.approx(6.0)
    assert n_sat[0, 0] == 2 and n_tot[0, 0] == 3


def test_heatmap_flags_all_infeasible_cell():
    records = [r for r in _hand_records() if not r.satisfied and r.baseline_feasible]
    grids = heatmap_data(records, "delta_o_uc_pct")
    (_, _, grid, n_sat, n_tot) = grids[("laplace", 1.0)]
    assert np.isnan(grid[0, 0])
    assert n_sat[0, 0] == 0 and n_tot[0, 0] == 1


def test_heatmap_unknown_metric():
    with pytest.raises(ValueError):
        heatmap_data(_hand_records(), "not_a_metric")


def test_spec_doc_roundtrip():
    doc = spec_to_doc(TINY)
    back = spec_from_doc(Doc.loads(doc.dumps()))
    assert back == TINY


def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(alpha_list=())
    with pytest.raises(ValueError):
        SweepSpec(repetitions=0)
    with pytest.raises(ValueError):
        SweepSpec(variants=("nonsense",))


def test_cli_end_to_end(tmp_path):
    spec_path = tmp_path / "spec.txt"
    spec_to_doc(TINY).dump(spec_path)
    out = tmp_path / "out"
    assert cli_main(["sweep", "--spec", str(spec_path), "--out", str(out),
                     "--threads", "1", "--quiet"]) == 0
    assert (out / "results.csv").exists()
    assert cli_main(["summarize", "--in", str(out), "--by", "alpha"]) == 0
    assert (out / "summary_by_alpha.csv").exists()
    assert cli_main(["heatmap", "--in", str(out), "--metric", "delta_o_uc_pct"]) == 0
    assert any(p.name.startswith("heatmap_") for p in out.iterdir())
    assert cli_main(["verify", "--in", str(out)]) == 0


def test_cli_write_spec(tmp_path):
    path = tmp_path / "default_spec.txt"
    assert cli_main(["write-spec", "--out", str(path)]) == 0
    spec = spec_from_doc(Doc.load(path))
    assert spec.repetitions == 30
