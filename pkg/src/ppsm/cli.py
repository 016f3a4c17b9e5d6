"""Command-line harness: sweeps, summary tables, heatmap grids, verification.

Exit code 0 means every invariant assertion held; 1 signals a violated
invariant or bad input.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .serialize import Doc
from .sweep import (
    SweepSpec,
    heatmap_data,
    heatmap_to_doc,
    records_from_csv,
    run_sweep,
    spec_from_doc,
    spec_to_doc,
    summarize,
    summary_to_csv,
    summary_to_text,
)


def _load_records(in_dir: str):
    path = os.path.join(in_dir, "results.csv")
    with open(path) as fh:
        return records_from_csv(fh.read())


def _cmd_sweep(args) -> int:
    if args.spec:
        spec = spec_from_doc(Doc.load(args.spec))
    else:
        spec = SweepSpec()

    def progress(done, total):
        if args.quiet:
            return
        print(f"\r{done}/{total} work units", end="", file=sys.stderr, flush=True)

    records = run_sweep(spec, out_dir=args.out, workers=args.threads, progress=progress)
    if not args.quiet:
        print(file=sys.stderr)
    sat = sum(r.satisfied for r in records)
    print(f"{len(records)} runs, {sat} satisfied -> {args.out}/results.csv")
    return 0


def _cmd_summarize(args) -> int:
    records = _load_records(args.in_dir)
    table = summarize(records, group_by=args.by)
    print(summary_to_text(table), end="")
    out_path = os.path.join(args.in_dir, f"summary_by_{args.by}.csv")
    with open(out_path, "w") as fh:
        fh.write(summary_to_csv(table))
    print(f"written {out_path}")
    return 0


def _cmd_heatmap(args) -> int:
    records = _load_records(args.in_dir)
    grids = heatmap_data(records, args.metric)
    out_dir = args.out or args.in_dir
    os.makedirs(out_dir, exist_ok=True)
    for (variant, alpha), data in grids.items():
        name = f"heatmap_{args.metric}_{variant}_a{alpha:g}.txt"
        heatmap_to_doc(variant, alpha, args.metric, data).dump(os.path.join(out_dir, name))
        print(f"written {os.path.join(out_dir, name)}")
    return 0


def _cmd_verify(args) -> int:
    records = _load_records(args.in_dir)
    failures = []
    for r in records:
        where = f"{r.variant} a={r.alpha:g} eta={r.eta:g} ({r.stress_e:g},{r.stress_g:g}) seed={r.seed}"
        if r.thm4_premise and not r.thm4_holds:
            failures.append(f"theorem-4 bound violated: {where}")
        if r.thm4_premise and not (r.thm4_lhs <= r.thm4_rhs + 1e-6):
            failures.append(f"theorem-4 sides inconsistent: {where}")
        if r.thm5_applicable and not r.thm5_holds:
            failures.append(f"theorem-5 bound violated: {where}")
        if r.satisfied and not r.baseline_feasible:
            failures.append(f"satisfied run without baseline: {where}")
        if r.satisfied and not np.isfinite(r.delta_o_uc_pct):
            failures.append(f"satisfied run missing deltas: {where}")
        if not r.satisfied and np.isfinite(r.delta_o_uc_pct):
            failures.append(f"unsatisfied run carries deltas: {where}")
    # per-cell run counts must be uniform: repetitions per (variant, alpha, eta, cell)
    counts = {}
    for r in records:
        counts.setdefault((r.variant, r.alpha, r.eta, r.stress_e, r.stress_g), 0)
        counts[(r.variant, r.alpha, r.eta, r.stress_e, r.stress_g)] += 1
    if len(set(counts.values())) > 1:
        failures.append(f"uneven cell counts: {sorted(set(counts.values()))}")
    for f in failures[:50]:
        print("FAIL", f)
    print(f"{len(records)} records checked, {len(failures)} violations")
    return 1 if failures else 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppsm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sweep", help="run a parameter sweep")
    sp.add_argument("--spec", help="sweep-spec file (defaults to the built-in desk suite)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("summarize", help="aggregate a results directory")
    sp.add_argument("--in", dest="in_dir", required=True)
    sp.add_argument("--by", choices=("alpha", "eta"), default="alpha")
    sp.set_defaults(func=_cmd_summarize)

    sp = sub.add_parser("heatmap", help="emit stress-grid data files")
    sp.add_argument("--in", dest="in_dir", required=True)
    sp.add_argument("--metric", default="delta_o_uc_pct")
    sp.add_argument("--out", help="defaults to the input directory")
    sp.set_defaults(func=_cmd_heatmap)

    sp = sub.add_parser("verify", help="re-assert bound reports and accounting")
    sp.add_argument("--in", dest="in_dir", required=True)
    sp.set_defaults(func=_cmd_verify)

    sp = sub.add_parser("write-spec", help="write the default sweep spec to a file")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=lambda a: (spec_to_doc(SweepSpec()).dump(a.out), print(f"written {a.out}"))[1] or 0)

    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
