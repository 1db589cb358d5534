"""Pareto comparison reports over evaluation logs.

Per method: average normalized cost violation and average tracking error.
Per target velocity: hypervolume and sparsity of each method's front
(computed per seed against a reference point shared by all compared
methods at that velocity, then averaged over seeds), plus a grand average
row. Emitted both as structured records and as an aligned text table.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from .pareto import (
    RefPoint,
    SolutionPoint,
    avg_cost_violation,
    hypervolume_2d,
    pareto_filter,
    sparsity,
)


def group_records(records):
    by_method = defaultdict(list)
    for r in records:
        by_method[r["method"]].append(r)
    return dict(by_method)


def method_scalars(records) -> dict:
    violation = avg_cost_violation([(r["mean_cost"], r["eps"]) for r in records])
    tracking = float(np.mean([r["tracking_error"] for r in records]))
    return {"avg_cost_violation": violation, "avg_tracking_error": tracking}


def build_report(records) -> dict:
    """Structured comparison across every method present in the records."""
    by_method = group_records(records)
    if not by_method:
        raise ValueError("no evaluation records to report on")
    methods = sorted(by_method)
    velocities = sorted({r["v_target"] for r in records})

    summary = {m: method_scalars(by_method[m]) for m in methods}

    per_velocity = []
    refs = {}
    for v in velocities:
        at_v = [r for r in records if r["v_target"] == v]
        err_ref = max(r["tracking_error"] for r in at_v) * 1.0 + 1e-9
        ref = RefPoint(cost_ref=1.0, err_ref=err_ref)
        refs[v] = ref
        row = {"v_target": v, "ref_cost": ref.cost_ref, "ref_err": ref.err_ref, "methods": {}}
        for m in methods:
            mine = [r for r in at_v if r["method"] == m]
            seeds = sorted({r["seed"] for r in mine})
            hvs, sps = [], []
            fronts = {}
            for s in seeds:
                pts = [
                    SolutionPoint(r["mean_cost"], r["tracking_error"],
                                  tag=f"eps={r['eps']}/seed={r['seed']}")
                    for r in mine if r["seed"] == s
                ]
                if not pts:
                    continue
                front = pareto_filter(pts)
                hvs.append(hypervolume_2d(front, ref))
                sps.append(sparsity(front))
                fronts[s] = [(p.cost, p.tracking_error, p.tag) for p in front.points]
            row["methods"][m] = {
                "hypervolume": float(np.mean(hvs)) if hvs else 0.0,
                "sparsity": float(np.mean(sps)) if sps else 0.0,
                "hypervolume_per_seed": hvs,
                "fronts": fronts,
            }
        per_velocity.append(row)

    averages = {
        m: {
            "hypervolume": float(np.mean([row["methods"][m]["hypervolume"] for row in per_velocity])),
            "sparsity": float(np.mean([row["methods"][m]["sparsity"] for row in per_velocity])),
        }
        for m in methods
    }
    return {
        "methods": methods,
        "summary": summary,
        "per_velocity": per_velocity,
        "averages": averages,
    }


def report_records(report: dict):
    """Flatten a report into JSONL-able records."""
    out = []
    for m in report["methods"]:
        out.append({
            "kind": "report",
            "method": m,
            "metric": "summary",
            **report["summary"][m],
            "avg_hypervolume": report["averages"][m]["hypervolume"],
            "avg_sparsity": report["averages"][m]["sparsity"],
        })
    for row in report["per_velocity"]:
        for m, vals in row["methods"].items():
            out.append({
                "kind": "report",
                "method": m,
                "metric": "velocity",
                "v_target": row["v_target"],
                "ref_cost": row["ref_cost"],
                "ref_err": row["ref_err"],
                "hypervolume": vals["hypervolume"],
                "sparsity": vals["sparsity"],
                "fronts": vals["fronts"],
            })
    return out


def format_report(report: dict) -> str:
    """Aligned text tables: scalar summary, then velocity rows per method."""
    methods = report["methods"]
    lines = []
    lines.append("== Method summary ==")
    header = f"{'method':<14}{'avg_cost_violation':>20}{'avg_tracking_error':>20}"
    lines.append(header)
    for m in methods:
        s = report["summary"][m]
        lines.append(f"{m:<14}{s['avg_cost_violation']:>20.4f}{s['avg_tracking_error']:>20.4f}")
    lines.append("")
    lines.append("== Hypervolume (up) / Sparsity (down) by target velocity ==")
    head = f"{'v_target':<10}" + "".join(f"{m + ' HV':>14}{m + ' SP':>14}" for m in methods)
    lines.append(head)
    for row in report["per_velocity"]:
        cells = f"{row['v_target']:<10.2f}"
        for m in methods:
            vals = row["methods"][m]
            cells += f"{vals['hypervolume']:>14.4f}{vals['sparsity']:>14.4f}"
        lines.append(cells)
    cells = f"{'Avg.':<10}"
    for m in methods:
        a = report["averages"][m]
        cells += f"{a['hypervolume']:>14.4f}{a['sparsity']:>14.4f}"
    lines.append(cells)
    ref_note = ", ".join(
        f"v={row['v_target']:g}: ({row['ref_cost']:g}, {row['ref_err']:.4f})"
        for row in report["per_velocity"]
    )
    lines.append("")
    lines.append(f"reference points (cost_ref, err_ref): {ref_note}")
    return "\n".join(lines) + "\n"
