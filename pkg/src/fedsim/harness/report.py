"""Table emission for a finished run.

Every table is comma-separated with a header row; floats carry nine
significant digits so two identical runs give byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from ..errors import FedsimError
from ..latency import COMPONENT_NAMES


class IoError(FedsimError, OSError):
    """Report destination cannot be written."""


LATENCY_COLUMNS = ("request", "app", "slice", "arrival", "path", "cloud", "vm") + COMPONENT_NAMES + (
    "total", "sla", "violated")
SUMMARY_COLUMNS = ("app", "arrivals", "delivered", "failed", "unavailable", "shortfall", "in_flight",
                   "sla_violations", "violation_rate", "mean", "p50", "p95", "max")
TOTALS_COLUMNS = ("scenario", "seed", "total_cost", "shortfall", "sla_violations", "sla_violation_rate",
                  "service_unavailable", "skipped_failures", "conservation_gap")
UTIL_COLUMNS = ("time", "cloud", "node", "cpu", "mem", "disk")
VM_COLUMNS = ("time", "cloud", "running", "failed")
BILLING_COLUMNS = ("time", "slice", "spent", "committed", "remaining")
DECISION_COLUMNS = ("slice", "service", "demand", "local_replicas", "added_local", "removed_local",
                    "remote_vms", "provider", "local_share", "outsourced_share", "shortfall",
                    "projected_cost", "degraded")
RECOVERY_COLUMNS = ("service", "failed_vm", "failed_at", "replacement_vm", "running_at", "recovery_time")


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.9g}"
    return str(v)


def _write(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fp:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c)) for c in columns])


def summary_rows(m) -> list[dict]:
    rows = []
    for a in m.apps.values():
        rows.append({"app": a.app_id, "arrivals": a.arrivals, "delivered": a.delivered, "failed": a.failed,
                     "unavailable": a.unavailable, "shortfall": a.shortfall, "in_flight": a.in_flight,
                     "sla_violations": a.sla_violations, "violation_rate": a.violation_rate,
                     "mean": a.mean, "p50": a.p50, "p95": a.p95, "max": a.max})
    return rows


def report(metrics, out_dir, fmt_name: str = "csv", *, trace: bool = False) -> list[Path]:
    """Write the run's tables into ``out_dir``; returns the written paths."""
    if fmt_name != "csv":
        raise ValueError(f"unsupported report format {fmt_name!r}")
    out = Path(out_dir)
    m = metrics
    tables = {
        "latency.csv": (LATENCY_COLUMNS, m.requests),
        "summary.csv": (SUMMARY_COLUMNS, summary_rows(m)),
        "totals.csv": (TOTALS_COLUMNS, [{
            "scenario": m.scenario, "seed": m.seed, "total_cost": m.total_cost, "shortfall": m.shortfall,
            "sla_violations": m.sla_violation_count, "sla_violation_rate": m.sla_violation_rate,
            "service_unavailable": m.service_unavailable, "skipped_failures": m.skipped_failures,
            "conservation_gap": m.conservation_gap}]),
        "utilization.csv": (UTIL_COLUMNS, m.utilization),
        "vm_count.csv": (VM_COLUMNS, m.vm_count),
        "billing.csv": (BILLING_COLUMNS, m.billing),
        "decisions.csv": (DECISION_COLUMNS, m.decisions),
        "recovery.csv": (RECOVERY_COLUMNS, [{
            "service": r.service_id, "failed_vm": r.failed_vm, "failed_at": r.failed_at,
            "replacement_vm": r.replacement_vm, "running_at": r.running_at,
            "recovery_time": r.recovery_time} for r in m.recoveries]),
    }
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, (cols, rows) in tables.items():
            _write(out / name, cols, rows)
            written.append(out / name)
        events = out / "events.csv"
        _write(events, ("kind", "count"), [{"kind": k, "count": v} for k, v in m.event_counts.items()])
        written.append(events)
        if trace:
            for name, recs in (("trace.ndjson", m.trace), ("bus.ndjson", m.bus_log)):
                with open(out / name, "w") as fp:
                    for r in recs:
                        fp.write(json.dumps(r, sort_keys=True) + "\n")
                written.append(out / name)
    except OSError as e:
        raise IoError(f"cannot write report to {out}: {e}") from e
    return written
