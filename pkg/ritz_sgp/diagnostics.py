"""Diagnostics for a finished experiment directory."""

from __future__ import annotations

import csv
import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .bench import format_number, summary_fields, threshold_label
from .const import (
    DEFAULT_THRESHOLDS,
    SUMMARY_FILE,
    TIMINGS_FILE,
    TRACE_FILE_PATTERN,
)
from .errors import RitzSgpError

_LOGGER = logging.getLogger(__name__)

TRACE_PREFIX, TRACE_SUFFIX = TRACE_FILE_PATTERN.split("{name}")


def _float(value: str | None) -> float:
    return float(value) if value else np.nan


def _read_rows(path: Path) -> list[dict[str, str]]:
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def read_trace(path: str | Path) -> dict[str, np.ndarray]:
    """Columns of a trace CSV as float arrays; blanks become nan."""
    rows = _read_rows(Path(path))
    if not rows:
        raise RitzSgpError(f"trace {path} is empty")
    return {
        column: np.array([_float(row[column]) for row in rows])
        for column in rows[0]
    }


def _first_below(values: np.ndarray, threshold: float) -> int | None:
    # nan compares False
    hits = np.flatnonzero(values <= threshold)
    return int(hits[0]) if hits.size else None


def trace_statistics(
    trace: dict[str, np.ndarray], thresholds: Sequence[float]
) -> dict[str, Any]:
    """First passages, minimum RRE and final objective of one trace."""
    iterations = trace["iter"].astype(int)
    rre, gap = trace["rre"], trace["gap"]
    stats: dict[str, Any] = {
        "iterations": int(iterations[-1]),
        "final_f": float(trace["f"][-1]),
        "first_rre": {},
        "first_gap": {},
        "min_rre": None,
        "min_rre_iter": None,
    }
    for t in sorted(thresholds, reverse=True):
        index = _first_below(rre, t)
        stats["first_rre"][t] = None if index is None else int(iterations[index])
        index = _first_below(gap, t)
        stats["first_gap"][t] = None if index is None else int(iterations[index])
    if not np.all(np.isnan(rre)):
        best = int(np.nanargmin(rre))
        stats["min_rre"] = float(rre[best])
        stats["min_rre_iter"] = int(iterations[best])
    return stats


def build_report(
    out_dir: str | Path, thresholds: Sequence[float] = DEFAULT_THRESHOLDS
) -> dict[str, Any]:
    """Return diagnostics for every solver that left a trace or a summary row."""
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        raise RitzSgpError(f"{out_dir} is not a results directory")

    summary_path = out_dir / SUMMARY_FILE
    previous = (
        {row["solver"]: row for row in _read_rows(summary_path)}
        if summary_path.is_file()
        else {}
    )
    timings_path = out_dir / TIMINGS_FILE
    timings = (
        {row["solver"]: row for row in _read_rows(timings_path)}
        if timings_path.is_file()
        else {}
    )

    solvers: dict[str, dict[str, Any]] = {}
    for name, row in previous.items():
        solvers[name] = {"method": row.get("method"), "reason": row.get("reason")}
    for path in sorted(out_dir.glob(f"{TRACE_PREFIX}*{TRACE_SUFFIX}")):
        name = path.name[len(TRACE_PREFIX) : -len(TRACE_SUFFIX)]
        entry = solvers.setdefault(name, {"method": None, "reason": None})
        entry.update(trace_statistics(read_trace(path), thresholds))
    for name, row in timings.items():
        if name in solvers:
            solvers[name]["wall_time_s"] = _float(row.get("wall_time_s"))
            solvers[name]["error"] = row.get("error") or None

    _LOGGER.debug("Report for %s covers %d solvers", out_dir, len(solvers))
    return {
        "output": str(out_dir),
        "thresholds": sorted(thresholds, reverse=True),
        "solvers": solvers,
    }


def rebuild_summary(report: dict[str, Any]) -> Path:
    """Write summary.csv again from a report's trace statistics."""
    out_dir = Path(report["output"])
    thresholds = report["thresholds"]
    path = out_dir / SUMMARY_FILE
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(
            handle, fieldnames=summary_fields(thresholds), lineterminator="\n"
        )
        writer.writeheader()
        for name, entry in report["solvers"].items():
            row = dict.fromkeys(summary_fields(thresholds), "")
            row.update(
                solver=name,
                method=entry.get("method") or "",
                reason=entry.get("reason") or "",
            )
            if "iterations" in entry:
                row["iterations"] = str(entry["iterations"])
                for t in thresholds:
                    first_rre, first_gap = entry["first_rre"][t], entry["first_gap"][t]
                    row[threshold_label("rre", t)] = format_number(first_rre)
                    row[threshold_label("gap", t)] = format_number(first_gap)
                row["min_rre"] = format_number(entry["min_rre"])
                row["min_rre_iter"] = format_number(entry["min_rre_iter"])
                row["final_f"] = format_number(entry["final_f"])
            writer.writerow(row)
    _LOGGER.info("Rebuilt %s", path)
    return path
