"""Sample, CDF and summary files for latency runs."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


class EmptyReport(ValueError):
    """Raised when a report is requested for a run that produced no samples."""


def describe(values) -> dict:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise EmptyReport("no samples")
    q1, median, q3, p90, p99 = np.percentile(arr, [25, 50, 75, 90, 99])
    return {
        "count": int(arr.size),
        "mean": float(arr.mean()),
        "median": float(median),
        "q1": float(q1),
        "q3": float(q3),
        "p90": float(p90),
        "p99": float(p99),
        "min": float(arr.min()),
        "max": float(arr.max()),
    }


def cdf_points(values) -> list[tuple[float, float]]:
    arr = np.sort(np.asarray(values, dtype=float))
    n = arr.size
    return [(float(v), (i + 1) / n) for i, v in enumerate(arr)]


def emit_report(out_dir, name: str, repetitions: list[list[float]], extra: dict = None) -> dict:
    """Write ``<name>_samples.csv``, ``<name>_cdf.csv`` and ``<name>_summary.json``.

    ``repetitions`` holds one list of millisecond samples per repetition.
    Returns the summary document.
    """
    pooled = [v for rep in repetitions for v in rep]
    if not pooled:
        raise EmptyReport(f"{name}: run produced no samples")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / f"{name}_samples.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["repetition", "index", "value_ms"])
        for r, rep in enumerate(repetitions):
            for i, v in enumerate(rep):
                w.writerow([r, i, f"{v:.6f}"])

    with open(out / f"{name}_cdf.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value_ms", "cumulative_probability"])
        for v, p in cdf_points(pooled):
            w.writerow([f"{v:.6f}", f"{p:.6f}"])

    summary = {
        "name": name,
        "repetitions": len(repetitions),
        "per_repetition_means": [float(np.mean(rep)) if rep else None for rep in repetitions],
        "pooled_mean": float(np.mean(pooled)),
        "pooled": describe(pooled),
        **(extra or {}),
    }
    (out / f"{name}_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary
