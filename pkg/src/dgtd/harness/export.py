"""Metric export and run summaries."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..learn import METRIC_FIELDS, MetricsRecord, MetricsSeries

CSV_HEADER = ",".join(METRIC_FIELDS)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def dump_json(obj, path=None) -> str:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _row(rec: MetricsRecord) -> list[str]:
    return [str(rec.k)] + [repr(float(getattr(rec, f))) for f in METRIC_FIELDS[1:]]


def summary_block(series: MetricsSeries, config: dict | None = None, seed=None, extra: dict | None = None) -> dict:
    last = series.records[-1] if series.records else None
    out = {
        "final_consensus_err": None if last is None else last.consensus_err,
        "final_dist_w_star": None if last is None else last.dist_w_star,
        "final_k": None if last is None else last.k,
        "w_star": series.w_star,
        "w_final": None if series.final is None else series.final.w,
        "box_activity": series.box_activity,
        "stopped_early": series.stopped_early,
        "seed": seed,
        "config": config,
    }
    if extra:
        out.update(extra)
    return out


def export_metrics(series: MetricsSeries, path, format: str = "csv", summary: dict | None = None) -> None:
    """Write the series as CSV (documented header, one row per record) or JSON."""
    path = Path(path)
    if format == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(METRIC_FIELDS)
            for rec in series.records:
                writer.writerow(_row(rec))
    elif format == "json":
        doc = {
            "records": [{f: getattr(r, f) for f in METRIC_FIELDS} for r in series.records],
            "summary": summary if summary is not None else summary_block(series),
        }
        dump_json(doc, path)
    else:
        raise ValueError(f"unknown export format {format!r}")


def read_metrics(path) -> list[MetricsRecord]:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        return [MetricsRecord(**r) for r in doc["records"]]
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != METRIC_FIELDS:
            raise ValueError(f"unexpected metrics header {header}")
        return [MetricsRecord(int(row[0]), *(float(v) for v in row[1:])) for row in reader]
