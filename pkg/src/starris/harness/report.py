"""CSV and summary output for run reports."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .metrics import PeriodMetrics, RunReport

_TYPES = {f.name: f.type for f in dataclasses.fields(PeriodMetrics)}


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_metrics_csv(periods, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PeriodMetrics.columns())
        for p in periods:
            w.writerow([_cell(v) for v in p.row()])


def read_metrics_csv(path) -> list[PeriodMetrics]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for name, text in row.items():
                t = _TYPES[name]
                if t in ("bool", bool):
                    kw[name] = text == "1"
                elif t in ("int", int):
                    kw[name] = int(text)
                else:
                    kw[name] = float(text)
            out.append(PeriodMetrics(**kw))
    return out


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def summary_text(report: RunReport, extra: dict | None = None) -> str:
    doc = {
        "seed": report.seed,
        "config_hash": report.config_hash,
        "aggregates": report.aggregates(),
        "config": report.config,
    }
    if extra:
        doc.update(extra)
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def emit(report: RunReport, out_dir, figures: bool = False) -> dict:
    """Write ``metrics.csv`` and ``summary.txt`` (plus PNGs on request); returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"metrics": out / "metrics.csv", "summary": out / "summary.txt"}
    write_metrics_csv(report.periods, paths["metrics"])
    paths["summary"].write_text(summary_text(report))
    if figures:
        from ..plotting import report_figures

        paths.update(report_figures(report, out))
    return paths


SWEEP_COLUMNS = ["param", "value", "k", "true_count", "est_count", "loc_rmse", "angle_rmse",
                 "snr_fixed_db", "snr_tracked_db", "snr_oracle_db", "overhead"]


def emit_sweep(param: str, reports: dict, out_dir, figures: bool = False) -> dict:
    """Per-period trial means for every swept value in one CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for value, rep in reports.items():
            cols = {c: rep.per_period_mean(c) for c in SWEEP_COLUMNS[3:]}
            ks = sorted({p.k for p in rep.periods})
            for i, k in enumerate(ks):
                w.writerow([param, repr(value), k] + [_cell(cols[c][i]) for c in SWEEP_COLUMNS[3:]])
    summary = {
        "param": param,
        "values": {repr(v): rep.aggregates() for v, rep in reports.items()},
        "seed": next(iter(reports.values())).seed if reports else None,
    }
    (out / "summary.txt").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    paths = {"sweep": path, "summary": out / "summary.txt"}
    if figures:
        from ..plotting import sweep_figures

        paths.update(sweep_figures(param, reports, out))
    return paths
