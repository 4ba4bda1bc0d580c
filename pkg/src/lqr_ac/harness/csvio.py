"""Versioned CSV output for per-seed traces and cross-seed aggregates.

Every file starts with a single comment line ``# lqr-ac v1`` followed by
``key=value`` metadata, then a header row. Floats are written with ``repr``
(shortest round-trip form), so reading a file back recovers the exact values.
"""
import csv
from pathlib import Path

import numpy as np

from ..records import COLUMNS, METRICS, AggregateRecord, RunRecord

VERSION = "lqr-ac v1"


def _fmt(x):
    x = float(x)
    if np.isnan(x):
        return "nan"
    if x == int(x) and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def _write(path, meta, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# " + VERSION + "".join(f" {k}={v}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _read(path):
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith("# " + VERSION):
            raise ValueError(f"{path}: missing '# {VERSION}' header")
        meta = dict(tok.split("=", 1) for tok in first[len(VERSION) + 2:].split())
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(x) for x in row] for row in reader]).reshape(-1, len(header))
    return meta, header, data


def run_filename(record):
    return f"seed_{record.seed}.csv"


def write_run(path, record):
    meta = dict(
        algorithm=record.algorithm, seed=record.seed, config=record.config_hash or "-",
        status=record.status, violations=record.stability_violations,
    )
    _write(path, meta, COLUMNS, record.rows)


def read_run(path):
    meta, header, data = _read(path)
    if tuple(header) != COLUMNS:
        raise ValueError(f"{path}: unexpected columns {header}")
    return RunRecord(
        algorithm=meta["algorithm"], seed=int(meta["seed"]), config_hash=meta["config"],
        rows=data, status=meta["status"], stability_violations=int(meta["violations"]),
    )


def aggregate_columns():
    cols = ["t", "samples"]
    for m in METRICS:
        cols += [f"{m}_mean", f"{m}_ci95"]
    return cols


def write_aggregate(path, agg, config_hash=""):
    if agg.n_runs:
        cols = [agg.t, agg.samples]
        for m in METRICS:
            cols += [agg.mean[m], agg.ci[m]]
        rows = np.column_stack(cols)
    else:
        rows = np.empty((0, len(aggregate_columns())))
    meta = dict(config=config_hash or "-", n_runs=agg.n_runs, n_excluded=agg.n_excluded)
    _write(path, meta, aggregate_columns(), rows)


def read_aggregate(path):
    meta, header, data = _read(path)
    mean = {m: data[:, header.index(f"{m}_mean")] for m in METRICS}
    ci = {m: data[:, header.index(f"{m}_ci95")] for m in METRICS}
    return AggregateRecord(data[:, 0], data[:, 1], mean, ci, int(meta["n_runs"]), int(meta["n_excluded"]))
