"""Confusion matrices, rates, and the (alpha, delta_t) sweep."""
from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .dataset import LabeledWindow, WindowSpec, build_split, make_windows, stack
from .errors import DataError, InsufficientDataError, ShapeError, UsageError
from .model import ModelConfig, init_model
from .predictors import airis2_probabilities, persistence_batch
from .timeseries import AttenuationSeries
from .training import TrainConfig, accuracy, train

PREDICTORS = ("airis2", "ph")
RATE_KEYS = ("fn_rate_total", "fp_rate_total", "miss_rate", "false_alarm_rate")
SWEEP_CSV_COLUMNS = (
    "predictor", "alpha_db", "delta_t_s", "fn_rate_total", "fp_rate_total",
    "miss_rate", "false_alarm_rate", "accuracy", "n_test", "skipped", "reason",
)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def percents(self) -> dict:
        n = self.total
        return {k: 100.0 * getattr(self, k) / n for k in ("tp", "fp", "fn", "tn")}

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def confusion(predictions, labels) -> ConfusionMatrix:
    pred = np.asarray(predictions, dtype=bool)
    lab = np.asarray(labels, dtype=bool)
    if pred.shape != lab.shape:
        raise ShapeError(f"{pred.size} predictions vs {lab.size} labels")
    if pred.size == 0:
        raise InsufficientDataError("confusion matrix of an empty set")
    return ConfusionMatrix(
        tp=int(np.sum(pred & lab)),
        fp=int(np.sum(pred & ~lab)),
        fn=int(np.sum(~pred & lab)),
        tn=int(np.sum(~pred & ~lab)),
    )


def rates(cm: ConfusionMatrix) -> dict:
    """Total-normalized FN/FP plus conditional miss / false-alarm rates.

    Conditional rates whose denominator is zero are ``None``.
    """
    n = cm.total
    pos = cm.fn + cm.tp
    neg = cm.fp + cm.tn
    return {
        "fn_rate_total": cm.fn / n,
        "fp_rate_total": cm.fp / n,
        "miss_rate": cm.fn / pos if pos else None,
        "false_alarm_rate": cm.fp / neg if neg else None,
    }


@dataclass
class CellMetrics:
    cm: ConfusionMatrix
    accuracy: float

    def row(self) -> dict:
        out = rates(self.cm)
        out["accuracy"] = self.accuracy
        out["n_test"] = self.cm.total
        return out


@dataclass
class SweepCell:
    alpha_db: float
    delta_t_s: float
    metrics: dict = field(default_factory=dict)  # predictor -> CellMetrics
    skipped: bool = False
    reason: str = ""
    train_seconds: Optional[float] = None
    test_anchors: Optional[np.ndarray] = None


@dataclass
class SweepResult:
    alphas: list
    deltas: list
    cells: list  # row-major over (alpha, delta)

    def cell(self, alpha_db: float, delta_t_s: float) -> SweepCell:
        for c in self.cells:
            if c.alpha_db == alpha_db and c.delta_t_s == delta_t_s:
                return c
        raise KeyError((alpha_db, delta_t_s))

    def rows(self) -> list[dict]:
        out = []
        for pred in PREDICTORS:
            for c in self.cells:
                row = {"predictor": pred, "alpha_db": c.alpha_db, "delta_t_s": c.delta_t_s}
                if c.skipped or pred not in c.metrics:
                    row.update({k: None for k in RATE_KEYS})
                    row.update(accuracy=None, n_test=0)
                else:
                    row.update(c.metrics[pred].row())
                row.update(skipped=c.skipped, reason=c.reason)
                out.append(row)
        return out


def cell_seed(seed: int, alpha_db: float, delta_t_s: float) -> int:
    key = [int(seed), int(round(alpha_db * 1000)), int(round(delta_t_s * 1000))]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def _windows_for(data: Sequence[AttenuationSeries], spec: WindowSpec):
    """Windows pooled over every series; anchors offset to stay unique."""
    windows, offset = [], 0
    for s in data:
        try:
            ws = make_windows(s, spec)
        except InsufficientDataError:
            ws = []
        if offset:
            ws = [LabeledWindow(w.features, w.label, w.anchor_index + offset) for w in ws]
        windows.extend(ws)
        offset += len(s)
    if not windows:
        raise InsufficientDataError("no series is long enough for this (alpha, delta_t)")
    return windows


def run_cell(data, alpha_db, delta_t_s, train_config: TrainConfig, seed: int, stride_samples: int = 1,
             hidden_size: int = 50, dropout_rate: float = 0.15, history_factor: float = 2.0,
             threshold: float = 0.5, split_seed: int = 0) -> SweepCell:
    """Window, split, train a fresh model and score both predictors on the same test set.

    The split depends only on ``split_seed`` and the cell coordinates, so the
    persistence results do not move when the training seed or config changes.
    """
    cell = SweepCell(alpha_db, delta_t_s)
    spec = WindowSpec(alpha_db, delta_t_s, history_factor * delta_t_s, stride_samples)
    init_seed, train_seed = (int(s) for s in np.random.default_rng(seed).integers(0, 2**32 - 1, size=2))
    try:
        windows = _windows_for(data, spec)
        split = build_split(windows, cell_seed(split_seed, alpha_db, delta_t_s))
    except DataError as exc:
        cell.skipped, cell.reason = True, f"{type(exc).__name__}: {exc}"
        return cell
    if not split.test:
        cell.skipped, cell.reason = True, "empty test set"
        return cell
    rate = data[0].sample_rate_hz
    config = ModelConfig(spec.window_len(rate), hidden_size, 1, dropout_rate)
    tc = TrainConfig(**{**train_config.to_dict(), "seed": train_seed})
    t0 = time.perf_counter()
    model, _report = train(init_model(config, init_seed), split, tc)
    cell.train_seconds = time.perf_counter() - t0

    _, y_test, anchors = stack(split.test)
    cell.test_anchors = anchors
    airis = airis2_probabilities(model, split.test) >= threshold
    ph = persistence_batch(split.test, alpha_db)
    for name, pred in (("airis2", airis), ("ph", ph)):
        cell.metrics[name] = CellMetrics(confusion(pred, y_test), accuracy(pred, y_test))
    return cell


def _run_cell_job(args):
    return run_cell(*args[0], **args[1])


def sweep(data: Union[AttenuationSeries, Sequence[AttenuationSeries]], alpha_list, delta_t_list,
          train_config: TrainConfig = TrainConfig(), seed: int = 0, stride_samples: int = 1,
          workers: Optional[int] = None, **cell_kwargs) -> SweepResult:
    """Fresh model per (alpha, delta_t) cell; cells with one class are skipped, not fatal."""
    data = [data] if isinstance(data, AttenuationSeries) else list(data)
    if not data:
        raise InsufficientDataError("sweep needs at least one series")
    alphas = [float(a) for a in alpha_list]
    deltas = [float(d) for d in delta_t_list]
    jobs = [
        ((data, a, d, train_config, cell_seed(seed, a, d), stride_samples), cell_kwargs)
        for a in alphas
        for d in deltas
    ]
    workers = workers or os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            cells = list(pool.map(_run_cell_job, jobs))
    else:
        cells = [_run_cell_job(j) for j in jobs]
    return SweepResult(alphas, deltas, cells)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report(result: SweepResult, fmt: str = "csv") -> bytes:
    """CSV or JSON rendering, one row per (predictor, alpha, delta_t).

    Timings are left out so that reports are byte-reproducible.
    """
    if fmt not in ("csv", "json"):
        raise UsageError(f"unknown report format {fmt!r}; expected 'csv' or 'json'")
    rows = result.rows()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in SWEEP_CSV_COLUMNS])
        return buf.getvalue().encode("utf-8")
    doc = {
        "alphas_db": result.alphas,
        "deltas_s": result.deltas,
        "n_cells": len(result.cells),
        "rows": rows,
        "confusion": [
            {"predictor": p, "alpha_db": c.alpha_db, "delta_t_s": c.delta_t_s, **c.metrics[p].cm.to_dict()}
            for p in PREDICTORS
            for c in result.cells
            if p in c.metrics
        ],
    }
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")


def parse_sweep_csv(payload: bytes) -> list[dict]:
    """Read a sweep CSV back into typed rows."""
    reader = csv.DictReader(io.StringIO(payload.decode("utf-8")))
    if tuple(reader.fieldnames or ()) != SWEEP_CSV_COLUMNS:
        raise DataError("not a sweep CSV")
    out = []
    for r in reader:
        row = {"predictor": r["predictor"], "alpha_db": float(r["alpha_db"]), "delta_t_s": float(r["delta_t_s"])}
        for k in RATE_KEYS + ("accuracy",):
            row[k] = None if r[k] == "" else float(r[k])
        row["n_test"] = int(r["n_test"])
        row["skipped"] = r["skipped"] == "true"
        row["reason"] = r["reason"]
        out.append(row)
    return out


_NUM_OR_NULL = {"type": ["number", "null"], "minimum": 0, "maximum": 1}
SWEEP_JSON_SCHEMA = {
    "type": "object",
    "required": ["alphas_db", "deltas_s", "n_cells", "rows", "confusion"],
    "properties": {
        "alphas_db": {"type": "array", "items": {"type": "number"}},
        "deltas_s": {"type": "array", "items": {"type": "number"}},
        "n_cells": {"type": "integer", "minimum": 0},
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": list(SWEEP_CSV_COLUMNS),
                "properties": {
                    "predictor": {"enum": list(PREDICTORS)},
                    "alpha_db": {"type": "number"},
                    "delta_t_s": {"type": "number"},
                    **{k: _NUM_OR_NULL for k in RATE_KEYS + ("accuracy",)},
                    "n_test": {"type": "integer", "minimum": 0},
                    "skipped": {"type": "boolean"},
                    "reason": {"type": "string"},
                },
            },
        },
        "confusion": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["predictor", "alpha_db", "delta_t_s", "tp", "fp", "fn", "tn"],
                "properties": {k: {"type": "integer", "minimum": 0} for k in ("tp", "fp", "fn", "tn")},
            },
        },
    },
}
