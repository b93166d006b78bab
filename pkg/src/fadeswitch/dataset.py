"""Windowing, labeling, splitting, balancing and normalization.

A window anchored at sample ``t`` holds the samples ``t-Hs .. t`` (both
ends included, ``L = Hs + 1``) and is labeled with
``series[t + horizon] > alpha``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    DegenerateDataError,
    FormatError,
    InsufficientDataError,
    InvalidParameterError,
    SingleClassError,
)
from .timeseries import AttenuationSeries

DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)
DATASET_FORMAT = "fadeswitch-dataset"


@dataclass(frozen=True)
class WindowSpec:
    alpha_db: float
    delta_t_s: float
    history_s: Optional[float] = None
    stride_samples: int = 1

    def __post_init__(self):
        if self.history_s is None:
            object.__setattr__(self, "history_s", 2.0 * self.delta_t_s)
        for name in ("alpha_db", "delta_t_s", "history_s"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidParameterError(f"{name} must be positive, got {v!r}")
        if int(self.stride_samples) != self.stride_samples or self.stride_samples < 1:
            raise InvalidParameterError("stride_samples must be a positive integer")

    def window_len(self, sample_rate_hz: float) -> int:
        return int(round(self.history_s * sample_rate_hz)) + 1

    def horizon_samples(self, sample_rate_hz: float) -> int:
        return int(round(self.delta_t_s * sample_rate_hz))

    def to_dict(self) -> dict:
        return {
            "alpha_db": self.alpha_db,
            "delta_t_s": self.delta_t_s,
            "history_s": self.history_s,
            "stride_samples": self.stride_samples,
        }


@dataclass(frozen=True, eq=False)
class LabeledWindow:
    features: np.ndarray
    label: bool
    anchor_index: int

    def key(self):
        return (self.anchor_index, self.label, self.features.tobytes())


@dataclass(frozen=True)
class NormalizationStats:
    mean_db: float
    std_db: float


@dataclass
class SplitDataset:
    train: list
    val: list
    test: list
    norm: Optional[NormalizationStats] = None
    meta: dict = field(default_factory=dict)

    def sizes(self) -> dict:
        return {"train": len(self.train), "val": len(self.val), "test": len(self.test)}


def stack(windows: Sequence[LabeledWindow]):
    """(features, labels, anchors) arrays for a window list."""
    if not windows:
        return np.empty((0, 0)), np.empty(0, dtype=bool), np.empty(0, dtype=np.int64)
    X = np.stack([w.features for w in windows]).astype(np.float64, copy=False)
    y = np.array([w.label for w in windows], dtype=bool)
    anchors = np.array([w.anchor_index for w in windows], dtype=np.int64)
    return X, y, anchors


def window_anchors(n: int, spec: WindowSpec, sample_rate_hz: float) -> np.ndarray:
    L = spec.window_len(sample_rate_hz)
    k = spec.horizon_samples(sample_rate_hz)
    if n < L + k:
        raise InsufficientDataError(
            f"series of {n} samples is shorter than window ({L}) + horizon ({k})"
        )
    return np.arange(L - 1, n - k, spec.stride_samples)


def make_windows(series: AttenuationSeries, spec: WindowSpec) -> list[LabeledWindow]:
    rate = series.sample_rate_hz
    L = spec.window_len(rate)
    k = spec.horizon_samples(rate)
    anchors = window_anchors(len(series), spec, rate)
    values = series.values
    views = sliding_window_view(values, L)
    labels = values[anchors + k] > spec.alpha_db
    return [
        LabeledWindow(views[a - L + 1], bool(lab), int(a))
        for a, lab in zip(anchors.tolist(), labels.tolist())
    ]


def split_random(windows, fractions=DEFAULT_FRACTIONS, seed: int = 0) -> SplitDataset:
    """Random permutation, then contiguous [val | test | train] assignment.

    Validation and test sizes are rounded half-up; the remainder goes to
    training, so every size is within one element of its fraction.
    """
    if abs(sum(fractions) - 1.0) > 1e-9 or len(fractions) != 3 or min(fractions) < 0:
        raise InvalidParameterError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    n = len(windows)
    if n == 0:
        raise InsufficientDataError("no windows to split")
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(math.floor(fractions[1] * n + 0.5))
    n_test = int(math.floor(fractions[2] * n + 0.5))
    val = [windows[i] for i in order[:n_val]]
    test = [windows[i] for i in order[n_val : n_val + n_test]]
    train = [windows[i] for i in order[n_val + n_test :]]
    return SplitDataset(train, val, test)


def balance(windows, seed: int = 0) -> list:
    """Undersample the majority class down to the minority count."""
    pos = [w for w in windows if w.label]
    neg = [w for w in windows if not w.label]
    if not pos or not neg:
        raise SingleClassError(
            f"cannot balance: {len(pos)} positive / {len(neg)} negative windows"
        )
    rng = np.random.default_rng(seed)
    m = min(len(pos), len(neg))
    keep_pos = sorted(rng.choice(len(pos), size=m, replace=False).tolist())
    keep_neg = sorted(rng.choice(len(neg), size=m, replace=False).tolist())
    out = [pos[i] for i in keep_pos] + [neg[i] for i in keep_neg]
    return [out[i] for i in rng.permutation(len(out))]


def fit_normalization(windows) -> NormalizationStats:
    if not windows:
        raise InsufficientDataError("no training windows to fit normalization")
    X = np.concatenate([np.ravel(w.features) for w in windows])
    mean = float(X.mean())
    std = float(X.std())
    if not std > 0:
        raise DegenerateDataError("training features have zero variance")
    return NormalizationStats(mean, std)


def normalize_array(X, stats: NormalizationStats) -> np.ndarray:
    return (np.asarray(X, dtype=np.float64) - stats.mean_db) / stats.std_db


def apply_normalization(window: LabeledWindow, stats: NormalizationStats) -> LabeledWindow:
    return LabeledWindow(normalize_array(window.features, stats), window.label, window.anchor_index)


def build_split(windows, seed: int = 0, fractions=DEFAULT_FRACTIONS) -> SplitDataset:
    """Split, balance train/val (test keeps its natural distribution), fit stats.

    A validation split holding a single class is emptied rather than failing
    the whole build; a single-class training split raises.
    """
    rng = np.random.default_rng(seed)
    split_seed, bal_train, bal_val = (int(s) for s in rng.integers(0, 2**32 - 1, size=3))
    split = split_random(windows, fractions, split_seed)
    split.train = balance(split.train, bal_train)
    try:
        split.val = balance(split.val, bal_val) if split.val else []
    except SingleClassError:
        split.val = []
    split.norm = fit_normalization(split.train)
    return split


# -- directory export ---------------------------------------------------------

def _write_shard(path: Path, windows) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        L = len(windows[0].features) if windows else 0
        w.writerow(["anchor_index", "label"] + [f"f{j}" for j in range(L)])
        for win in windows:
            w.writerow([win.anchor_index, int(win.label)] + [repr(float(v)) for v in win.features])


def _read_shard(path: Path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path.name}: empty shard") from None
        if header[:2] != ["anchor_index", "label"]:
            raise FormatError(f"{path.name}: bad header")
        for row in reader:
            try:
                out.append(LabeledWindow(np.array(row[2:], dtype=np.float64), row[1] == "1", int(row[0])))
            except ValueError as exc:
                raise FormatError(f"{path.name}: {exc}") from None
    return out


def export_dataset(split: SplitDataset, directory, spec: WindowSpec, seed: int, sample_rate_hz: float) -> Path:
    """Write ``train.csv``, ``val.csv``, ``test.csv`` (raw dB features) and ``dataset.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("train", "val", "test"):
        _write_shard(directory / f"{name}.csv", getattr(split, name))
    manifest = {
        "format": DATASET_FORMAT,
        "version": 1,
        "spec": spec.to_dict(),
        "sample_rate_hz": sample_rate_hz,
        "window_len": spec.window_len(sample_rate_hz),
        "seed": seed,
        "sizes": split.sizes(),
        "normalization": None if split.norm is None else {"mean_db": split.norm.mean_db, "std_db": split.norm.std_db},
    }
    (directory / "dataset.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_dataset(directory):
    """Inverse of :func:`export_dataset`; returns (split, manifest dict)."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "dataset.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"{directory}: no dataset.json") from None
    except ValueError as exc:
        raise FormatError(f"dataset.json: {exc}") from None
    if manifest.get("format") != DATASET_FORMAT:
        raise FormatError("dataset.json is not a dataset manifest")
    split = SplitDataset(*(_read_shard(directory / f"{n}.csv") for n in ("train", "val", "test")))
    if split.sizes() != manifest["sizes"]:
        raise FormatError("shard sizes disagree with dataset.json")
    norm = manifest.get("normalization")
    split.norm = None if norm is None else NormalizationStats(norm["mean_db"], norm["std_db"])
    split.meta = manifest
    return split, manifest
