"""Event predictors: learned LSTM, persistence baseline, clairvoyant oracle."""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .dataset import LabeledWindow, normalize_array, stack
from .errors import HorizonRangeError, InvalidParameterError, NumericError
from .model import LstmClassifier, predict_proba
from .timeseries import AttenuationSeries

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class Prediction:
    event_predicted: bool
    probability: float
    anchor_index: int = -1


def persistence_predict(a_t: float, alpha_db: float, anchor_index: int = -1) -> Prediction:
    """Channel assumed frozen over the horizon: event iff a(t) > alpha."""
    if not np.isfinite(a_t):
        raise NumericError("attenuation must be finite")
    hit = bool(a_t > alpha_db)
    return Prediction(hit, 1.0 if hit else 0.0, anchor_index)


def airis2_predict(model: LstmClassifier, window, threshold: float = DEFAULT_THRESHOLD, anchor_index: int = -1) -> Prediction:
    """Learned prediction for one already-normalized window."""
    features = window.features if isinstance(window, LabeledWindow) else window
    if isinstance(window, LabeledWindow):
        anchor_index = window.anchor_index
    p = float(predict_proba(model, np.asarray(features, dtype=np.float64)[None, :])[0])
    return Prediction(bool(p >= threshold), p, anchor_index)


def oracle_predict(series: AttenuationSeries, anchor: int, alpha_db: float, delta_t_s: float) -> Prediction:
    k = int(round(delta_t_s * series.sample_rate_hz))
    if anchor < 0 or anchor + k >= len(series):
        raise HorizonRangeError(f"anchor {anchor} + horizon {k} outside series of length {len(series)}")
    hit = bool(series.values[anchor + k] > alpha_db)
    return Prediction(hit, 1.0 if hit else 0.0, anchor)


# -- batch helpers used by evaluation and simulation ---------------------------

def persistence_batch(windows, alpha_db: float) -> np.ndarray:
    return np.array([w.features[-1] > alpha_db for w in windows], dtype=bool)


def airis2_probabilities(model: LstmClassifier, windows) -> np.ndarray:
    """Infer-mode probabilities for raw (dB) windows, normalized with ``model.norm``."""
    if model.norm is None:
        raise InvalidParameterError("model carries no normalization stats")
    if not windows:
        return np.empty(0)
    X, _, _ = stack(windows)
    return predict_proba(model, normalize_array(X, model.norm))


def predictions_csv(anchors, probabilities, predicted, labels) -> str:
    buf = io.StringIO()
    buf.write("anchor_index,probability,predicted,label\n")
    for a, p, e, y in zip(anchors, probabilities, predicted, labels):
        buf.write(f"{int(a)},{float(p)!r},{int(bool(e))},{int(bool(y))}\n")
    return buf.getvalue()


def check_threshold(threshold: float) -> float:
    if not 0.0 <= threshold <= 1.0:
        raise InvalidParameterError("decision threshold must lie in [0, 1]")
    return float(threshold)
