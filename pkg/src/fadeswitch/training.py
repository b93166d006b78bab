"""Adam on binary cross-entropy, mini-batch training loop, learning curves."""
from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .dataset import SplitDataset, normalize_array, stack
from .errors import InsufficientDataError, InvalidParameterError, ShapeError
from .model import LstmClassifier, backward, dropout_mask, forward_batch, param_names, predict_proba

PROB_CLAMP = 1e-12
# Upper bound on the float64 trace held per backward call (bytes).
TRACE_BUDGET = 192 * 2**20


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 64
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    max_grad_norm: Optional[float] = None
    decision_threshold: float = 0.5

    def __post_init__(self):
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise InvalidParameterError("epochs must be a positive integer")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise InvalidParameterError("batch_size must be a positive integer")
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise InvalidParameterError("learning_rate must be finite and >= 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise InvalidParameterError("Adam betas must lie in [0, 1)")
        if not self.adam_epsilon > 0:
            raise InvalidParameterError("adam_epsilon must be positive")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise InvalidParameterError("max_grad_norm must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def learning_curve_equal(self, other: "TrainReport") -> bool:
        return (self.train_loss, self.val_loss, self.train_acc, self.val_acc) == (
            other.train_loss, other.val_loss, other.train_acc, other.val_acc,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,train_loss,val_loss,train_acc,val_acc\n")
        for e in range(self.epochs):
            row = [self.train_loss[e], self.val_loss[e], self.train_acc[e], self.val_acc[e]]
            buf.write(f"{e + 1}," + ",".join("" if v is None else repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


def bce_loss(p, y):
    """Binary cross-entropy with the probability clamped to [1e-12, 1-1e-12]."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    out = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(out) if out.ndim == 0 else out


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if predictions.shape != labels.shape:
        raise ShapeError("predictions and labels differ in length")
    if predictions.size == 0:
        raise InsufficientDataError("accuracy of an empty set is undefined")
    return float(np.mean(predictions == labels))


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params: dict, grads: dict, state: AdamState, t: int, config: TrainConfig):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    if t < 1:
        raise InvalidParameterError("Adam step index starts at 1")
    if set(params) != set(grads):
        raise ShapeError("gradient names do not match parameters")
    b1, b2, lr, eps = config.adam_beta1, config.adam_beta2, config.learning_rate, config.adam_epsilon
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        if g.shape != np.shape(p):
            raise ShapeError(f"{k}: gradient shape {g.shape} != parameter shape {np.shape(p)}")
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_p[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)


def microbatch_size(batch: int, window_len: int, hidden: int) -> int:
    per_example = 8 * 8 * (window_len + 1) * hidden
    return max(1, min(batch, TRACE_BUDGET // per_example))


def batch_gradient(model: LstmClassifier, X, y, masks):
    """Mean BCE gradient over a batch, summed over fixed-order micro-batches.

    Returns (grads, per-example probabilities).
    """
    B = X.shape[0]
    step = microbatch_size(B, model.config.window_len, model.config.hidden_size)
    total = None
    probs = np.empty(B)
    for s in range(0, B, step):
        sl = slice(s, s + step)
        p, trace = forward_batch(model, X[sl], "train", mask=masks[sl])
        g = backward(model, trace, y[sl])
        w = (min(s + step, B) - s) / B
        probs[sl] = p
        if total is None:
            total = {k: w * v for k, v in g.items()}
        else:
            for k in total:
                total[k] += w * g[k]
    return total, probs


def _clip(grads: dict, max_norm: Optional[float]) -> dict:
    if max_norm is None:
        return grads
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def evaluate_loss_acc(model: LstmClassifier, X, y, threshold: float = 0.5):
    if len(y) == 0:
        return None, None
    p = predict_proba(model, X)
    return float(np.mean(bce_loss(p, y))), accuracy(p >= threshold, y)


def train(model: LstmClassifier, split: SplitDataset, config: TrainConfig = TrainConfig()):
    """Train a copy of ``model`` on ``split.train``; returns (model, report).

    Training windows are normalized with ``split.norm``; the stats are
    attached to the returned model.
    """
    if not split.train:
        raise InsufficientDataError("empty training set")
    if split.norm is None:
        raise InvalidParameterError("split has no normalization stats; use build_split()")
    X_tr, y_tr, _ = stack(split.train)
    X_tr = normalize_array(X_tr, split.norm)
    y_tr = y_tr.astype(np.float64)
    X_va, y_va, _ = stack(split.val)
    if len(y_va):
        X_va = normalize_array(X_va, split.norm)

    model = model.copy()
    model.norm = split.norm
    rng = np.random.default_rng(config.seed)
    state = AdamState.zeros_like(model.params)
    report = TrainReport()
    n = len(y_tr)
    H = model.config.hidden_size
    names = param_names()
    for _epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for s in range(0, n, config.batch_size):
            idx = order[s : s + config.batch_size]
            masks = dropout_mask((len(idx), H), model.config.dropout_rate, rng)
            grads, probs = batch_gradient(model, X_tr[idx], y_tr[idx], masks)
            grads = _clip(grads, config.max_grad_norm)
            loss_sum += float(np.sum(bce_loss(probs, y_tr[idx])))
            correct += int(np.sum((probs >= config.decision_threshold) == (y_tr[idx] > 0.5)))
            params, state = adam_step(model.params, grads, state, state.t + 1, config)
            model.params = {k: params[k] for k in names}
        report.train_loss.append(loss_sum / n)
        report.train_acc.append(correct / n)
        vl, va = evaluate_loss_acc(model, X_va, y_va, config.decision_threshold)
        report.val_loss.append(vl)
        report.val_acc.append(va)
        report.epoch_seconds.append(time.perf_counter() - t0)
    return model, report
