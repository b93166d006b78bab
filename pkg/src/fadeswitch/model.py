"""LSTM event classifier with hand-written forward and BPTT backward passes.

Pipeline per window: LSTM recurrence over the L samples, standardization
of the final hidden vector, inverted dropout (train mode only), dense
affine map, sigmoid.

Gate layout inside the fused matrices is ``[i, f, o, c]``; the public
parameter dict keeps one array per gate (``W_i``, ``U_f``, ``b_c``, ...).
Everything runs in float64.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .dataset import NormalizationStats
from .errors import FormatError, InvalidParameterError, NumericError, ShapeError

GATES = ("i", "f", "o", "c")
LAYER_NORM_EPS = 1e-5
FORMAT_TAG = "fadeswitch-lstm"
FORMAT_VERSION = 1


def param_names() -> list[str]:
    return (
        [f"W_{g}" for g in GATES]
        + [f"U_{g}" for g in GATES]
        + [f"b_{g}" for g in GATES]
        + ["w_d", "b_d"]
    )


def count_parameters(hidden_size: int, input_dim: int = 1) -> int:
    return 4 * (hidden_size * (input_dim + hidden_size) + hidden_size) + hidden_size + 1


@dataclass(frozen=True)
class ModelConfig:
    window_len: int
    hidden_size: int = 50
    input_dim: int = 1
    dropout_rate: float = 0.15

    def __post_init__(self):
        for name in ("window_len", "hidden_size", "input_dim"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise InvalidParameterError(f"{name} must be a positive integer")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidParameterError("dropout_rate must lie in [0, 1)")

    @property
    def parameter_count(self) -> int:
        return count_parameters(self.hidden_size, self.input_dim)

    def shapes(self) -> dict[str, tuple]:
        H, D = self.hidden_size, self.input_dim
        out = {}
        for g in GATES:
            out[f"W_{g}"] = (H, D)
            out[f"U_{g}"] = (H, H)
            out[f"b_{g}"] = (H,)
        out["w_d"] = (H,)
        out["b_d"] = ()
        return {k: out[k] for k in param_names()}


@dataclass
class LstmClassifier:
    config: ModelConfig
    params: dict[str, np.ndarray]
    norm: Optional[NormalizationStats] = None

    def __post_init__(self):
        shapes = self.config.shapes()
        if set(self.params) != set(shapes):
            raise ShapeError("parameter names do not match the configuration")
        for k, shape in shapes.items():
            arr = np.asarray(self.params[k], dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"{k}: expected shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"{k} has non-finite entries")
            self.params[k] = arr

    @property
    def parameter_count(self) -> int:
        return sum(int(np.size(v)) for v in self.params.values())

    def copy(self) -> "LstmClassifier":
        return LstmClassifier(self.config, {k: v.copy() for k, v in self.params.items()}, self.norm)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.params[k]) for k in param_names()])


def init_model(config: ModelConfig, seed: int = 0) -> LstmClassifier:
    """Glorot-uniform weights, zero biases, forget-gate bias 1."""
    rng = np.random.default_rng(seed)
    H, D = config.hidden_size, config.input_dim
    params: dict[str, np.ndarray] = {}
    for g in GATES:
        lim = math.sqrt(6.0 / (D + H))
        params[f"W_{g}"] = rng.uniform(-lim, lim, size=(H, D))
    for g in GATES:
        lim = math.sqrt(6.0 / (H + H))
        params[f"U_{g}"] = rng.uniform(-lim, lim, size=(H, H))
    for g in GATES:
        params[f"b_{g}"] = np.ones(H) if g == "f" else np.zeros(H)
    lim = math.sqrt(6.0 / (H + 1))
    params["w_d"] = rng.uniform(-lim, lim, size=H)
    params["b_d"] = np.array(0.0)
    return LstmClassifier(config, params)


def zero_model(config: ModelConfig) -> LstmClassifier:
    shapes = config.shapes()
    return LstmClassifier(config, {k: np.zeros(s) for k, s in shapes.items()})


@dataclass
class ForwardTrace:
    """Everything backward() needs.  Recurrent arrays are (time, feature, batch)."""

    inputs: np.ndarray  # (B, L, D)
    gates: np.ndarray  # (L, 4H, B) post-activation
    cells: np.ndarray  # (L+1, H, B)
    hiddens: np.ndarray  # (L+1, H, B)
    tanh_cells: np.ndarray  # (L, H, B)
    centered: np.ndarray  # final hidden minus its mean, (B, H)
    sigma: np.ndarray  # (B,)
    normalized: np.ndarray  # (B, H)
    mask: np.ndarray  # (B, H); survivors carry 1/(1-rate)
    logits: np.ndarray  # (B,)
    probability: np.ndarray  # (B,)


def _fused(params):
    W = np.concatenate([params[f"W_{g}"] for g in GATES], axis=0)
    U = np.concatenate([params[f"U_{g}"] for g in GATES], axis=0)
    b = np.concatenate([params[f"b_{g}"] for g in GATES])
    return W, U, b


def _as_batch(model: LstmClassifier, features) -> np.ndarray:
    cfg = model.config
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 2 and cfg.input_dim == 1:
        X = X[:, :, None]
    if X.ndim != 3 or X.shape[1] != cfg.window_len or X.shape[2] != cfg.input_dim:
        raise ShapeError(
            f"expected windows of length {cfg.window_len} x {cfg.input_dim}, got array of shape {np.shape(features)}"
        )
    if not np.all(np.isfinite(X)):
        raise NumericError("non-finite value in input window")
    return X


def _sigmoid_(z):
    # in place; the tanh form never overflows and is faster than expit
    z *= 0.5
    np.tanh(z, out=z)
    z += 1.0
    z *= 0.5


TIME_BLOCK = 128


def _recurrence(W, U, b, X, keep):
    """LSTM over X (B, L, D).  Internal arrays are (feature, batch) so that
    each gate block is a contiguous slab."""
    B, L, D = X.shape
    H = U.shape[1]
    h = np.zeros((H, B))
    c = np.zeros((H, B))
    if keep:
        gates = np.empty((L, 4 * H, B))
        cells = np.zeros((L + 1, H, B))
        hiddens = np.zeros((L + 1, H, B))
        tanh_cells = np.empty((L, H, B))
    else:
        gates = np.empty((min(TIME_BLOCK, L), 4 * H, B))
    Xt = np.ascontiguousarray(np.transpose(X, (1, 2, 0)))  # (L, D, B)
    bias = b[:, None]
    block = L if keep else TIME_BLOCK
    for t0 in range(0, L, block):
        t1 = min(t0 + block, L)
        buf = gates[t0:t1] if keep else gates[: t1 - t0]
        np.matmul(W, Xt[t0:t1], out=buf)
        buf += bias
        for t in range(t0, t1):
            z = buf[t - t0]
            z += np.dot(U, h)
            _sigmoid_(z[: 3 * H])
            np.tanh(z[3 * H :], out=z[3 * H :])
            c = z[H : 2 * H] * c
            c += z[:H] * z[3 * H :]
            tc = np.tanh(c)
            h = z[2 * H : 3 * H] * tc
            if keep:
                cells[t + 1] = c
                hiddens[t + 1] = h
                tanh_cells[t] = tc
    h = np.ascontiguousarray(h.T)
    if keep:
        return h, (gates, cells, hiddens, tanh_cells)
    return h, None


def _head(params, h, mask):
    centered = h - h.mean(axis=1, keepdims=True)
    sigma = np.sqrt(np.mean(centered * centered, axis=1))
    normalized = centered / (sigma + LAYER_NORM_EPS)[:, None]
    logits = (normalized * mask) @ params["w_d"] + params["b_d"]
    return centered, sigma, normalized, logits


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def forward_batch(model: LstmClassifier, X, mode: str = "infer", rng=None, mask=None):
    """Batched forward pass keeping the full trace; returns (probs, trace)."""
    if mode not in ("train", "infer"):
        raise InvalidParameterError(f"mode must be 'train' or 'infer', got {mode!r}")
    X = _as_batch(model, X)
    B = X.shape[0]
    H = model.config.hidden_size
    if mask is None:
        if mode == "train":
            rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
            mask = dropout_mask((B, H), model.config.dropout_rate, rng)
        else:
            mask = np.ones((B, H))
    mask = np.asarray(mask, dtype=np.float64).reshape(B, H)
    W, U, b = _fused(model.params)
    h, (gates, cells, hiddens, tanh_cells) = _recurrence(W, U, b, X, keep=True)
    centered, sigma, normalized, logits = _head(model.params, h, mask)
    probs = expit(logits)
    trace = ForwardTrace(X, gates, cells, hiddens, tanh_cells, centered, sigma, normalized, mask, logits, probs)
    return probs, trace


def forward(model: LstmClassifier, features, mode: str = "infer", dropout_seed=None, mask=None):
    """Single-window forward pass; returns (probability, trace)."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :, None]
    elif X.ndim == 2:
        X = X[None]
    probs, trace = forward_batch(model, X, mode, rng=dropout_seed, mask=mask)
    return float(probs[0]), trace


def backward(model: LstmClassifier, trace: ForwardTrace, label) -> dict[str, np.ndarray]:
    """Gradient of the batch-mean binary cross-entropy w.r.t. every parameter."""
    y = np.broadcast_to(np.asarray(label, dtype=np.float64), trace.probability.shape)
    B = y.shape[0]
    H = model.config.hidden_size
    p = model.params

    dlogit = (trace.probability - y) / B
    feat = trace.normalized * trace.mask
    grads = {"w_d": feat.T @ dlogit, "b_d": np.array(dlogit.sum())}

    # standardization Jacobian
    dn = dlogit[:, None] * p["w_d"][None, :] * trace.mask
    s = (trace.sigma + LAYER_NORM_EPS)[:, None]
    safe_sigma = np.where(trace.sigma > 0, trace.sigma, 1.0)[:, None]
    du = dn / s - trace.centered * np.sum(dn * trace.centered, axis=1, keepdims=True) / (s * s * H * safe_sigma)
    dh = du - du.mean(axis=1, keepdims=True)

    W, U, _ = _fused(p)
    gates, cells, hiddens, tanh_cells = trace.gates, trace.cells, trace.hiddens, trace.tanh_cells
    L = gates.shape[0]
    dZ = np.empty_like(gates)
    dh = np.ascontiguousarray(dh.T)  # (H, B)
    dc_next = np.zeros((H, B))
    UT = U.T.copy()
    for t in range(L - 1, -1, -1):
        z = gates[t]
        i, f, o, g = z[:H], z[H : 2 * H], z[2 * H : 3 * H], z[3 * H :]
        tc = tanh_cells[t]
        dc = dh * o
        dc *= 1.0 - tc * tc
        dc += dc_next
        dz = dZ[t]
        np.multiply(dc * g, i * (1.0 - i), out=dz[:H])
        np.multiply(dc * cells[t], f * (1.0 - f), out=dz[H : 2 * H])
        np.multiply(dh * tc, o * (1.0 - o), out=dz[2 * H : 3 * H])
        np.multiply(dc * i, 1.0 - g * g, out=dz[3 * H :])
        dc_next = dc * f
        dh = np.dot(UT, dz)
    X_t = np.transpose(trace.inputs, (1, 2, 0))  # (L, D, B)
    dW = np.tensordot(dZ, X_t, axes=([0, 2], [0, 2]))
    dU = np.tensordot(dZ, hiddens[:-1], axes=([0, 2], [0, 2]))
    db = dZ.sum(axis=(0, 2))
    for k, g in enumerate(GATES):
        sl = slice(k * H, (k + 1) * H)
        grads[f"W_{g}"] = dW[sl].copy()
        grads[f"U_{g}"] = dU[sl].copy()
        grads[f"b_{g}"] = db[sl].copy()
    return {k: grads[k] for k in param_names()}


def predict_proba(model: LstmClassifier, X, chunk: int = 256) -> np.ndarray:
    """Infer-mode probabilities for a stack of already-normalized windows."""
    X = _as_batch(model, X)
    W, U, b = _fused(model.params)
    ones = np.ones((1, model.config.hidden_size))
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], chunk):
        h, _ = _recurrence(W, U, b, X[start : start + chunk], keep=False)
        out[start : start + chunk] = expit(_head(model.params, h, ones)[3])
    return out


def serialize(model: LstmClassifier) -> bytes:
    doc = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "config": {
            "window_len": model.config.window_len,
            "hidden_size": model.config.hidden_size,
            "input_dim": model.config.input_dim,
            "dropout_rate": model.config.dropout_rate,
        },
        "params": {
            k: {"shape": list(np.shape(model.params[k])), "data": np.ravel(model.params[k]).tolist()}
            for k in param_names()
        },
        "normalization": None
        if model.norm is None
        else {"mean_db": model.norm.mean_db, "std_db": model.norm.std_db},
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def deserialize(payload: bytes) -> LstmClassifier:
    try:
        doc = json.loads(payload)
    except (ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"model payload is not valid JSON (truncated?): {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_TAG:
        raise FormatError("not a model file")
    if doc.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported model version {doc.get('version')!r}")
    try:
        config = ModelConfig(**doc["config"])
        params = {
            k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()
        }
        norm = doc["normalization"]
        norm = None if norm is None else NormalizationStats(norm["mean_db"], norm["std_db"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model file: {exc}") from None
    return LstmClassifier(config, params, norm)
