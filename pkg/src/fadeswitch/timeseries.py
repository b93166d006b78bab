"""Attenuation time series: container, CSV ingest/export, synthetic generator.

The generator is a lognormal first-order Gauss-Markov process.  A unit
variance Ornstein-Uhlenbeck state ``x`` is sampled exactly on the grid,

    x[k+1] = rho * x[k] + sqrt(1 - rho**2) * w[k],   rho = exp(-beta / fs)

and mapped to attenuation with ``A = exp(m_ln + sigma_ln * x) + offset_db``.
Because ``x`` is stationary N(0, 1), the exceedance probability of the
pre-offset process is ``Q((ln a - m_ln) / sigma_ln)``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np
from scipy import signal
from scipy.stats import norm

from .errors import (
    EmptyInputError,
    FormatError,
    InvalidParameterError,
    NegativeValueError,
    SpacingError,
)

CSV_HEADER = "timestamp_s,attenuation_db"
SPACING_TOLERANCE = 0.01


@dataclass(frozen=True, eq=False)
class AttenuationSeries:
    """Uniformly sampled excess attenuation (dB) for one gateway."""

    gateway_id: str
    values: np.ndarray
    sample_rate_hz: float = 10.0
    start_time_s: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise EmptyInputError("attenuation series needs at least one sample")
        if not np.all(np.isfinite(values)):
            raise FormatError("attenuation values must be finite")
        if np.any(values < 0):
            raise NegativeValueError("attenuation values must be >= 0 dB")
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise InvalidParameterError("sample_rate_hz must be positive")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "start_time_s", float(self.start_time_s))

    def __len__(self) -> int:
        return self.values.size

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def timestamps(self) -> np.ndarray:
        return self.start_time_s + np.arange(len(self)) / self.sample_rate_hz

    def exceedance(self, alpha_db: float) -> float:
        """Fraction of samples strictly above ``alpha_db``."""
        return float(np.mean(self.values > alpha_db))


@dataclass(frozen=True)
class SynthParams:
    m_ln: float = 0.0
    sigma_ln: float = 1.0
    beta_inv_s: float = 1.0 / 600.0
    duration_s: float = 3600.0
    sample_rate_hz: float = 10.0
    offset_db: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("duration_s", "sample_rate_hz", "beta_inv_s"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidParameterError(f"{name} must be positive, got {v!r}")
        if not (self.sigma_ln >= 0 and math.isfinite(self.sigma_ln)):
            raise InvalidParameterError("sigma_ln must be >= 0")
        if not (self.offset_db >= 0 and math.isfinite(self.offset_db)):
            raise InvalidParameterError("offset_db must be >= 0")
        if not math.isfinite(self.m_ln):
            raise InvalidParameterError("m_ln must be finite")
        if int(self.seed) != self.seed or self.seed < 0:
            raise InvalidParameterError("seed must be an unsigned integer")

    @property
    def rho(self) -> float:
        return math.exp(-self.beta_inv_s / self.sample_rate_hz)

    def exceedance_probability(self, alpha_db: float) -> float:
        """Analytic P[A > alpha] of the pre-offset process."""
        if alpha_db <= 0:
            return 1.0
        if self.sigma_ln == 0:
            return float(math.exp(self.m_ln) > alpha_db)
        return float(norm.sf((math.log(alpha_db) - self.m_ln) / self.sigma_ln))

    def to_dict(self) -> dict:
        return asdict(self)


# Stand-ins for different climates / bands.  Decorrelation times are long
# relative to the prediction horizons so that fades are partially predictable.
PRESETS: dict[str, SynthParams] = {
    "temperate_qv": SynthParams(m_ln=0.0, sigma_ln=1.0, beta_inv_s=1 / 3600, duration_s=7200.0),
    "temperate_ka": SynthParams(m_ln=-0.7, sigma_ln=0.8, beta_inv_s=1 / 3600, duration_s=7200.0),
    "tropical_ka": SynthParams(m_ln=0.3, sigma_ln=1.2, beta_inv_s=1 / 1200, duration_s=7200.0),
    "arid_ka": SynthParams(m_ln=-1.0, sigma_ln=1.1, beta_inv_s=1 / 2400, duration_s=7200.0),
}


def gauss_markov(n: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance stationary AR(1) sample path of length ``n``."""
    w = rng.standard_normal(n)
    x0 = w[0]
    if n == 1:
        return np.array([x0])
    gain = math.sqrt(1.0 - rho * rho)
    rest, _ = signal.lfilter([gain], [1.0, -rho], w[1:], zi=np.array([rho * x0]))
    return np.concatenate(([x0], rest))


def generate_synthetic(params: SynthParams, gateway_id: str = "synthetic") -> AttenuationSeries:
    n = int(round(params.duration_s * params.sample_rate_hz))
    if n < 1:
        raise InvalidParameterError("duration_s * sample_rate_hz rounds to zero samples")
    rng = np.random.default_rng(params.seed)
    x = gauss_markov(n, params.rho, rng)
    values = np.exp(params.m_ln + params.sigma_ln * x) + params.offset_db
    return AttenuationSeries(gateway_id, values, params.sample_rate_hz, 0.0)


def to_csv_bytes(series: AttenuationSeries) -> bytes:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for t, a in zip(series.timestamps().tolist(), series.values.tolist()):
        buf.write(f"{t!r},{a!r}\n")
    return buf.getvalue().encode("utf-8")


def write_csv(series: AttenuationSeries, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_bytes(to_csv_bytes(series))
    return path


def ingest_csv(source: Union[bytes, BinaryIO], gateway_id: str = "ingested") -> AttenuationSeries:
    """Parse ``timestamp_s,attenuation_db`` CSV text into a series.

    The sample rate is inferred from the median timestamp spacing; every
    spacing must lie within 1% of that median.
    """
    raw = source if isinstance(source, (bytes, bytearray)) else source.read()
    try:
        text = bytes(raw).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"CSV is not valid UTF-8: {exc}") from None
    lines = text.splitlines()
    if not lines or lines[0].strip().lstrip("﻿") != CSV_HEADER:
        raise FormatError(f"missing header line {CSV_HEADER!r}")
    body = [ln for ln in lines[1:] if ln.strip()]
    if not body:
        raise EmptyInputError("CSV has a header but no samples")
    try:
        data = np.loadtxt(body, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"malformed CSV row: {exc}") from None
    if data.shape[1] != 2:
        raise FormatError("each row must have exactly two fields")
    t, a = data[:, 0], data[:, 1]
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(a))):
        raise FormatError("non-finite field in CSV")
    if np.any(a < 0):
        row = int(np.argmax(a < 0)) + 2
        raise NegativeValueError(f"negative attenuation at line {row}")
    if t.size == 1:
        rate = 10.0
    else:
        dt = np.diff(t)
        step = float(np.median(dt))
        if step <= 0:
            raise SpacingError("timestamps must be strictly increasing")
        if np.any(np.abs(dt - step) > SPACING_TOLERANCE * step):
            bad = int(np.argmax(np.abs(dt - step) > SPACING_TOLERANCE * step)) + 3
            raise SpacingError(f"non-uniform timestamp spacing at line {bad}")
        rate = round(1.0 / step, 6)
    return AttenuationSeries(gateway_id, a, rate, float(t[0]))


def read_csv(path: Union[str, Path], gateway_id: str | None = None) -> AttenuationSeries:
    path = Path(path)
    with open(path, "rb") as fh:
        return ingest_csv(fh, gateway_id or path.stem)
