"""Discrete-time smart gateway diversity simulation.

Per sample ``t`` the loop does, in order:

1. apply pending switches whose ``effective_index == t``;
2. count outage for every active gateway with ``a(t) > alpha``;
3. on decision ticks, let the policy flag active gateways expected to fade
   at ``t + delta`` and schedule a swap with the best eligible backup.

Best backup: not part of a pending switch, not itself predicted to fade,
lowest current attenuation, ties broken by id.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np

from .dataset import normalize_array
from .errors import AlignmentError, FormatError, InvalidParameterError, UsageError
from .model import LstmClassifier, deserialize, predict_proba
from .predictors import check_threshold
from .timeseries import SynthParams, generate_synthetic, read_csv

POLICIES = ("persistence", "airis2", "oracle")
OUTAGE_MODES = ("per_link", "any_link")


@dataclass
class GatewayNetwork:
    gateways: dict
    active_ids: frozenset
    backup_ids: frozenset

    def __post_init__(self):
        self.active_ids = frozenset(self.active_ids)
        self.backup_ids = frozenset(self.backup_ids)
        if not self.gateways:
            raise AlignmentError("network has no gateways")
        if len(self.active_ids) < 1:
            raise InvalidParameterError("active set must hold at least one gateway")
        if self.active_ids & self.backup_ids:
            raise InvalidParameterError("active and backup sets overlap")
        unknown = (self.active_ids | self.backup_ids) - set(self.gateways)
        if unknown:
            raise InvalidParameterError(f"unknown gateway ids {sorted(unknown)}")
        series = list(self.gateways.values())
        n, rate, t0 = len(series[0]), series[0].sample_rate_hz, series[0].start_time_s
        for s in series[1:]:
            if len(s) != n or s.sample_rate_hz != rate or not math.isclose(s.start_time_s, t0, abs_tol=1e-9):
                raise AlignmentError("gateway series must share length, sample rate and start time")

    @classmethod
    def from_list(cls, series: list, n_active: int) -> "GatewayNetwork":
        gw = {s.gateway_id: s for s in series}
        if len(gw) != len(series):
            raise InvalidParameterError("duplicate gateway ids")
        ids = [s.gateway_id for s in series]
        return cls(gw, frozenset(ids[:n_active]), frozenset(ids[n_active:]))

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.gateways.values())))

    @property
    def sample_rate_hz(self) -> float:
        return next(iter(self.gateways.values())).sample_rate_hz


@dataclass(frozen=True)
class PendingSwitch:
    out_id: str
    in_id: str
    decision_index: int
    effective_index: int


@dataclass
class SimResult:
    outage_sample_count: int
    outage_fraction: float
    switch_count: int
    per_gateway_outage: dict
    events: list
    starvation: list
    total_samples: int
    n_active: int
    outage_mode: str
    sample_rate_hz: float
    start_time_s: float
    membership: list = field(default_factory=list)  # (index, sorted active ids) after each change
    final_active: tuple = ()
    final_backup: tuple = ()

    def to_dict(self) -> dict:
        return {
            "outage_sample_count": self.outage_sample_count,
            "outage_fraction": self.outage_fraction,
            "availability": availability(self),
            "switch_count": self.switch_count,
            "per_gateway_outage": dict(sorted(self.per_gateway_outage.items())),
            "total_samples": self.total_samples,
            "n_active": self.n_active,
            "outage_mode": self.outage_mode,
            "final_active": list(self.final_active),
            "final_backup": list(self.final_backup),
            "starvation_count": len(self.starvation),
            "events": [
                {"out_id": e.out_id, "in_id": e.in_id, "decision_index": e.decision_index,
                 "effective_index": e.effective_index}
                for e in self.events
            ],
        }

    def to_json(self) -> bytes:
        return (json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n").encode("utf-8")

    def switch_log_csv(self) -> bytes:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_s", "out_id", "in_id"])
        for e in self.events:
            w.writerow([repr(self.start_time_s + e.effective_index / self.sample_rate_hz), e.out_id, e.in_id])
        return buf.getvalue().encode("utf-8")


def availability(result: SimResult, total_samples: Optional[int] = None) -> float:
    total = result.total_samples if total_samples is None else total_samples
    if total <= 0:
        raise InvalidParameterError("total samples must be positive")
    denom = total * (result.n_active if result.outage_mode == "per_link" else 1)
    return 1.0 - result.outage_sample_count / denom


def _event_predictions(network, policy, alpha_db, delay, decision_step, model, threshold):
    """Per gateway boolean array: predicted fade at t + delay, evaluated at decision ticks."""
    n = network.n_samples
    out = {}
    for gid, s in network.gateways.items():
        a = s.values
        if policy == "persistence":
            out[gid] = a > alpha_db
        elif policy == "oracle":
            pred = np.zeros(n, dtype=bool)
            pred[: n - delay] = a[delay:] > alpha_db
            out[gid] = pred
        else:
            m = model[gid] if isinstance(model, Mapping) else model
            L = m.config.window_len
            pred = np.zeros(n, dtype=bool)
            ticks = np.arange(0, n, decision_step)
            ticks = ticks[ticks >= L - 1]
            if ticks.size:
                views = np.lib.stride_tricks.sliding_window_view(a, L)[ticks - L + 1]
                probs = predict_proba(m, normalize_array(views, m.norm))
                pred[ticks] = probs >= threshold
            out[gid] = pred
    return out


def simulate(network: GatewayNetwork, policy: str, alpha_db: float, delta_t_s: float,
             switch_cooldown_s: float = 0.0, model: Union[LstmClassifier, Mapping, None] = None,
             threshold: float = 0.5, decision_interval_s: Optional[float] = None,
             outage_mode: str = "per_link") -> SimResult:
    if policy not in POLICIES:
        raise UsageError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    if outage_mode not in OUTAGE_MODES:
        raise UsageError(f"unknown outage mode {outage_mode!r}")
    if switch_cooldown_s < 0:
        raise InvalidParameterError("switch cooldown must be >= 0")
    rate = network.sample_rate_hz
    delay = int(round(delta_t_s * rate))
    if delay < 1:
        raise InvalidParameterError("switching delay must be at least one sample")
    decision_step = 1 if decision_interval_s is None else max(1, int(round(decision_interval_s * rate)))
    cooldown = int(round(switch_cooldown_s * rate))
    threshold = check_threshold(threshold)
    if policy == "airis2":
        if model is None:
            raise UsageError("airis2 policy needs a trained model")
        models = model.values() if isinstance(model, Mapping) else [model]
        if isinstance(model, Mapping) and set(model) != set(network.gateways):
            raise UsageError("per-gateway models must cover every gateway")
        if any(m.norm is None for m in models):
            raise UsageError("model carries no normalization stats")

    preds = _event_predictions(network, policy, alpha_db, delay, decision_step, model, threshold)
    values = {g: s.values for g, s in network.gateways.items()}
    n = network.n_samples
    active = set(network.active_ids)
    backup = set(network.backup_ids)
    pending: dict[int, list] = {}
    busy: set = set()
    last_change: dict = {}
    per_gw = {g: 0 for g in network.gateways}
    outage = 0
    events, starvation, membership = [], [], []

    for t in range(n):
        for sw in pending.pop(t, ()):
            active.remove(sw.out_id)
            backup.remove(sw.in_id)
            active.add(sw.in_id)
            backup.add(sw.out_id)
            busy.discard(sw.out_id)
            busy.discard(sw.in_id)
            last_change[sw.out_id] = last_change[sw.in_id] = t
            events.append(sw)
            membership.append((t, tuple(sorted(active))))

        hit = False
        for g in active:
            if values[g][t] > alpha_db:
                per_gw[g] += 1
                hit = True
                if outage_mode == "per_link":
                    outage += 1
        if hit and outage_mode == "any_link":
            outage += 1

        if t % decision_step:
            continue
        for g in sorted(active):
            if not preds[g][t] or g in busy:
                continue
            if g in last_change and t - last_change[g] < cooldown:
                continue
            candidates = [b for b in backup if b not in busy and not preds[b][t]]
            if not candidates:
                starvation.append((t, g))
                continue
            best = min(candidates, key=lambda b: (values[b][t], b))
            sw = PendingSwitch(g, best, t, t + delay)
            pending.setdefault(t + delay, []).append(sw)
            busy.update((g, best))

    denom = n * (len(network.active_ids) if outage_mode == "per_link" else 1)
    return SimResult(
        outage_sample_count=outage,
        outage_fraction=outage / denom,
        switch_count=len(events),
        per_gateway_outage=per_gw,
        events=events,
        starvation=starvation,
        total_samples=n,
        n_active=len(network.active_ids),
        outage_mode=outage_mode,
        sample_rate_hz=rate,
        start_time_s=next(iter(network.gateways.values())).start_time_s,
        membership=membership,
        final_active=tuple(sorted(active)),
        final_backup=tuple(sorted(backup)),
    )


# -- scenario files -------------------------------------------------------------

@dataclass
class Scenario:
    network: GatewayNetwork
    alpha_db: float
    delta_t_s: float
    policy: str
    cooldown_s: float = 0.0
    seed: int = 0
    model: Union[LstmClassifier, dict, None] = None
    threshold: float = 0.5
    decision_interval_s: Optional[float] = None
    outage_mode: str = "per_link"
    inputs: list = field(default_factory=list)  # files read, for manifests

    def run(self) -> SimResult:
        return simulate(self.network, self.policy, self.alpha_db, self.delta_t_s, self.cooldown_s,
                        self.model, self.threshold, self.decision_interval_s, self.outage_mode)


def load_scenario(path) -> Scenario:
    """Read a scenario JSON file; relative paths resolve against its directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise UsageError(f"scenario file not found: {path}") from None
    except ValueError as exc:
        raise FormatError(f"scenario is not valid JSON: {exc}") from None
    base = path.parent
    inputs = [path]
    try:
        seed = int(doc.get("seed", 0))
        series = []
        for k, gw in enumerate(doc["gateways"]):
            gid = str(gw["id"])
            if "csv" in gw:
                p = base / gw["csv"]
                if not p.exists():
                    raise UsageError(f"series file not found: {p}")
                inputs.append(p)
                series.append(read_csv(p, gid))
            elif "synth" in gw:
                params = dict(gw["synth"])
                params.setdefault("seed", seed + k)
                series.append(generate_synthetic(SynthParams(**params), gid))
            else:
                raise FormatError(f"gateway {gid!r} needs 'csv' or 'synth'")
        network = GatewayNetwork.from_list(series, int(doc["n_active"]))
        policy = doc["policy"]
        model = None
        if "model" in doc:
            inputs.append(base / doc["model"])
            model = _load_model(base / doc["model"])
        elif "models" in doc:
            model = {}
            for gid, mp in doc["models"].items():
                inputs.append(base / mp)
                model[gid] = _load_model(base / mp)
        return Scenario(
            network=network,
            alpha_db=float(doc["alpha_db"]),
            delta_t_s=float(doc["delta_t_s"]),
            policy=policy,
            cooldown_s=float(doc.get("cooldown_s", 0.0)),
            seed=seed,
            model=model,
            threshold=float(doc.get("threshold", 0.5)),
            decision_interval_s=doc.get("decision_interval_s"),
            outage_mode=doc.get("outage_mode", "per_link"),
            inputs=inputs,
        )
    except KeyError as exc:
        raise FormatError(f"scenario is missing field {exc}") from None
    except TypeError as exc:
        raise FormatError(f"scenario field has the wrong type: {exc}") from None


def _load_model(path: Path) -> LstmClassifier:
    try:
        return deserialize(path.read_bytes())
    except FileNotFoundError:
        raise UsageError(f"model file not found: {path}") from None
