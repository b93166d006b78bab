"""Command line entry point: ``fadeswitch <subcommand> --out DIR ...``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path


from . import __version__
from .dataset import WindowSpec, build_split, export_dataset, load_dataset, make_windows, normalize_array, stack
from .errors import DataError, FadeSwitchError, UsageError
from .evaluation import confusion, rates, report, sweep
from .manifest import MANIFEST_NAME, RunManifest, digest_paths, read_manifest
from .model import ModelConfig, deserialize, init_model, predict_proba, serialize
from .predictors import check_threshold, persistence_batch, predictions_csv
from .sgdsim import POLICIES, load_scenario
from .timeseries import PRESETS, SynthParams, generate_synthetic, read_csv, write_csv
from .training import TrainConfig, accuracy, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: usage error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _history_rule(text: str) -> float:
    t = text.strip().lower()
    if not t.endswith("x"):
        raise argparse.ArgumentTypeError("history rule looks like '2x' (history = k * delta_t)")
    try:
        k = float(t[:-1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad history rule {text!r}") from None
    if k <= 0:
        raise argparse.ArgumentTypeError("history multiplier must be positive")
    return k


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _add_synth_flags(p, required=False):
    g = p.add_argument_group("synthetic series")
    g.add_argument("--preset", choices=sorted(PRESETS), help="start from a named parameter set")
    g.add_argument("--m-ln", type=float, help="log-scale location of attenuation (ln dB)")
    g.add_argument("--sigma-ln", type=float, help="log-scale spread (>= 0)")
    g.add_argument("--beta-inv-s", type=float, help="decorrelation rate (1/s)")
    g.add_argument("--duration-s", type=float, help="series length (s)")
    g.add_argument("--sample-rate-hz", type=float, help="sampling rate (Hz), default 10")
    g.add_argument("--offset-db", type=float, help="clear-sky floor added after exponentiation (dB)")


def _synth_params(args) -> SynthParams:
    base = PRESETS[args.preset].to_dict() if args.preset else SynthParams().to_dict()
    for key in ("m_ln", "sigma_ln", "beta_inv_s", "duration_s", "sample_rate_hz", "offset_db"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    base["seed"] = args.seed
    return SynthParams(**base)


def _train_flags(p):
    g = p.add_argument_group("training")
    g.add_argument("--hidden-size", type=int, default=50, help="LSTM width (cells)")
    g.add_argument("--dropout", type=float, default=0.15, help="dropout rate on normalized features")
    g.add_argument("--epochs", type=int, default=5)
    g.add_argument("--batch-size", type=int, default=64)
    g.add_argument("--learning-rate", type=float, default=1e-3, help="Adam step size")
    g.add_argument("--max-grad-norm", type=float, default=None, help="optional global gradient clipping")


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
        max_grad_norm=args.max_grad_norm,
    )


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fadeswitch", description="Rain-fade prediction and gateway diversity experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out", required=True, type=Path, help="output directory (created)")
        sp.add_argument("--seed", type=int, default=0, help="master random seed")

    s = sub.add_parser("synth", help="generate a synthetic attenuation series (series.csv)")
    common(s)
    _add_synth_flags(s)
    s.add_argument("--gateway-id", default="synthetic")

    s = sub.add_parser("dataset", help="window, label, split and balance a series")
    common(s)
    s.add_argument("--series", required=True, type=Path, help="input CSV (timestamp_s,attenuation_db)")
    s.add_argument("--alpha-db", required=True, type=float, help="event threshold alpha (dB)")
    s.add_argument("--delta-t-s", required=True, type=float, help="prediction horizon delta_t (s)")
    s.add_argument("--history-rule", type=_history_rule, default=2.0, help="history H = k * delta_t, e.g. '2x'")
    s.add_argument("--history-s", type=float, default=None, help="explicit history H (s); overrides the rule")
    s.add_argument("--stride", type=int, default=1, help="anchor stride (samples)")

    s = sub.add_parser("train", help="train the LSTM classifier on a dataset directory")
    common(s)
    s.add_argument("--dataset", required=True, type=Path)
    _train_flags(s)

    s = sub.add_parser("eval", help="score a model and the persistence baseline on the test split")
    common(s)
    s.add_argument("--model", required=True, type=Path)
    s.add_argument("--dataset", required=True, type=Path)
    s.add_argument("--threshold", type=float, default=0.5, help="decision threshold on the probability")

    s = sub.add_parser("sweep", help="train/evaluate over an (alpha, delta_t) grid")
    common(s)
    s.add_argument("--series", type=Path, action="append", help="input CSV; repeat to pool several")
    _add_synth_flags(s)
    s.add_argument("--alphas", type=_floats, default=[5.0, 10.0, 15.0, 20.0], help="thresholds (dB), comma-separated")
    s.add_argument("--deltas", type=_floats, default=[30.0, 60.0, 90.0, 120.0], help="horizons (s), comma-separated")
    s.add_argument("--history-rule", type=_history_rule, default=2.0)
    s.add_argument("--stride", type=int, default=1, help="anchor stride (samples)")
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--split-seed", type=int, default=0, help="seed of the train/val/test split")
    s.add_argument("--workers", type=int, default=default_workers(), help="parallel sweep cells")
    _train_flags(s)

    s = sub.add_parser("simulate", help="run a gateway switching scenario")
    common(s)
    s.add_argument("--scenario", required=True, type=Path, help="scenario JSON file")
    s.add_argument("--policy", choices=POLICIES, default=None, help="override the scenario policy")
    s.add_argument("--cooldown-s", type=float, default=None, help="override the switch cooldown (s)")

    s = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    s.add_argument("manifest", type=Path)
    s.add_argument("--out", type=Path, required=True, help="directory for the re-run outputs")
    return p


# -- subcommands ----------------------------------------------------------------

def _need(path: Path) -> Path:
    if not path.exists():
        raise UsageError(f"file not found: {path}")
    return path


def cmd_synth(args):
    params = _synth_params(args)
    series = generate_synthetic(params, args.gateway_id)
    out = write_csv(series, args.out / "series.csv")
    return {"config": params.to_dict(), "seeds": {"seed": args.seed}, "inputs": [], "outputs": [out]}


def cmd_dataset(args):
    series = read_csv(_need(args.series))
    history = args.history_s if args.history_s is not None else args.history_rule * args.delta_t_s
    spec = WindowSpec(args.alpha_db, args.delta_t_s, history, args.stride)
    split = build_split(make_windows(series, spec), args.seed)
    export_dataset(split, args.out, spec, args.seed, series.sample_rate_hz)
    return {
        "config": {**spec.to_dict(), "sample_rate_hz": series.sample_rate_hz, "sizes": split.sizes()},
        "seeds": {"seed": args.seed},
        "inputs": [args.series],
        "outputs": [args.out / f for f in ("train.csv", "val.csv", "test.csv", "dataset.json")],
    }


def cmd_train(args):
    split, meta = load_dataset(_need(args.dataset))
    config = ModelConfig(meta["window_len"], args.hidden_size, 1, args.dropout)
    tc = _train_config(args)
    model, rep = train(init_model(config, args.seed), split, tc)
    model_path = args.out / "model.json"
    model_path.write_bytes(serialize(model))
    report_path = args.out / "train_report.csv"
    report_path.write_text(rep.to_csv())
    return {
        "config": {"model": config.__dict__, "train": tc.to_dict(), "dataset": meta["spec"]},
        "seeds": {"seed": args.seed},
        "inputs": [args.dataset],
        "outputs": [model_path, report_path],
        "extra": {"epoch_seconds": rep.epoch_seconds},
    }


def evaluate_split(model, split, alpha_db: float, threshold: float) -> tuple[dict, str]:
    X, y, anchors = stack(split.test)
    if len(y) == 0:
        raise DataError("dataset has an empty test split")
    probs = predict_proba(model, normalize_array(X, model.norm))
    airis = probs >= threshold
    ph = persistence_batch(split.test, alpha_db)
    doc = {}
    for name, pred in (("airis2", airis), ("ph", ph)):
        cm = confusion(pred, y)
        doc[name] = {"confusion": cm.to_dict(), "percent": cm.percents(), "rates": rates(cm),
                     "accuracy": accuracy(pred, y)}
    return doc, predictions_csv(anchors, probs, airis, y)


def cmd_eval(args):
    model = deserialize(_need(args.model).read_bytes())
    split, meta = load_dataset(_need(args.dataset))
    if model.norm is None:
        raise DataError("model file carries no normalization stats")
    threshold = check_threshold(args.threshold)
    doc, preds = evaluate_split(model, split, meta["spec"]["alpha_db"], threshold)
    doc["n_test"] = len(split.test)
    doc["threshold"] = threshold
    eval_path = args.out / "eval.json"
    eval_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    pred_path = args.out / "predictions.csv"
    pred_path.write_text(preds)
    return {"config": {"threshold": threshold, "dataset": meta["spec"]}, "seeds": {"seed": args.seed},
            "inputs": [args.model, args.dataset], "outputs": [eval_path, pred_path]}


def cmd_sweep(args):
    inputs = []
    if args.series:
        data = [read_csv(_need(p), f"{p.stem}_{k}") for k, p in enumerate(args.series)]
        inputs = list(args.series)
        synth = None
    else:
        params = _synth_params(args)
        data = [generate_synthetic(params)]
        synth = params.to_dict()
    tc = _train_config(args)
    result = sweep(data, args.alphas, args.deltas, tc, seed=args.seed, stride_samples=args.stride,
                   workers=args.workers, hidden_size=args.hidden_size, dropout_rate=args.dropout,
                   history_factor=args.history_rule, threshold=check_threshold(args.threshold),
                   split_seed=args.split_seed)
    csv_path = args.out / "sweep.csv"
    csv_path.write_bytes(report(result, "csv"))
    json_path = args.out / "sweep.json"
    json_path.write_bytes(report(result, "json"))
    return {
        "config": {"alphas": args.alphas, "deltas": args.deltas, "stride": args.stride,
                   "history_factor": args.history_rule, "train": tc.to_dict(), "synth": synth,
                   "hidden_size": args.hidden_size, "dropout": args.dropout},
        "seeds": {"seed": args.seed, "split_seed": args.split_seed},
        "inputs": inputs,
        "outputs": [csv_path, json_path],
        "extra": {"train_seconds": {f"{c.alpha_db},{c.delta_t_s}": c.train_seconds for c in result.cells}},
    }


def cmd_simulate(args):
    sc = load_scenario(args.scenario)
    if args.policy:
        sc.policy = args.policy
    if args.cooldown_s is not None:
        sc.cooldown_s = args.cooldown_s
    result = sc.run()
    res_path = args.out / "sim_result.json"
    res_path.write_bytes(result.to_json())
    log_path = args.out / "switch_log.csv"
    log_path.write_bytes(result.switch_log_csv())
    return {"config": {"policy": sc.policy, "alpha_db": sc.alpha_db, "delta_t_s": sc.delta_t_s,
                       "cooldown_s": sc.cooldown_s, "outage_mode": sc.outage_mode},
            "seeds": {"seed": sc.seed}, "inputs": sc.inputs, "outputs": [res_path, log_path]}


COMMANDS = {
    "synth": cmd_synth,
    "dataset": cmd_dataset,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
}


def _relative_outputs(outputs, out_dir: Path) -> dict:
    return {str(Path(k).relative_to(out_dir)): v for k, v in digest_paths(outputs).items()}


def run(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "replay":
        return replay(args.manifest, args.out)
    args.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    info = COMMANDS[args.command](args)
    manifest = RunManifest(
        subcommand=args.command,
        argv=list(argv),
        config=info["config"],
        seeds=info["seeds"],
        inputs=digest_paths(info["inputs"]),
        outputs=_relative_outputs(info["outputs"], args.out),
        wall_time_s=time.perf_counter() - t0,
        extra=info.get("extra", {}),
    )
    manifest.write(args.out)
    return 0


def _swap_out(argv: list[str], new_out: Path) -> list[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            out += ["--out", str(new_out)]
            skip = True
        elif a.startswith("--out="):
            out.append(f"--out={new_out}")
        else:
            out.append(a)
    return out


def replay(manifest_path: Path, target: Path) -> int:
    """Re-execute the recorded argv into ``target`` and compare output digests."""
    doc = read_manifest(_need(manifest_path))
    code = run(_swap_out(doc["argv"], target))
    if code:
        return code
    new = read_manifest(target / MANIFEST_NAME)["outputs"]
    mismatched = sorted(k for k in doc["outputs"] if new.get(k) != doc["outputs"][k])
    if mismatched:
        print(f"replay mismatch in {', '.join(mismatched)}", file=sys.stderr)
        return 2
    print(f"replay reproduced {len(new)} outputs in {target}")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return run(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except UsageError as exc:
        print(f"fadeswitch: usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FadeSwitchError) as exc:
        print(f"fadeswitch: data error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"fadeswitch: usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
