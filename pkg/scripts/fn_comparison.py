"""LSTM vs persistence false negatives at alpha = 5 dB, delta_t = 60 s on predictable fades."""
import argparse

from fadeswitch.evaluation import rates, run_cell
from fadeswitch.timeseries import SynthParams, generate_synthetic
from fadeswitch.training import TrainConfig


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--hours", type=float, default=48.0)
    p.add_argument("--sigma-ln", type=float, default=0.8)
    p.add_argument("--tau-s", type=float, default=3600.0, help="decorrelation time (s)")
    p.add_argument("--stride", type=int, default=100)
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    args = p.parse_args()

    print("seed  airis2_fn  ph_fn   airis2_fp  ph_fp   fn_ratio")
    for s in args.seeds:
        series = generate_synthetic(SynthParams(0.0, args.sigma_ln, 1 / args.tau_s, args.hours * 3600, seed=s))
        cell = run_cell([series], 5.0, 60.0, TrainConfig(), seed=s, stride_samples=args.stride, split_seed=s)
        if cell.skipped:
            print(f"{s:4d}  skipped: {cell.reason}")
            continue
        a, ph = rates(cell.metrics["airis2"].cm), rates(cell.metrics["ph"].cm)
        ratio = a["fn_rate_total"] / ph["fn_rate_total"] if ph["fn_rate_total"] else float("nan")
        print(f"{s:4d}  {a['fn_rate_total']:.4f}     {ph['fn_rate_total']:.4f}  "
              f"{a['fp_rate_total']:.4f}     {ph['fp_rate_total']:.4f}  {ratio:.2f}")


if __name__ == "__main__":
    main()
