"""Persistence vs LSTM across climate presets at one (alpha, delta_t) point."""
import argparse
import dataclasses

from fadeswitch.evaluation import rates, run_cell
from fadeswitch.timeseries import PRESETS, generate_synthetic
from fadeswitch.training import TrainConfig


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--alpha-db", type=float, default=3.0)
    p.add_argument("--delta-t-s", type=float, default=60.0)
    p.add_argument("--hours", type=float, default=24.0, help="synthetic length per preset")
    p.add_argument("--stride", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    for name, params in sorted(PRESETS.items()):
        params = dataclasses.replace(params, duration_s=args.hours * 3600, seed=args.seed)
        cell = run_cell([generate_synthetic(params, name)], args.alpha_db, args.delta_t_s, TrainConfig(),
                        seed=args.seed, stride_samples=args.stride)
        if cell.skipped:
            print(f"{name:14s} skipped ({cell.reason})")
            continue
        a, ph = rates(cell.metrics["airis2"].cm), rates(cell.metrics["ph"].cm)
        print(f"{name:14s} airis2 fn={a['fn_rate_total']:.4f} fp={a['fp_rate_total']:.4f} | "
              f"ph fn={ph['fn_rate_total']:.4f} fp={ph['fp_rate_total']:.4f} | n={cell.metrics['ph'].cm.total}")


if __name__ == "__main__":
    main()
