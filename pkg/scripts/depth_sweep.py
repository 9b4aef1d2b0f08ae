"""Centralized min-rate versus number of hidden layers (p5, N=3, 5 dB by default).

    python scripts/depth_sweep.py --depths 1 2 3 4 5 6 --out results/depth
"""
import argparse
import csv
from pathlib import Path

from pdpower.harness import ExperimentConfig, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depths", type=int, nargs="+", default=[1, 2, 3, 4, 5, 6])
    ap.add_argument("--width", type=int, default=60)
    ap.add_argument("--snr-db", type=float, default=5.0)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--iterations", type=int, default=50_000)
    ap.add_argument("--out", type=Path, default=Path("results/depth"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "depth.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hidden_layers", "seed", "metric", "metric_ci", "feasible"])
        for depth in args.depths:
            cfg = ExperimentConfig(name=f"depth{depth}", problem="p5", n=3, snr_db=[args.snr_db],
                                   methods=["centralized"], seeds=args.seeds,
                                   train={"iterations": args.iterations},
                                   arch={"centralized": [args.width] * depth})
            for r in run_experiment(cfg).rows:
                w.writerow([depth, r.seed, r.metric, r.metric_ci, r.feasible])
                print(depth, r.seed, f"{r.metric:.4f}", flush=True)


if __name__ == "__main__":
    main()
