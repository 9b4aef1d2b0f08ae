"""Plot Lagrangian, slacks and multipliers from convergence logs (``logs/*.csv``).

    python scripts/plot_convergence.py results/fig4-desk/logs/centralized_snr5_ratio1_seed0.csv
"""
import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("logs", type=Path, nargs="+")
    args = ap.parse_args()
    for path in args.logs:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        cols = {k: [float(r[k]) for r in rows] for k in rows[0]}
        it = cols.pop("iteration")
        fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
        axes[0].plot(it, cols["lagrangian"], label="Lagrangian")
        axes[0].plot(it, cols["val_metric"], label="validation metric")
        for k in (c for c in cols if c.startswith("slack_")):
            axes[1].plot(it, cols[k], label=k)
        for k in (c for c in cols if c.startswith("lambda_")):
            axes[2].plot(it, cols[k], label=k)
        axes[1].axhline(0.0, color="k", lw=0.6)
        for ax, title in zip(axes, ("objective", "constraint slack E[g] - G", "multipliers")):
            ax.set_title(title, fontsize=10)
            ax.set_xlabel("iteration")
            ax.legend(fontsize=7)
            ax.grid(alpha=0.3)
        fig.tight_layout()
        out = path.with_suffix(".png")
        fig.savefig(out, dpi=130)
        plt.close(fig)
        print(out)


if __name__ == "__main__":
    main()
