"""Run the built-in desk sweeps one after another and render their plots.

    python scripts/run_figures.py --out results fig3-desk fig6-desk
    python scripts/run_figures.py --iterations 5000 --workers 4      # all of them, shorter
"""
import argparse
import subprocess
import sys
from pathlib import Path

from pdpower.harness import BUILTIN_CONFIGS

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("configs", nargs="*", default=[c for c in BUILTIN_CONFIGS if c != "smoke"])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--iterations", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--scale", choices=("desk", "paper"))
    args = ap.parse_args()
    status = 0
    for name in args.configs:
        out = args.out / name
        cmd = [sys.executable, "-m", "pdpower", "sweep", "--config", name, "--out", str(out)]
        for flag, val in (("--iterations", args.iterations), ("--workers", args.workers), ("--scale", args.scale)):
            if val is not None:
                cmd += [flag, str(val)]
        print("+", " ".join(cmd), flush=True)
        status |= subprocess.call(cmd)
        subprocess.call([sys.executable, str(HERE / "plot_results.py"), str(out)])
    sys.exit(status)


if __name__ == "__main__":
    main()
