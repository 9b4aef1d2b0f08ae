"""Render every ``*.plot.json`` in a sweep directory to PNG.

    python scripts/plot_results.py results/fig3-desk
"""
import argparse
import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def matches(row: dict, where: dict) -> bool:
    return all(row.get(k) == v for k, v in where.items())


def render(spec_path: Path) -> Path:
    spec = json.loads(spec_path.read_text())
    rows = [r for r in load_rows(spec_path.parent / spec["data"]) if matches(r, spec.get("filter", {}))]
    x, y = spec["x"], spec["y"]
    fig, ax = plt.subplots(figsize=(6, 4.2))
    if spec["kind"] == "bar":
        labels = [r[x["column"]] for r in rows]
        ax.bar(labels, [float(r[y["column"]]) for r in rows],
               yerr=[float(r[y["error"]]) for r in rows], capsize=3)
        ax.tick_params(axis="x", rotation=30)
    else:
        for s in spec["series"]:
            pts = sorted((float(r[x["column"]]), float(r[y["column"]]), float(r[y["error"]]))
                         for r in rows if matches(r, s["where"]))
            if not pts:
                continue
            xs, ys, es = zip(*pts)
            ax.errorbar(xs, ys, yerr=es, marker="o", ms=4, capsize=2, label=s["label"])
        ax.legend(fontsize=8)
    ax.set_xlabel(x["label"])
    ax.set_ylabel(y["label"])
    ax.set_title(spec["title"], fontsize=10)
    ax.grid(alpha=0.3)
    out = spec_path.with_suffix("").with_suffix(".png")
    fig.tight_layout()
    fig.savefig(out, dpi=130)
    plt.close(fig)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("directory", type=Path)
    args = ap.parse_args()
    specs = sorted(args.directory.glob("*.plot.json"))
    if not specs:
        raise SystemExit(f"no plotspecs in {args.directory}")
    for p in specs:
        print(render(p))


if __name__ == "__main__":
    main()
