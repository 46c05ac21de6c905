#!/usr/bin/env python3
"""
Rate plots
Draws log-log convergence plots from the (x, y, series) plot CSVs
written by the sweep and unfold-check commands.

    python scripts/plot_rates.py results/sweep/rates_plot.csv [out.png]
"""

import os
import sys

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from experiments.persistence import read_csv

matplotlib.rcParams.update({"font.size": 11})


def plot_rates(csv_path, png_path=None, reference_slope=0.5):
    frame = read_csv(csv_path)
    frame = frame[(frame["x"] > 0) & (frame["y"] > 0)]
    if frame.empty:
        raise SystemExit(f"no positive data in {csv_path}")

    fig, ax = plt.subplots(figsize=(7, 5))
    for name, group in frame.groupby("series", sort=True):
        group = group.sort_values("x")
        ax.loglog(group["x"], group["y"], marker="o", label=str(name))

    x = np.sort(frame["x"].unique())
    anchor = frame["y"].max()
    ax.loglog(x, anchor * (x / x[-1]) ** reference_slope, "k--", linewidth=1,
              label=f"slope {reference_slope:g}")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8, ncol=2)

    png_path = png_path or os.path.splitext(csv_path)[0] + ".png"
    plt.tight_layout()
    plt.savefig(png_path, dpi=200, bbox_inches="tight")
    plt.close(fig)
    return png_path


if __name__ == "__main__":
    if len(sys.argv) < 2:
        print(__doc__)
        sys.exit(1)
    out = plot_rates(sys.argv[1], sys.argv[2] if len(sys.argv) > 2 else None)
    print(f"wrote {out}")
