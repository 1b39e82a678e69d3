#!/usr/bin/env python3
"""Plot a sweep CSV: median line with interquartile band per metric.

Usage: plot_sweep.py sweep.csv [out.png]
"""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt


def main() -> int:
    if len(sys.argv) < 2:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    points = defaultdict(lambda: defaultdict(list))  # metric -> axis -> values
    with open(sys.argv[1], newline="") as fh:
        for row in csv.DictReader(fh):
            points[row["metric"]][float(row["axis"])].append(float(row["value"]))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for metric, series in sorted(points.items()):
        axis = sorted(series)
        quartiles = []
        for x in axis:
            values = sorted(series[x])
            n = len(values)
            quartiles.append((values[n // 4], values[n // 2], values[(3 * n) // 4]))
        lo, mid, hi = zip(*quartiles)
        (line,) = ax.plot(axis, mid, marker="o", label=metric)
        ax.fill_between(axis, lo, hi, alpha=0.15, color=line.get_color())
    ax.set_xlabel("axis")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    out = sys.argv[2] if len(sys.argv) > 2 else "sweep.png"
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
