"""Trace plots of tracked column means from an impute run's trace.csv.

    python3 scripts/plot_traces.py run/trace.csv --out traces.png --burn-in 10

Needs matplotlib (the ``plots`` extra).
"""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("trace")
    ap.add_argument("--out", default="traces.png")
    ap.add_argument("--burn-in", type=int, default=10)
    ap.add_argument("--max-columns", type=int, default=8)
    args = ap.parse_args()

    series = defaultdict(lambda: defaultdict(list))
    with open(args.trace, newline="") as fh:
        for rec in csv.DictReader(fh):
            series[rec["column_id"]][int(rec["chain"])].append((int(rec["iteration"]), float(rec["mean"])))

    columns = list(series)[: args.max_columns]
    ncol = min(4, len(columns))
    nrow = -(-len(columns) // ncol)
    fig, axes = plt.subplots(nrow, ncol, figsize=(3.2 * ncol, 2.4 * nrow), squeeze=False)
    for ax, col in zip(axes.flat, columns):
        for chain, pts in sorted(series[col].items()):
            pts.sort()
            ax.plot([t for t, _ in pts], [v for _, v in pts], lw=0.8, alpha=0.7)
        ax.axvline(args.burn_in, color="k", ls=":", lw=0.8)
        ax.set_title(col, fontsize=9)
        ax.set_xlabel("iteration", fontsize=8)
    for ax in list(axes.flat)[len(columns):]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
