"""Plot sweep tables written by ``dmimo-isac sweep`` (needs matplotlib, which the package does not).

Usage::

    python scripts/plot_tables.py out/sweep_M_r.csv out/sweep_rho.csv --out figures
"""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

LABELS = {
    "sum_se": "sum SE [bit/s/Hz]",
    "peb_coherent": "coherent PEB [m]",
    "peb_noncoherent": "non-coherent PEB [m]",
    "coverage": "coverage fraction",
    "error": "position error [m]",
}


def read_table(path):
    series = defaultdict(list)
    axis = None
    for row in csv.DictReader(open(path)):
        axis = row["axis"]
        series[row["metric"]].append((float(row["value"]), float(row["mean"]), float(row["ci95"])))
    return axis, {m: sorted(v) for m, v in series.items()}


def plot_table(path, out_dir):
    axis, series = read_table(path)
    fig, axes = plt.subplots(1, len(series), figsize=(4.2 * len(series), 3.4), squeeze=False)
    for ax, (metric, pts) in zip(axes[0], series.items()):
        x, m, ci = zip(*pts)
        ax.errorbar(x, m, yerr=ci, marker="o", capsize=3)
        if metric.startswith("peb") or metric == "error":
            ax.set_yscale("log")
        ax.set_xlabel(axis)
        ax.set_ylabel(LABELS.get(metric, metric))
        ax.grid(alpha=0.3)
    fig.tight_layout()
    target = Path(out_dir) / (Path(path).stem + ".png")
    fig.savefig(target, dpi=120)
    plt.close(fig)
    return target


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("tables", nargs="+", help="sweep CSV files")
    parser.add_argument("--out", default="figures", help="output directory")
    args = parser.parse_args()
    Path(args.out).mkdir(parents=True, exist_ok=True)
    for t in args.tables:
        print(plot_table(t, args.out))


if __name__ == "__main__":
    main()
