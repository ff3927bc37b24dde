#!/usr/bin/env python3
"""Plot per-agent estimates from a trajectory CSV, and optionally f(x_av) from a run CSV."""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_trajectory(path):
    series = defaultdict(lambda: defaultdict(list))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        ncomp = len(header) - 2
        for row in reader:
            k, agent = int(row[0]), int(row[1])
            for j in range(ncomp):
                series[agent][j].append((k, float(row[2 + j])))
    return series, ncomp


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("trajectory", help="CSV with columns k,agent,x0,x1,...")
    ap.add_argument("--components", type=int, nargs="+", default=[2, 3], help="0-based components to plot")
    ap.add_argument("--run-csv", help="per-round CSV; adds an f(x_av) panel")
    ap.add_argument("--f-star", type=float, help="optimal value drawn as a reference line")
    ap.add_argument("-o", "--output", default="trajectory.png")
    args = ap.parse_args()

    series, ncomp = read_trajectory(args.trajectory)
    comps = [c for c in args.components if 0 <= c < ncomp]
    panels = len(comps) + (1 if args.run_csv else 0)
    fig, axes = plt.subplots(panels, 1, figsize=(7, 2.6 * panels), sharex=True, squeeze=False)
    for ax, c in zip(axes[:, 0], comps):
        for agent in sorted(series):
            ks, vs = zip(*series[agent][c])
            ax.plot(ks, vs, lw=0.8)
        ax.set_ylabel(f"x[{c}]")
    if args.run_csv:
        ax = axes[-1, 0]
        ks, fs = [], []
        with open(args.run_csv, newline="") as fh:
            for row in csv.DictReader(fh):
                ks.append(int(row["k"]))
                fs.append(float(row["f_av_true"]))
        ax.plot(ks, fs, color="k", lw=1)
        if args.f_star is not None:
            ax.axhline(args.f_star, color="r", ls="--", lw=0.8)
        ax.set_yscale("log")
        ax.set_ylabel("f(x_av)")
    axes[-1, 0].set_xlabel("k")
    axes[-1, 0].set_xscale("log")
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)


if __name__ == "__main__":
    main()
