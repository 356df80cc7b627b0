"""Line charts of solver traces (SVG/PNG via matplotlib).

Also runnable: ``python -m pnpreg.harness.plotting COLUMN OUT.svg TRACE.csv [...]``.
"""

import argparse
import csv
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_curves", "read_trace_csv", "main"]

# fixed ids and no timestamps so repeated runs write identical files
matplotlib.rcParams["svg.hashsalt"] = "pnpreg"
_METADATA = {".svg": {"Date": None, "Creator": None},
             ".png": {"Software": None}}


def plot_curves(path, series, ylabel, logy=False, xlabel="iteration", title=None):
    """Plot ``{label: values}`` against 1-based iteration numbers and save to ``path``."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, ys in series.items():
        pts = [(i + 1, y) for i, y in enumerate(ys)
               if y is not None and math.isfinite(y) and (not logy or y > 0)]
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], label=label, linewidth=1.2)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if series:
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    ext = os.path.splitext(path)[1].lower()
    fig.savefig(path, metadata=_METADATA.get(ext))
    plt.close(fig)
    return path


def read_trace_csv(path):
    """Columns of a trace CSV as lists of floats (``None`` for empty cells)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: [float(r[k]) if r[k] != "" else None for r in rows] for k in rows[0]}


def main(argv=None):
    ap = argparse.ArgumentParser(description="Plot one column of trace CSV files.")
    ap.add_argument("column", help="psnr, iterate_mse or objective")
    ap.add_argument("out", help="output .svg or .png")
    ap.add_argument("traces", nargs="+")
    ap.add_argument("--log", action="store_true", help="log-scale y axis")
    args = ap.parse_args(argv)
    series = {}
    for p in args.traces:
        cols = read_trace_csv(p)
        if args.column not in cols:
            ap.error(f"{p} has no column {args.column!r}")
        series[os.path.splitext(os.path.basename(p))[0]] = cols[args.column]
    plot_curves(args.out, series, args.column, logy=args.log)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
