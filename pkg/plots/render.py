#!/usr/bin/env python3
"""Render publication-style figures from harness result CSVs.

Consumes only the documented CSV schema (experiment, method, estimator, n_r,
p_jt, trial, user, metric, grid_db, value).  Two figure kinds:

  cdf   one curve per (method, estimator[, p_jt]) group from the `cdf`
        summary rows: x = grid_db (dB), y = empirical probability
  line  one curve per (method, estimator) group from the `mean_*` summary
        rows: x = n_r ascending, y = mean metric (dB)

Usage: render.py --csv results.csv --kind cdf|line --out figure.svg
"""

import argparse
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import pandas as pd

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "ris-alloc-plots"
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

REQUIRED_COLUMNS = ("experiment", "method", "estimator", "n_r", "p_jt",
                    "trial", "user", "metric", "grid_db", "value")

Y_LABELS = {
    "mean_nmse_db": "Mean NMSE [dB]",
    "mean_snr_db": "Average SNR [dB]",
    "mean_sinr_db": "Average SINR [dB]",
}


@dataclass
class PlotSpec:
    csv_path: Path
    kind: str                      # "cdf" | "line"
    out_path: Path
    group_by: tuple = ("method", "estimator")
    title: str | None = None


@dataclass
class RenderSummary:
    out_path: Path
    curves: list = field(default_factory=list)   # one label per drawn curve


def load_table(csv_path: Path) -> pd.DataFrame:
    frame = pd.read_csv(csv_path)
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{csv_path}: missing required columns: {', '.join(missing)}")
    return frame


def _group_label(key, columns) -> str:
    parts = []
    for name, val in zip(columns, key):
        if pd.isna(val) or val == "":
            continue
        parts.append(f"p_jt={val:g}" if name == "p_jt" else str(val))
    return ", ".join(parts) if parts else "all"


def _groups(frame: pd.DataFrame, columns):
    keys = frame[list(columns)].drop_duplicates()
    keys = keys.sort_values(list(columns), na_position="first")
    for _, key_row in keys.iterrows():
        mask = pd.Series(True, index=frame.index)
        for col in columns:
            val = key_row[col]
            mask &= frame[col].isna() if pd.isna(val) else (frame[col] == val)
        yield tuple(key_row[col] for col in columns), frame[mask]


def render(spec: PlotSpec) -> RenderSummary:
    """Draw one figure; returns the output path and the curve labels drawn."""
    frame = load_table(spec.csv_path)
    if spec.kind == "cdf":
        rows = frame[frame["metric"] == "cdf"]
        x_col, y_col = "grid_db", "value"
        x_label, y_label = "Metric [dB]", "Empirical CDF"
        group_cols = list(spec.group_by)
        if rows["p_jt"].nunique(dropna=True) > 1 and "p_jt" not in group_cols:
            group_cols.append("p_jt")
    elif spec.kind == "line":
        rows = frame[frame["metric"].str.startswith("mean_")]
        x_col, y_col = "n_r", "value"
        x_label = "Reflecting elements"
        metrics = rows["metric"].unique()
        y_label = Y_LABELS.get(metrics[0], "Mean metric [dB]") if len(metrics) else ""
        group_cols = list(spec.group_by)
    else:
        raise ValueError(f"unknown figure kind {spec.kind!r}; use 'cdf' or 'line'")

    if rows.empty:
        raise ValueError(
            f"{spec.csv_path}: no rows for kind {spec.kind!r} "
            f"(expected metric {'cdf' if spec.kind == 'cdf' else 'mean_*'})")

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    summary = RenderSummary(out_path=spec.out_path)
    for key, group in _groups(rows, group_cols):
        group = group.dropna(subset=[x_col, y_col])
        if group.empty:
            warnings.warn(f"group {key} has no drawable points, skipped")
            continue
        group = group.sort_values(x_col)
        if spec.kind == "cdf":
            probs = group[y_col].to_numpy()
            if (probs[1:] - probs[:-1] < 0).any():
                raise ValueError(f"CDF for group {key} is not monotone")
        label = _group_label(key, group_cols)
        ax.plot(group[x_col], group[y_col], marker="o", markersize=3, label=label)
        summary.curves.append(label)

    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    ax.grid(True, alpha=0.3)
    if summary.curves:
        ax.legend(fontsize=8)
    ax.set_title(spec.title or f"{frame['experiment'].iloc[0]} ({spec.kind})")
    fig.tight_layout()
    fig.savefig(spec.out_path, metadata={"Date": None}
                if str(spec.out_path).endswith(".svg") else None)
    plt.close(fig)
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--csv", required=True, type=Path, help="harness result CSV")
    parser.add_argument("--kind", required=True, choices=("cdf", "line"))
    parser.add_argument("--out", required=True, type=Path,
                        help="output image (.svg default style, .png supported)")
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    try:
        summary = render(PlotSpec(csv_path=args.csv, kind=args.kind,
                                  out_path=args.out, title=args.title))
    except (ValueError, OSError) as exc:
        print(f"render: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {summary.out_path} with {len(summary.curves)} curves")
    return 0


if __name__ == "__main__":
    sys.exit(main())
