"""Gnuplot-compatible plot data (and plotly renderings) from run outputs.

Every ``.dat`` file is whitespace separated. Its header comment lines carry
the provenance stamp and a ``# columns:`` line naming the columns in order.
The surface file separates schedule blocks with a blank line, as ``splot``
expects.
"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from src.utils.helpers import artifact_stamp, ensure_dir, load_json
from visualization.components import (
    build_cost_curve_figure,
    build_histogram_figure,
    build_lqr_weight_figure,
    build_surface_figure,
    write_figure,
)

from .baseline import load_sweep
from .training_run import METRIC_COLUMNS

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["env_steps", "mean", "std", "min", "max", "n_seeds"]
SURFACE_COLUMNS = ["period", "horizon", "cost", "valid"]
HISTOGRAM_COLUMNS = ["bin_center", "count", "fraction"]


def _header(stamp: dict, columns: list[str], description: str) -> str:
    lines = [f"# {description}"]
    lines += [f"# {key}: {value}" for key, value in stamp.items() if not isinstance(value, (list, dict))]
    lines.append("# columns: " + " ".join(columns))
    return "\n".join(lines) + "\n"


def write_dat(path: Path, blocks: list[pd.DataFrame], columns: list[str], stamp: dict, description: str) -> Path:
    """Write one or more blocks of rows under a documented header."""
    path = Path(path)
    ensure_dir(path.parent)
    with open(path, "w", encoding="utf-8") as f:
        f.write(_header(stamp, columns, description))
        for index, block in enumerate(blocks):
            if index:
                f.write("\n")
            f.write(block[columns].to_csv(sep=" ", header=False, index=False, na_rep="nan"))
    return path


def read_dat(path: Path) -> tuple[list[str], pd.DataFrame]:
    """Parse a file written by :func:`write_dat`; returns (columns, rows)."""
    columns: list[str] = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.startswith("# columns:"):
                columns = line.split(":", 1)[1].split()
    frame = pd.read_csv(path, sep=r"\s+", comment="#", header=None, names=columns, skip_blank_lines=True)
    return columns, frame


# Sources

def load_training_metrics(training_dir: Path) -> dict[str, list[pd.DataFrame]]:
    """metrics.csv of every ``<mode>_seed<k>`` directory, grouped by mode."""
    runs: dict[str, list[pd.DataFrame]] = {}
    for path in sorted(Path(training_dir).glob("*_seed*/metrics.csv")):
        mode = path.parent.name.rsplit("_seed", 1)[0]
        frame = pd.read_csv(path)
        if not frame.empty:
            runs.setdefault(mode, []).append(frame[METRIC_COLUMNS])
    return runs


def seed_band(frames: list[pd.DataFrame], column: str) -> pd.DataFrame:
    """Mean, std, min and max of ``column`` over seeds, aligned by update."""
    stacked = pd.concat([f[["update", "env_steps", column]] for f in frames], ignore_index=True)
    stacked = stacked.dropna(subset=[column])
    grouped = stacked.groupby("update")
    band = pd.DataFrame({
        "env_steps": grouped["env_steps"].mean(),
        "mean": grouped[column].mean(),
        "std": grouped[column].std(ddof=0),
        "min": grouped[column].min(),
        "max": grouped[column].max(),
        "n_seeds": grouped[column].count(),
    }).reset_index(drop=True)
    return band


def weight_curve(frames: list[pd.DataFrame]) -> pd.DataFrame:
    columns = [c for c in METRIC_COLUMNS if c.startswith(("Q_", "R_"))]
    stacked = pd.concat([f[["update", "env_steps", *columns]] for f in frames], ignore_index=True)
    return stacked.groupby("update").mean().reset_index(drop=True)


def _stamp_from(meta_path: Path) -> dict:
    if meta_path.exists():
        meta = load_json(meta_path)
        return artifact_stamp(meta.get("config_hash"), meta.get("testset_hash"))
    return artifact_stamp(None)


# Emission

def emit_curves(training_dir: Path, plots_dir: Path) -> list[Path]:
    written = []
    runs = load_training_metrics(training_dir)
    train_curves = {}
    for mode, frames in runs.items():
        stamp = _stamp_from(next(Path(training_dir).glob(f"{mode}_seed*/metrics.meta.json"), Path("-")))
        for column, label in (("train_cost", "train"), ("eval_cost", "eval")):
            band = seed_band(frames, column)
            if band.empty:
                continue
            if label == "train":
                train_curves[mode] = band
            written.append(write_dat(plots_dir / f"curve_{mode}_{label}.dat", [band], CURVE_COLUMNS, stamp,
                                     f"{mode} {label} cost over {len(frames)} seeds"))
        weights = weight_curve(frames)
        weight_columns = list(weights.columns)
        written.append(write_dat(plots_dir / f"lqr_weights_{mode}.dat", [weights], weight_columns, stamp,
                                 f"{mode} diagonal LQR weights (seed mean)"))
        written.append(write_figure(build_lqr_weight_figure(weights, f"LQR weights ({mode})"),
                                    plots_dir / f"lqr_weights_{mode}.html"))
    if train_curves:
        written.append(write_figure(build_cost_curve_figure(train_curves), plots_dir / "cost_curves.html"))
    return written


def emit_surface(sweep_dir: Path, plots_dir: Path) -> list[Path]:
    if not (Path(sweep_dir) / "baseline_grid.csv").exists():
        return []
    sweep = load_sweep(sweep_dir)
    grid = sweep.grid.sort_values(["period", "horizon"]).copy()
    grid["valid"] = grid["valid"].astype(int)
    blocks = [block for _, block in grid.groupby("period", sort=True)]
    stamp = artifact_stamp(sweep.stamp.get("config_hash"), sweep.stamp.get("testset_hash"))
    return [
        write_dat(plots_dir / "baseline_surface.dat", blocks, SURFACE_COLUMNS, stamp,
                  "baseline mean episode cost per (recompute period, horizon)"),
        write_figure(build_surface_figure(sweep.surface()), plots_dir / "baseline_surface.html"),
    ]


def histogram_frame(histogram: dict) -> pd.DataFrame:
    edges = np.asarray(histogram["edges"], dtype=np.float64)
    counts = np.asarray(histogram["counts"], dtype=int)
    total = max(int(counts.sum()), 1)
    return pd.DataFrame({
        "bin_center": 0.5 * (edges[:-1] + edges[1:]),
        "count": counts,
        "fraction": counts / total,
    })


def emit_histograms(reports_dir: Path, plots_dir: Path) -> list[Path]:
    written = []
    for path in sorted(Path(reports_dir).glob("evaluation*.json")):
        report = load_json(path)
        stamp = artifact_stamp(report.get("config_hash"), report.get("testset_hash"))
        for key, label, axis in (("horizon_histogram", "horizons", "Horizon N"),
                                 ("gap_histogram", "gaps", "Steps between computations")):
            if key not in report:
                continue
            frame = histogram_frame(report[key])
            written.append(write_dat(plots_dir / f"{path.stem}_{label}.dat", [frame], HISTOGRAM_COLUMNS, stamp,
                                     f"{axis} histogram of {path.name}"))
            written.append(write_figure(
                build_histogram_figure(report[key]["edges"], report[key]["counts"], f"{axis} ({path.stem})", axis),
                plots_dir / f"{path.stem}_{label}.html",
            ))
    return written


def emit_plots(sweep_dir: Path, training_dir: Path, reports_dir: Path, plots_dir: Path) -> list[Path]:
    """Write every plot-data file the available outputs support."""
    plots_dir = ensure_dir(plots_dir)
    written = emit_surface(sweep_dir, plots_dir)
    written += emit_curves(training_dir, plots_dir)
    written += emit_histograms(reports_dir, plots_dir)
    logger.info("wrote %d plot files to %s", len(written), plots_dir)
    return written
