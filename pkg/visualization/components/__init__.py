"""Plotly figure builders for the emitted plot data."""

from pathlib import Path

import plotly.graph_objects as go

from .baseline_surface import build_surface_figure
from .cost_curves import build_cost_curve_figure, build_lqr_weight_figure
from .histograms import build_histogram_figure


def write_figure(fig: go.Figure, path: Path) -> Path:
    """Write a standalone HTML rendering (plotly.js from CDN)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.write_html(str(path), include_plotlyjs="cdn")
    return path


__all__ = [
    "build_cost_curve_figure",
    "build_histogram_figure",
    "build_lqr_weight_figure",
    "build_surface_figure",
    "write_figure",
]
