"""Heatmap of the baseline cost grid."""

import numpy as np
import plotly.graph_objects as go
import pandas as pd


def build_surface_figure(surface: pd.DataFrame, title: str = "Baseline cost") -> go.Figure:
    """Cost over recompute period (rows) and horizon (columns); invalid cells stay blank."""
    fig = go.Figure(data=go.Heatmap(
        z=surface.to_numpy(dtype=np.float64),
        x=[str(c) for c in surface.columns],
        y=[str(i) for i in surface.index],
        colorscale="Viridis",
        colorbar={"title": "Cost"},
    ))
    fig.update_layout(title=title, xaxis_title="Horizon N", yaxis_title="Recompute every k steps", height=450)
    return fig
