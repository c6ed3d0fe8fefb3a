"""Histograms of chosen horizons and of steps between computations."""

import numpy as np
import plotly.graph_objects as go


def build_histogram_figure(edges: list[float], counts: list[int], title: str, xaxis_title: str) -> go.Figure:
    centers = 0.5 * (np.asarray(edges[:-1]) + np.asarray(edges[1:]))
    total = max(int(np.sum(counts)), 1)
    fig = go.Figure(data=[go.Bar(x=centers, y=np.asarray(counts) / total, marker_color="#4ECDC4")])
    fig.update_layout(title=title, xaxis_title=xaxis_title, yaxis_title="Fraction", height=350, bargap=0.05)
    return fig
