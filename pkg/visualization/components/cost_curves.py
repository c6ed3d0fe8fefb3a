"""Training-curve figures: cost with seed bands and LQR-weight evolution."""

import plotly.graph_objects as go
import pandas as pd

BAND_COLORS = {
    "joint": "#FF6B6B",
    "recompute": "#4ECDC4",
    "horizon": "#556270",
    "lqr": "#C7A10B",
}


def _rgba(hex_color: str, alpha: float) -> str:
    r, g, b = (int(hex_color[i:i + 2], 16) for i in (1, 3, 5))
    return f"rgba({r},{g},{b},{alpha})"


def build_cost_curve_figure(curves: dict[str, pd.DataFrame], title: str = "Cost during training") -> go.Figure:
    """Mean cost per mode with a min/max band over seeds.

    Args:
        curves: Mode name -> frame with columns env_steps, mean, min, max
        title: Figure title
    """
    fig = go.Figure()
    for mode, curve in curves.items():
        color = BAND_COLORS.get(mode, "#888888")
        fig.add_trace(go.Scatter(
            x=pd.concat([curve["env_steps"], curve["env_steps"][::-1]]),
            y=pd.concat([curve["max"], curve["min"][::-1]]),
            fill="toself", fillcolor=_rgba(color, 0.2), line={"width": 0},
            hoverinfo="skip", showlegend=False,
        ))
        fig.add_trace(go.Scatter(x=curve["env_steps"], y=curve["mean"], name=mode, line={"color": color}))
    fig.update_layout(title=title, xaxis_title="Environment steps", yaxis_title="Cost", height=400)
    return fig


def build_lqr_weight_figure(weights: pd.DataFrame, title: str = "LQR weights") -> go.Figure:
    """Diagonal of Q and R against environment steps (log scale)."""
    fig = go.Figure()
    for column in [c for c in weights.columns if c != "env_steps"]:
        fig.add_trace(go.Scatter(x=weights["env_steps"], y=weights[column], name=column))
    fig.update_layout(title=title, xaxis_title="Environment steps", yaxis_title="Weight",
                      yaxis_type="log", height=350)
    return fig
