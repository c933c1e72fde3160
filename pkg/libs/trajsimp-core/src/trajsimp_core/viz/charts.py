"""Plotly charts for databases, simplifications, evaluation reports and training logs."""

from __future__ import annotations

from collections.abc import Mapping, Sequence

import numpy as np
import plotly.graph_objects as go

from ..algs.workload import QueryQualityReport
from ..schemas.importance import ImportanceVector
from ..schemas.trajectory import SimplifiedDatabase, TrajectoryDatabase
from .styles import COLORS, IMPORTANCE_COLORSCALE, SERIES_COLORS, get_axis, get_chart_layout

# Trajectories drawn by default on a map
DEFAULT_MAX_TRAJECTORIES = 50


def create_simplification_map(
    original: TrajectoryDatabase,
    simplified: SimplifiedDatabase | None = None,
    importance: ImportanceVector | None = None,
    max_trajectories: int = DEFAULT_MAX_TRAJECTORIES,
    title: str | None = None,
) -> go.Figure:
    """
    Map of original trajectories with retained points overlaid.

    Args:
        original: Database drawn as thin polylines
        simplified: Optional simplification whose retained points are drawn as markers
        importance: Optional importance used to color the original points
        max_trajectories: Only the first trajectories are drawn
        title: Optional custom title

    Returns:
        Plotly figure with one trace per original trajectory plus overlays
    """
    fig = go.Figure()
    shown = original.trajectories[:max_trajectories]

    for i, traj in enumerate(shown):
        fig.add_trace(
            go.Scatter(
                x=traj.x,
                y=traj.y,
                mode="lines",
                line={"color": COLORS["original"], "width": 1},
                name="Original" if i == 0 else traj.id,
                legendgroup="original",
                showlegend=i == 0,
                hovertext=[f"{traj.id}[{j}] t={t}" for j, t in enumerate(traj.t.tolist())],
                hoverinfo="text",
            )
        )

    if importance is not None:
        values = np.concatenate(importance.adjusted[: len(shown)]) if shown else np.zeros(0)
        fig.add_trace(
            go.Scatter(
                x=np.concatenate([t.x for t in shown]) if shown else [],
                y=np.concatenate([t.y for t in shown]) if shown else [],
                mode="markers",
                marker={
                    "size": 4,
                    "color": values,
                    "colorscale": IMPORTANCE_COLORSCALE,
                    "colorbar": {"title": "Importance"},
                },
                name="Importance",
            )
        )

    if simplified is not None:
        kept = simplified.trajectories[: len(shown)]
        fig.add_trace(
            go.Scatter(
                x=np.concatenate([t.x for t in kept]) if kept else [],
                y=np.concatenate([t.y for t in kept]) if kept else [],
                mode="markers",
                marker={"size": 7, "color": COLORS["retained"], "symbol": "circle-open"},
                name=f"Retained ({simplified.retained_count} points)",
            )
        )

    fig.update_layout(
        **get_chart_layout(title or f"{len(original)} trajectories"),
        xaxis=get_axis(title="Longitude"),
        yaxis=get_axis(title="Latitude", scaleanchor="x"),
        height=800,
    )
    return fig


def create_f1_chart(reports: Mapping[str, QueryQualityReport], title: str = "Mean F1") -> go.Figure:
    """Grouped bars of mean F1 per query type, one group member per method."""
    fig = go.Figure()
    for i, (method, report) in enumerate(reports.items()):
        types = [str(qt) for qt in report.mean_f1]
        fig.add_trace(
            go.Bar(
                x=types,
                y=list(report.mean_f1.values()),
                name=method,
                marker={"color": SERIES_COLORS[i % len(SERIES_COLORS)]},
            )
        )
    fig.update_layout(
        **get_chart_layout(title, barmode="group"),
        xaxis=get_axis(title="Query type"),
        yaxis=get_axis(title="F1", range=[0, 1]),
    )
    return fig


def create_loss_chart(
    series: Mapping[str, Sequence[float]], title: str = "Training loss"
) -> go.Figure:
    """One line per named loss series, plotted against its epoch index."""
    fig = go.Figure()
    for i, (name, values) in enumerate(series.items()):
        fig.add_trace(
            go.Scatter(
                x=list(range(len(values))),
                y=list(values),
                mode="lines+markers",
                line={"color": SERIES_COLORS[i % len(SERIES_COLORS)], "width": 2},
                name=name,
            )
        )
    fig.update_layout(
        **get_chart_layout(title),
        xaxis=get_axis(title="Epoch"),
        yaxis=get_axis(title="Loss"),
    )
    return fig
