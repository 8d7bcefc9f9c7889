"""Matplotlib figure rendering for the analysis CLI.

Report commands write these figures next to their delimited output.  Plots
stay in raw WGS-84 degree space on purpose: no map tiles, no projection.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .analytics import Cluster, Trace

_TRACE_STYLE = {
    "gps": dict(color="black", linewidth=1.2, label="GPS ground truth"),
    "reports": dict(color="tab:red", linestyle="none", marker=".", markersize=3, label="reports"),
    "estimated": dict(color="tab:blue", linewidth=1.4, label="estimated path"),
}
_FALLBACK_COLORS = ("tab:green", "tab:purple", "tab:orange", "tab:brown")


def save_trace_figure(traces: dict[str, Trace], destination, title: str | None = None) -> None:
    """Overlay named traces on a lon/lat axis and write a PNG."""
    fig, ax = plt.subplots(figsize=(7, 6))
    fallback = 0
    for name, trace in traces.items():
        style = _TRACE_STYLE.get(name)
        if style is None:
            style = dict(color=_FALLBACK_COLORS[fallback % len(_FALLBACK_COLORS)],
                         linewidth=1.0, label=name)
            fallback += 1
        lons = [p.longitude for p in trace]
        lats = [p.latitude for p in trace]
        ax.plot(lons, lats, **style)
    ax.set_xlabel("longitude (deg)")
    ax.set_ylabel("latitude (deg)")
    ax.ticklabel_format(useOffset=False)
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    fig.savefig(destination, dpi=150)
    plt.close(fig)


def save_cluster_figure(points: Trace, clusters: Sequence[Cluster], destination) -> None:
    """Resampled points in grey, cluster members colored, centers marked."""
    fig, ax = plt.subplots(figsize=(7, 6))
    ax.plot(
        [p.longitude for p in points],
        [p.latitude for p in points],
        linestyle="none", marker=".", markersize=3, color="lightgrey", label="resampled",
    )
    cmap = plt.get_cmap("tab10")
    for cluster in clusters:
        color = cmap((cluster.rank - 1) % 10)
        ax.plot(
            [p.longitude for p in cluster.members],
            [p.latitude for p in cluster.members],
            linestyle="none", marker=".", markersize=4, color=color,
        )
        ax.plot(
            cluster.center.longitude, cluster.center.latitude,
            marker="*", markersize=12, color=color,
            label=f"rank {cluster.rank} ({cluster.dwell_time / 60:.1f} h)",
        )
    ax.set_xlabel("longitude (deg)")
    ax.set_ylabel("latitude (deg)")
    ax.ticklabel_format(useOffset=False)
    ax.legend(loc="best", fontsize=8)
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    fig.savefig(destination, dpi=150)
    plt.close(fig)


def save_histogram_figure(counts: Sequence[int], destination, title: str | None = None) -> None:
    """24-bin hour-of-day bar chart."""
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.bar(range(24), counts, width=0.85, color="tab:blue")
    ax.set_xlabel("hour of day")
    ax.set_ylabel("reports")
    ax.set_xticks(range(0, 24, 2))
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(destination, dpi=150)
    plt.close(fig)


def save_error_figure(errors: Sequence[float], destination, title: str | None = None) -> None:
    """Histogram of per-report distances to the ground truth."""
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.hist(errors, bins=40, color="tab:red", alpha=0.85)
    ax.set_xlabel("distance to GPS trace (m)")
    ax.set_ylabel("reports")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(destination, dpi=150)
    plt.close(fig)
