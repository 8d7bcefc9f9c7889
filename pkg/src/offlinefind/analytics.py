"""Location analytics over decrypted report traces.

Covers the evaluation pipeline: error of raw reports against a ground-truth
GPS trace, locally weighted path estimation, temporal resampling, density
clustering of visited places, dwell-time ranking, and hour-of-day visiting
histograms, plus CSV/GeoJSON import and export.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Iterable, Iterator, Sequence

import numpy as np

from .geodesy import geodesic_distance
from .timebase import from_unix, iso8601, parse_iso8601, to_unix

logger = logging.getLogger(__name__)


class EmptyOverlap(ValueError):
    """Report and GPS traces share no time range."""


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float
    timestamp: datetime

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")

    @property
    def unix(self) -> float:
        return to_unix(self.timestamp)


class Trace:
    """Time-ordered sequence of geopoints.

    Points are pre-sorted by (timestamp, latitude, longitude) so traces built
    from any permutation of the same reports behave identically; equal
    timestamps are allowed because several finders may report the same
    advertisement second.
    """

    def __init__(self, points: Iterable[GeoPoint]):
        self.points: list[GeoPoint] = sorted(
            points, key=lambda p: (p.unix, p.latitude, p.longitude)
        )
        if not self.points:
            raise ValueError("a trace needs at least one point")

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[GeoPoint]:
        return iter(self.points)

    def __getitem__(self, idx):
        return self.points[idx]

    @property
    def start(self) -> datetime:
        return self.points[0].timestamp

    @property
    def end(self) -> datetime:
        return self.points[-1].timestamp

    def times_unix(self) -> np.ndarray:
        return np.array([p.unix for p in self.points])

    def coords(self) -> np.ndarray:
        return np.array([[p.latitude, p.longitude] for p in self.points])


@dataclass(frozen=True)
class Cluster:
    """A visited place: clustered resampled reports with a dwell-time rank."""

    members: tuple[GeoPoint, ...]
    center: GeoPoint
    rank: int
    resampled_count: int
    days_visited: int
    dwell_time: float  # minutes

    def __post_init__(self):
        if not self.members:
            raise ValueError("cluster must have members")


@dataclass(frozen=True)
class AnalyticsParams:
    lowess_window: int = 30
    resample_interval_min: float = 20.0
    dbscan_radius_m: float = 50.0
    dbscan_min_neighbors: int = 6

    def __post_init__(self):
        if (
            self.lowess_window <= 0
            or self.resample_interval_min <= 0
            or self.dbscan_radius_m <= 0
            or self.dbscan_min_neighbors < 1
        ):
            raise ValueError("analytics parameters must be positive")


# --- ground-truth comparison -------------------------------------------------


def _strictly_increasing(trace: Trace) -> None:
    times = trace.times_unix()
    if np.any(np.diff(times) <= 0):
        raise ValueError("interpolation requires strictly increasing timestamps")


def interpolate_trace(gps: Trace, at: Sequence[datetime]) -> list[GeoPoint]:
    """Linearly interpolate a GPS trace at the given instants.

    Instants outside the trace span are skipped with a log diagnostic.
    """
    _strictly_increasing(gps)
    times = gps.times_unix()
    coords = gps.coords()
    out: list[GeoPoint] = []
    skipped = 0
    for when in at:
        t = to_unix(when)
        if t < times[0] or t > times[-1]:
            skipped += 1
            continue
        lat = float(np.interp(t, times, coords[:, 0]))
        lon = float(np.interp(t, times, coords[:, 1]))
        out.append(GeoPoint(lat, lon, when))
    if skipped:
        logger.warning("interpolate_trace: skipped %d timestamps outside the GPS span", skipped)
    return out


def per_report_errors(reports: Trace, gps: Trace) -> list[tuple[GeoPoint, float]]:
    """(report, meters from interpolated ground truth) for overlapping reports."""
    _strictly_increasing(gps)
    lo, hi = to_unix(gps.start), to_unix(gps.end)
    inside = [p for p in reports if lo <= p.unix <= hi]
    if not inside:
        raise EmptyOverlap("no report falls within the GPS trace's time span")
    truth = interpolate_trace(gps, [p.timestamp for p in inside])
    return [
        (p, geodesic_distance(p.latitude, p.longitude, t.latitude, t.longitude))
        for p, t in zip(inside, truth)
    ]


def mean_error(reports: Trace, gps: Trace) -> float:
    """Mean geodesic distance from each report to the interpolated GPS trace."""
    errors = per_report_errors(reports, gps)
    return float(sum(e for _, e in errors) / len(errors))


# --- path estimation ----------------------------------------------------------


def lowess_estimate(reports: Trace, params: AnalyticsParams = AnalyticsParams()) -> Trace:
    """Locally weighted linear regression over latitude and longitude.

    For each report, the ``lowess_window`` nearest-in-time reports are fit
    with a degree-1 weighted regression; Gaussian weights centered on the
    target time use sigma equal to half the selected window's time span.
    Fewer reports than the window degrades to using all of them.
    """
    n = len(reports)
    if n < 3:
        raise ValueError(f"path estimation needs at least 3 reports, got {n}")
    window = min(params.lowess_window, n)
    times = reports.times_unix()
    coords = reports.coords()
    smoothed = np.empty_like(coords)
    for i in range(n):
        gaps = np.abs(times - times[i])
        sel = np.argpartition(gaps, window - 1)[:window] if window < n else np.arange(n)
        t_sel = times[sel]
        span = float(t_sel.max() - t_sel.min())
        x = t_sel - times[i]
        if span == 0.0:
            weights = np.ones_like(x)
        else:
            sigma = span / 2.0
            weights = np.exp(-0.5 * (x / sigma) ** 2)
        s0 = weights.sum()
        s1 = float(weights @ x)
        s2 = float(weights @ (x * x))
        det = s0 * s2 - s1 * s1
        for axis in range(2):
            y = coords[sel, axis]
            y_mean = y.mean()
            yc = y - y_mean
            t0 = float(weights @ yc)
            t1 = float(weights @ (yc * x))
            if det <= 1e-12 * max(s0 * s2, 1.0):
                smoothed[i, axis] = y_mean + t0 / s0
            else:
                smoothed[i, axis] = y_mean + (s2 * t0 - s1 * t1) / det
    return Trace(
        GeoPoint(float(smoothed[i, 0]), float(smoothed[i, 1]), reports[i].timestamp)
        for i in range(n)
    )


# --- resampling and clustering -------------------------------------------------


def resample(reports: Trace, interval_min: float = 20.0) -> Trace:
    """Flatten report density over time.

    The time axis is cut into consecutive ``interval_min``-minute bins
    anchored at the first report; each nonempty bin becomes one point at the
    coordinate mean, stamped at the bin center.
    """
    width = interval_min * 60.0
    t0 = reports[0].unix
    bins: dict[int, list[GeoPoint]] = {}
    for p in reports:
        bins.setdefault(int((p.unix - t0) // width), []).append(p)
    out = []
    for idx in sorted(bins):
        members = bins[idx]
        out.append(
            GeoPoint(
                latitude=sum(p.latitude for p in members) / len(members),
                longitude=sum(p.longitude for p in members) / len(members),
                timestamp=from_unix(t0 + (idx + 0.5) * width),
            )
        )
    return Trace(out)


def _neighbor_sets(points: list[GeoPoint], radius_m: float) -> list[set[int]]:
    """Indices within ``radius_m`` of each point (self included).

    A cheap equirectangular prefilter skips pairs that are far beyond the
    radius; the decision boundary itself always uses the exact geodesic.
    """
    n = len(points)
    neighbors: list[set[int]] = [{i} for i in range(n)]
    lat = [p.latitude for p in points]
    lon = [p.longitude for p in points]
    prefilter = all(abs(v) <= 85.0 for v in lat)
    cutoff = 3.0 * radius_m
    for i in range(n):
        for j in range(i + 1, n):
            if prefilter:
                dlat_m = (lat[j] - lat[i]) * 110574.0
                if abs(dlat_m) > cutoff:
                    continue
                mean_phi = math.radians(0.5 * (lat[i] + lat[j]))
                dlon_m = (lon[j] - lon[i]) * 111320.0 * math.cos(mean_phi)
                if math.hypot(dlat_m, dlon_m) > cutoff:
                    continue
            if geodesic_distance(lat[i], lon[i], lat[j], lon[j]) <= radius_m:
                neighbors[i].add(j)
                neighbors[j].add(i)
    return neighbors


def dbscan(
    points: Sequence[GeoPoint],
    radius_m: float = 50.0,
    min_neighbors: int = 6,
) -> tuple[list[Cluster], list[GeoPoint]]:
    """Density clustering with the geodesic metric.

    Core points have at least ``min_neighbors`` points (themselves included)
    within ``radius_m``; clusters grow by density reachability; border points
    join the first cluster that claims them in deterministic scan order.
    Returned clusters are unranked (rank 0, dwell 0); ranking is applied by
    :func:`rank_top_locations`.
    """
    ordered = sorted(points, key=lambda p: (p.unix, p.latitude, p.longitude))
    n = len(ordered)
    neighbors = _neighbor_sets(ordered, radius_m)
    is_core = [len(neighbors[i]) >= min_neighbors for i in range(n)]
    labels = [-1] * n
    cluster_id = 0
    for seed in range(n):
        if labels[seed] != -1 or not is_core[seed]:
            continue
        labels[seed] = cluster_id
        frontier = [seed]
        while frontier:
            current = frontier.pop(0)
            for nb in sorted(neighbors[current]):
                if labels[nb] != -1:
                    continue
                labels[nb] = cluster_id
                if is_core[nb]:
                    frontier.append(nb)
        cluster_id += 1

    clusters = []
    for cid in range(cluster_id):
        members = tuple(ordered[i] for i in range(n) if labels[i] == cid)
        clusters.append(
            Cluster(
                members=members,
                center=GeoPoint(
                    latitude=sum(p.latitude for p in members) / len(members),
                    longitude=sum(p.longitude for p in members) / len(members),
                    timestamp=members[0].timestamp,
                ),
                rank=0,
                resampled_count=len(members),
                days_visited=len({p.timestamp.astimezone(timezone.utc).date() for p in members}),
                dwell_time=0.0,
            )
        )
    noise = [ordered[i] for i in range(n) if labels[i] == -1]
    return clusters, noise


def rank_top_locations(
    reports: Trace,
    params: AnalyticsParams = AnalyticsParams(),
) -> list[Cluster]:
    """Resample, cluster, and rank visited places by overall dwell time.

    Dwell time is resampled-report count times the resampling interval;
    ties break on count, then on earliest first visit.
    """
    resampled = resample(reports, params.resample_interval_min)
    clusters, _noise = dbscan(resampled.points, params.dbscan_radius_m, params.dbscan_min_neighbors)
    enriched = [
        replace(c, dwell_time=c.resampled_count * params.resample_interval_min)
        for c in clusters
    ]
    enriched.sort(
        key=lambda c: (-c.dwell_time, -c.resampled_count, min(p.unix for p in c.members))
    )
    return [replace(c, rank=i + 1) for i, c in enumerate(enriched)]


def visiting_histogram(cluster: Cluster, utc_offset_hours: int = 0) -> list[int]:
    """Count of member reports per local hour of day (24 bins)."""
    counts = [0] * 24
    for p in cluster.members:
        hour = (p.timestamp.astimezone(timezone.utc).hour + utc_offset_hours) % 24
        counts[hour] += 1
    return counts


# --- import / export -----------------------------------------------------------

CSV_HEADER = ["timestamp_iso8601", "lat", "lon"]


def write_trace_csv(trace: Trace, destination) -> None:
    with open(destination, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for p in trace:
            writer.writerow([iso8601(p.timestamp), f"{p.latitude:.7f}", f"{p.longitude:.7f}"])


def read_trace_csv(source) -> Trace:
    with open(source, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != CSV_HEADER:
            raise ValueError(f"trace CSV must start with header {','.join(CSV_HEADER)}")
        points = []
        for row in reader:
            if not row or not "".join(row).strip():
                continue
            points.append(
                GeoPoint(
                    latitude=float(row[1]),
                    longitude=float(row[2]),
                    timestamp=parse_iso8601(row[0]),
                )
            )
    return Trace(points)


def export_geojson(
    traces: dict[str, Trace],
    clusters: Sequence[Cluster],
    destination,
) -> None:
    """FeatureCollection with one LineString per trace, one Point per cluster.

    Coordinates are written at 1e-7 degrees; LineString features carry their
    timestamps so traces survive a round trip.
    """
    features = []
    for name, trace in traces.items():
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [
                        [round(p.longitude, 7), round(p.latitude, 7)] for p in trace
                    ],
                },
                "properties": {
                    "name": name,
                    "timestamps": [iso8601(p.timestamp) for p in trace],
                },
            }
        )
    for cluster in clusters:
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [
                        round(cluster.center.longitude, 7),
                        round(cluster.center.latitude, 7),
                    ],
                },
                "properties": {
                    "rank": cluster.rank,
                    "dwell_time": cluster.dwell_time,
                    "days": cluster.days_visited,
                    "resampled_count": cluster.resampled_count,
                    "first_visit": iso8601(cluster.center.timestamp),
                },
            }
        )
    with open(destination, "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh, indent=2)


def read_geojson(source) -> tuple[dict[str, Trace], list[dict]]:
    """Read back an exported file: named traces plus raw cluster features."""
    with open(source, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    traces: dict[str, Trace] = {}
    clusters: list[dict] = []
    for feature in doc.get("features", []):
        geometry = feature.get("geometry", {})
        props = feature.get("properties", {})
        if geometry.get("type") == "LineString":
            points = [
                GeoPoint(lat, lon, parse_iso8601(ts))
                for (lon, lat), ts in zip(geometry["coordinates"], props["timestamps"])
            ]
            traces[props.get("name", f"trace-{len(traces)}")] = Trace(points)
        elif geometry.get("type") == "Point":
            lon, lat = geometry["coordinates"]
            clusters.append({"latitude": lat, "longitude": lon, **props})
    return traces, clusters
