"""Adapter for externally published evaluation datasets.

Reproducing published mobility-scenario numbers requires the original data,
which ships separately.  This reader accepts a directory containing, per
scenario (e.g. ``walking``), a ground-truth GPS trace and the decrypted
report trace, as CSV with flexibly named columns: any of
timestamp/time/date, lat/latitude, lon/lng/longitude.  Timestamps may be
ISO-8601 or numeric Unix seconds/milliseconds.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .analytics import GeoPoint, Trace
from .timebase import from_unix, parse_iso8601

_TIME_NAMES = ("timestamp_iso8601", "timestamp", "time", "datetime", "date")
_LAT_NAMES = ("lat", "latitude")
_LON_NAMES = ("lon", "lng", "long", "longitude")


class DatasetNotFound(FileNotFoundError):
    pass


def _pick(fieldnames: list[str], candidates: tuple[str, ...]) -> str:
    lowered = {name.strip().lower(): name for name in fieldnames}
    for wanted in candidates:
        if wanted in lowered:
            return lowered[wanted]
    raise ValueError(f"no column matching any of {candidates} in {fieldnames}")

def _parse_time(raw: str):
    raw = raw.strip()
    try:
        value = float(raw)
    except ValueError:
        return parse_iso8601(raw)
    if value > 1e12:  # milliseconds
        value /= 1000.0
    return from_unix(value)


def read_flexible_csv(path) -> Trace:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames:
            raise ValueError(f"{path}: empty CSV")
        time_col = _pick(reader.fieldnames, _TIME_NAMES)
        lat_col = _pick(reader.fieldnames, _LAT_NAMES)
        lon_col = _pick(reader.fieldnames, _LON_NAMES)
        points = [
            GeoPoint(
                latitude=float(row[lat_col]),
                longitude=float(row[lon_col]),
                timestamp=_parse_time(row[time_col]),
            )
            for row in reader
            if row.get(lat_col) and row.get(lon_col)
        ]
    return Trace(points)


def _find_file(directory: Path, scenario: str, role_hints: tuple[str, ...]) -> Path | None:
    scenario = scenario.lower()
    candidates = []
    for path in sorted(directory.rglob("*.csv")):
        name = str(path.relative_to(directory)).lower()
        if scenario not in name:
            continue
        if any(hint in name for hint in role_hints):
            candidates.append(path)
    return candidates[0] if candidates else None


def load_scenario_pair(directory, scenario: str) -> tuple[Trace, Trace]:
    """(gps ground truth, location reports) for a named scenario.

    Looks for CSV files whose paths mention the scenario plus 'gps'/'trace'
    (ground truth) or 'report'/'of' (reports).
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetNotFound(f"dataset directory {directory} does not exist")
    gps_path = _find_file(directory, scenario, ("gps", "trace", "truth"))
    reports_path = _find_file(directory, scenario, ("report", "of_", "of-", "finding"))
    if gps_path is None or reports_path is None:
        raise DatasetNotFound(
            f"could not locate both gps and report CSVs for scenario {scenario!r} under {directory}"
        )
    return read_flexible_csv(gps_path), read_flexible_csv(reports_path)
