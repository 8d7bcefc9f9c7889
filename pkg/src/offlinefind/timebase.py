"""Time conversions shared across the protocol stack.

Location reports carry an unsigned 32-bit second counter anchored at
2001-01-01T00:00:00Z; the report server tracks milliseconds since the Unix
epoch.  Everything here is timezone-aware UTC.
"""

from __future__ import annotations

from datetime import datetime, timezone

# 2001-01-01T00:00:00Z expressed as Unix seconds.
REPORT_EPOCH_UNIX = 978307200

KEY_WINDOW_SECONDS = 900


def to_unix(dt: datetime) -> float:
    """Unix seconds for an aware datetime (naive input is taken as UTC)."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def from_unix(seconds: float) -> datetime:
    return datetime.fromtimestamp(seconds, tz=timezone.utc)


def report_seconds(unix_seconds: float) -> int:
    """Unix seconds -> report timestamp (seconds since the 2001 epoch)."""
    value = int(unix_seconds - REPORT_EPOCH_UNIX)
    if not 0 <= value < 2**32:
        raise ValueError(f"timestamp {unix_seconds} outside the 32-bit report range")
    return value


def report_seconds_to_unix(value: int) -> float:
    return float(value + REPORT_EPOCH_UNIX)


def unix_millis(unix_seconds: float) -> int:
    return int(round(unix_seconds * 1000))


def parse_iso8601(text: str) -> datetime:
    """Parse an ISO-8601 timestamp, defaulting the timezone to UTC."""
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def iso8601(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")
