"""In-memory report server: binary submit, JSON fetch, retention, correlation.

The server stores only ciphertext and metadata.  It never decrypts payloads;
the correlation analysis below works purely on upload/download metadata,
which is exactly what makes it a privacy problem.

Submit body (binary):   0x0F8AE0 || count || count * (32-byte id || 88-byte report)
Fetch request (JSON):   {"search": [{"startDate": ms, "endDate": ms, "ids": [b64...]}]}
Fetch response (JSON):  {"results": [{"datePublished": ms, "payload": b64,
                         "description": "found", "id": b64, "statusCode": 0}, ...],
                         "statusCode": "200"}
"""

from __future__ import annotations

import base64
import json
import struct
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable

SUBMIT_HEADER = b"\x0f\x8a\xe0"
KEY_ID_BYTES = 32
REPORT_PAYLOAD_BYTES = 88
SUBMIT_ENTRY_BYTES = KEY_ID_BYTES + REPORT_PAYLOAD_BYTES
MAX_BATCH = 255

RETENTION_DAYS = 7
RETENTION_MS = RETENTION_DAYS * 86400 * 1000


class BadHeader(ValueError):
    """Submit body does not start with the fixed 0x0F8AE0 header."""


class LengthMismatch(ValueError):
    """Submit body length disagrees with its count byte."""


class MalformedFetch(ValueError):
    """Fetch request body is not valid JSON of the expected shape."""


def _system_millis() -> int:
    return time.time_ns() // 1_000_000


@dataclass(frozen=True)
class StoredReport:
    key_id: bytes
    payload: bytes
    date_published: int  # milliseconds since the Unix epoch, server receive time
    finder_id: str
    status_code: int = 0

    def __post_init__(self):
        if len(self.key_id) != KEY_ID_BYTES:
            raise ValueError(f"key id must be {KEY_ID_BYTES} bytes")
        if len(self.payload) != REPORT_PAYLOAD_BYTES:
            raise ValueError(f"payload must be {REPORT_PAYLOAD_BYTES} bytes")

    @property
    def generation_time(self) -> int:
        """Plaintext timestamp field of the payload (seconds, 2001 epoch).

        Metadata in the clear; reading it involves no decryption.
        """
        return struct.unpack(">I", self.payload[:4])[0]


@dataclass(frozen=True)
class CorrelationFinding:
    """Two owners linked through a single finder's near-simultaneous uploads."""

    owner_a: str
    owner_b: str
    finder_id: str
    time_gap: float  # seconds between the two reports' generation times
    key_id_a: bytes
    key_id_b: bytes


def build_submit_body(entries: Iterable[tuple[bytes, bytes]]) -> bytes:
    entries = list(entries)
    if not 1 <= len(entries) <= MAX_BATCH:
        raise ValueError(f"batch must hold 1..{MAX_BATCH} reports, got {len(entries)}")
    parts = [SUBMIT_HEADER, bytes([len(entries)])]
    for key_id, payload in entries:
        if len(key_id) != KEY_ID_BYTES or len(payload) != REPORT_PAYLOAD_BYTES:
            raise ValueError("each entry is a 32-byte id plus an 88-byte report")
        parts.append(key_id)
        parts.append(payload)
    return b"".join(parts)


def parse_submit_body(body: bytes) -> list[tuple[bytes, bytes]]:
    if body[:3] != SUBMIT_HEADER:
        raise BadHeader(f"expected header {SUBMIT_HEADER.hex()}, got {body[:3].hex()}")
    if len(body) < 4:
        raise LengthMismatch("body truncated before the count byte")
    count = body[3]
    expected = 4 + count * SUBMIT_ENTRY_BYTES
    if len(body) != expected:
        raise LengthMismatch(f"count {count} implies {expected} bytes, got {len(body)}")
    entries = []
    for i in range(count):
        offset = 4 + i * SUBMIT_ENTRY_BYTES
        entries.append(
            (
                body[offset : offset + KEY_ID_BYTES],
                body[offset + KEY_ID_BYTES : offset + SUBMIT_ENTRY_BYTES],
            )
        )
    return entries


def _parse_fetch_request(body: bytes | str | dict) -> list[dict]:
    if isinstance(body, (bytes, str)):
        try:
            body = json.loads(body)
        except json.JSONDecodeError as exc:
            raise MalformedFetch(f"invalid JSON: {exc.msg}") from None
    if not isinstance(body, dict) or not isinstance(body.get("search"), list):
        raise MalformedFetch("expected an object with a 'search' list")
    searches = []
    for entry in body["search"]:
        if not isinstance(entry, dict):
            raise MalformedFetch("search entries must be objects")
        try:
            start = int(entry.get("startDate", 0))
            end = int(entry["endDate"])
            ids = [base64.b64decode(i, validate=True) for i in entry["ids"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFetch(f"bad search entry: {exc}") from None
        if start > end:
            raise MalformedFetch("startDate exceeds endDate")
        if any(len(i) != KEY_ID_BYTES for i in ids):
            raise MalformedFetch("ids must decode to 32 bytes")
        searches.append({"start": start, "end": end, "ids": ids})
    return searches


class ReportStore:
    """Linearizable in-memory report store with a 7-day retention horizon.

    The clock is injected so simulations and tests control time completely.
    ``record_owner_tokens=False`` implements the download-side mitigation:
    fetches are served but leave no owner identity behind, which starves the
    correlation analysis.
    """

    def __init__(
        self,
        clock: Callable[[], int] = _system_millis,
        retention_ms: int = RETENTION_MS,
        record_owner_tokens: bool = True,
    ):
        self.clock = clock  # injectable; simulations pin this to virtual time
        self._retention_ms = retention_ms
        self._record_owner_tokens = record_owner_tokens
        self._reports: list[StoredReport] = []
        self._fetch_log: list[tuple[str, bytes, int]] = []
        self._lock = threading.Lock()

    def _now(self, now_ms: int | None) -> int:
        return self.clock() if now_ms is None else now_ms

    @property
    def reports(self) -> list[StoredReport]:
        with self._lock:
            return list(self._reports)

    @property
    def fetch_log(self) -> list[tuple[str, bytes, int]]:
        with self._lock:
            return list(self._fetch_log)

    def submit(self, body: bytes, finder_id: str, now_ms: int | None = None) -> int:
        """Store a submit batch atomically; returns the number stored.

        Raises BadHeader / LengthMismatch without storing anything.
        """
        entries = parse_submit_body(body)
        now = self._now(now_ms)
        stored = [
            StoredReport(key_id=key_id, payload=payload, date_published=now, finder_id=finder_id)
            for key_id, payload in entries
        ]
        with self._lock:
            self._reports.extend(stored)
        return len(stored)

    def fetch(
        self,
        request: bytes | str | dict,
        owner_token: str | None = None,
        now_ms: int | None = None,
    ) -> dict:
        """Serve a fetch request; returns the response object.

        Unknown ids are simply absent from the results.  Raises
        MalformedFetch for unparseable requests (HTTP-400 equivalent).
        """
        searches = _parse_fetch_request(request)
        now = self._now(now_ms)
        horizon = now - self._retention_ms
        with self._lock:
            matched: list[StoredReport] = []
            seen: set[int] = set()
            for search in searches:
                wanted = set(search["ids"])
                for idx, report in enumerate(self._reports):
                    if idx in seen or report.key_id not in wanted:
                        continue
                    if report.date_published < horizon:
                        continue
                    if search["start"] <= report.date_published <= search["end"]:
                        seen.add(idx)
                        matched.append(report)
            if self._record_owner_tokens and owner_token is not None:
                for search in searches:
                    for key_id in search["ids"]:
                        self._fetch_log.append((owner_token, key_id, now))
        results = [
            {
                "datePublished": r.date_published,
                "payload": base64.b64encode(r.payload).decode(),
                "description": "found",
                "id": base64.b64encode(r.key_id).decode(),
                "statusCode": r.status_code,
            }
            for r in sorted(matched, key=lambda r: (r.date_published, r.key_id))
        ]
        return {"results": results, "statusCode": "200"}

    def purge_expired(self, now_ms: int | None = None) -> int:
        now = self._now(now_ms)
        horizon = now - self._retention_ms
        with self._lock:
            before = len(self._reports)
            self._reports = [r for r in self._reports if r.date_published >= horizon]
            return before - len(self._reports)

    def correlate(self, window: float) -> list[CorrelationFinding]:
        """Infer co-located owners from metadata alone.

        Two distinct key ids uploaded by the same finder with generation
        times within ``window`` seconds, later fetched by two distinct owner
        tokens, yield one finding per owner pair.  Deterministic given the
        store state.
        """
        with self._lock:
            reports = list(self._reports)
            fetch_log = list(self._fetch_log)

        fetchers: dict[bytes, set[str]] = {}
        for owner, key_id, _at in fetch_log:
            fetchers.setdefault(key_id, set()).add(owner)

        by_finder: dict[str, list[StoredReport]] = {}
        for report in reports:
            by_finder.setdefault(report.finder_id, []).append(report)

        best: dict[tuple, CorrelationFinding] = {}
        for finder_id in sorted(by_finder):
            uploads = sorted(by_finder[finder_id], key=lambda r: (r.generation_time, r.key_id))
            for i, first in enumerate(uploads):
                for second in uploads[i + 1 :]:
                    gap = float(second.generation_time - first.generation_time)
                    if gap > window:
                        break
                    if first.key_id == second.key_id:
                        continue
                    key_a, key_b = sorted((first.key_id, second.key_id))
                    for owner_x in sorted(fetchers.get(first.key_id, ())):
                        for owner_y in sorted(fetchers.get(second.key_id, ())):
                            if owner_x == owner_y:
                                continue
                            owner_a, owner_b = sorted((owner_x, owner_y))
                            dedup = (finder_id, key_a, key_b, owner_a, owner_b)
                            finding = CorrelationFinding(
                                owner_a=owner_a,
                                owner_b=owner_b,
                                finder_id=finder_id,
                                time_gap=gap,
                                key_id_a=key_a,
                                key_id_b=key_b,
                            )
                            if dedup not in best or gap < best[dedup].time_gap:
                                best[dedup] = finding
        return sorted(
            best.values(),
            key=lambda f: (f.finder_id, f.time_gap, f.key_id_a, f.key_id_b, f.owner_a, f.owner_b),
        )

    def save_snapshot(self, path) -> int:
        """Write stored reports as JSON-lines for harness replay."""
        reports = self.reports
        with open(path, "w", encoding="utf-8") as fh:
            for r in reports:
                fh.write(
                    json.dumps(
                        {
                            "key_id": base64.b64encode(r.key_id).decode(),
                            "payload": base64.b64encode(r.payload).decode(),
                            "date_published": r.date_published,
                            "finder_id": r.finder_id,
                            "status_code": r.status_code,
                        }
                    )
                    + "\n"
                )
        return len(reports)

    def load_snapshot(self, path) -> int:
        """Replace store contents from a snapshot file; returns the count."""
        loaded = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                loaded.append(
                    StoredReport(
                        key_id=base64.b64decode(record["key_id"]),
                        payload=base64.b64decode(record["payload"]),
                        date_published=int(record["date_published"]),
                        finder_id=record["finder_id"],
                        status_code=int(record.get("status_code", 0)),
                    )
                )
        with self._lock:
            self._reports = loaded
        return len(loaded)
