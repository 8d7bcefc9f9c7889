"""Deterministic discrete-event simulation of lost devices, finders, owners.

Lost devices walk a ground-truth trace and broadcast a rolling-key frame
every ``advert_interval_s``.  Finders inside ``ble_range_m`` at emission time
capture the frame, build an encrypted report at their own (noisy) position,
and flush pending reports to the store in batches after a log-normal upload
delay.  Everything (noise, delays, ephemeral keys) is driven by the scenario
seed, so identical configs replay bit-identically.
"""

from __future__ import annotations

import base64
import bisect
import hashlib
import heapq
import json
import logging
import math
import random
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable

from .advert import AdvertPayloadFields, BleFrame, decode_advert, encode_advert
from .analytics import GeoPoint, Trace, read_trace_csv
from .geodesy import geodesic_distance, offset_point
from .keys import KeyChain, MasterBeaconKey, SeededEntropy, generate_master, keys_in_window, window_index
from .reportcrypto import (
    LocationMessage,
    decode_report,
    decrypt_report,
    encode_report,
    encrypt_report,
)
from .service import MAX_BATCH, ReportStore, build_submit_body
from .timebase import REPORT_EPOCH_UNIX, from_unix, report_seconds, to_unix, unix_millis

logger = logging.getLogger(__name__)

EVENT_ADVERT_EMITTED = "advert-emitted"
EVENT_ADVERT_RELAYED = "advert-relayed"
EVENT_ADVERT_RECEIVED = "advert-received"
EVENT_REPORT_GENERATED = "report-generated"
EVENT_BATCH_UPLOADED = "batch-uploaded"
EVENT_FETCH_PERFORMED = "fetch-performed"


@dataclass(frozen=True)
class SimEvent:
    time: float  # unix seconds
    seq: int
    kind: str
    device: str | None = None
    finder: str | None = None
    key_index: int | None = None
    key_id: bytes | None = None
    count: int | None = None
    frame: bytes | None = None


@dataclass
class LostDeviceSpec:
    name: str
    trace: Trace
    master: MasterBeaconKey | None = None  # derived from the scenario seed when unset


@dataclass
class FinderSpec:
    name: str
    trace: Trace  # a single-point trace models a static finder


@dataclass
class ScenarioConfig:
    devices: list[LostDeviceSpec]
    finders: list[FinderSpec]
    ble_range_m: float = 50.0
    advert_interval_s: float = 2.0
    key_window_s: float = 900.0
    gps_noise_sigma_m: float = 10.0
    upload_delay_median_s: float = 26.0 * 60.0
    upload_delay_shape: float = 1.0
    per_key_cap: int = 4
    rng_seed: int = 0

    def __post_init__(self):
        if not self.devices:
            raise ValueError("scenario needs at least one lost device")
        if self.advert_interval_s <= 0 or self.key_window_s <= 0 or self.per_key_cap < 1:
            raise ValueError("intervals and caps must be positive")


def sample_upload_delay(rng: random.Random, median_s: float, shape: float) -> float:
    """Log-normal report-to-upload delay with the given median.

    The heavy right tail models finders that sit on reports for hours.
    """
    return rng.lognormvariate(math.log(median_s), shape)


@dataclass
class SimulationResult:
    config: ScenarioConfig
    events: list[SimEvent]
    store: ReportStore
    masters: dict[str, MasterBeaconKey]
    end_time: float  # unix seconds after the last upload flushed

    def events_of(self, kind: str) -> list[SimEvent]:
        return [e for e in self.events if e.kind == kind]


class _Mover:
    """Piecewise-linear position lookup, clamped to the trace's span."""

    def __init__(self, trace: Trace):
        self.times = [p.unix for p in trace]
        self.lats = [p.latitude for p in trace]
        self.lons = [p.longitude for p in trace]

    def position(self, t: float) -> tuple[float, float]:
        times = self.times
        if t <= times[0]:
            return self.lats[0], self.lons[0]
        if t >= times[-1]:
            return self.lats[-1], self.lons[-1]
        hi = bisect.bisect_right(times, t)
        lo = hi - 1
        span = times[hi] - times[lo]
        w = (t - times[lo]) / span if span else 0.0
        return (
            self.lats[lo] + w * (self.lats[hi] - self.lats[lo]),
            self.lons[lo] + w * (self.lons[hi] - self.lons[lo]),
        )


def static_trace(lat: float, lon: float, start: datetime, end: datetime | None = None) -> Trace:
    points = [GeoPoint(lat, lon, start)]
    if end is not None and to_unix(end) > to_unix(start):
        points.append(GeoPoint(lat, lon, end))
    return Trace(points)


def derive_scenario_master(config: ScenarioConfig, device: LostDeviceSpec) -> MasterBeaconKey:
    if device.master is not None:
        return device.master
    entropy = SeededEntropy(f"scenario:{config.rng_seed}:device:{device.name}".encode())
    return generate_master(entropy, creation_time=device.trace.start)


class _Simulation:
    def __init__(self, config: ScenarioConfig, store: ReportStore | None):
        self.config = config
        self.store = store if store is not None else ReportStore()
        self.rng = random.Random(config.rng_seed)
        self.crypto_entropy = SeededEntropy(f"scenario:{config.rng_seed}:crypto".encode())
        self.events: list[SimEvent] = []
        self.seq = 0
        self.queue: list[tuple[float, int, tuple]] = []
        self.masters = {d.name: derive_scenario_master(config, d) for d in config.devices}
        self.chains = {name: KeyChain(master) for name, master in self.masters.items()}
        self.device_movers = {d.name: _Mover(d.trace) for d in config.devices}
        self.finder_movers = {f.name: _Mover(f.trace) for f in config.finders}
        self.reports_per_key: dict[tuple[str, bytes], int] = {}
        self.pending: dict[str, list[tuple[bytes, bytes]]] = {f.name: [] for f in config.finders}
        self.last_time = 0.0
        # (capture_site, replay_site, offset); set by run_relay_attack
        self.relay: tuple[tuple[float, float], tuple[float, float], float] | None = None

    def push(self, time_s: float, action: tuple) -> None:
        heapq.heappush(self.queue, (time_s, self.seq, action))
        self.seq += 1

    def log(self, time_s: float, kind: str, **fields) -> SimEvent:
        event = SimEvent(time=time_s, seq=len(self.events), kind=kind, **fields)
        self.events.append(event)
        return event

    def schedule_emissions(self) -> None:
        for spec in self.config.devices:
            start = to_unix(spec.trace.start)
            end = to_unix(spec.trace.end)
            if end <= start:
                end = start + self.config.advert_interval_s  # single emission for a point trace
            k = 0
            t = start
            while t < end:
                self.push(t, ("emit", spec.name))
                k += 1
                t = start + k * self.config.advert_interval_s

    def handle_emit(self, t: float, device: str) -> None:
        master = self.masters[device]
        index = window_index(master, from_unix(t), self.config.key_window_s)
        key = self.chains[device].key_at(index)
        frame = encode_advert(AdvertPayloadFields(x_bytes=key.x_bytes))
        self.log(t, EVENT_ADVERT_EMITTED, device=device, key_index=index,
                 key_id=key.key_id, frame=frame.frame_bytes)
        device_pos = self.device_movers[device].position(t)
        self.deliver(t, frame, device_pos, device=device, key_index=index, key_id=key.key_id)
        if self.relay is not None:
            capture_pos, replay_pos, offset = self.relay
            if geodesic_distance(*device_pos, *capture_pos) <= self.config.ble_range_m:
                self.push(t + offset, ("relay", frame.frame_bytes, device))

    def handle_relay(self, t: float, frame_bytes: bytes, origin_device: str) -> None:
        frame = BleFrame.from_bytes(frame_bytes)
        fields = decode_advert(frame)
        key_id = hashlib.sha256(fields.x_bytes).digest()
        self.log(t, EVENT_ADVERT_RELAYED, device=origin_device, key_id=key_id,
                 frame=frame.frame_bytes)
        _capture, replay_pos, _offset = self.relay
        self.deliver(t, frame, replay_pos, device=origin_device, key_index=None, key_id=key_id)

    def deliver(
        self,
        t: float,
        frame: BleFrame,
        source_pos: tuple[float, float],
        device: str,
        key_index: int | None,
        key_id: bytes,
    ) -> None:
        for spec in self.config.finders:
            finder_pos = self.finder_movers[spec.name].position(t)
            if geodesic_distance(*finder_pos, *source_pos) > self.config.ble_range_m:
                continue
            self.log(t, EVENT_ADVERT_RECEIVED, device=device, finder=spec.name,
                     key_index=key_index, key_id=key_id)
            cap_key = (spec.name, key_id)
            if self.reports_per_key.get(cap_key, 0) >= self.config.per_key_cap:
                continue
            self.reports_per_key[cap_key] = self.reports_per_key.get(cap_key, 0) + 1
            self.generate_report(t, spec.name, finder_pos, frame, device, key_index, key_id)

    def generate_report(
        self,
        t: float,
        finder: str,
        finder_pos: tuple[float, float],
        frame: BleFrame,
        device: str,
        key_index: int | None,
        key_id: bytes,
    ) -> None:
        sigma = self.config.gps_noise_sigma_m
        north = self.rng.gauss(0.0, sigma)
        east = self.rng.gauss(0.0, sigma)
        lat, lon = offset_point(finder_pos[0], finder_pos[1], north, east)
        msg = LocationMessage(
            latitude=lat,
            longitude=lon,
            accuracy=max(0, min(255, round(sigma))),
            status=0,
        )
        x_bytes = decode_advert(frame).x_bytes
        report = encrypt_report(x_bytes, msg, report_seconds(t), entropy=self.crypto_entropy)
        self.pending[finder].append((key_id, encode_report(report)))
        self.log(t, EVENT_REPORT_GENERATED, device=device, finder=finder,
                 key_index=key_index, key_id=key_id)
        delay = sample_upload_delay(self.rng, self.config.upload_delay_median_s,
                                    self.config.upload_delay_shape)
        self.push(t + delay, ("upload", finder))

    def handle_upload(self, t: float, finder: str) -> None:
        pending = self.pending[finder]
        if not pending:
            return
        for start in range(0, len(pending), MAX_BATCH):
            chunk = pending[start : start + MAX_BATCH]
            self.store.submit(build_submit_body(chunk), finder_id=finder,
                              now_ms=unix_millis(t))
            self.log(t, EVENT_BATCH_UPLOADED, finder=finder, count=len(chunk))
        self.pending[finder] = []

    def run(self) -> SimulationResult:
        self.schedule_emissions()
        while self.queue:
            t, _seq, action = heapq.heappop(self.queue)
            self.last_time = max(self.last_time, t)
            if action[0] == "emit":
                self.handle_emit(t, action[1])
            elif action[0] == "relay":
                self.handle_relay(t, action[1], action[2])
            elif action[0] == "upload":
                self.handle_upload(t, action[1])
        # handlers that read the store's clock (e.g. over HTTP) see sim time
        end_ms = unix_millis(self.last_time + 1.0)
        self.store.clock = lambda: end_ms
        return SimulationResult(
            config=self.config,
            events=self.events,
            store=self.store,
            masters=dict(self.masters),
            end_time=self.last_time,
        )


def run_scenario(config: ScenarioConfig, store: ReportStore | None = None) -> SimulationResult:
    """Run the advertise/receive/report/upload pipeline to completion."""
    return _Simulation(config, store).run()


def run_relay_attack(
    config: ScenarioConfig,
    capture_site: tuple[float, float],
    replay_site: tuple[float, float],
    offset_s: float,
    store: ReportStore | None = None,
) -> SimulationResult:
    """Re-emit every frame heard at ``capture_site`` at ``replay_site``.

    Relayed frames are byte-identical to the captured ones; finders near the
    replay site report their own location under the victim's key, polluting
    the owner's view with contradicting positions.
    """
    sim = _Simulation(config, store)
    sim.relay = (capture_site, replay_site, offset_s)
    return sim.run()


def owner_retrieve(
    master: MasterBeaconKey,
    t_start: datetime,
    t_end: datetime,
    service,
    owner_token: str = "owner",
    now: float | None = None,
    key_window_s: float = 900.0,
    result: SimulationResult | None = None,
) -> list[tuple[datetime, LocationMessage]]:
    """Fetch and decrypt every report for the master's keys in a time span.

    ``service`` is either a ReportStore or an ``http://`` base URL.  Reports
    that fail authentication are skipped with a diagnostic, not fatal.
    """
    keys = keys_in_window(master, t_start, t_end, key_window_s)
    by_id = {key.key_id: key for key in keys}
    if now is None:
        now = to_unix(t_end) + 14 * 86400.0  # generous horizon for late uploads
    request = {
        "search": [
            {
                "startDate": unix_millis(to_unix(t_start)),
                "endDate": unix_millis(now),
                "ids": [base64.b64encode(k).decode() for k in sorted(by_id)],
            }
        ]
    }
    if isinstance(service, str):
        response = _http_fetch(service, request, owner_token)
    else:
        response = service.fetch(request, owner_token=owner_token, now_ms=unix_millis(now))
    if result is not None:
        result.events.append(
            SimEvent(time=now, seq=len(result.events), kind=EVENT_FETCH_PERFORMED,
                     finder=None, device=owner_token, count=len(response["results"]))
        )
    out: list[tuple[datetime, LocationMessage]] = []
    skipped = 0
    for entry in response["results"]:
        key_id = base64.b64decode(entry["id"])
        key = by_id.get(key_id)
        if key is None:
            skipped += 1
            continue
        try:
            payload = base64.b64decode(entry["payload"])
            report = decode_report(payload)
            msg = decrypt_report(key.d, report)
        except Exception as exc:  # skip corrupt or foreign reports, keep the rest
            logger.warning("owner_retrieve: skipping report for %s: %s", entry["id"], exc)
            skipped += 1
            continue
        out.append((from_unix(report.timestamp + REPORT_EPOCH_UNIX), msg))
    if skipped:
        logger.info("owner_retrieve: skipped %d undecryptable reports", skipped)
    out.sort(key=lambda pair: pair[0])
    return out


def _http_fetch(base_url: str, request: dict, owner_token: str) -> dict:
    import urllib.request

    req = urllib.request.Request(
        base_url.rstrip("/") + "/acsnservice/fetch",
        data=json.dumps(request).encode(),
        headers={"Authorization": owner_token, "Content-Type": "application/json"},
        method="POST",
    )
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


def run_correlation_demo(
    config: ScenarioConfig,
    window_s: float = 60.0,
    store: ReportStore | None = None,
    owners_fetch: bool = True,
):
    """Replay the two-owners-one-finder topology and run the correlation.

    Each device's owner fetches its own reports (unless ``owners_fetch`` is
    off, the negative control); the store's metadata then links the owners.
    Returns (findings, simulation result).
    """
    result = run_scenario(config, store)
    if owners_fetch:
        for spec in config.devices:
            owner_retrieve(
                result.masters[spec.name],
                spec.trace.start,
                spec.trace.end,
                result.store,
                owner_token=f"owner-{spec.name}",
                now=result.end_time + 1.0,
                key_window_s=config.key_window_s,
                result=result,
            )
    return result.store.correlate(window_s), result


def reports_to_trace(pairs: Iterable[tuple[datetime, LocationMessage]]) -> Trace:
    """Decrypted (time, message) pairs as an analytics trace."""
    return Trace(GeoPoint(m.latitude, m.longitude, ts) for ts, m in pairs)


# --- scenario files ------------------------------------------------------------


def load_scenario(path) -> ScenarioConfig:
    """Read a scenario JSON file; trace files resolve relative to it.

    Device entries: {"name", "trace_csv", optional "master_seed"}.
    Finder entries: {"name", "trace_csv"} or {"name", "lat", "lon"}.
    Remaining keys override ScenarioConfig defaults.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    base = path.parent

    devices = []
    for entry in doc.get("devices", []):
        trace = read_trace_csv(base / entry["trace_csv"])
        master = None
        if "master_seed" in entry:
            master = generate_master(
                SeededEntropy(int(entry["master_seed"])), creation_time=trace.start
            )
        devices.append(LostDeviceSpec(name=entry["name"], trace=trace, master=master))
    if not devices:
        raise ValueError(f"{path}: scenario defines no lost devices")

    anchor = devices[0].trace.start
    finders = []
    for entry in doc.get("finders", []):
        if "trace_csv" in entry:
            trace = read_trace_csv(base / entry["trace_csv"])
        else:
            trace = static_trace(float(entry["lat"]), float(entry["lon"]), anchor)
        finders.append(FinderSpec(name=entry["name"], trace=trace))

    overrides = {
        key: doc[key]
        for key in (
            "ble_range_m",
            "advert_interval_s",
            "key_window_s",
            "gps_noise_sigma_m",
            "upload_delay_median_s",
            "upload_delay_shape",
            "per_key_cap",
            "rng_seed",
        )
        if key in doc
    }
    return ScenarioConfig(devices=devices, finders=finders, **overrides)
