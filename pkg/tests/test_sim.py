import base64
import json
import math
import random
import statistics
from datetime import timedelta

import pytest

import scenarios
from offlinefind.analytics import interpolate_trace
from offlinefind.geodesy import geodesic_distance, offset_point
from offlinefind.keys import window_index
from offlinefind.service import ReportStore
from offlinefind.sim import (
    EVENT_ADVERT_EMITTED,
    EVENT_ADVERT_RECEIVED,
    EVENT_ADVERT_RELAYED,
    EVENT_BATCH_UPLOADED,
    EVENT_REPORT_GENERATED,
    FinderSpec,
    LostDeviceSpec,
    ScenarioConfig,
    load_scenario,
    owner_retrieve,
    run_correlation_demo,
    run_relay_attack,
    run_scenario,
    sample_upload_delay,
    static_trace,
)
from offlinefind.timebase import from_unix


def serialize_events(events):
    return [
        (e.time, e.seq, e.kind, e.device, e.finder, e.key_index, e.key_id, e.count, e.frame)
        for e in events
    ]


class TestRunScenario:
    def test_static_device_two_windows_capped(self, t0):
        config = scenarios.static_scenario(t0, duration_s=30 * 60, cap=4)
        result = run_scenario(config)
        windows = {e.key_index for e in result.events_of(EVENT_ADVERT_EMITTED)}
        assert windows == {1, 2}
        reports = result.store.reports
        per_key = {}
        for r in reports:
            per_key[r.key_id] = per_key.get(r.key_id, 0) + 1
        assert all(count <= 4 for count in per_key.values())
        assert len(reports) == 8  # 2 windows x cap 4

    def test_out_of_range_finder_no_reports(self, t0):
        config = scenarios.static_scenario(t0, finder_offset_m=10_000.0)
        result = run_scenario(config)
        assert result.store.reports == []
        assert result.events_of(EVENT_ADVERT_RECEIVED) == []
        assert len(result.events_of(EVENT_ADVERT_EMITTED)) == 900  # still advertising

    def test_fixed_seed_reproducible(self, t0):
        config_a = scenarios.walking_scenario(t0, n_finders=3, seed=123)
        config_b = scenarios.walking_scenario(t0, n_finders=3, seed=123)
        first = run_scenario(config_a)
        second = run_scenario(config_b)
        assert serialize_events(first.events) == serialize_events(second.events)
        assert first.store.reports == second.store.reports

    def test_seed_changes_noise(self, t0):
        first = run_scenario(scenarios.static_scenario(t0, seed=1))
        second = run_scenario(scenarios.static_scenario(t0, seed=2))
        assert first.store.reports != second.store.reports

    def test_conservation(self, t0):
        result = run_scenario(scenarios.walking_scenario(t0, n_finders=3))
        generated = len(result.events_of(EVENT_REPORT_GENERATED))
        received = len(result.events_of(EVENT_ADVERT_RECEIVED))
        uploaded = sum(e.count for e in result.events_of(EVENT_BATCH_UPLOADED))
        assert len(result.store.reports) == generated == uploaded
        assert generated <= received

    def test_key_rotation_matches_windows(self, t0):
        config = scenarios.static_scenario(t0, duration_s=45 * 60)
        result = run_scenario(config)
        master = result.masters["keys"]
        seen = {}
        for event in result.events_of(EVENT_ADVERT_EMITTED):
            expected = window_index(master, from_unix(event.time), config.key_window_s)
            assert event.key_index == expected
            seen.setdefault(event.key_index, set()).add(event.key_id)
        assert set(seen) == {1, 2, 3}
        all_ids = [next(iter(ids)) for ids in seen.values()]
        assert all(len(ids) == 1 for ids in seen.values())
        assert len(set(all_ids)) == 3  # consecutive windows use distinct keys

    def test_upload_delay_median(self):
        rng = random.Random(5)
        median_target = 26 * 60.0
        samples = [sample_upload_delay(rng, median_target, 1.0) for _ in range(10_000)]
        assert statistics.median(samples) == pytest.approx(median_target, rel=0.05)

    def test_empty_device_list_rejected(self):
        with pytest.raises(ValueError):
            ScenarioConfig(devices=[], finders=[])


class TestOwnerRetrieve:
    def test_locations_within_four_sigma(self, t0):
        config = scenarios.walking_scenario(t0, n_finders=3, sigma=60.0, seed=2025)
        result = run_scenario(config)
        device = config.devices[0]
        retrieved = owner_retrieve(
            result.masters["walker"],
            device.trace.start,
            device.trace.end,
            result.store,
            now=result.end_time + 1.0,
        )
        assert retrieved
        truth = interpolate_trace(device.trace, [ts for ts, _ in retrieved])
        assert len(truth) == len(retrieved)
        for (ts, msg), ref in zip(retrieved, truth):
            err = geodesic_distance(msg.latitude, msg.longitude, ref.latitude, ref.longitude)
            assert err <= 4 * 60.0, (ts, err)

    def test_sorted_chronologically(self, t0):
        config = scenarios.walking_scenario(t0, n_finders=3)
        result = run_scenario(config)
        device = config.devices[0]
        retrieved = owner_retrieve(
            result.masters["walker"], device.trace.start, device.trace.end,
            result.store, now=result.end_time + 1.0,
        )
        times = [ts for ts, _ in retrieved]
        assert times == sorted(times)

    def test_empty_window(self, t0):
        config = scenarios.static_scenario(t0)
        result = run_scenario(config)
        later = t0 + timedelta(days=1)
        retrieved = owner_retrieve(
            result.masters["keys"], later, later + timedelta(minutes=30),
            result.store, now=result.end_time + 86400 + 1,
        )
        assert retrieved == []

    def test_corrupted_payload_skipped_not_fatal(self, t0, tmp_path):
        config = scenarios.static_scenario(t0)
        result = run_scenario(config)
        snapshot = tmp_path / "store.jsonl"
        result.store.save_snapshot(snapshot)
        records = [json.loads(line) for line in snapshot.read_text().splitlines()]
        payload = bytearray(base64.b64decode(records[0]["payload"]))
        payload[70] ^= 0xFF  # flip ciphertext bits
        records[0]["payload"] = base64.b64encode(bytes(payload)).decode()
        snapshot.write_text("".join(json.dumps(r) + "\n" for r in records))
        tampered = ReportStore()
        tampered.load_snapshot(snapshot)
        device = config.devices[0]
        retrieved = owner_retrieve(
            result.masters["keys"], device.trace.start, device.trace.end,
            tampered, now=result.end_time + 1.0,
        )
        assert len(retrieved) == len(records) - 1

    def test_http_transport(self, t0):
        from offlinefind.httpd import serve_background

        config = scenarios.static_scenario(t0)
        result = run_scenario(config)
        server, base_url = serve_background(result.store)
        try:
            device = config.devices[0]
            over_http = owner_retrieve(
                result.masters["keys"], device.trace.start, device.trace.end,
                base_url, now=result.end_time + 1.0,
            )
            in_process = owner_retrieve(
                result.masters["keys"], device.trace.start, device.trace.end,
                result.store, now=result.end_time + 1.0,
            )
            assert over_http == in_process and over_http
        finally:
            server.shutdown()


class TestRelayAttack:
    def test_polluted_view_two_sites(self, t0):
        config = scenarios.relay_scenario(t0, with_replay_finder=True)
        result = run_relay_attack(
            config, scenarios.RELAY_CAPTURE, scenarios.relay_replay_site(), offset_s=4.0
        )
        device = config.devices[0]
        retrieved = owner_retrieve(
            result.masters["victim"], device.trace.start, device.trace.end,
            result.store, now=result.end_time + 1.0,
        )
        spread = max(
            geodesic_distance(a.latitude, a.longitude, b.latitude, b.longitude)
            for _, a in retrieved
            for _, b in retrieved
        )
        assert spread >= 900.0

    def test_replayed_frames_byte_identical(self, t0):
        config = scenarios.relay_scenario(t0)
        result = run_relay_attack(
            config, scenarios.RELAY_CAPTURE, scenarios.relay_replay_site(), offset_s=4.0
        )
        emitted = {e.frame for e in result.events_of(EVENT_ADVERT_EMITTED)}
        relayed = [e.frame for e in result.events_of(EVENT_ADVERT_RELAYED)]
        assert relayed
        assert all(frame in emitted for frame in relayed)

    def test_no_finder_at_replay_site_no_pollution(self, t0):
        baseline = run_scenario(scenarios.relay_scenario(t0, with_replay_finder=False))
        attacked = run_relay_attack(
            scenarios.relay_scenario(t0, with_replay_finder=False),
            scenarios.RELAY_CAPTURE,
            scenarios.relay_replay_site(),
            offset_s=4.0,
        )
        assert len(attacked.store.reports) == len(baseline.store.reports)


class TestCorrelationDemo:
    def test_two_owner_topology_one_finding(self, t0):
        config = scenarios.correlation_scenario(t0, shared_finder=True)
        findings, _result = run_correlation_demo(config, window_s=60.0)
        assert len(findings) == 1
        assert {findings[0].owner_a, findings[0].owner_b} == {"owner-bag", "owner-bike"}
        assert findings[0].finder_id == "passerby"

    def test_no_fetch_no_findings(self, t0):
        config = scenarios.correlation_scenario(t0, shared_finder=True)
        findings, _result = run_correlation_demo(config, window_s=60.0, owners_fetch=False)
        assert findings == []

    def test_disjoint_finders_no_findings(self, t0):
        config = scenarios.correlation_scenario(t0, shared_finder=False)
        findings, _result = run_correlation_demo(config, window_s=60.0)
        assert findings == []

    def test_mitigated_store_no_findings(self, t0):
        config = scenarios.correlation_scenario(t0, shared_finder=True)
        findings, result = run_correlation_demo(
            config, window_s=60.0, store=ReportStore(record_owner_tokens=False)
        )
        assert findings == []
        assert result.store.reports  # reports still served and stored


class TestScenarioFiles:
    def test_load_round_trip(self, t0, tmp_path):
        from offlinefind.analytics import write_trace_csv

        path_trace = scenarios.walking_path(t0, duration_s=300)
        write_trace_csv(path_trace, tmp_path / "walk.csv")
        flat, flon = scenarios.BASE_LAT, scenarios.BASE_LON
        doc = {
            "rng_seed": 99,
            "gps_noise_sigma_m": 12.5,
            "per_key_cap": 2,
            "devices": [{"name": "walker", "trace_csv": "walk.csv", "master_seed": 5}],
            "finders": [
                {"name": "static-1", "lat": flat, "lon": flon},
            ],
        }
        scenario_path = tmp_path / "scenario.json"
        scenario_path.write_text(json.dumps(doc))
        config = load_scenario(scenario_path)
        assert config.rng_seed == 99
        assert config.gps_noise_sigma_m == 12.5
        assert config.per_key_cap == 2
        assert len(config.devices[0].trace) == len(path_trace)
        assert config.devices[0].master is not None
        result = run_scenario(config)
        assert result.events_of(EVENT_ADVERT_EMITTED)

    def test_missing_devices_rejected(self, tmp_path):
        scenario_path = tmp_path / "empty.json"
        scenario_path.write_text(json.dumps({"finders": []}))
        with pytest.raises(ValueError):
            load_scenario(scenario_path)
