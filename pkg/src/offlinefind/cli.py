"""Command-line interface.

Key management, frame encoding, scenario simulation, report fetch/decrypt,
attack demos, and the analysis pipeline.  Analysis commands write delimited
output (CSV/GeoJSON) and render companion PNG figures.
"""

from __future__ import annotations

import base64
import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from . import advert, analytics, figures, keys, paperdata, reportcrypto, sim
from .service import ReportStore
from .timebase import REPORT_EPOCH_UNIX, from_unix, iso8601, parse_iso8601, to_unix, unix_millis


def _load_master(path) -> keys.MasterBeaconKey:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    d0 = int.from_bytes(base64.b64decode(doc["d0"]), "big")
    from . import curve

    return keys.MasterBeaconKey(
        d0=d0,
        p0=curve.public_point(d0),
        sk0=base64.b64decode(doc["sk0"]),
        creation_time=parse_iso8601(doc["creation_time"]),
    )


def _save_master(master: keys.MasterBeaconKey, path) -> None:
    from . import curve

    doc = {
        "d0": base64.b64encode(curve.scalar_to_bytes(master.d0)).decode(),
        "sk0": base64.b64encode(master.sk0).decode(),
        "creation_time": iso8601(master.creation_time),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


@click.group()
def main():
    """Offline-finding protocol toolkit: keys, frames, simulation, analytics."""


@main.command()
@click.option("--seed", type=int, default=None, help="Deterministic seed (omit for system entropy).")
@click.option("--created", default=None, help="Creation time (ISO-8601, default: now).")
@click.option("--count", type=int, default=672, show_default=True, help="Keys to derive into the cache.")
@click.option("--master-out", type=click.Path(dir_okay=False), default="master.json", show_default=True)
@click.option("--cache-out", type=click.Path(dir_okay=False), default="keycache.jsonl", show_default=True)
def keygen(seed, created, count, master_out, cache_out):
    """Generate a master beacon key and derive its advertisement key cache."""
    entropy = keys.SeededEntropy(seed) if seed is not None else keys.system_entropy
    creation = parse_iso8601(created) if created else datetime.now(tz=timezone.utc)
    master = keys.generate_master(entropy, creation_time=creation)
    _save_master(master, master_out)
    chain = keys.KeyChain(master)
    keys.export_cache((chain.key_at(i) for i in range(1, count + 1)), cache_out)
    click.echo(f"master written to {master_out} (created {iso8601(master.creation_time)})")
    click.echo(f"{count} advertisement keys cached in {cache_out}")


@main.command()
@click.option("--master", "master_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--index", type=int, default=None, help="Single key index (>= 1).")
@click.option("--from", "t_from", default=None, help="Window start (ISO-8601).")
@click.option("--to", "t_to", default=None, help="Window end (ISO-8601).")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Cache file (default: stdout).")
def derive(master_path, index, t_from, t_to, out):
    """Derive advertisement keys by index or by time window."""
    master = _load_master(master_path)
    if index is not None:
        derived = [keys.key_at(master, index)]
    elif t_from and t_to:
        derived = keys.keys_in_window(master, parse_iso8601(t_from), parse_iso8601(t_to))
    else:
        raise click.UsageError("pass --index or both --from and --to")
    if out:
        keys.export_cache(derived, out)
        click.echo(f"{len(derived)} keys written to {out}")
    else:
        keys.export_cache(derived, sys.stdout)


@main.command()
@click.option("--master", "master_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--key-index", type=int, required=True)
@click.option("--status", type=int, default=0, show_default=True)
@click.option("--hint", type=int, default=0, show_default=True)
def advertise(master_path, key_index, status, hint):
    """Print the 37-byte advertisement frame for a key index as hex."""
    master = _load_master(master_path)
    key = keys.key_at(master, key_index)
    frame = advert.encode_advert(advert.AdvertPayloadFields(key.x_bytes, status=status, hint=hint))
    click.echo(frame.hexdump())


def _write_events(events, path):
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            record = {
                "time": e.time,
                "seq": e.seq,
                "kind": e.kind,
                "device": e.device,
                "finder": e.finder,
                "key_index": e.key_index,
                "key_id": base64.b64encode(e.key_id).decode() if e.key_id else None,
                "count": e.count,
                "frame": e.frame.hex() if e.frame else None,
            }
            fh.write(json.dumps(record) + "\n")


def _summarize(result) -> None:
    for kind in (
        sim.EVENT_ADVERT_EMITTED,
        sim.EVENT_ADVERT_RELAYED,
        sim.EVENT_ADVERT_RECEIVED,
        sim.EVENT_REPORT_GENERATED,
        sim.EVENT_BATCH_UPLOADED,
    ):
        count = len(result.events_of(kind))
        if count:
            click.echo(f"  {kind:17s} {count}")
    click.echo(f"  reports stored    {len(result.store.reports)}")


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--events-out", type=click.Path(dir_okay=False), default=None)
@click.option("--snapshot-out", type=click.Path(dir_okay=False), default=None)
def simulate(scenario_path, events_out, snapshot_out):
    """Run a scenario file end to end and summarize the event log."""
    config = sim.load_scenario(scenario_path)
    result = sim.run_scenario(config)
    click.echo(f"scenario {scenario_path}: seed {config.rng_seed}")
    _summarize(result)
    if events_out:
        _write_events(result.events, events_out)
        click.echo(f"event log written to {events_out}")
    if snapshot_out:
        result.store.save_snapshot(snapshot_out)
        click.echo(f"store snapshot written to {snapshot_out}")


@main.command()
@click.option("--cache", "cache_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--from", "t_from", required=True, help="Earliest publication time (ISO-8601).")
@click.option("--to", "t_to", required=True, help="Latest publication time (ISO-8601).")
@click.option("--server", default=None, help="Report server base URL (http://host:port).")
@click.option("--snapshot", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Serve the fetch from a store snapshot instead of a live server.")
@click.option("--owner-token", default="cli-owner", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="fetched.jsonl", show_default=True)
def fetch(cache_path, t_from, t_to, server, snapshot, owner_token, out):
    """Fetch stored reports for every key id in a cache file."""
    cached = keys.import_cache(cache_path)
    start_ms = unix_millis(to_unix(parse_iso8601(t_from)))
    end_ms = unix_millis(to_unix(parse_iso8601(t_to)))
    request = {
        "search": [
            {
                "startDate": start_ms,
                "endDate": end_ms,
                "ids": [base64.b64encode(k.key_id).decode() for k in cached],
            }
        ]
    }
    if server:
        response = sim._http_fetch(server, request, owner_token)
    elif snapshot:
        store = ReportStore()
        store.load_snapshot(snapshot)
        response = store.fetch(request, owner_token=owner_token, now_ms=end_ms)
    else:
        raise click.UsageError("pass --server or --snapshot")
    with open(out, "w", encoding="utf-8") as fh:
        for entry in response["results"]:
            fh.write(json.dumps(entry) + "\n")
    click.echo(f"{len(response['results'])} reports written to {out}")


@main.command()
@click.option("--cache", "cache_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--reports", "reports_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default="decrypted.csv", show_default=True)
def decrypt(cache_path, reports_path, out):
    """Decrypt fetched reports with cached keys; write a trace CSV."""
    cached = {k.key_id: k for k in keys.import_cache(cache_path)}
    rows = []
    skipped = 0
    with open(reports_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            entry = json.loads(line)
            key = cached.get(base64.b64decode(entry["id"]))
            if key is None:
                skipped += 1
                continue
            try:
                report = reportcrypto.decode_report(base64.b64decode(entry["payload"]))
                msg = reportcrypto.decrypt_report(key.d, report)
            except Exception:
                skipped += 1
                continue
            when = from_unix(report.timestamp + REPORT_EPOCH_UNIX)
            rows.append((when, msg))
    rows.sort(key=lambda r: r[0])
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp_iso8601", "lat", "lon", "accuracy", "status"])
        for when, msg in rows:
            writer.writerow(
                [iso8601(when), f"{msg.latitude:.7f}", f"{msg.longitude:.7f}", msg.accuracy, msg.status]
            )
    click.echo(f"{len(rows)} locations written to {out}" + (f" ({skipped} skipped)" if skipped else ""))


@main.group()
def attack():
    """Demonstrations of the relay and correlation attacks."""


@attack.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--capture", required=True, help="Capture site as LAT,LON.")
@click.option("--replay", required=True, help="Replay site as LAT,LON.")
@click.option("--offset", type=float, default=5.0, show_default=True, help="Replay delay in seconds.")
@click.option("--events-out", type=click.Path(dir_okay=False), default=None)
def relay(scenario_path, capture, replay, offset, events_out):
    """Relay captured frames to another site and show the polluted view."""
    config = sim.load_scenario(scenario_path)
    capture_site = tuple(float(v) for v in capture.split(","))
    replay_site = tuple(float(v) for v in replay.split(","))
    result = sim.run_relay_attack(config, capture_site, replay_site, offset)
    click.echo(f"relay attack on {scenario_path}:")
    _summarize(result)
    device = config.devices[0]
    retrieved = sim.owner_retrieve(
        result.masters[device.name],
        device.trace.start,
        device.trace.end,
        result.store,
        now=result.end_time + 1.0,
        key_window_s=config.key_window_s,
    )
    click.echo(f"  owner retrieval   {len(retrieved)} locations (genuine + relayed mix)")
    if events_out:
        _write_events(result.events, events_out)


@attack.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--window", type=float, default=60.0, show_default=True, help="Co-location window (s).")
@click.option("--mitigate", is_flag=True, help="Drop owner tokens from the fetch log (download-side fix).")
def correlate(scenario_path, window, mitigate):
    """Run the metadata correlation analysis on a scenario."""
    config = sim.load_scenario(scenario_path)
    store = ReportStore(record_owner_tokens=not mitigate)
    findings, _result = sim.run_correlation_demo(config, window_s=window, store=store)
    if not findings:
        click.echo("no correlation findings")
    for f in findings:
        click.echo(
            f"finding: {f.owner_a} <-> {f.owner_b} via finder {f.finder_id}"
            f" (gap {f.time_gap:.0f} s)"
        )


@main.group()
def analyze():
    """Location analytics over trace CSVs (writes CSV/GeoJSON plus figures)."""


def _resolve_traces(reports_path, gps_path, paper_data, scenario_name, need_gps):
    if paper_data:
        if not scenario_name:
            raise click.UsageError("--paper-data requires --scenario-name")
        gps, reports = paperdata.load_scenario_pair(paper_data, scenario_name)
        return reports, gps
    if not reports_path:
        raise click.UsageError("pass --reports (or --paper-data with --scenario-name)")
    reports = analytics.read_trace_csv(reports_path)
    gps = analytics.read_trace_csv(gps_path) if gps_path else None
    if need_gps and gps is None:
        raise click.UsageError("this command needs --gps (or --paper-data)")
    return reports, gps


@analyze.command()
@click.option("--reports", "reports_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--gps", "gps_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--paper-data", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--scenario-name", default=None, help="Scenario inside the paper dataset.")
@click.option("--out-dir", type=click.Path(file_okay=False), default="analysis", show_default=True)
def error(reports_path, gps_path, paper_data, scenario_name, out_dir):
    """Per-report distance to the interpolated GPS ground truth."""
    reports, gps = _resolve_traces(reports_path, gps_path, paper_data, scenario_name, need_gps=True)
    pairs = analytics.per_report_errors(reports, gps)
    mean = sum(e for _, e in pairs) / len(pairs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "errors.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp_iso8601", "lat", "lon", "error_m"])
        for point, err in pairs:
            writer.writerow(
                [iso8601(point.timestamp), f"{point.latitude:.7f}", f"{point.longitude:.7f}", f"{err:.3f}"]
            )
    figures.save_error_figure([e for _, e in pairs], out / "errors.png")
    figures.save_trace_figure({"gps": gps, "reports": reports}, out / "traces.png")
    click.echo(f"reports compared: {len(pairs)}")
    click.echo(f"mean error: {mean:.1f} m")
    click.echo(f"wrote {out / 'errors.csv'}, {out / 'errors.png'}, {out / 'traces.png'}")


@analyze.command()
@click.option("--reports", "reports_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--gps", "gps_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--paper-data", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--scenario-name", default=None)
@click.option("--window", type=int, default=30, show_default=True, help="Regression window (reports).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="path.geojson", show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default="analysis", show_default=True)
def path(reports_path, gps_path, paper_data, scenario_name, window, out_path, out_dir):
    """Estimate a smooth path from noisy reports (LOWESS)."""
    reports, gps = _resolve_traces(reports_path, gps_path, paper_data, scenario_name, need_gps=False)
    params = analytics.AnalyticsParams(lowess_window=window)
    estimated = analytics.lowess_estimate(reports, params)
    traces = {"reports": reports, "estimated": estimated}
    if gps is not None:
        traces["gps"] = gps
        raw_err = analytics.mean_error(reports, gps)
        est_err = analytics.mean_error(estimated, gps)
        click.echo(f"raw mean error: {raw_err:.1f} m")
        click.echo(f"estimated-path mean error: {est_err:.1f} m")
        if est_err > 0:
            click.echo(f"improvement: {raw_err / est_err:.1f}x")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    analytics.export_geojson(traces, [], out_path)
    analytics.write_trace_csv(estimated, out / "estimated.csv")
    figures.save_trace_figure(traces, out / "path.png")
    click.echo(f"wrote {out_path}, {out / 'estimated.csv'}, {out / 'path.png'}")


@analyze.command()
@click.option("--reports", "reports_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--resample", "resample_min", type=float, default=20.0, show_default=True)
@click.option("--radius", type=float, default=50.0, show_default=True)
@click.option("--min-neighbors", type=int, default=6, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="top.geojson", show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default="analysis", show_default=True)
def top(reports_path, resample_min, radius, min_neighbors, out_path, out_dir):
    """Rank the most-visited locations by estimated dwell time."""
    reports = analytics.read_trace_csv(reports_path)
    params = analytics.AnalyticsParams(
        resample_interval_min=resample_min,
        dbscan_radius_m=radius,
        dbscan_min_neighbors=min_neighbors,
    )
    clusters = analytics.rank_top_locations(reports, params)
    resampled = analytics.resample(reports, resample_min)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "top.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "lat", "lon", "resampled_reports", "days", "dwell_time_min"])
        for c in clusters:
            writer.writerow(
                [c.rank, f"{c.center.latitude:.7f}", f"{c.center.longitude:.7f}",
                 c.resampled_count, c.days_visited, f"{c.dwell_time:.0f}"]
            )
    analytics.export_geojson({}, clusters, out_path)
    figures.save_cluster_figure(resampled, clusters, out / "top.png")
    for c in clusters:
        hours = int(c.dwell_time // 60)
        minutes = int(c.dwell_time % 60)
        click.echo(
            f"rank {c.rank}: ({c.center.latitude:.5f}, {c.center.longitude:.5f}) "
            f"{c.resampled_count} resampled reports, {c.days_visited} days, "
            f"dwell {hours}:{minutes:02d}"
        )
    click.echo(f"wrote {out_path}, {out / 'top.csv'}, {out / 'top.png'}")


@analyze.command()
@click.option("--reports", "reports_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--cluster-rank", type=int, default=1, show_default=True)
@click.option("--resample", "resample_min", type=float, default=20.0, show_default=True)
@click.option("--radius", type=float, default=50.0, show_default=True)
@click.option("--min-neighbors", type=int, default=6, show_default=True)
@click.option("--utc-offset", type=int, default=0, show_default=True, help="Local-time shift in hours.")
@click.option("--out-dir", type=click.Path(file_okay=False), default="analysis", show_default=True)
def histogram(reports_path, cluster_rank, resample_min, radius, min_neighbors, utc_offset, out_dir):
    """Hour-of-day visiting histogram for one ranked location."""
    reports = analytics.read_trace_csv(reports_path)
    params = analytics.AnalyticsParams(
        resample_interval_min=resample_min,
        dbscan_radius_m=radius,
        dbscan_min_neighbors=min_neighbors,
    )
    clusters = analytics.rank_top_locations(reports, params)
    match = [c for c in clusters if c.rank == cluster_rank]
    if not match:
        raise click.ClickException(f"no cluster with rank {cluster_rank} (found {len(clusters)})")
    counts = analytics.visiting_histogram(match[0], utc_offset_hours=utc_offset)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "histogram.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hour", "reports"])
        for hour, count in enumerate(counts):
            writer.writerow([hour, count])
    figures.save_histogram_figure(counts, out / "histogram.png",
                                  title=f"rank {cluster_rank} visiting hours")
    click.echo(" ".join(str(c) for c in counts))
    click.echo(f"wrote {out / 'histogram.csv'}, {out / 'histogram.png'}")


@main.command()
@click.option("--port", type=int, default=8700, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--snapshot", type=click.Path(dir_okay=False), default=None,
              help="Load this store snapshot at startup and save it on shutdown.")
@click.option("--no-owner-log", is_flag=True, help="Do not record owner tokens on fetch.")
def serve(port, host, snapshot, no_owner_log):
    """Run the report server over HTTP."""
    from .httpd import make_server

    store = ReportStore(record_owner_tokens=not no_owner_log)
    if snapshot and Path(snapshot).exists():
        count = store.load_snapshot(snapshot)
        click.echo(f"loaded {count} reports from {snapshot}")
    server = make_server(store, host=host, port=port)
    click.echo(f"report service on http://{host}:{server.server_address[1]} (Ctrl-C to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        if snapshot:
            store.save_snapshot(snapshot)
            click.echo(f"snapshot saved to {snapshot}")


if __name__ == "__main__":
    main()
