"""condmon command line: broker, record/play, simulators, sync, reports.

Exit codes: 0 success, 1 domain error (bad data, missing baseline, ...),
2 usage error (argparse) or broker bind failure.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import time

from condmon.model import CondmonError, StampedMessage, Timestamp, parse_timestamp
from condmon.bus.broker import Broker, DEFAULT_PORT
from condmon.bus.client import BusClient, resolve_address
from condmon.bag.reader import BagReader, bag_info
from condmon.bag.writer import BagWriter, Recorder
from condmon.bag.player import PlaybackHandle
from condmon import features as feat
from condmon import plotting
from condmon import syncfilter
from condmon.sim import config as simconfig
from condmon.sim import fleet as simfleet
from condmon.sim import physio as simphysio


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 0
    except KeyboardInterrupt:
        return 0
    except (CondmonError, OSError, ValueError) as exc:
        print(f"condmon: error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condmon",
        description="Condition monitoring for human-multi-robot teams: "
                    "bus, recording, simulators, sync, features.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("broker", help="run the message broker")
    p.add_argument("--listen", default=f"127.0.0.1:{DEFAULT_PORT}",
                   metavar="HOST:PORT")
    p.set_defaults(func=cmd_broker)

    p = sub.add_parser("record", help="record bus topics into a bag")
    p.add_argument("--topics", required=True, metavar="GLOB",
                   help="subscription pattern, e.g. '**' or '*/battery'")
    p.add_argument("-o", "--output", required=True, metavar="BAG")
    p.add_argument("--broker", default=None, metavar="HOST:PORT")
    p.add_argument("--duration", type=float, default=None, metavar="S",
                   help="stop after S wall seconds")
    p.add_argument("--count", type=int, default=None, metavar="N",
                   help="stop after N messages")
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("play", help="replay a bag onto the bus")
    p.add_argument("bag")
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--broker", default=None, metavar="HOST:PORT")
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("info", help="summarize a bag")
    p.add_argument("bag")
    p.add_argument("--json", action="store_true", dest="as_json")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("sim-fleet", help="run the five-robot fleet scenario")
    _sim_common(p)
    p.set_defaults(func=cmd_sim_fleet)

    p = sub.add_parser("sim-physio",
                       help="run the synthetic physiological scenario")
    _sim_common(p)
    p.set_defaults(func=cmd_sim_physio)

    p = sub.add_parser("sync", help="synchronize streams into tuples")
    p.add_argument("--topics", required=True, metavar="A,B[,C...]",
                   help="comma-separated stream ids (at least two)")
    p.add_argument("--bag", default=None, help="read from a bag "
                   "(default: live subscription)")
    p.add_argument("--broker", default=None, metavar="HOST:PORT")
    p.add_argument("--duration", type=float, default=5.0, metavar="S",
                   help="live mode: collect for S seconds")
    p.add_argument("--slop-ms", type=float, default=None,
                   help="ApproximateTime slop (default: half the slowest "
                        "stream's period)")
    p.add_argument("--exact", action="store_true",
                   help="use ExactTime instead of ApproximateTime")
    p.add_argument("--republish", default=None, metavar="NAME",
                   help="live mode: republish tuples on synced/NAME")
    p.add_argument("-o", "--output", default=None, metavar="CSV",
                   help="write tuples as CSV (default: stdout)")
    p.set_defaults(func=cmd_sync)

    p = sub.add_parser("features",
                       help="robot condition features from a bag")
    p.add_argument("bag")
    p.add_argument("--window", type=float, default=30.0, metavar="S",
                   help="battery utilization window (trailing seconds)")
    p.add_argument("-o", "--output", default=None, metavar="CSV")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("report",
                       help="baseline-delta statistics table from a bag")
    p.add_argument("bag")
    p.add_argument("-o", "--output", default=None, metavar="CSV")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("plot", help="emit CSV/SVG charts from a bag")
    p.add_argument("bag")
    p.add_argument("--streams", required=True, metavar="GLOB[,GLOB...]")
    p.add_argument("-o", "--output", required=True,
                   help="output path; .csv or .svg picks the format")
    p.add_argument("--format", choices=("csv", "svg"), default=None)
    p.add_argument("--from", dest="t_from", default=None, metavar="T",
                   help="range start (seconds or canonical timestamp)")
    p.add_argument("--to", dest="t_to", default=None, metavar="T")
    p.add_argument("--period-ms", type=float, default=None,
                   help="CSV grid period (default: densest stream's rate)")
    p.add_argument("--no-markers", action="store_true",
                   help="SVG: skip marker overlays")
    p.add_argument("--title", default=None)
    p.set_defaults(func=cmd_plot)

    return parser


def _sim_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, metavar="JSON",
                   help="scenario config file (see --print-config)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--duration", type=float, default=None, metavar="S",
                   help="override the config duration")
    p.add_argument("--broker", default=None, metavar="HOST:PORT",
                   help="publish to this broker")
    p.add_argument("--bag", default=None, metavar="BAG",
                   help="write directly to a bag instead of the bus")
    p.add_argument("--print-config", action="store_true",
                   help="print the default config JSON and exit")


# --- commands ---------------------------------------------------------------


def cmd_broker(args) -> int:
    host, _, port = args.listen.rpartition(":")
    if not host or not port.isdigit():
        print(f"condmon: error: --listen must be HOST:PORT, "
              f"got {args.listen!r}", file=sys.stderr)
        return 2
    try:
        broker = Broker(host=host, port=int(port))
    except OSError as exc:
        print(f"condmon: error: cannot bind {args.listen}: {exc}",
              file=sys.stderr)
        return 2
    print(f"listening on {broker.address[0]}:{broker.address[1]}", flush=True)
    signal.signal(signal.SIGTERM, lambda *_: broker.stop())
    broker.serve_forever()
    return 0


def cmd_record(args) -> int:
    with BusClient(args.broker) as client:
        recorder = Recorder(client, args.topics, args.output)
        signal.signal(signal.SIGTERM, lambda *_: recorder.stop())
        print(f"recording {args.topics!r} -> {args.output}", flush=True)
        try:
            recorder.run(max_messages=args.count, duration_s=args.duration)
        except KeyboardInterrupt:
            pass  # run() closed the bag on its way out
        print(f"wrote {recorder.message_count} messages to {args.output}")
        return 0


def cmd_play(args) -> int:
    handle = PlaybackHandle(args.bag, rate=args.rate)
    with BusClient(args.broker) as client:
        count = handle.play(client)
    print(f"replayed {count} messages from {args.bag}")
    return 0


def cmd_info(args) -> int:
    info = bag_info(args.bag)
    if args.as_json:
        print(json.dumps({
            "path": info.path,
            "size_bytes": info.size_bytes,
            "message_count": info.message_count,
            "duration_s": info.duration_s,
            "first": info.first.canonical() if info.first else None,
            "last": info.last.canonical() if info.last else None,
            "recovered": info.recovered,
            "streams": [{
                "stream": s.stream, "count": s.count,
                "rate_hz": round(s.rate_hz, 4),
                "first": s.first.canonical() if s.first else None,
                "last": s.last.canonical() if s.last else None,
            } for s in info.streams],
        }, indent=2))
        return 0
    print(f"path:     {info.path}")
    print(f"size:     {info.size_bytes} bytes")
    print(f"messages: {info.message_count}")
    print(f"duration: {info.duration_s:.3f} s")
    if info.recovered:
        print("note:     index rebuilt by recovery scan")
    if info.streams:
        width = max(len(s.stream) for s in info.streams)
        print("streams:")
        for s in info.streams:
            print(f"  {s.stream.ljust(width)}  {s.count:>8} msgs  "
                  f"{s.rate_hz:>10.3f} Hz")
    return 0


def _load_scenario(args) -> simconfig.ScenarioConfig:
    cfg = (simconfig.load_config(args.config) if args.config
           else simconfig.default_config())
    if args.seed is not None:
        cfg.seed = args.seed
    if args.duration is not None:
        cfg.duration_s = args.duration
    return cfg


def _emit_sim(args, messages: list[StampedMessage], what: str) -> int:
    if args.bag:
        # Pure-simulation output: pin the header's creation stamp so the
        # whole file is a function of (config, seed).
        creation = messages[0].stamp if messages else simfleet.SIM_EPOCH
        with BagWriter(args.bag, creation=creation) as writer:
            for m in messages:
                writer.append(m)
        print(f"{what}: wrote {len(messages)} messages to {args.bag}")
        return 0
    with BusClient(args.broker) as client:
        for topic in sorted({m.stream for m in messages}):
            client.advertise_topic(topic)
        for m in messages:
            client.publish_raw(m.stream, m.stamp, m.seq, bytes(m.payload))
    print(f"{what}: published {len(messages)} messages")
    return 0


def cmd_sim_fleet(args) -> int:
    if args.print_config:
        sys.stdout.write(simconfig.dump_default_config())
        return 0
    cfg = _load_scenario(args)
    run = simfleet.simulate_fleet(cfg)
    return _emit_sim(args, run.messages(), "sim-fleet")


def cmd_sim_physio(args) -> int:
    if args.print_config:
        sys.stdout.write(simconfig.dump_default_config())
        return 0
    cfg = _load_scenario(args)
    run = simphysio.generate_physio(cfg.physio, cfg.schedule,
                                    cfg.duration_s, cfg.seed)
    return _emit_sim(args, run.messages(), "sim-physio")


def cmd_sync(args) -> int:
    topics = [t.strip() for t in args.topics.split(",") if t.strip()]
    if len(topics) < 2:
        print("condmon sync: error: --topics needs at least two "
              "comma-separated stream ids", file=sys.stderr)
        return 2
    if args.bag:
        messages = [m for m in BagReader(args.bag)
                    if m.stream in set(topics)]
        tuples, filt = _sync_messages(topics, messages, args)
    else:
        tuples, filt = _sync_live(topics, args)
    out = _synced_csv(topics, tuples)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(out)
        print(f"wrote {len(tuples)} tuples to {args.output}")
    else:
        sys.stdout.write(out)
    dropped = sum(filt.out_of_order.values())
    if dropped:
        print(f"note: {dropped} out-of-order messages rejected",
              file=sys.stderr)
    return 0


def _make_filter(topics: list[str], messages: list[StampedMessage],
                 args) -> syncfilter.SyncFilter:
    if args.exact:
        policy = syncfilter.ExactTime()
    else:
        slop_ns = (int(args.slop_ms * 1e6) if args.slop_ms is not None
                   else _derived_slop(topics, messages))
        policy = syncfilter.ApproximateTime(slop_ns)
    return syncfilter.SyncFilter(topics, policy)


def _derived_slop(topics: list[str], messages: list[StampedMessage]) -> int:
    rates = []
    for t in topics:
        stamps = sorted(m.stamp.to_nanos() for m in messages
                        if m.stream == t)
        if len(stamps) >= 2 and stamps[-1] > stamps[0]:
            rates.append((len(stamps) - 1) * 1e9 / (stamps[-1] - stamps[0]))
    if not rates:
        raise CondmonError(
            "cannot derive a slop (too little data); pass --slop-ms")
    return syncfilter.default_slop_ns(rates)


def _sync_messages(topics, messages, args):
    filt = _make_filter(topics, messages, args)
    tuples = []
    for m in messages:
        tuples.extend(filt.offer(m))
    return tuples, filt


def _sync_live(topics, args):
    with BusClient(args.broker) as client:
        subs = [client.subscribe(t) for t in topics]
        if args.republish:
            client.advertise_topic(syncfilter.synced_topic(args.republish))
        # Collect first, then filter: live slop derivation needs rates.
        deadline = time.monotonic() + args.duration
        messages = []
        while time.monotonic() < deadline:
            got = False
            for sub in subs:
                m = sub.get(timeout=0.05)
                if m is not None:
                    messages.append(m)
                    got = True
            if not got and not client.connected:
                break
        messages.sort(key=lambda m: (m.stamp.to_nanos(), m.stream, m.seq))
        tuples, filt = _sync_messages(topics, messages, args)
        if args.republish:
            topic = syncfilter.synced_topic(args.republish)
            for i, t in enumerate(tuples):
                client.publish_raw(topic, t.pivot_stamp, i + 1,
                                   syncfilter.encode_synced_payload(t))
    return tuples, filt


def _synced_csv(topics: list[str], tuples) -> str:
    import csv as _csv
    import io as _io
    buf = _io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(["pivot", *topics, "spread_ns"])
    for t in tuples:
        by_stream = t.by_stream()
        row = [t.pivot_stamp.canonical()]
        for topic in topics:
            m = by_stream[topic]
            try:
                row.append(f"{m.scalar():.6f}")
            except CondmonError:
                row.append(m.stamp.canonical())
        row.append(str(t.spread_ns))
        writer.writerow(row)
    return buf.getvalue()


def cmd_features(args) -> int:
    reader = BagReader(args.bag)
    messages = reader.messages()
    if not messages:
        print(f"{args.bag}: empty bag, no features")
        return 0
    end = messages[-1].stamp
    window_ns = int(args.window * 1e9)
    rows = []
    rates = {e.stream: ((e.count - 1) * 1e9
                        / max(1, e.last.to_nanos() - e.first.to_nanos()))
             for e in reader.index if e.count >= 2}
    for entry in reader.index:
        stream = entry.stream
        deploy = feat.deployment_time(entry.first, end)
        rate = rates.get(stream)
        status = (feat.classify_health(end, entry.last, rate).value
                  if rate else "n/a")
        util = ""
        if stream.endswith("/battery"):
            series = feat.Series.from_messages(stream, messages)
            lo = Timestamp.from_nanos(
                max(0, entry.last.to_nanos() - window_ns))
            try:
                util = f"{feat.battery_utilization(series, lo, end.add_nanos(1)):.4f}"
            except feat.InsufficientSamples:
                util = ""
        rows.append((stream, util, f"{deploy:.3f}", status))
    header = ("stream", "battery_util_pct_per_min", "deployment_s", "status")
    if args.output:
        import csv as _csv
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            w = _csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        print(f"wrote {len(rows)} rows to {args.output}")
        return 0
    widths = [max(len(str(r[c])) for r in [header, *rows])
              for c in range(len(header))]
    for r in [header, *rows]:
        print("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip())
    return 0


def cmd_report(args) -> int:
    messages = BagReader(args.bag).messages()
    report = feat.stats_report(messages)
    sys.stdout.write(report.to_text())
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        print(f"wrote {args.output}")
    return 0


def _parse_instant(text: str) -> Timestamp:
    try:
        return parse_timestamp(text)
    except ValueError:
        return Timestamp.from_nanos(round(float(text) * 1e9))


def cmd_plot(args) -> int:
    fmt = args.format
    if fmt is None:
        if args.output.endswith(".csv"):
            fmt = "csv"
        elif args.output.endswith(".svg"):
            fmt = "svg"
        else:
            print("condmon plot: error: cannot infer format from "
                  f"{args.output!r}; pass --format", file=sys.stderr)
            return 2
    patterns = [p.strip() for p in args.streams.split(",") if p.strip()]
    if not patterns:
        print("condmon plot: error: --streams is empty", file=sys.stderr)
        return 2
    messages = BagReader(args.bag).messages()
    start = _parse_instant(args.t_from) if args.t_from else None
    end = _parse_instant(args.t_to) if args.t_to else None
    data = plotting.select_plot_data(messages, patterns, start, end)
    if fmt == "csv":
        period_ns = (int(args.period_ms * 1e6) if args.period_ms
                     else plotting.default_period_ns(data))
        out = plotting.render_csv(data, period_ns)
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(out)
    else:
        plotting.render_svg(data, args.output,
                            overlay_markers=not args.no_markers,
                            title=args.title)
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
