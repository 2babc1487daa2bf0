"""File-emitting plots: resampled CSV grids and stacked SVG charts.

matplotlib imports lazily so CSV-only paths stay dependency-light, and
the SVG backend is pinned for byte-stable output across runs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from condmon.model import CondmonError, StampedMessage, Timestamp
from condmon.bus import protocol
from condmon.features import Series, resample_nearest_masked

MARKER_NAMESPACE = "markers"


class NoData(CondmonError):
    pass


class BadRange(CondmonError):
    pass


@dataclass
class PlotData:
    streams: list[str]  # data streams, sorted
    series: dict[str, Series]
    markers: list[tuple[Timestamp, str, str]]  # (stamp, topic, label)
    start: Timestamp
    end: Timestamp


def _is_marker(stream: str) -> bool:
    return stream.split("/", 1)[0] == MARKER_NAMESPACE


def select_plot_data(messages: list[StampedMessage], patterns: list[str],
                     start: Timestamp | None = None,
                     end: Timestamp | None = None) -> PlotData:
    """Filter bag/live messages down to the requested streams and range.

    Marker topics never become data columns; they ride along as overlay
    annotations. Raises BadRange on an empty range and NoData when no
    selected stream has samples inside it.
    """
    for p in patterns:
        protocol.validate_pattern(p)
    streams = sorted({m.stream for m in messages})
    selected = [s for s in streams
                if any(protocol.match_topic(p, s) for p in patterns)
                and not _is_marker(s)]
    if start is None or end is None:
        stamps = [m.stamp for m in messages if m.stream in selected]
        if not stamps:
            raise NoData("no samples on "
                         + ", ".join(patterns))
        start = start if start is not None else min(stamps)
        # end is exclusive; one ns past the last stamp keeps it included.
        end = end if end is not None else max(stamps).add_nanos(1)
    if not start < end:
        raise BadRange(f"start {start.canonical()} is not before "
                       f"end {end.canonical()}")
    lo, hi = start.to_nanos(), end.to_nanos()
    series = {}
    for s in selected:
        data = [(m.stamp.to_nanos(), m.scalar()) for m in messages
                if m.stream == s and lo <= m.stamp.to_nanos() < hi]
        if data:
            series[s] = Series(s, [d[0] for d in data], [d[1] for d in data])
    if not series:
        raise NoData("no samples in range on " + ", ".join(patterns))
    markers = []
    for m in messages:
        if _is_marker(m.stream) and lo <= m.stamp.to_nanos() < hi:
            label = bytes(m.payload).decode("utf-8", "replace")
            markers.append((m.stamp, m.stream, label))
    markers.sort(key=lambda t: t[0].to_nanos())
    return PlotData(streams=sorted(series), series=series, markers=markers,
                    start=start, end=end)


def default_period_ns(data: PlotData) -> int:
    """Mean sample period of the densest selected stream."""
    best = None
    for s in data.streams:
        ser = data.series[s]
        if len(ser) >= 2:
            span = int(ser.stamps_ns[-1] - ser.stamps_ns[0])
            period = span // (len(ser) - 1)
            if period > 0 and (best is None or period < best):
                best = period
    if best is None:
        raise NoData("need a stream with >= 2 samples to infer a period")
    return best


def render_csv(data: PlotData, period_ns: int) -> str:
    """One row per grid point: canonical timestamp, then one column per
    stream (blank where the stream has no sample within one period).
    """
    if period_ns <= 0:
        raise BadRange("period must be positive")
    span = data.end.to_nanos() - data.start.to_nanos()
    count = span // period_ns + 1
    columns = {}
    for s in data.streams:
        _, values, kept = resample_nearest_masked(
            data.series[s], data.start, period_ns, count)
        cells = [""] * count
        for v, k in zip(values, kept):
            cells[k] = f"{v:.6f}"
        columns[s] = cells
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["timestamp", *data.streams])
    for i in range(count):
        stamp = data.start.add_nanos(i * period_ns)
        writer.writerow([stamp.canonical(),
                         *(columns[s][i] for s in data.streams)])
    return buf.getvalue()


def render_svg(data: PlotData, path: str, overlay_markers: bool = True,
               title: str | None = None) -> None:
    """Stacked per-stream line charts sharing the time axis.

    Every data line carries gid "stream:<topic>" and every marker line
    gid "marker:<label>", so tests and downstream tooling can find them
    in the SVG structurally.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "condmon", "svg.fonttype": "path"}):
        n = len(data.streams)
        fig, axes = plt.subplots(n, 1, sharex=True,
                                 figsize=(10, max(2.2, 1.6 * n)),
                                 squeeze=False)
        t0 = data.start.to_nanos()
        for ax, stream in zip(axes[:, 0], data.streams):
            ser = data.series[stream]
            t = (ser.stamps_ns - t0) / 1e9
            ax.plot(t, ser.values, gid=f"stream:{stream}", linewidth=0.9)
            ax.set_ylabel(stream, fontsize=8)
            if overlay_markers:
                for stamp, _, label in data.markers:
                    x = (stamp.to_nanos() - t0) / 1e9
                    ax.axvline(x, gid=f"marker:{label}", color="tab:red",
                               alpha=0.4, linestyle="--", linewidth=0.8)
        axes[-1, 0].set_xlabel("time [s]")
        if title:
            axes[0, 0].set_title(title, fontsize=10)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
