"""Feature extraction: windowed stats, baseline deltas, robot condition.

The baseline-delta semantics are stat(task) − stat(baseline) per
statistic, which is why a delta "S.D." can legitimately be negative (a
task segment may vary less than the baseline). All statistics use the
sample (n−1) standard deviation and the average-of-middles median.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from condmon.model import (
    CondmonError,
    StampedMessage,
    Timestamp,
    timestamp_diff,
)

log = logging.getLogger(__name__)


class EmptyWindow(CondmonError):
    pass


class SingleSample(CondmonError):
    pass


class EmptySeries(CondmonError):
    pass


class InsufficientSamples(CondmonError):
    pass


class ClockSkew(CondmonError):
    pass


class MissingBaseline(CondmonError):
    pass


class MissingStream(CondmonError):
    pass


# --- series -----------------------------------------------------------------


class Series:
    """One stream's samples: strictly increasing stamps, finite values."""

    def __init__(self, stream: str, stamps_ns: Sequence[int],
                 values: Sequence[float]):
        self.stream = stream
        self.stamps_ns = np.asarray(stamps_ns, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.stamps_ns.shape != self.values.shape or self.stamps_ns.ndim != 1:
            raise ValueError("stamps and values must be 1-d and equal length")
        if len(self.stamps_ns) > 1 and not np.all(np.diff(self.stamps_ns) > 0):
            raise ValueError(f"stamps not strictly increasing on {stream!r}")
        if len(self.values) and not np.all(np.isfinite(self.values)):
            raise ValueError(f"non-finite values on {stream!r}")

    def __len__(self) -> int:
        return len(self.values)

    def slice(self, start: Timestamp | None, end: Timestamp | None) -> "Series":
        """Samples with start ≤ stamp < end (half-open window)."""
        lo = start.to_nanos() if start is not None else None
        hi = end.to_nanos() if end is not None else None
        mask = np.ones(len(self), dtype=bool)
        if lo is not None:
            mask &= self.stamps_ns >= lo
        if hi is not None:
            mask &= self.stamps_ns < hi
        return Series(self.stream, self.stamps_ns[mask], self.values[mask])

    @classmethod
    def from_messages(cls, stream: str,
                      messages: Iterable[StampedMessage]) -> "Series":
        stamps, values = [], []
        for m in messages:
            if m.stream != stream:
                continue
            stamps.append(m.stamp.to_nanos())
            values.append(m.scalar())
        return cls(stream, stamps, values)


# --- statistics ---------------------------------------------------------------


@dataclass(frozen=True)
class StatTriple:
    mean: float
    sd: float
    median: float


@dataclass(frozen=True)
class BaselineDelta:
    d_mean: float
    d_sd: float
    d_median: float


@dataclass(frozen=True)
class FeatureRecord:
    stream: str
    window: tuple[Timestamp, Timestamp]
    name: str
    value: float | StatTriple | BaselineDelta

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise ValueError("window start must precede end")


def _window_values(series: Series, start: Timestamp | None,
                   end: Timestamp | None) -> np.ndarray:
    return series.slice(start, end).values


def window_stats(series: Series, start: Timestamp | None = None,
                 end: Timestamp | None = None) -> StatTriple:
    """Mean / sample sd / median over the half-open window [start, end)."""
    v = _window_values(series, start, end)
    if len(v) == 0:
        raise EmptyWindow(series.stream)
    if len(v) == 1:
        raise SingleSample(f"{series.stream}: sd needs >= 2 samples")
    return StatTriple(float(np.mean(v)), float(np.std(v, ddof=1)),
                      float(np.median(v)))


def window_stats_partial(series: Series, start: Timestamp | None = None,
                         end: Timestamp | None = None) -> StatTriple:
    """Like window_stats, but a single sample yields sd = NaN."""
    v = _window_values(series, start, end)
    if len(v) == 0:
        raise EmptyWindow(series.stream)
    sd = float(np.std(v, ddof=1)) if len(v) > 1 else math.nan
    return StatTriple(float(np.mean(v)), sd, float(np.median(v)))


def baseline_delta(baseline: StatTriple, task: StatTriple) -> BaselineDelta:
    return BaselineDelta(task.mean - baseline.mean,
                         task.sd - baseline.sd,
                         task.median - baseline.median)


def segment_delta(series: Series, baseline_window: tuple[Timestamp, Timestamp],
                  task_window: tuple[Timestamp, Timestamp]) -> BaselineDelta:
    return baseline_delta(window_stats(series, *baseline_window),
                          window_stats(series, *task_window))


# --- resampling ----------------------------------------------------------------


def resample_nearest(series: Series, grid_start: Timestamp, period_ns: int,
                     count: int) -> Series:
    """Nearest-sample pick on a uniform grid; see resample_nearest_masked."""
    stamps, values, _ = resample_nearest_masked(series, grid_start,
                                                period_ns, count)
    return Series(series.stream, stamps, values)


def resample_nearest_masked(series: Series, grid_start: Timestamp,
                            period_ns: int, count: int):
    """Per grid point, the sample with the nearest stamp (ties to the
    earlier sample); points farther than one period from every sample
    are missing. Returns (kept stamps ns, kept values, kept grid indices).
    """
    if len(series) == 0:
        raise EmptySeries(series.stream)
    if period_ns <= 0:
        raise ValueError("period must be positive")
    start_ns = grid_start.to_nanos()
    grid = start_ns + period_ns * np.arange(count, dtype=np.int64)
    s = series.stamps_ns
    # For each grid point, its insertion position splits earlier/later
    # candidates; compare distances with the tie going to the earlier.
    pos = np.searchsorted(s, grid)
    left = np.clip(pos - 1, 0, len(s) - 1)
    right = np.clip(pos, 0, len(s) - 1)
    d_left = np.abs(grid - s[left])
    d_right = np.abs(s[right] - grid)
    pick = np.where(d_left <= d_right, left, right)
    dist = np.minimum(d_left, d_right)
    keep = dist <= period_ns
    return grid[keep], series.values[pick[keep]], np.nonzero(keep)[0]


# --- robot condition features ----------------------------------------------------


def battery_utilization(series: Series, start: Timestamp | None = None,
                        end: Timestamp | None = None) -> float:
    """Discharge rate in %/minute: −OLS slope of battery% over time."""
    window = series.slice(start, end)
    if len(window) < 2:
        raise InsufficientSamples(
            f"{series.stream}: OLS fit needs >= 2 samples")
    t = (window.stamps_ns - window.stamps_ns[0]) / 1e9
    t = t - t.mean()
    v = window.values - window.values.mean()
    denom = float(np.dot(t, t))
    if denom == 0.0:
        raise InsufficientSamples(f"{series.stream}: zero time spread")
    slope_per_s = float(np.dot(t, v)) / denom
    return -slope_per_s * 60.0


DEFAULT_UTILIZATION_WINDOW_S = 30.0


def deployment_time(first_seen: Timestamp, now: Timestamp) -> float:
    """Seconds since the stream was first seen."""
    ns = timestamp_diff(now, first_seen)
    if ns < 0:
        raise ClockSkew(f"now {now.canonical()} < first seen "
                        f"{first_seen.canonical()}")
    return ns / 1e9


class HealthState(Enum):
    ALIVE = "Alive"
    STALE = "Stale"
    DEAD = "Dead"


@dataclass(frozen=True)
class SensorHealth:
    stream: str
    state: HealthState
    last_seen: Timestamp


ALIVE_PERIODS = 3.0
STALE_PERIODS = 10.0


def classify_health(now: Timestamp, last_seen: Timestamp,
                    nominal_rate_hz: float) -> HealthState:
    if nominal_rate_hz <= 0:
        raise ValueError("nominal rate must be positive")
    silence_s = timestamp_diff(now, last_seen) / 1e9
    period = 1.0 / nominal_rate_hz
    if silence_s <= ALIVE_PERIODS * period:
        return HealthState.ALIVE
    if silence_s <= STALE_PERIODS * period:
        return HealthState.STALE
    return HealthState.DEAD


class HealthTracker:
    """Live sensor health table; updates are serialized per tracker."""

    def __init__(self):
        self._last_seen: dict[str, Timestamp] = {}
        self._first_seen: dict[str, Timestamp] = {}
        self._lock = threading.Lock()

    def observe(self, stream: str, stamp: Timestamp) -> None:
        with self._lock:
            self._first_seen.setdefault(stream, stamp)
            self._last_seen[stream] = stamp

    def first_seen(self, stream: str) -> Timestamp | None:
        with self._lock:
            return self._first_seen.get(stream)

    def sensor_status(self, now: Timestamp,
                      rates_hz: dict[str, float]) -> list[SensorHealth]:
        with self._lock:
            seen = dict(self._last_seen)
        out = []
        for stream in sorted(seen):
            rate = rates_hz.get(stream)
            if rate is None:
                continue
            out.append(SensorHealth(stream,
                                    classify_health(now, seen[stream], rate),
                                    seen[stream]))
        return out


def sensor_status(last_seen: dict[str, Timestamp], now: Timestamp,
                  rates_hz: dict[str, float]) -> list[SensorHealth]:
    """Stateless form: classify every stream in `last_seen`."""
    return [SensorHealth(s, classify_health(now, t, rates_hz[s]), t)
            for s, t in sorted(last_seen.items())]


# --- segment report (baseline-delta semantics) ---------------------------------------


SEGMENT_TOPIC = "markers/segment"
BASELINE_SEGMENT = "baseline"
REPORT_FEATURES = ("IBI", "PPG", "GSR", "ECG")
DEFAULT_FEATURE_STREAMS = {
    "IBI": "human/ibi",
    "PPG": "human/ppg",
    "GSR": "human/gsr",
    "ECG": "human/ecg",
}
REPORT_STATISTICS = ("Average", "S.D.", "Median")


@dataclass(frozen=True)
class Segment:
    name: str
    start: Timestamp
    end: Timestamp | None  # None = runs to the end of the data


def extract_segments(messages: Iterable[StampedMessage],
                     topic: str = SEGMENT_TOPIC) -> list[Segment]:
    """Segments delimited by marker messages; each runs to the next marker."""
    markers = [(m.stamp, _marker_name(m)) for m in messages if m.stream == topic]
    markers.sort(key=lambda p: p[0].to_nanos())
    segments = []
    for i, (stamp, name) in enumerate(markers):
        end = markers[i + 1][0] if i + 1 < len(markers) else None
        segments.append(Segment(name, stamp, end))
    return segments


def _marker_name(m: StampedMessage) -> str:
    payload = m.payload
    if isinstance(payload, (bytes, bytearray)):
        return bytes(payload).decode("utf-8")
    raise ValueError(f"segment marker on {m.stream} must be a blob payload")


@dataclass
class ReportRow:
    task: str
    statistic: str
    cells: dict[str, float | None]  # feature name -> delta (None = missing)


@dataclass
class StatsReport:
    rows: list[ReportRow]
    features: tuple[str, ...] = REPORT_FEATURES

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["task", "statistic", *self.features])
        for row in self.rows:
            writer.writerow([row.task, row.statistic,
                             *(_fmt(row.cells[f]) for f in self.features)])
        return buf.getvalue()

    def to_text(self) -> str:
        header = ["Task", "Statistic", *self.features]
        body = []
        for i, row in enumerate(self.rows):
            first = row.task if i % len(REPORT_STATISTICS) == 0 else ""
            body.append([first, row.statistic,
                         *(_fmt(row.cells[f]) for f in self.features)])
        widths = [max(len(r[c]) for r in [header, *body])
                  for c in range(len(header))]
        def render(cells):
            return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
        rule = "  ".join("-" * w for w in widths)
        return "\n".join([render(header), rule, *map(render, body)]) + "\n"


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.4f}"


def stats_report(messages: Sequence[StampedMessage],
                 feature_streams: dict[str, str] | None = None,
                 baseline_name: str = BASELINE_SEGMENT) -> StatsReport:
    """Per task segment and feature stream, the baseline-delta triple
    (Average/S.D./Median). Requires a baseline segment marker; a feature
    stream absent from the data yields blank cells and a warning.
    """
    streams = feature_streams or DEFAULT_FEATURE_STREAMS
    segments = extract_segments(messages)
    baseline = next((s for s in segments
                     if s.name.lower() == baseline_name.lower()), None)
    if baseline is None:
        raise MissingBaseline(
            f"no {baseline_name!r} marker on {SEGMENT_TOPIC}")
    tasks = [s for s in segments if s.name.lower() != baseline_name.lower()]

    series = {}
    for feature, stream in streams.items():
        s = Series.from_messages(stream, messages)
        if len(s) == 0:
            log.warning("stats_report: no data on %s (%s)", stream, feature)
        series[feature] = s

    deltas: dict[tuple[str, str], BaselineDelta | None] = {}
    for task in tasks:
        for feature in REPORT_FEATURES:
            s = series.get(feature)
            try:
                if s is None or len(s) == 0:
                    raise MissingStream(streams.get(feature, feature))
                deltas[(task.name, feature)] = baseline_delta(
                    window_stats(s, baseline.start, baseline.end),
                    window_stats(s, task.start, task.end))
            except (MissingStream, EmptyWindow, SingleSample) as exc:
                log.warning("stats_report: %s/%s: %s", task.name, feature, exc)
                deltas[(task.name, feature)] = None

    rows = []
    for task in tasks:
        for statistic, attr in zip(REPORT_STATISTICS,
                                   ("d_mean", "d_sd", "d_median")):
            cells = {}
            for feature in REPORT_FEATURES:
                d = deltas[(task.name, feature)]
                cells[feature] = None if d is None else getattr(d, attr)
            rows.append(ReportRow(task.name, statistic, cells))
    return StatsReport(rows)


# --- bus republishing ---------------------------------------------------------------


def feature_topic(record: FeatureRecord) -> str:
    return f"features/{record.stream}/{record.name}"


def feature_payload(record: FeatureRecord) -> list[float]:
    v = record.value
    if isinstance(v, StatTriple):
        return [v.mean, v.sd, v.median]
    if isinstance(v, BaselineDelta):
        return [v.d_mean, v.d_sd, v.d_median]
    return [float(v)]
