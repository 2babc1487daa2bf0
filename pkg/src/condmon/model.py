"""Core domain types: timestamps, stream descriptors, stamped messages.

Everything here is an immutable value type, safe to share across threads.
The one piece of mutable state, the per-stream sequence counter, lives in
StreamRegistry and is lock-protected.
"""

from __future__ import annotations

import struct
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

NANOS_PER_SEC = 1_000_000_000
_MAX_SECONDS = 2**64 - 1
_I64_MAX = 2**63 - 1


class CondmonError(Exception):
    """Base class for all condmon errors."""


class SchemaMismatch(CondmonError):
    """Payload shape does not match the stream's declared schema."""


class UnknownStream(CondmonError):
    """Operation on a stream id that was never registered/advertised."""


class DurationOverflow(CondmonError):
    """Timestamp difference exceeds the signed 64-bit nanosecond range."""


@dataclass(frozen=True, order=True)
class Timestamp:
    """Integer seconds + nanoseconds since the Unix epoch.

    Integer fields keep comparisons exact and serialized forms bit-stable;
    field order (seconds, nanos) makes dataclass ordering the intended
    total order.
    """

    seconds: int
    nanos: int = 0

    def __post_init__(self):
        if not (0 <= self.seconds <= _MAX_SECONDS):
            raise ValueError(f"seconds out of range: {self.seconds}")
        if not (0 <= self.nanos < NANOS_PER_SEC):
            raise ValueError(f"nanos out of range: {self.nanos}")

    def to_nanos(self) -> int:
        return self.seconds * NANOS_PER_SEC + self.nanos

    @classmethod
    def from_nanos(cls, total: int) -> "Timestamp":
        if total < 0:
            raise ValueError(f"negative total nanoseconds: {total}")
        return cls(total // NANOS_PER_SEC, total % NANOS_PER_SEC)

    def add_nanos(self, delta: int) -> "Timestamp":
        return Timestamp.from_nanos(self.to_nanos() + delta)

    def to_float_seconds(self) -> float:
        # Lossy; only for feature math, never for ordering or storage.
        return self.seconds + self.nanos / NANOS_PER_SEC

    def canonical(self) -> str:
        """Canonical text form used in CSV exports: "<s>.<ns 9 digits>"."""
        return f"{self.seconds}.{self.nanos:09d}"

    def __str__(self) -> str:
        return self.canonical()


def parse_timestamp(text: str) -> Timestamp:
    """Parse the canonical "<seconds>.<nanos 9 digits>" form."""
    sec_part, dot, ns_part = text.partition(".")
    if not dot or len(ns_part) != 9 or not sec_part.isdigit() or not ns_part.isdigit():
        raise ValueError(f"not a canonical timestamp: {text!r}")
    return Timestamp(int(sec_part), int(ns_part))


def timestamp_diff(a: Timestamp, b: Timestamp) -> int:
    """Exact signed difference a - b in nanoseconds.

    Raises DurationOverflow outside the signed 64-bit range.
    """
    diff = a.to_nanos() - b.to_nanos()
    if not (-_I64_MAX - 1 <= diff <= _I64_MAX):
        raise DurationOverflow(f"difference {diff} ns exceeds i64")
    return diff


class StreamKind(Enum):
    PHYSIOLOGICAL_SENSOR = 1
    BEHAVIORAL_DEVICE = 2
    ROBOT = 3


@dataclass(frozen=True)
class PayloadSchema:
    """Scalar, fixed-width vector, or opaque blob payloads.

    Scalar/vector payloads are tuples of floats, encoded on the wire as
    little-endian f64 per element; blobs are raw bytes.
    """

    kind: str  # "scalar" | "vector" | "blob"
    width: int = 1

    def __post_init__(self):
        if self.kind not in ("scalar", "vector", "blob"):
            raise ValueError(f"bad schema kind {self.kind!r}")
        if self.kind == "scalar" and self.width != 1:
            raise ValueError("scalar schema has width 1")
        if self.kind == "vector" and self.width < 1:
            raise ValueError("vector width must be >= 1")


SCALAR = PayloadSchema("scalar")
BLOB = PayloadSchema("blob", 0)


def vector(n: int) -> PayloadSchema:
    return PayloadSchema("vector", n)


def validate_payload(schema: PayloadSchema, payload) -> None:
    if schema.kind == "blob":
        if not isinstance(payload, (bytes, bytearray)):
            raise SchemaMismatch("blob payload must be bytes")
        return
    if isinstance(payload, (bytes, bytearray, str)):
        raise SchemaMismatch(f"{schema.kind} payload must be a float sequence")
    try:
        n = len(payload)
    except TypeError:
        raise SchemaMismatch(f"{schema.kind} payload must be a float sequence")
    if n != schema.width:
        raise SchemaMismatch(f"payload length {n} != schema width {schema.width}")


def encode_payload(schema: PayloadSchema, payload) -> bytes:
    validate_payload(schema, payload)
    if schema.kind == "blob":
        return bytes(payload)
    return struct.pack(f"<{schema.width}d", *payload)


def decode_payload(schema: PayloadSchema, raw: bytes):
    if schema.kind == "blob":
        return bytes(raw)
    if len(raw) != 8 * schema.width:
        raise SchemaMismatch(f"payload byte length {len(raw)} != {8 * schema.width}")
    return tuple(struct.unpack(f"<{schema.width}d", raw))


def _validate_topic(topic: str) -> None:
    if not topic:
        raise ValueError("empty stream id")
    segments = topic.split("/")
    if any(not seg for seg in segments):
        raise ValueError(f"stream id has empty segment: {topic!r}")
    if any(ch in seg for seg in segments for ch in "*"):
        raise ValueError(f"stream id may not contain wildcards: {topic!r}")


@dataclass(frozen=True)
class StreamDescriptor:
    """Identity, kind, and nominal rate of one stream.

    The id is a '/'-separated path; the first segment is the namespace
    (a robot name or "human").
    """

    id: str
    kind: StreamKind
    nominal_rate_hz: float
    payload_schema: PayloadSchema = SCALAR

    def __post_init__(self):
        _validate_topic(self.id)
        if not (self.nominal_rate_hz > 0):
            raise ValueError(f"nominal_rate_hz must be > 0, got {self.nominal_rate_hz}")

    @property
    def namespace(self) -> str:
        return self.id.split("/", 1)[0]


@dataclass(frozen=True)
class StampedMessage:
    """One timestamped sample on a stream.

    `replayed` is an envelope flag set by bag playback; it never alters
    stamp, seq, or payload.
    """

    stream: str
    stamp: Timestamp
    seq: int
    payload: object  # tuple[float, ...] or bytes per the stream schema
    replayed: bool = False

    def scalar(self) -> float:
        """Value of a scalar payload; raises on anything else.

        Accepts either a decoded one-element vector or, for messages
        straight off the wire, the 8 raw bytes of one f64.
        """
        if isinstance(self.payload, (bytes, bytearray)):
            if len(self.payload) != 8:
                raise SchemaMismatch(f"message on {self.stream} is not scalar")
            return struct.unpack("<d", self.payload)[0]
        if len(self.payload) != 1:
            raise SchemaMismatch(f"message on {self.stream} is not scalar")
        return float(self.payload[0])

    def values(self) -> tuple[float, ...]:
        """Payload as a float tuple, decoding raw wire bytes if needed."""
        if isinstance(self.payload, (bytes, bytearray)):
            if len(self.payload) % 8:
                raise SchemaMismatch(
                    f"message on {self.stream} is not a float vector")
            n = len(self.payload) // 8
            return tuple(struct.unpack(f"<{n}d", self.payload))
        return tuple(float(v) for v in self.payload)


Clock = Callable[[], Timestamp]


def wall_clock() -> Timestamp:
    return Timestamp.from_nanos(time.time_ns())


class SimClock:
    """Manually advanced clock for simulators and tests."""

    def __init__(self, start: Timestamp):
        self._now = start

    def __call__(self) -> Timestamp:
        return self._now

    def advance_nanos(self, delta: int) -> Timestamp:
        self._now = self._now.add_nanos(delta)
        return self._now

    def set(self, t: Timestamp) -> None:
        self._now = t


class StreamRegistry:
    """Registered streams plus their per-stream sequence counters.

    stamp_now is the only mutating entry point and is serialized by a lock.
    """

    def __init__(self, clock: Clock = wall_clock):
        self._clock = clock
        self._streams: dict[str, StreamDescriptor] = {}
        self._seq: dict[str, int] = {}
        self._lock = threading.Lock()

    def register(self, desc: StreamDescriptor) -> None:
        with self._lock:
            self._streams[desc.id] = desc
            self._seq.setdefault(desc.id, 0)

    def descriptor(self, stream_id: str) -> StreamDescriptor:
        try:
            return self._streams[stream_id]
        except KeyError:
            raise UnknownStream(stream_id)

    def descriptors(self) -> Iterable[StreamDescriptor]:
        return list(self._streams.values())

    def stamp_now(self, stream_id: str, payload) -> StampedMessage:
        with self._lock:
            desc = self._streams.get(stream_id)
            if desc is None:
                raise UnknownStream(stream_id)
            validate_payload(desc.payload_schema, payload)
            seq = self._seq[stream_id] + 1
            self._seq[stream_id] = seq
            if not isinstance(payload, (bytes, bytearray)):
                payload = tuple(float(v) for v in payload)
            else:
                payload = bytes(payload)
            return StampedMessage(stream_id, self._clock(), seq, payload)
