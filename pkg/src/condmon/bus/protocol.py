"""Framed wire protocol and topic glob matching.

Frame layout (all integers little-endian):

    magic   2 bytes  0xC0 0x4D
    version u8       1
    kind    u8       1=ADVERTISE 2=SUBSCRIBE 3=PUBLISH 4=UNSUBSCRIBE 5=PING 6=PONG
    length  u32      byte count of body
    body    bytes

Body encodings:

    ADVERTISE / SUBSCRIBE / UNSUBSCRIBE:
        u16 topic length | topic utf-8
    PUBLISH:
        u16 topic length | topic utf-8
        u64 stamp seconds | u32 stamp nanos
        u64 seq
        u8  flags          (bit 0: replayed)
        payload bytes      (rest of body; f64 LE per element for
                            scalar/vector streams, raw for blobs)
    PING / PONG: empty
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from condmon.model import CondmonError, StampedMessage, Timestamp

MAGIC = b"\xc0\x4d"
VERSION = 1
HEADER_LEN = 8  # magic + version + kind + u32 length
_MAX_BODY = 2**32 - 1

FLAG_REPLAYED = 0x01


class FrameKind(IntEnum):
    ADVERTISE = 1
    SUBSCRIBE = 2
    PUBLISH = 3
    UNSUBSCRIBE = 4
    PING = 5
    PONG = 6


class BadMagic(CondmonError):
    pass


class UnsupportedVersion(CondmonError):
    pass


class TruncatedBody(CondmonError):
    """Stream ended in the middle of a frame."""


class BodyTooLarge(CondmonError):
    pass


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    body: bytes


def encode_frame(kind: FrameKind, body: bytes = b"") -> bytes:
    if len(body) > _MAX_BODY:
        raise BodyTooLarge(f"body of {len(body)} bytes")
    return MAGIC + bytes((VERSION, int(kind))) + struct.pack("<I", len(body)) + body


class FrameDecoder:
    """Incremental frame parser over a reliable byte stream.

    feed() returns every frame completed by the new bytes; partial frames
    stay buffered. finish() raises TruncatedBody if the stream ends with a
    partial frame still pending.
    """

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Frame]:
        self._buf.extend(data)
        frames = []
        while True:
            frame, consumed = self._try_decode()
            if frame is None:
                break
            frames.append(frame)
            del self._buf[:consumed]
        return frames

    def _try_decode(self):
        buf = self._buf
        if len(buf) >= 2 and bytes(buf[:2]) != MAGIC:
            raise BadMagic(f"got {bytes(buf[:2])!r}")
        if len(buf) >= 3 and buf[2] != VERSION:
            raise UnsupportedVersion(f"version {buf[2]}")
        if len(buf) < HEADER_LEN:
            return None, 0
        kind_byte = buf[3]
        try:
            kind = FrameKind(kind_byte)
        except ValueError:
            raise BadMagic(f"unknown frame kind {kind_byte}")
        (length,) = struct.unpack_from("<I", buf, 4)
        total = HEADER_LEN + length
        if len(buf) < total:
            return None, 0
        return Frame(kind, bytes(buf[HEADER_LEN:total])), total

    def pending(self) -> int:
        return len(self._buf)

    def finish(self) -> None:
        if self._buf:
            raise TruncatedBody(f"{len(self._buf)} trailing bytes")


def decode_frame(data: bytes):
    """Decode one frame from the head of `data`.

    Returns (frame, bytes_consumed), or None when more bytes are needed.
    """
    dec = FrameDecoder()
    dec._buf.extend(data)
    frame, consumed = dec._try_decode()
    if frame is None:
        return None
    return frame, consumed


# --- topic body helpers ---------------------------------------------------


def encode_topic_body(topic: str) -> bytes:
    raw = topic.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def decode_topic_body(body: bytes) -> str:
    topic, rest = _split_topic(body)
    if rest:
        raise CondmonError("trailing bytes after topic")
    return topic


def _split_topic(body: bytes) -> tuple[str, bytes]:
    if len(body) < 2:
        raise CondmonError("topic body too short")
    (n,) = struct.unpack_from("<H", body, 0)
    if len(body) < 2 + n:
        raise CondmonError("topic body too short")
    return body[2 : 2 + n].decode("utf-8"), body[2 + n :]


def encode_publish_body(topic: str, stamp: Timestamp, seq: int,
                        payload: bytes, replayed: bool = False) -> bytes:
    flags = FLAG_REPLAYED if replayed else 0
    return (
        encode_topic_body(topic)
        + struct.pack("<QIQB", stamp.seconds, stamp.nanos, seq, flags)
        + payload
    )


def decode_publish_body(body: bytes) -> tuple[str, StampedMessage]:
    """Returns (topic, message with raw bytes payload)."""
    topic, rest = _split_topic(body)
    if len(rest) < 21:
        raise CondmonError("publish body too short")
    sec, ns, seq, flags = struct.unpack_from("<QIQB", rest, 0)
    payload = rest[21:]
    msg = StampedMessage(topic, Timestamp(sec, ns), seq, payload,
                         replayed=bool(flags & FLAG_REPLAYED))
    return topic, msg


# --- topic glob matching --------------------------------------------------


def validate_pattern(pattern: str) -> None:
    """Patterns are '/'-separated; '*' matches one segment, '**' any
    (possibly empty) suffix and may only appear last."""
    if not pattern:
        raise ValueError("empty pattern")
    segments = pattern.split("/")
    if any(not seg for seg in segments):
        raise ValueError(f"pattern has empty segment: {pattern!r}")
    for i, seg in enumerate(segments):
        if "*" in seg and seg not in ("*", "**"):
            raise ValueError(f"bad wildcard segment {seg!r} in {pattern!r}")
        if seg == "**" and i != len(segments) - 1:
            raise ValueError(f"'**' only allowed as final segment: {pattern!r}")


def match_topic(pattern: str, topic: str) -> bool:
    psegs = pattern.split("/")
    tsegs = topic.split("/")
    for i, pseg in enumerate(psegs):
        if pseg == "**":
            return True
        if i >= len(tsegs):
            return False
        if pseg != "*" and pseg != tsegs[i]:
            return False
    return len(psegs) == len(tsegs)
