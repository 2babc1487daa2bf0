"""On-disk layout of .cmbag files. Little-endian throughout.

    header   := magic "CMBAG1\\n"
                creation stamp (u64 sec, u32 ns)
                u64 total message count (all-ones while recording,
                    patched in place on clean close)
                u32 stream-table entry count, then per entry:
                    u16 id len, id utf-8, u8 kind, f64 nominal rate,
                    u8 schema kind (1 vector / 2 blob), u16 width
    chunk    := marker "CHNK"
                first stamp (12 B), last stamp (12 B)
                u32 record count, u8 compressed (0 in v1), u32 body len
                body: per record u32 length + verbatim PUBLISH body
                      (topic, stamp, seq, flags, payload - wire layout)
    index    := marker "INDX", u32 stream count, then per stream:
                u16 id len, id utf-8, u64 total count,
                first stamp, last stamp, u32 chunk-entry count,
                entries of (u64 chunk offset, u32 count in chunk)
    trailer  := magic "CMBAGEND", u64 offset of index marker

A reader seeks to EOF-16 for the trailer; failing that, a recovery scan
walks chunks from the header and rebuilds the index, salvaging complete
records from a truncated final chunk.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from condmon.model import (
    CondmonError,
    PayloadSchema,
    StreamDescriptor,
    StreamKind,
    Timestamp,
)

HEADER_MAGIC = b"CMBAG1\n"
CHUNK_MARKER = b"CHNK"
INDEX_MARKER = b"INDX"
TRAILER_MAGIC = b"CMBAGEND"
TRAILER_LEN = len(TRAILER_MAGIC) + 8
COUNT_UNKNOWN = 0xFFFFFFFFFFFFFFFF
CHUNK_HEADER_LEN = 4 + 12 + 12 + 4 + 1 + 4

FLUSH_BYTES = 4 * 2**20
FLUSH_INTERVAL_S = 5.0

EXTENSION = ".cmbag"


class BagError(CondmonError):
    pass


class BadMagic(BagError):
    """File does not start with the bag magic."""


class CorruptIndex(BagError):
    """Trailer or index failed to parse; recovery scan required."""


class TruncatedChunk(BagError):
    """A chunk body ends before its declared length."""


def pack_stamp(t: Timestamp) -> bytes:
    return struct.pack("<QI", t.seconds, t.nanos)


def unpack_stamp(buf: bytes, off: int) -> tuple[Timestamp, int]:
    sec, ns = struct.unpack_from("<QI", buf, off)
    return Timestamp(sec, ns), off + 12


_SCHEMA_KINDS = {"vector": 1, "blob": 2}
_SCHEMA_NAMES = {v: k for k, v in _SCHEMA_KINDS.items()}


def encode_header(creation: Timestamp,
                  descriptors: tuple[StreamDescriptor, ...] = ()) -> bytes:
    parts = [HEADER_MAGIC, pack_stamp(creation),
             struct.pack("<Q", COUNT_UNKNOWN),
             struct.pack("<I", len(descriptors))]
    for d in descriptors:
        rid = d.id.encode("utf-8")
        parts.append(struct.pack("<H", len(rid)) + rid)
        parts.append(struct.pack("<BdBH", int(d.kind), d.nominal_rate_hz,
                                 _SCHEMA_KINDS[d.payload_schema.kind],
                                 d.payload_schema.width))
    return b"".join(parts)


def total_count_offset() -> int:
    return len(HEADER_MAGIC) + 12


@dataclass
class BagHeader:
    creation: Timestamp
    total_count: int  # COUNT_UNKNOWN while recording
    descriptors: tuple[StreamDescriptor, ...]
    end_offset: int  # file offset of the first chunk


def decode_header(buf: bytes) -> BagHeader:
    if buf[:len(HEADER_MAGIC)] != HEADER_MAGIC:
        raise BadMagic(f"not a cmbag file (got {bytes(buf[:7])!r})")
    off = len(HEADER_MAGIC)
    try:
        creation, off = unpack_stamp(buf, off)
        (total,) = struct.unpack_from("<Q", buf, off)
        off += 8
        (n,) = struct.unpack_from("<I", buf, off)
        off += 4
        descriptors = []
        for _ in range(n):
            (idlen,) = struct.unpack_from("<H", buf, off)
            off += 2
            rid = buf[off:off + idlen].decode("utf-8")
            off += idlen
            kind, rate, skind, width = struct.unpack_from("<BdBH", buf, off)
            off += struct.calcsize("<BdBH")
            descriptors.append(StreamDescriptor(
                id=rid, kind=StreamKind(kind), nominal_rate_hz=rate,
                payload_schema=PayloadSchema(_SCHEMA_NAMES[skind], width)))
    except (struct.error, IndexError, UnicodeDecodeError, ValueError) as exc:
        raise BagError(f"corrupt header: {exc}")
    return BagHeader(creation, total, tuple(descriptors), off)


def encode_record(publish_body: bytes) -> bytes:
    return struct.pack("<I", len(publish_body)) + publish_body


def encode_chunk(first: Timestamp, last: Timestamp, count: int,
                 body: bytes) -> bytes:
    return (CHUNK_MARKER + pack_stamp(first) + pack_stamp(last)
            + struct.pack("<IBI", count, 0, len(body)) + body)


@dataclass
class ChunkHeader:
    first: Timestamp
    last: Timestamp
    count: int
    compressed: bool
    body_len: int


def decode_chunk_header(buf: bytes, off: int) -> ChunkHeader:
    if buf[off:off + 4] != CHUNK_MARKER:
        raise BagError(f"no chunk marker at offset {off}")
    first, o = unpack_stamp(buf, off + 4)
    last, o = unpack_stamp(buf, o)
    count, compressed, body_len = struct.unpack_from("<IBI", buf, o)
    return ChunkHeader(first, last, count, bool(compressed), body_len)


@dataclass
class StreamIndexEntry:
    stream: str
    count: int
    first: Timestamp | None
    last: Timestamp | None
    chunks: list[tuple[int, int]] = field(default_factory=list)  # (offset, count)


def encode_index(entries: list[StreamIndexEntry]) -> bytes:
    parts = [INDEX_MARKER, struct.pack("<I", len(entries))]
    for e in entries:
        rid = e.stream.encode("utf-8")
        parts.append(struct.pack("<H", len(rid)) + rid)
        parts.append(struct.pack("<Q", e.count))
        zero = Timestamp(0, 0)
        parts.append(pack_stamp(e.first or zero))
        parts.append(pack_stamp(e.last or zero))
        parts.append(struct.pack("<I", len(e.chunks)))
        for offset, count in e.chunks:
            parts.append(struct.pack("<QI", offset, count))
    return b"".join(parts)


def decode_index(buf: bytes, off: int) -> list[StreamIndexEntry]:
    try:
        if buf[off:off + 4] != INDEX_MARKER:
            raise BagError("no index marker")
        off += 4
        (n,) = struct.unpack_from("<I", buf, off)
        off += 4
        entries = []
        for _ in range(n):
            (idlen,) = struct.unpack_from("<H", buf, off)
            off += 2
            rid = buf[off:off + idlen].decode("utf-8")
            off += idlen
            (count,) = struct.unpack_from("<Q", buf, off)
            off += 8
            first, off = unpack_stamp(buf, off)
            last, off = unpack_stamp(buf, off)
            (nchunks,) = struct.unpack_from("<I", buf, off)
            off += 4
            chunks = []
            for _ in range(nchunks):
                coff, ccount = struct.unpack_from("<QI", buf, off)
                off += 12
                chunks.append((coff, ccount))
            entries.append(StreamIndexEntry(
                rid, count, first if count else None,
                last if count else None, chunks))
        return entries
    except (struct.error, IndexError, UnicodeDecodeError) as exc:
        raise CorruptIndex(str(exc))


def encode_trailer(index_offset: int) -> bytes:
    return TRAILER_MAGIC + struct.pack("<Q", index_offset)
