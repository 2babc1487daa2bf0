"""Bag reading: indexed fast path, recovery scan fallback, bag_info."""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass

from condmon.model import StampedMessage, Timestamp, timestamp_diff
from condmon.bus import protocol
from condmon.bag import format as fmt

log = logging.getLogger(__name__)


@dataclass
class _Chunk:
    offset: int
    header: fmt.ChunkHeader
    records: list[StampedMessage]


class BagReader:
    """Read-only view of one bag file; loads it eagerly at open.

    When the trailer index is missing or damaged a recovery scan walks
    the chunk sequence instead and salvages complete records from a
    truncated final chunk, so every readable message is a prefix of the
    recorded sequence.
    """

    def __init__(self, path: str, strict: bool = False):
        self.path = path
        with open(path, "rb") as fh:
            self._data = fh.read()
        if self._data[:len(fmt.HEADER_MAGIC)] != fmt.HEADER_MAGIC:
            raise fmt.BadMagic(
                f"not a cmbag file: {path!r} (got "
                f"{bytes(self._data[:len(fmt.HEADER_MAGIC)])!r})")
        self.header = fmt.decode_header(self._data)
        self.recovered = False
        try:
            self.index = self._load_index()
            self._chunks = self._load_chunks_from_index()
        except (fmt.CorruptIndex, fmt.TruncatedChunk, fmt.BagError) as exc:
            if strict:
                raise
            log.warning("%s: %s; running recovery scan", path, exc)
            self.recovered = True
            self._chunks = self._recovery_scan()
            self.index = self._rebuild_index(self._chunks)

    # --- indexed path -----------------------------------------------------

    def _load_index(self) -> list[fmt.StreamIndexEntry]:
        if len(self._data) < self.header.end_offset + fmt.TRAILER_LEN:
            raise fmt.CorruptIndex("file too short for a trailer")
        tail = self._data[-fmt.TRAILER_LEN:]
        if tail[:len(fmt.TRAILER_MAGIC)] != fmt.TRAILER_MAGIC:
            raise fmt.CorruptIndex("trailer magic missing")
        (index_offset,) = struct.unpack_from("<Q", tail, len(fmt.TRAILER_MAGIC))
        if not (self.header.end_offset <= index_offset < len(self._data)):
            raise fmt.CorruptIndex(f"index offset {index_offset} out of range")
        return fmt.decode_index(self._data, index_offset)

    def _load_chunks_from_index(self) -> list[_Chunk]:
        offsets = sorted({off for e in self.index for off, _ in e.chunks})
        chunks = [self._parse_chunk(off, salvage=False) for off in offsets]
        by_offset = {c.offset: c for c in chunks}
        for e in self.index:
            for off, count in e.chunks:
                got = sum(1 for m in by_offset[off].records if m.stream == e.stream)
                if got != count:
                    raise fmt.CorruptIndex(
                        f"chunk {off}: {got} records on {e.stream}, "
                        f"index says {count}")
        return chunks

    # --- chunk parsing ------------------------------------------------------

    def _parse_chunk(self, offset: int, salvage: bool) -> _Chunk:
        data = self._data
        if offset + fmt.CHUNK_HEADER_LEN > len(data):
            raise fmt.TruncatedChunk(f"chunk header cut short at {offset}")
        header = fmt.decode_chunk_header(data, offset)
        body_start = offset + fmt.CHUNK_HEADER_LEN
        body_end = body_start + header.body_len
        truncated = body_end > len(data)
        if truncated and not salvage:
            raise fmt.TruncatedChunk(
                f"chunk at {offset}: body ends at {body_end}, "
                f"file has {len(data)} bytes")
        limit = min(body_end, len(data))
        records: list[StampedMessage] = []
        pos = body_start
        while pos + 4 <= limit and len(records) < header.count:
            (rec_len,) = struct.unpack_from("<I", data, pos)
            if pos + 4 + rec_len > limit:
                break
            body = data[pos + 4:pos + 4 + rec_len]
            try:
                topic, msg = protocol.decode_publish_body(body)
            except Exception as exc:
                if salvage:
                    break
                raise fmt.TruncatedChunk(f"bad record at {pos}: {exc}")
            records.append(msg)
            pos += 4 + rec_len
        if not truncated and len(records) != header.count and not salvage:
            raise fmt.TruncatedChunk(
                f"chunk at {offset}: {len(records)} records, "
                f"header says {header.count}")
        return _Chunk(offset, header, records)

    # --- recovery -----------------------------------------------------------

    def _recovery_scan(self) -> list[_Chunk]:
        chunks = []
        pos = self.header.end_offset
        data = self._data
        while pos + 4 <= len(data) and data[pos:pos + 4] == fmt.CHUNK_MARKER:
            try:
                chunk = self._parse_chunk(pos, salvage=True)
            except fmt.BagError:
                break
            body_end = pos + fmt.CHUNK_HEADER_LEN + chunk.header.body_len
            complete = (body_end <= len(data)
                        and len(chunk.records) == chunk.header.count)
            chunks.append(chunk)
            if not complete:
                break  # salvaged prefix of the final, truncated chunk
            pos = body_end
        return chunks

    @staticmethod
    def _rebuild_index(chunks: list[_Chunk]) -> list[fmt.StreamIndexEntry]:
        entries: dict[str, fmt.StreamIndexEntry] = {}
        for chunk in chunks:
            per_stream: dict[str, int] = {}
            for m in chunk.records:
                per_stream[m.stream] = per_stream.get(m.stream, 0) + 1
                e = entries.get(m.stream)
                if e is None:
                    e = fmt.StreamIndexEntry(m.stream, 0, m.stamp, m.stamp)
                    entries[m.stream] = e
                e.count += 1
                e.first = min(e.first, m.stamp)
                e.last = max(e.last, m.stamp)
            for stream, count in per_stream.items():
                entries[stream].chunks.append((chunk.offset, count))
        return [entries[s] for s in sorted(entries)]

    # --- access ---------------------------------------------------------------

    def messages(self) -> list[StampedMessage]:
        """All messages in global stamp order, ties by (stream id, seq)."""
        out = [m for c in self._chunks for m in c.records]
        out.sort(key=lambda m: (m.stamp.to_nanos(), m.stream, m.seq))
        return out

    def __iter__(self):
        return iter(self.messages())

    def __len__(self):
        return sum(len(c.records) for c in self._chunks)

    def streams(self) -> list[str]:
        return [e.stream for e in self.index]


def read_bag(path: str) -> list[StampedMessage]:
    """Messages of `path` in global stamp order (recovering if needed)."""
    return BagReader(path).messages()


@dataclass
class StreamSummary:
    stream: str
    count: int
    first: Timestamp | None
    last: Timestamp | None
    rate_hz: float


@dataclass
class BagInfo:
    path: str
    size_bytes: int
    message_count: int
    duration_s: float
    first: Timestamp | None
    last: Timestamp | None
    streams: list[StreamSummary]
    recovered: bool


def bag_info(path: str) -> BagInfo:
    reader = BagReader(path)
    streams = []
    firsts, lasts = [], []
    for e in reader.index:
        duration = (timestamp_diff(e.last, e.first) / 1e9
                    if e.count >= 2 else 0.0)
        rate = (e.count - 1) / duration if duration > 0 else 0.0
        streams.append(StreamSummary(e.stream, e.count, e.first, e.last, rate))
        if e.first is not None:
            firsts.append(e.first)
            lasts.append(e.last)
    first = min(firsts) if firsts else None
    last = max(lasts) if lasts else None
    duration_s = timestamp_diff(last, first) / 1e9 if firsts else 0.0
    return BagInfo(
        path=path,
        size_bytes=os.path.getsize(path),
        message_count=sum(e.count for e in reader.index),
        duration_s=duration_s,
        first=first,
        last=last,
        streams=streams,
        recovered=reader.recovered,
    )
