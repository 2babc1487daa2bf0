"""Bag writing: chunked append with periodic flush, plus the bus recorder."""

from __future__ import annotations

import logging
import struct
import threading
import time

from condmon.model import StampedMessage, StreamDescriptor, Timestamp, wall_clock
from condmon.bus import protocol
from condmon.bus.client import BusClient
from condmon.bag import format as fmt

log = logging.getLogger(__name__)


class BagWriter:
    """Single-writer append interface for one .cmbag file.

    Records buffer in memory and flush as one chunk every FLUSH_BYTES of
    payload or FLUSH_INTERVAL_S of wall time, whichever comes first. A
    crash between flushes loses only the buffered tail; everything
    flushed is recoverable without the trailer index.
    """

    def __init__(self, path: str,
                 descriptors: tuple[StreamDescriptor, ...] = (),
                 creation: Timestamp | None = None,
                 flush_bytes: int = fmt.FLUSH_BYTES,
                 flush_interval_s: float = fmt.FLUSH_INTERVAL_S):
        self.path = path
        self._fh = open(path, "wb")
        self._fh.write(fmt.encode_header(creation or wall_clock(), descriptors))
        self._fh.flush()
        self.flush_bytes = flush_bytes
        self.flush_interval_s = flush_interval_s
        self._buf: list[bytes] = []
        self._buf_bytes = 0
        self._buf_count = 0
        self._buf_first: Timestamp | None = None
        self._buf_last: Timestamp | None = None
        self._buf_started_at: float | None = None
        self._buf_stream_counts: dict[str, int] = {}
        self._last_stamp: dict[str, Timestamp] = {}
        self._stamp_bounds: dict[str, tuple[Timestamp, Timestamp]] = {}
        self._index: dict[str, fmt.StreamIndexEntry] = {}
        self.message_count = 0
        self._closed = False

    # --- append ---------------------------------------------------------

    def append(self, msg: StampedMessage) -> None:
        """Append one message; payload must be raw wire bytes."""
        if self._closed:
            raise fmt.BagError("writer is closed")
        if not isinstance(msg.payload, (bytes, bytearray)):
            raise fmt.BagError("bag writer needs raw byte payloads")
        last = self._last_stamp.get(msg.stream)
        if last is not None and msg.stamp < last and self._buf_count:
            # Keep the per-chunk per-stream ordering invariant without
            # dropping data: regressions force a chunk boundary.
            self.flush()
        body = protocol.encode_publish_body(
            msg.stream, msg.stamp, msg.seq, bytes(msg.payload),
            replayed=msg.replayed)
        record = fmt.encode_record(body)
        if not self._buf:
            self._buf_started_at = time.monotonic()
            self._buf_first = msg.stamp
        self._buf.append(record)
        self._buf_bytes += len(record)
        self._buf_count += 1
        self._buf_last = msg.stamp
        self._buf_stream_counts[msg.stream] = \
            self._buf_stream_counts.get(msg.stream, 0) + 1
        self._last_stamp[msg.stream] = msg.stamp
        lo, hi = self._stamp_bounds.get(msg.stream, (msg.stamp, msg.stamp))
        self._stamp_bounds[msg.stream] = (min(lo, msg.stamp), max(hi, msg.stamp))
        self.message_count += 1
        self.maybe_flush()

    def maybe_flush(self) -> None:
        if not self._buf:
            return
        if (self._buf_bytes >= self.flush_bytes
                or time.monotonic() - self._buf_started_at >= self.flush_interval_s):
            self.flush()

    def flush(self) -> None:
        if not self._buf:
            return
        offset = self._fh.tell()
        body = b"".join(self._buf)
        self._fh.write(fmt.encode_chunk(
            self._buf_first, self._buf_last, self._buf_count, body))
        self._fh.flush()
        for stream, count in self._buf_stream_counts.items():
            entry = self._index.get(stream)
            if entry is None:
                entry = fmt.StreamIndexEntry(stream, 0, None, None)
                self._index[stream] = entry
            entry.count += count
            entry.chunks.append((offset, count))
        # First/last per stream come from the writer's running bounds.
        self._buf = []
        self._buf_bytes = 0
        self._buf_count = 0
        self._buf_first = self._buf_last = None
        self._buf_started_at = None
        self._buf_stream_counts = {}

    # --- close ----------------------------------------------------------

    def close(self) -> None:
        if self._closed:
            return
        self.flush()
        entries = []
        for stream in sorted(self._index):
            e = self._index[stream]
            e.first, e.last = self._stamp_bounds[stream]
            entries.append(e)
        index_offset = self._fh.tell()
        self._fh.write(fmt.encode_index(entries))
        self._fh.write(fmt.encode_trailer(index_offset))
        self._fh.flush()
        self._fh.seek(fmt.total_count_offset())
        self._fh.write(struct.pack("<Q", self.message_count))
        self._fh.flush()
        self._fh.close()
        self._closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class Recorder:
    """Subscribes on the bus and appends everything to a bag.

    run() blocks until stop() is called or the broker goes away; either
    way the bag is closed cleanly and stays valid.
    """

    def __init__(self, client: BusClient, pattern: str, path: str,
                 flush_bytes: int = fmt.FLUSH_BYTES,
                 flush_interval_s: float = fmt.FLUSH_INTERVAL_S):
        self.client = client
        self.pattern = pattern
        self.writer = BagWriter(path, flush_bytes=flush_bytes,
                                flush_interval_s=flush_interval_s)
        self._sub = client.subscribe(pattern)
        self._stop = threading.Event()

    @property
    def message_count(self) -> int:
        return self.writer.message_count

    def stop(self) -> None:
        self._stop.set()

    def run(self, max_messages: int | None = None,
            duration_s: float | None = None) -> int:
        """Record until stop()/max_messages/duration_s/broker loss."""
        deadline = (time.monotonic() + duration_s
                    if duration_s is not None else None)
        try:
            while not self._stop.is_set():
                if max_messages is not None \
                        and self.writer.message_count >= max_messages:
                    break
                if deadline is not None and time.monotonic() >= deadline:
                    break
                msg = self._sub.get(timeout=0.25)
                if msg is not None:
                    self.writer.append(msg)
                elif not self.client.connected:
                    log.warning("broker connection lost; closing bag")
                    break
                else:
                    self.writer.maybe_flush()
            # Drain whatever is already queued locally before closing.
            for msg in self._sub.drain():
                if max_messages is not None \
                        and self.writer.message_count >= max_messages:
                    break
                self.writer.append(msg)
        finally:
            self.writer.close()
        return self.writer.message_count
