"""Client side of the bus: publish, subscribe, liveness.

A BusClient owns one TCP connection plus a background reader thread that
dispatches PUBLISH frames into local subscription queues and answers
pings. One client may be used from several threads; the socket writes are
lock-protected.
"""

from __future__ import annotations

import os
import queue
import socket
import threading
import time

from condmon.model import (
    CondmonError,
    StampedMessage,
    StreamDescriptor,
    StreamRegistry,
    Timestamp,
    encode_payload,
    wall_clock,
)
from condmon.bus import protocol
from condmon.bus.protocol import FrameKind, FrameDecoder

ENV_BROKER = "CONDMON_BROKER"
DEFAULT_ADDRESS = "127.0.0.1:7447"


class BrokerDisconnected(CondmonError):
    pass


def resolve_address(address: str | None = None) -> tuple[str, int]:
    addr = address or os.environ.get(ENV_BROKER) or DEFAULT_ADDRESS
    host, _, port = addr.rpartition(":")
    if not host:
        raise ValueError(f"broker address must be host:port, got {addr!r}")
    return host, int(port)


class ClientSubscription:
    """Local bounded drop-oldest queue for one subscribed pattern."""

    def __init__(self, pattern: str, capacity: int):
        protocol.validate_pattern(pattern)
        self.pattern = pattern
        self.capacity = capacity
        self._messages: queue.Queue = queue.Queue()
        self.dropped = 0
        self._lock = threading.Lock()

    def _offer(self, msg: StampedMessage) -> None:
        with self._lock:
            if self._messages.qsize() >= self.capacity:
                try:
                    self._messages.get_nowait()
                    self.dropped += 1
                except queue.Empty:
                    pass
            self._messages.put(msg)

    def get(self, timeout: float | None = None) -> StampedMessage | None:
        """Next message, or None on timeout / connection loss."""
        try:
            item = self._messages.get(timeout=timeout)
        except queue.Empty:
            return None
        return item

    def drain(self) -> list[StampedMessage]:
        out = []
        while True:
            try:
                item = self._messages.get_nowait()
            except queue.Empty:
                return out
            if item is not None:
                out.append(item)


class BusClient:
    def __init__(self, address: str | None = None, clock=wall_clock,
                 connect_timeout: float = 5.0):
        host, port = resolve_address(address)
        self.registry = StreamRegistry(clock)
        self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        self._sock.settimeout(None)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._send_lock = threading.Lock()
        self._subs: list[ClientSubscription] = []
        self._subs_lock = threading.Lock()
        self._closed = threading.Event()
        self._reader = threading.Thread(target=self._read_loop, daemon=True,
                                        name="bus-client-read")
        self._reader.start()

    # --- outgoing -----------------------------------------------------

    def _send(self, data: bytes) -> None:
        if self._closed.is_set():
            raise BrokerDisconnected("client closed")
        try:
            with self._send_lock:
                self._sock.sendall(data)
        except OSError as exc:
            raise BrokerDisconnected(str(exc))

    def advertise(self, desc: StreamDescriptor) -> None:
        self.registry.register(desc)
        self._send(protocol.encode_frame(
            FrameKind.ADVERTISE, protocol.encode_topic_body(desc.id)))

    def publish(self, stream_id: str, payload) -> StampedMessage:
        """Stamp `payload` with the client clock and publish it."""
        msg = self.registry.stamp_now(stream_id, payload)
        desc = self.registry.descriptor(stream_id)
        raw = encode_payload(desc.payload_schema, msg.payload)
        body = protocol.encode_publish_body(stream_id, msg.stamp, msg.seq, raw)
        self._send(protocol.encode_frame(FrameKind.PUBLISH, body))
        return msg

    def publish_raw(self, stream_id: str, stamp: Timestamp, seq: int,
                    payload_bytes: bytes, replayed: bool = False) -> None:
        """Publish pre-encoded payload bytes with a caller-chosen stamp/seq.

        Used by bag playback, which must preserve original stamps. The
        topic must still have been advertised.
        """
        body = protocol.encode_publish_body(stream_id, stamp, seq,
                                            payload_bytes, replayed=replayed)
        self._send(protocol.encode_frame(FrameKind.PUBLISH, body))

    def advertise_topic(self, topic: str) -> None:
        """Advertise a bare topic without registering a local descriptor."""
        self._send(protocol.encode_frame(
            FrameKind.ADVERTISE, protocol.encode_topic_body(topic)))

    def subscribe(self, pattern: str, queue_capacity: int = 65536) -> ClientSubscription:
        sub = ClientSubscription(pattern, queue_capacity)
        with self._subs_lock:
            self._subs.append(sub)
        self._send(protocol.encode_frame(
            FrameKind.SUBSCRIBE, protocol.encode_topic_body(pattern)))
        return sub

    def unsubscribe(self, sub: ClientSubscription) -> None:
        with self._subs_lock:
            if sub in self._subs:
                self._subs.remove(sub)
        self._send(protocol.encode_frame(
            FrameKind.UNSUBSCRIBE, protocol.encode_topic_body(sub.pattern)))

    def ping(self) -> None:
        self._send(protocol.encode_frame(FrameKind.PING))

    # --- incoming -----------------------------------------------------

    def _read_loop(self):
        decoder = FrameDecoder()
        try:
            while not self._closed.is_set():
                data = self._sock.recv(65536)
                if not data:
                    break
                for frame in decoder.feed(data):
                    self._dispatch(frame)
        except (OSError, CondmonError):
            pass
        finally:
            self._closed.set()
            with self._subs_lock:
                subs = list(self._subs)
            for sub in subs:
                sub._messages.put(None)  # wake blocked consumers

    def _dispatch(self, frame):
        if frame.kind == FrameKind.PING:
            try:
                self._send(protocol.encode_frame(FrameKind.PONG))
            except BrokerDisconnected:
                pass
        elif frame.kind == FrameKind.PUBLISH:
            topic, msg = protocol.decode_publish_body(frame.body)
            with self._subs_lock:
                subs = list(self._subs)
            for sub in subs:
                if protocol.match_topic(sub.pattern, topic):
                    sub._offer(msg)

    # --- lifecycle ----------------------------------------------------

    @property
    def connected(self) -> bool:
        return not self._closed.is_set()

    def close(self):
        self._closed.set()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def wait_for_broker(address: str | None = None, timeout: float = 5.0) -> None:
    """Block until a broker accepts connections at `address`."""
    host, port = resolve_address(address)
    deadline = time.monotonic() + timeout
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=0.25)
            sock.close()
            return
        except OSError:
            if time.monotonic() > deadline:
                raise BrokerDisconnected(f"no broker at {host}:{port}")
            time.sleep(0.05)
