"""Single-process star-topology broker.

Router is the transport-free core: advertised streams, pattern
subscriptions with bounded drop-oldest queues, and atomic routing.
Broker wraps it with a TCP server, one reader and one writer thread per
connection, and ping/timeout liveness tracking.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass

from condmon.model import Timestamp, UnknownStream
from condmon.bus import protocol
from condmon.bus.protocol import Frame, FrameKind, FrameDecoder

log = logging.getLogger(__name__)

DEFAULT_PORT = 7447
DEFAULT_QUEUE_CAPACITY = 65536
PING_INTERVAL_S = 2.0
SILENCE_TIMEOUT_S = 10.0


class Subscription:
    """One pattern subscription with a bounded drop-oldest queue."""

    def __init__(self, pattern: str, queue_capacity: int = DEFAULT_QUEUE_CAPACITY,
                 owner=None):
        protocol.validate_pattern(pattern)
        if queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        self.pattern = pattern
        self.queue_capacity = queue_capacity
        self.owner = owner
        self.queue: deque = deque()
        self.dropped = 0

    def offer(self, item) -> None:
        """Enqueue; if full, drop the oldest item and count it."""
        if len(self.queue) >= self.queue_capacity:
            self.queue.popleft()
            self.dropped += 1
        self.queue.append(item)


@dataclass
class StreamStatus:
    advertiser: object
    online: bool = True
    last_publish: Timestamp | None = None


class Router:
    """Advertised streams + subscriptions + routing, all under one lock.

    route() is atomic with respect to subscribe/unsubscribe, so per
    (publisher, subscription) delivery order is the publish order.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._streams: dict[str, StreamStatus] = {}
        self._subs: list[Subscription] = []

    def advertise(self, topic: str, advertiser=None) -> None:
        with self._lock:
            self._streams[topic] = StreamStatus(advertiser)

    def is_advertised(self, topic: str) -> bool:
        with self._lock:
            return topic in self._streams

    def subscribe(self, sub: Subscription) -> Subscription:
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def unsubscribe_pattern(self, owner, pattern: str) -> None:
        with self._lock:
            self._subs = [s for s in self._subs
                          if not (s.owner is owner and s.pattern == pattern)]

    def route(self, topic: str, item, stamp: Timestamp | None = None) -> list[Subscription]:
        """Deliver `item` to every matching subscription's queue.

        Returns the recipients. Raises UnknownStream for topics never
        advertised.
        """
        with self._lock:
            status = self._streams.get(topic)
            if status is None:
                raise UnknownStream(topic)
            status.online = True
            if stamp is not None:
                status.last_publish = stamp
            recipients = []
            for sub in self._subs:
                if protocol.match_topic(sub.pattern, topic):
                    sub.offer(item)
                    recipients.append(sub)
            return recipients

    def drop_advertiser(self, advertiser) -> list[str]:
        """Mark all of one client's streams offline; returns their topics."""
        with self._lock:
            topics = []
            for topic, status in self._streams.items():
                if status.advertiser is advertiser and status.online:
                    status.online = False
                    topics.append(topic)
            return topics

    def stream_table(self) -> dict[str, StreamStatus]:
        with self._lock:
            return dict(self._streams)


class _Connection:
    def __init__(self, broker: "Broker", sock: socket.socket, peer):
        self.broker = broker
        self.sock = sock
        self.peer = peer
        self.subs: list[Subscription] = []
        self.alive = True
        self.last_heard = time.monotonic()
        self.wakeup = threading.Condition()
        self.reader = threading.Thread(target=self._read_loop, daemon=True,
                                       name=f"broker-read-{peer}")
        self.writer = threading.Thread(target=self._write_loop, daemon=True,
                                       name=f"broker-write-{peer}")

    def start(self):
        self.reader.start()
        self.writer.start()

    # reader thread: parse frames, route publishes
    def _read_loop(self):
        decoder = FrameDecoder()
        try:
            while self.alive:
                data = self.sock.recv(65536)
                if not data:
                    break
                self.last_heard = time.monotonic()
                for frame in decoder.feed(data):
                    self._handle(frame)
        except (protocol.BadMagic, protocol.UnsupportedVersion) as exc:
            log.warning("protocol violation from %s: %s", self.peer, exc)
        except OSError:
            pass
        finally:
            self.broker._drop_connection(self)

    def _handle(self, frame: Frame):
        router = self.broker.router
        if frame.kind == FrameKind.PING:
            self.send(protocol.encode_frame(FrameKind.PONG))
        elif frame.kind == FrameKind.PONG:
            pass
        elif frame.kind == FrameKind.ADVERTISE:
            router.advertise(protocol.decode_topic_body(frame.body), advertiser=self)
        elif frame.kind == FrameKind.SUBSCRIBE:
            sub = Subscription(protocol.decode_topic_body(frame.body),
                               self.broker.queue_capacity, owner=self)
            router.subscribe(sub)
            with self.wakeup:
                self.subs.append(sub)
        elif frame.kind == FrameKind.UNSUBSCRIBE:
            pattern = protocol.decode_topic_body(frame.body)
            router.unsubscribe_pattern(self, pattern)
            with self.wakeup:
                self.subs = [s for s in self.subs if s.pattern != pattern]
        elif frame.kind == FrameKind.PUBLISH:
            topic, msg = protocol.decode_publish_body(frame.body)
            # Publishing an unadvertised topic is a contract violation;
            # close the connection like any other malformed traffic.
            if not router.is_advertised(topic):
                log.warning("publish on unadvertised %r from %s", topic, self.peer)
                raise protocol.BadMagic(f"publish on unadvertised {topic!r}")
            recipients = router.route(topic, frame.body, stamp=msg.stamp)
            conns = {s.owner for s in recipients}
            for conn in conns:
                if conn is not None:
                    conn.kick()

    def kick(self):
        with self.wakeup:
            self.wakeup.notify()

    # writer thread: drain subscription queues into the socket, send pings
    def _write_loop(self):
        try:
            while self.alive:
                bodies = []
                with self.wakeup:
                    if not any(s.queue for s in self.subs):
                        self.wakeup.wait(timeout=self.broker.ping_interval)
                    for sub in self.subs:
                        while sub.queue:
                            bodies.append(sub.queue.popleft())
                if bodies:
                    blob = b"".join(
                        protocol.encode_frame(FrameKind.PUBLISH, b) for b in bodies
                    )
                    self.sock.sendall(blob)
                else:
                    self._liveness_check()
        except OSError:
            pass
        finally:
            self.broker._drop_connection(self)

    def _liveness_check(self):
        now = time.monotonic()
        if now - self.last_heard > self.broker.silence_timeout:
            log.warning("client %s silent for %.1fs, disconnecting",
                        self.peer, now - self.last_heard)
            raise OSError("client timed out")
        self.sock.sendall(protocol.encode_frame(FrameKind.PING))

    def send(self, data: bytes):
        try:
            self.sock.sendall(data)
        except OSError:
            pass

    def close(self):
        self.alive = False
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
        self.kick()


class Broker:
    """TCP broker; serves until stop() or the process exits."""

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
                 queue_capacity: int = DEFAULT_QUEUE_CAPACITY,
                 ping_interval: float = PING_INTERVAL_S,
                 silence_timeout: float = SILENCE_TIMEOUT_S):
        self.router = Router()
        self.queue_capacity = queue_capacity
        self.ping_interval = ping_interval
        self.silence_timeout = silence_timeout
        self._connections: set[_Connection] = set()
        self._conn_lock = threading.Lock()
        self._stopping = threading.Event()
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind((host, port))  # raises OSError if occupied
        self._server.listen(64)
        self.address = self._server.getsockname()
        self._accept_thread = threading.Thread(target=self._accept_loop,
                                               daemon=True, name="broker-accept")

    def start(self) -> "Broker":
        self._accept_thread.start()
        return self

    def _accept_loop(self):
        while not self._stopping.is_set():
            try:
                sock, peer = self._server.accept()
            except OSError:
                break
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = _Connection(self, sock, peer)
            with self._conn_lock:
                self._connections.add(conn)
            conn.start()

    def _drop_connection(self, conn: _Connection):
        with self._conn_lock:
            if conn not in self._connections:
                return
            self._connections.remove(conn)
        conn.alive = False
        for sub in conn.subs:
            self.router.unsubscribe(sub)
        offline = self.router.drop_advertiser(conn)
        if offline:
            log.info("streams offline: %s", ", ".join(offline))
        conn.close()

    def serve_forever(self, poll: float = 0.2):
        self.start()
        try:
            while not self._stopping.wait(poll):
                pass
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self):
        self._stopping.set()
        try:
            self._server.close()
        except OSError:
            pass
        with self._conn_lock:
            conns = list(self._connections)
        for conn in conns:
            self._drop_connection(conn)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
