"""Timed replay of bag contents onto the bus."""

from __future__ import annotations

import threading
import time

from condmon.model import StampedMessage
from condmon.bus.client import BusClient
from condmon.bag.reader import BagReader


class PlaybackHandle:
    """Replays one bag at a rate multiple of original timing.

    Messages go out in global stamp order with their original stamps,
    seq numbers, and payload bytes; the replayed flag is set so
    downstream consumers can tell live data from playback. pause() and
    resume() may be called from another thread; the schedule shifts by
    the paused duration so no messages are lost or duplicated.
    """

    def __init__(self, bag: str | BagReader, rate: float = 1.0):
        if rate <= 0:
            raise ValueError("rate must be > 0")
        self.reader = bag if isinstance(bag, BagReader) else BagReader(bag)
        self.rate = rate
        self.cursor = 0
        self._messages = self.reader.messages()
        self._running = threading.Event()
        self._running.set()  # cleared while paused
        self._stopped = threading.Event()
        self.published = 0

    @property
    def paused(self) -> bool:
        return not self._running.is_set()

    def pause(self) -> None:
        self._running.clear()

    def resume(self) -> None:
        self._running.set()

    def stop(self) -> None:
        self._stopped.set()
        self._running.set()  # unblock a paused player so it can exit

    def play(self, client: BusClient,
             on_publish=None) -> int:
        """Blocking replay; returns the number of messages published."""
        msgs = self._messages
        if not msgs:
            return 0
        for stream in self.reader.streams():
            client.advertise_topic(stream)
        first_ns = msgs[0].stamp.to_nanos()
        start = time.monotonic()
        while self.cursor < len(msgs):
            if self._stopped.is_set():
                break
            if not self._running.is_set():
                pause_began = time.monotonic()
                self._running.wait()
                start += time.monotonic() - pause_began
                continue
            msg = msgs[self.cursor]
            target = start + (msg.stamp.to_nanos() - first_ns) / (1e9 * self.rate)
            delay = target - time.monotonic()
            if delay > 0:
                # Sleep in slices so pause/stop stay responsive.
                self._sleep_until(target)
                continue
            client.publish_raw(msg.stream, msg.stamp, msg.seq,
                               bytes(msg.payload), replayed=True)
            self.published += 1
            self.cursor += 1
            if on_publish is not None:
                on_publish(msg)
        return self.published

    def _sleep_until(self, target: float) -> None:
        while not self._stopped.is_set() and self._running.is_set():
            remaining = target - time.monotonic()
            if remaining <= 0:
                return
            time.sleep(min(remaining, 0.05))


def play_bag(path: str, client: BusClient, rate: float = 1.0) -> int:
    return PlaybackHandle(path, rate=rate).play(client)
