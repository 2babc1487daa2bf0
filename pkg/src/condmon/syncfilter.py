"""Multi-stream time synchronization.

Aligns N message streams into tuples (one message per stream) despite
differing rates and latencies. Two policies:

  ExactTime          - a tuple forms when the same stamp is present in
                       every stream's queue.
  ApproximateTime    - greedy pivot matching: repeatedly emit the tuple
                       with the smallest achievable pivot (the latest
                       stamp in the tuple), each stream contributing its
                       earliest queued message within [pivot-slop,
                       pivot]. Taking the smallest pivot and earliest
                       members never blocks a later match, so for
                       stamp-ordered feeds the emitted tuple count
                       equals the offline optimum.

brute_force_match is the test oracle: exhaustive enumeration of valid
tuple sets for small instances, never used on the production path.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from condmon.model import (
    CondmonError,
    StampedMessage,
    Timestamp,
    UnknownStream,
    timestamp_diff,
)

DEFAULT_QUEUE_BOUND = 64
ORACLE_LIMIT = 20


class OutOfOrder(CondmonError):
    """Message stamped before its stream's last accepted message."""


class TooLarge(CondmonError):
    """Instance exceeds the brute-force oracle's search limit."""


@dataclass(frozen=True)
class ExactTime:
    pass


@dataclass(frozen=True)
class ApproximateTime:
    slop_ns: int

    def __post_init__(self):
        if self.slop_ns < 0:
            raise ValueError("slop must be >= 0")


SyncPolicy = ExactTime | ApproximateTime


def default_slop_ns(rates_hz: Iterable[float]) -> int:
    """Half the period of the slowest participating stream."""
    slowest = min(rates_hz)
    if slowest <= 0:
        raise ValueError("rates must be positive")
    return round(0.5e9 / slowest)


@dataclass(frozen=True)
class SyncedTuple:
    """One message per participating stream, in filter stream order."""

    messages: tuple[StampedMessage, ...]
    pivot_stamp: Timestamp
    spread_ns: int

    @classmethod
    def of(cls, messages: Sequence[StampedMessage]) -> "SyncedTuple":
        stamps = [m.stamp for m in messages]
        hi, lo = max(stamps), min(stamps)
        return cls(tuple(messages), hi, timestamp_diff(hi, lo))

    def by_stream(self) -> dict[str, StampedMessage]:
        return {m.stream: m for m in self.messages}


class SyncFilter:
    """Synchronization state for a fixed set of streams.

    Single-threaded by contract: all push() calls for one filter must be
    serialized by the caller.
    """

    def __init__(self, streams: Sequence[str], policy: SyncPolicy,
                 queue_bound: int = DEFAULT_QUEUE_BOUND):
        if len(streams) < 1:
            raise ValueError("need at least one stream")
        if len(set(streams)) != len(streams):
            raise ValueError("duplicate stream ids")
        if queue_bound < 1:
            raise ValueError("queue_bound must be >= 1")
        self.streams = tuple(streams)
        self.policy = policy
        self.queue_bound = queue_bound
        self._index = {s: i for i, s in enumerate(self.streams)}
        self._queues: list[deque[StampedMessage]] = [deque() for _ in streams]
        self._last_accepted: list[Timestamp | None] = [None] * len(streams)
        self._last_pivot: Timestamp | None = None
        self.out_of_order = dict.fromkeys(self.streams, 0)
        self.overflow_drops = dict.fromkeys(self.streams, 0)

    # --- ingestion ------------------------------------------------------

    def push(self, msg: StampedMessage) -> list[SyncedTuple]:
        """Enqueue one message; returns any tuples this completes.

        Raises OutOfOrder (after counting it) when the stamp regresses
        within its stream; under ExactTime equal stamps also count as
        regressions.
        """
        i = self._index.get(msg.stream)
        if i is None:
            raise UnknownStream(msg.stream)
        last = self._last_accepted[i]
        if last is not None:
            exact = isinstance(self.policy, ExactTime)
            if msg.stamp < last or (exact and msg.stamp == last):
                self.out_of_order[msg.stream] += 1
                raise OutOfOrder(f"{msg.stream}: {msg.stamp} after {last}")
        self._last_accepted[i] = msg.stamp
        q = self._queues[i]
        if len(q) >= self.queue_bound:
            q.popleft()
            self.overflow_drops[msg.stream] += 1
        q.append(msg)
        return self._match()

    def offer(self, msg: StampedMessage) -> list[SyncedTuple]:
        """push() that swallows OutOfOrder (the counter still ticks)."""
        try:
            return self.push(msg)
        except OutOfOrder:
            return []

    # --- matching -------------------------------------------------------

    def _match(self) -> list[SyncedTuple]:
        if isinstance(self.policy, ExactTime):
            return self._exact_match()
        return self._approx_match(self.policy.slop_ns)

    def _emit(self, picks: list[StampedMessage], positions: list[int]) -> SyncedTuple:
        # Consume each pick and everything queued before it on its stream.
        for q, pos in zip(self._queues, positions):
            for _ in range(pos + 1):
                q.popleft()
        t = SyncedTuple.of(picks)
        if isinstance(self.policy, ApproximateTime):
            assert t.spread_ns <= self.policy.slop_ns
        assert self._last_pivot is None or t.pivot_stamp > self._last_pivot
        self._last_pivot = t.pivot_stamp
        return t

    def _exact_match(self) -> list[SyncedTuple]:
        tuples = []
        while all(self._queues):
            common = set(m.stamp for m in self._queues[0])
            for q in self._queues[1:]:
                common &= set(m.stamp for m in q)
            if self._last_pivot is not None:
                common = {s for s in common if s > self._last_pivot}
            if not common:
                break
            stamp = min(common)
            picks, positions = [], []
            for q in self._queues:
                pos = next(k for k, m in enumerate(q) if m.stamp == stamp)
                picks.append(q[pos])
                positions.append(pos)
            tuples.append(self._emit(picks, positions))
        return tuples

    def _approx_match(self, slop_ns: int) -> list[SyncedTuple]:
        tuples = []
        while True:
            candidate = self._min_pivot_candidate(slop_ns)
            if candidate is None:
                break
            tuples.append(self._emit(*candidate))
        return tuples

    def _min_pivot_candidate(self, slop_ns: int):
        """Smallest emittable pivot with the earliest possible members.

        A queued stamp p (above the last pivot) is emittable when every
        stream has a queued message inside [p - slop, p]; each stream
        then contributes its earliest in-window message, except that the
        stream owning p must contribute the p-stamped message itself so
        the tuple maximum actually lands on p. Smallest pivot plus
        earliest members consumes as little as possible, which is what
        makes the greedy count match the exhaustive oracle.
        """
        if not all(self._queues):
            return None
        floor = self._last_pivot
        stamps = sorted({m.stamp for q in self._queues for m in q
                         if floor is None or m.stamp > floor})
        for pivot in stamps:
            picks, positions = [], []
            for q in self._queues:
                pos = None
                for k, m in enumerate(q):
                    diff = timestamp_diff(pivot, m.stamp)
                    if diff > slop_ns:
                        continue  # still older than the window
                    if diff >= 0:
                        pos = k
                    break  # ascending stamps: past the window otherwise
                if pos is None:
                    break
                picks.append(q[pos])
                positions.append(pos)
            if len(picks) < len(self._queues):
                continue
            if max(m.stamp for m in picks) < pivot:
                for i, q in enumerate(self._queues):
                    hit = next((k for k, m in enumerate(q)
                                if m.stamp == pivot), None)
                    if hit is not None:
                        picks[i], positions[i] = q[hit], hit
                        break
            return picks, positions
        return None

    def queue_depths(self) -> dict[str, int]:
        return {s: len(q) for s, q in zip(self.streams, self._queues)}


# --- exhaustive oracle ----------------------------------------------------


def _require_small(queues: Sequence[Sequence[StampedMessage]]) -> None:
    total = sum(len(q) for q in queues)
    if total > ORACLE_LIMIT:
        raise TooLarge(f"{total} messages > {ORACLE_LIMIT}")


def brute_force_match(queues: Sequence[Sequence[StampedMessage]],
                      slop_ns: int) -> list[SyncedTuple]:
    """Optimal tuple set over complete queue contents (test oracle).

    Enumerates every set of disjoint tuples with per-stream order
    preserved, strictly increasing pivots, and spread <= slop; returns
    the one maximizing tuple count, then minimizing total spread, then
    with the lexicographically earliest pivot sequence.
    """
    _require_small(queues)
    n = len(queues)
    stamp_ns = [[m.stamp.to_nanos() for m in q] for q in queues]
    best: tuple | None = None  # (-count, total_spread, pivot_seq, picks)

    def consider(acc_picks, acc_spread, pivot_seq):
        nonlocal best
        key = (-len(acc_picks), acc_spread, tuple(pivot_seq))
        if best is None or key < best[0]:
            best = (key, list(acc_picks))

    def rec(cursors, last_pivot, acc_picks, acc_spread, pivot_seq):
        consider(acc_picks, acc_spread, pivot_seq)
        choices = [range(cursors[i], len(queues[i])) for i in range(n)]
        if any(len(r) == 0 for r in choices):
            return
        def combos(i, picked):
            if i == n:
                yield tuple(picked)
                return
            for k in choices[i]:
                picked.append(k)
                yield from combos(i + 1, picked)
                picked.pop()
        for combo in combos(0, []):
            stamps = [stamp_ns[i][k] for i, k in enumerate(combo)]
            spread = max(stamps) - min(stamps)
            if spread > slop_ns:
                continue
            pivot = max(stamps)
            if last_pivot is not None and pivot <= last_pivot:
                continue
            rec([k + 1 for k in combo], pivot,
                acc_picks + [combo], acc_spread + spread, pivot_seq + [pivot])

    rec([0] * n, None, [], 0, [])
    picks = best[1] if best else []
    return [SyncedTuple.of([queues[i][k] for i, k in enumerate(combo)])
            for combo in picks]


def brute_force_count(queues: Sequence[Sequence[StampedMessage]],
                      slop_ns: int) -> int:
    """Tuple count of brute_force_match, via branch-and-bound.

    Exhaustive with respect to the count objective; used by the bulk
    randomized harnesses where the fully ranked search is too slow.
    """
    _require_small(queues)
    n = len(queues)
    stamp_ns = [sorted(m.stamp.to_nanos() for m in q) for q in queues]
    sizes = [len(q) for q in queues]
    best = 0

    def rec(cursors, last_pivot, count):
        nonlocal best
        if count > best:
            best = count
        remaining = min(sizes[i] - cursors[i] for i in range(n))
        if count + remaining <= best:
            return
        def combos(i, picked):
            if i == n:
                yield tuple(picked)
                return
            for k in range(cursors[i], sizes[i]):
                picked.append(k)
                yield from combos(i + 1, picked)
                picked.pop()
        for combo in combos(0, []):
            stamps = [stamp_ns[i][k] for i, k in enumerate(combo)]
            spread = max(stamps) - min(stamps)
            if spread > slop_ns:
                continue
            pivot = max(stamps)
            if last_pivot is not None and pivot <= last_pivot:
                continue
            rec([k + 1 for k in combo], pivot, count + 1)

    rec([0] * n, None, 0)
    return best


# --- bus integration --------------------------------------------------------

SYNCED_TOPIC_PREFIX = "synced"


def synced_topic(filter_name: str) -> str:
    return f"{SYNCED_TOPIC_PREFIX}/{filter_name}"


def encode_synced_payload(t: SyncedTuple) -> bytes:
    """Concatenated member payloads, each prefixed by its stream id.

    Per member: u16 LE id length, id utf-8, u32 LE payload length,
    payload bytes. Members appear in filter stream order. Message
    payloads must already be raw bytes (wire form).
    """
    import struct

    parts = []
    for m in t.messages:
        if not isinstance(m.payload, (bytes, bytearray)):
            raise CondmonError("synced republish needs raw byte payloads")
        rid = m.stream.encode("utf-8")
        parts.append(struct.pack("<H", len(rid)) + rid
                     + struct.pack("<I", len(m.payload)) + bytes(m.payload))
    return b"".join(parts)
