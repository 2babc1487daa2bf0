"""
Aligning streams that tick at different rates
=============================================

Sensors publish at different frequencies, so their stamps almost never
coincide. The sync filter groups one message per stream into tuples
whose stamps lie within a slop window.
"""

from condmon.model import StampedMessage, Timestamp
from condmon.syncfilter import (
    ApproximateTime,
    ExactTime,
    SyncFilter,
    brute_force_match,
    default_slop_ns,
)

MS = 1_000_000


def msg(stream, t_s, seq):
    return StampedMessage(stream, Timestamp.from_nanos(round(t_s * 1e9)),
                          seq, b"")


# ExactTime only matches identical stamps - fine for lockstep sources.
exact = SyncFilter(["A", "B"], ExactTime())
exact.push(msg("A", 5.0, 1))
for t in exact.push(msg("B", 5.0, 1)):
    print("exact tuple at", t.pivot_stamp.canonical(), "spread", t.spread_ns)

# ApproximateTime: A at 10 Hz, B irregular, slop 60 ms.
a = [msg("A", t, i + 1) for i, t in enumerate([0.00, 0.10, 0.20])]
b = [msg("B", t, i + 1) for i, t in enumerate([0.05, 0.26])]
approx = SyncFilter(["A", "B"], ApproximateTime(60 * MS))
tuples = []
for m in sorted(a + b, key=lambda m: m.stamp):
    tuples.extend(approx.push(m))
for t in tuples:
    print("approx tuple:", [(m.stream, m.stamp.canonical())
                            for m in t.messages],
          "spread %d ms" % (t.spread_ns // MS))

# The greedy emits as many tuples as an exhaustive search over all
# valid tuple sets - the oracle double-checks that on small instances.
oracle = brute_force_match([a, b], 60 * MS)
print("oracle tuple count:", len(oracle), "(greedy found", len(tuples), ")")

# A sensible default slop: half the period of the slowest stream.
slop = default_slop_ns([4.0, 64.0, 130.0])
print("default slop for 4/64/130 Hz:", slop // MS, "ms")
