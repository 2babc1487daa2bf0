"""Unit tests for the synchronization filter."""

import pytest

from condmon.model import StampedMessage, Timestamp, UnknownStream
from condmon.syncfilter import (
    ApproximateTime,
    ExactTime,
    OutOfOrder,
    SyncFilter,
    SyncedTuple,
    TooLarge,
    brute_force_count,
    brute_force_match,
    default_slop_ns,
    encode_synced_payload,
    synced_topic,
)

MS = 1_000_000


def msg(stream, t_s, seq=1, payload=b""):
    return StampedMessage(stream, Timestamp.from_nanos(round(t_s * 1e9)),
                          seq, payload)


def feed(filt, messages):
    out = []
    for m in messages:
        out.extend(filt.push(m))
    return out


def shape(tuples):
    return [tuple((m.stream, m.stamp.to_nanos()) for m in t.messages)
            for t in tuples]


# --- policies and construction ---------------------------------------------

def test_slop_must_be_nonnegative():
    with pytest.raises(ValueError):
        ApproximateTime(-1)
    ApproximateTime(0)


def test_filter_rejects_bad_configurations():
    with pytest.raises(ValueError):
        SyncFilter([], ExactTime())
    with pytest.raises(ValueError):
        SyncFilter(["a", "a"], ExactTime())
    with pytest.raises(ValueError):
        SyncFilter(["a", "b"], ExactTime(), queue_bound=0)


def test_default_slop_is_half_the_slowest_period():
    assert default_slop_ns([4.0, 64.0]) == 125 * MS
    assert default_slop_ns([10.0]) == 50 * MS
    with pytest.raises(ValueError):
        default_slop_ns([4.0, 0.0])


# --- documented worked examples ------------------------------------------------

def test_exact_time_identical_stamps_form_a_tuple():
    filt = SyncFilter(["A", "B"], ExactTime())
    out = feed(filt, [msg("A", 5.0), msg("B", 5.0)])
    assert len(out) == 1
    assert out[0].spread_ns == 0
    assert out[0].pivot_stamp == Timestamp(5, 0)


def test_exact_time_drops_unmatchable_older_message():
    filt = SyncFilter(["A", "B"], ExactTime())
    out = feed(filt, [msg("A", 7.0), msg("B", 8.0), msg("A", 8.0)])
    assert shape(out) == [(("A", 8 * 10**9), ("B", 8 * 10**9))]
    assert filt.queue_depths() == {"A": 0, "B": 0}  # A@7 discarded


def test_approx_two_stream_example_matches_oracle():
    # A = {0.00, 0.10, 0.20}, B = {0.05, 0.26}, slop 60 ms
    # -> (0.00, 0.05) and (0.20, 0.26); A@0.10 is discarded.
    a = [msg("A", t, i + 1) for i, t in enumerate([0.00, 0.10, 0.20])]
    b = [msg("B", t, i + 1) for i, t in enumerate([0.05, 0.26])]
    arrivals = sorted(a + b, key=lambda m: m.stamp)
    filt = SyncFilter(["A", "B"], ApproximateTime(60 * MS))
    out = feed(filt, arrivals)
    want = shape(brute_force_match([a, b], 60 * MS))
    assert shape(out) == want == [
        (("A", 0), ("B", 50 * MS)),
        (("A", 200 * MS), ("B", 260 * MS)),
    ]
    assert [t.spread_ns for t in out] == [50 * MS, 60 * MS]


def test_approx_single_candidate_example():
    filt = SyncFilter(["A", "B"], ApproximateTime(50 * MS))
    out = feed(filt, [msg("A", 10.00), msg("B", 10.04)])
    assert len(out) == 1 and out[0].spread_ns == 40 * MS


def test_stream_that_never_publishes_blocks_all_tuples():
    filt = SyncFilter(["A", "B", "C"], ApproximateTime(10**9))
    out = feed(filt, [msg("A", t, i + 1) for i, t in enumerate(range(30))])
    assert out == []
    assert filt.queue_depths()["A"] == 30


def test_single_stream_every_message_is_a_tuple():
    filt = SyncFilter(["solo"], ApproximateTime(0))
    out = feed(filt, [msg("solo", t, t + 1) for t in range(5)])
    assert len(out) == 5
    assert all(t.spread_ns == 0 for t in out)


# --- ordering and rejection ---------------------------------------------------

def test_out_of_order_rejected_and_counted():
    filt = SyncFilter(["A", "B"], ApproximateTime(0))
    filt.push(msg("A", 2.0, 1))
    with pytest.raises(OutOfOrder):
        filt.push(msg("A", 1.0, 2))
    assert filt.out_of_order == {"A": 1, "B": 0}
    assert filt.offer(msg("A", 0.5, 3)) == []  # swallowed, still counted
    assert filt.out_of_order["A"] == 2
    filt.push(msg("A", 2.0, 4))  # equal stamp is fine under approximate


def test_exact_time_rejects_equal_stamp_within_stream():
    filt = SyncFilter(["A", "B"], ExactTime())
    filt.push(msg("A", 2.0, 1))
    with pytest.raises(OutOfOrder):
        filt.push(msg("A", 2.0, 2))


def test_unknown_stream_rejected():
    filt = SyncFilter(["A"], ExactTime())
    with pytest.raises(UnknownStream):
        filt.push(msg("nope", 1.0))


def test_queue_bound_drops_oldest_and_counts():
    filt = SyncFilter(["A", "B"], ApproximateTime(0), queue_bound=3)
    for i in range(5):
        filt.push(msg("A", float(i), i + 1))
    assert filt.queue_depths()["A"] == 3
    assert filt.overflow_drops == {"A": 2, "B": 0}


def test_pivots_strictly_increase_and_members_are_unique():
    a = [msg("A", t / 10, i + 1) for i, t in enumerate(range(0, 40, 3))]
    b = [msg("B", t / 10 + 0.011, i + 1) for i, t in enumerate(range(0, 40, 4))]
    arrivals = sorted(a + b, key=lambda m: m.stamp)
    filt = SyncFilter(["A", "B"], ApproximateTime(150 * MS))
    out = feed(filt, arrivals)
    assert out
    pivots = [t.pivot_stamp for t in out]
    assert pivots == sorted(set(pivots))
    used = [(m.stream, m.seq) for t in out for m in t.messages]
    assert len(used) == len(set(used))
    assert all(t.spread_ns <= 150 * MS for t in out)


def test_determinism_same_pushes_same_emissions():
    a = [msg("A", t / 7, i + 1) for i, t in enumerate(range(0, 50, 2))]
    b = [msg("B", t / 9, i + 1) for i, t in enumerate(range(0, 50, 3))]
    arrivals = sorted(a + b, key=lambda m: (m.stamp, m.stream))
    runs = []
    for _ in range(2):
        filt = SyncFilter(["A", "B"], ApproximateTime(70 * MS))
        runs.append(shape(feed(filt, arrivals)))
    assert runs[0] == runs[1]


# --- oracle ------------------------------------------------------------------

def test_oracle_empty_and_limit():
    assert brute_force_match([[], []], 0) == []
    assert brute_force_count([[], []], 0) == 0
    too_big = [[msg("A", float(i), i + 1) for i in range(21)]]
    with pytest.raises(TooLarge):
        brute_force_match(too_big, 0)
    with pytest.raises(TooLarge):
        brute_force_count(too_big, 0)


def test_oracle_prefers_count_then_total_spread():
    # One wide tuple (A0,B9) would block the two tight ones.
    a = [msg("A", 0.0, 1), msg("A", 1.0, 2)]
    b = [msg("B", 0.9, 1), msg("B", 1.1, 2)]
    got = brute_force_match([a, b], 1000 * MS)
    assert len(got) == brute_force_count([a, b], 1000 * MS) == 2
    assert shape(got) == [
        (("A", 0), ("B", 900 * MS)),
        (("A", 10**9), ("B", 1100 * MS)),
    ]


def test_oracle_single_stream_degenerates():
    a = [msg("A", float(i), i + 1) for i in range(4)]
    assert brute_force_count([a], 0) == 4


# --- bus integration ----------------------------------------------------------

def test_synced_topic_name():
    assert synced_topic("pair") == "synced/pair"


def test_encode_synced_payload_layout():
    t = SyncedTuple.of([
        StampedMessage("A", Timestamp(1, 0), 1, b"\x01\x02"),
        StampedMessage("Bc", Timestamp(1, 5), 1, b""),
    ])
    blob = encode_synced_payload(t)
    assert blob == (b"\x01\x00A\x02\x00\x00\x00\x01\x02"
                    b"\x02\x00Bc\x00\x00\x00\x00")


def test_encode_synced_payload_needs_raw_bytes():
    t = SyncedTuple.of([StampedMessage("A", Timestamp(1, 0), 1, (2.5,))])
    from condmon.model import CondmonError
    with pytest.raises(CondmonError):
        encode_synced_payload(t)


def test_synced_tuple_helpers():
    t = SyncedTuple.of([msg("A", 1.0), msg("B", 1.25)])
    assert t.pivot_stamp == Timestamp(1, 250_000_000)
    assert t.spread_ns == 250 * MS
    assert t.by_stream()["B"].stream == "B"
