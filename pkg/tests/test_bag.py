"""Bag write/read round-trips, crash recovery, info, playback."""

import random
import struct
import time

import pytest

from condmon.model import StampedMessage, Timestamp
from condmon.bus.broker import Broker
from condmon.bus.client import BusClient
from condmon.bag import format as fmt
from condmon.bag.player import PlaybackHandle
from condmon.bag.reader import BagReader, bag_info, read_bag
from condmon.bag.writer import BagWriter, Recorder


def fill(path, messages, **kw):
    with BagWriter(str(path), **kw) as w:
        for m in messages:
            w.append(m)


def ladder(streams, n, step_ms=25, start_ns=0):
    """n messages round-robin across streams, stamps ascending."""
    out = []
    seqs = {s: 0 for s in streams}
    for i in range(n):
        s = streams[i % len(streams)]
        seqs[s] += 1
        out.append(StampedMessage(
            s, Timestamp.from_nanos(start_ns + i * step_ms * 1_000_000),
            seqs[s], struct.pack("<d", float(i))))
    return out


def key(m):
    return (m.stream, m.stamp, m.seq, bytes(m.payload), m.replayed)


class TestRoundTrip:
    def test_preserves_everything(self, tmp_path):
        path = tmp_path / "a.cmbag"
        messages = ladder(["x/1", "x/2", "y"], 300)
        messages[7] = StampedMessage(messages[7].stream, messages[7].stamp,
                                     messages[7].seq, b"\x00\xff" * 9,
                                     replayed=True)
        fill(path, messages)
        got = read_bag(str(path))
        assert sorted(map(key, got)) == sorted(map(key, messages))

    def test_global_order_stamp_stream_seq(self, tmp_path):
        path = tmp_path / "a.cmbag"
        t = Timestamp(5, 0)
        messages = [StampedMessage("b", t, 1, b""),
                    StampedMessage("a", t, 2, b""),
                    StampedMessage("a", t, 1, b""),
                    StampedMessage("a", Timestamp(4, 0), 1, b"")]
        fill(path, messages)
        got = read_bag(str(path))
        assert [(m.stream, m.stamp.seconds, m.seq) for m in got] == [
            ("a", 4, 1), ("a", 5, 1), ("a", 5, 2), ("b", 5, 1)]

    def test_empty_bag(self, tmp_path):
        path = tmp_path / "empty.cmbag"
        fill(path, [])
        reader = BagReader(str(path))
        assert reader.messages() == []
        assert reader.streams() == []
        assert not reader.recovered

    def test_header_and_trailer_magics(self, tmp_path):
        path = tmp_path / "a.cmbag"
        fill(path, ladder(["t"], 3))
        raw = path.read_bytes()
        assert raw.startswith(b"CMBAG1\n")
        assert raw[-fmt.TRAILER_LEN:-8] == b"CMBAGEND"

    def test_total_count_patched_on_close(self, tmp_path):
        path = tmp_path / "a.cmbag"
        fill(path, ladder(["t"], 41))
        raw = path.read_bytes()
        (total,) = struct.unpack_from("<Q", raw, fmt.total_count_offset())
        assert total == 41

    def test_stamp_regression_splits_chunk_not_data(self, tmp_path):
        """A replayed/older stamp on a stream forces a chunk split; the
        bag still holds every message."""
        path = tmp_path / "a.cmbag"
        messages = ladder(["t"], 10, start_ns=10**9)
        messages.append(StampedMessage("t", Timestamp(0, 5), 11, b"old"))
        fill(path, messages)
        reader = BagReader(str(path))
        assert len(reader) == 11
        assert reader.messages()[0].stamp == Timestamp(0, 5)
        # Within every chunk, each stream's stamps are non-decreasing.
        for chunk in reader._chunks:
            last = {}
            for m in chunk.records:
                if m.stream in last:
                    assert m.stamp >= last[m.stream]
                last[m.stream] = m.stamp

    def test_multi_chunk_bag(self, tmp_path):
        path = tmp_path / "a.cmbag"
        messages = ladder(["a", "b"], 4000)
        fill(path, messages, flush_bytes=4096)
        reader = BagReader(str(path))
        assert len(reader._chunks) > 10
        assert sorted(map(key, reader.messages())) \
            == sorted(map(key, messages))


class TestRecovery:
    def make_bag(self, tmp_path, n=600):
        path = tmp_path / "crash.cmbag"
        messages = ladder(["s/1", "s/2"], n)
        fill(path, messages, flush_bytes=2048)
        return path, messages

    def test_truncation_always_yields_clean_prefix(self, tmp_path):
        path, messages = self.make_bag(tmp_path)
        raw = path.read_bytes()
        rng = random.Random(42)
        header_len = BagReader(str(path)).header.end_offset
        for cut in sorted(rng.sample(range(header_len, len(raw)), 60)):
            clipped = tmp_path / "clip.cmbag"
            clipped.write_bytes(raw[:cut])
            reader = BagReader(str(clipped))
            got = [m for c in reader._chunks for m in c.records]
            assert list(map(key, got)) == list(map(key, messages[:len(got)])), \
                f"not a prefix at cut={cut}"

    def test_full_file_reads_without_recovery(self, tmp_path):
        path, _ = self.make_bag(tmp_path)
        assert BagReader(str(path)).recovered is False

    def test_strict_mode_raises_instead_of_recovering(self, tmp_path):
        path, _ = self.make_bag(tmp_path)
        raw = path.read_bytes()
        clipped = tmp_path / "clip.cmbag"
        clipped.write_bytes(raw[:len(raw) // 2])
        with pytest.raises(fmt.BagError):
            BagReader(str(clipped), strict=True)
        assert BagReader(str(clipped)).recovered is True

    def test_not_a_bag(self, tmp_path):
        path = tmp_path / "no.cmbag"
        path.write_bytes(b"definitely not a bag file")
        with pytest.raises(fmt.BadMagic):
            BagReader(str(path))


class TestBagInfo:
    def test_counts_rates_duration(self, tmp_path):
        path = tmp_path / "a.cmbag"
        # Two streams at 10 Hz for 20 s, interleaved.
        messages = []
        for i in range(200):
            for s in ("p", "q"):
                messages.append(StampedMessage(
                    s, Timestamp.from_nanos(i * 100_000_000), i + 1,
                    struct.pack("<d", 0.0)))
        fill(path, messages)
        info = bag_info(str(path))
        assert info.message_count == 400
        assert info.duration_s == pytest.approx(19.9)
        assert {s.stream for s in info.streams} == {"p", "q"}
        for s in info.streams:
            assert s.count == 200
            assert s.rate_hz == pytest.approx(10.0)
        assert info.recovered is False


@pytest.fixture()
def broker():
    with Broker(port=0) as b:
        yield b


def addr(broker) -> str:
    host, port = broker.address
    return f"{host}:{port}"


class TestLiveRecordReplay:
    def test_record_then_play_marks_replayed(self, broker, tmp_path):
        bag1 = tmp_path / "one.cmbag"
        messages = ladder(["live/a", "live/b"], 40)

        with BusClient(addr(broker)) as pub, BusClient(addr(broker)) as rec:
            recorder = Recorder(rec, "live/*", str(bag1))
            time.sleep(0.1)
            for t in {m.stream for m in messages}:
                pub.advertise_topic(t)
            for m in messages:
                pub.publish_raw(m.stream, m.stamp, m.seq, bytes(m.payload))
            recorder.run(max_messages=len(messages), duration_s=10.0)
        assert sorted(map(key, read_bag(str(bag1)))) \
            == sorted(map(key, messages))

        bag2 = tmp_path / "two.cmbag"
        with BusClient(addr(broker)) as player_client, \
                BusClient(addr(broker)) as rec:
            recorder = Recorder(rec, "live/*", str(bag2))
            time.sleep(0.1)
            handle = PlaybackHandle(str(bag1), rate=50.0)
            published = handle.play(player_client)
            assert published == len(messages)
            recorder.run(max_messages=len(messages), duration_s=10.0)
        replayed = read_bag(str(bag2))
        assert len(replayed) == len(messages)
        assert all(m.replayed for m in replayed)
        # Same content apart from the replay flag.
        orig = sorted((m.stream, m.stamp, m.seq, bytes(m.payload))
                      for m in messages)
        got = sorted((m.stream, m.stamp, m.seq, bytes(m.payload))
                     for m in replayed)
        assert got == orig

    def test_playback_rate_scales_wall_time(self, broker, tmp_path):
        bag = tmp_path / "rate.cmbag"
        fill(bag, ladder(["r"], 21, step_ms=100))  # 2.0 s of data
        with BusClient(addr(broker)) as client:
            handle = PlaybackHandle(str(bag), rate=10.0)
            t0 = time.monotonic()
            handle.play(client)
            elapsed = time.monotonic() - t0
        assert 0.1 <= elapsed < 1.5   # 2 s of data at 10x ~ 0.2 s

    def test_pause_resume_and_stop(self, broker, tmp_path):
        import threading
        bag = tmp_path / "pause.cmbag"
        fill(bag, ladder(["r"], 200, step_ms=50))  # 10 s of data
        with BusClient(addr(broker)) as client:
            handle = PlaybackHandle(str(bag), rate=20.0)
            done = threading.Event()

            def run():
                handle.play(client)
                done.set()

            threading.Thread(target=run, daemon=True).start()
            time.sleep(0.1)
            handle.pause()
            assert handle.paused
            before = handle.published
            time.sleep(0.3)
            assert handle.published == before  # nothing flows while paused
            handle.resume()
            assert not handle.paused
            time.sleep(0.1)
            handle.stop()
            assert done.wait(timeout=2.0)
            assert 0 < handle.published < 200

    def test_bad_rate_rejected(self, tmp_path):
        bag = tmp_path / "r.cmbag"
        fill(bag, ladder(["r"], 3))
        with pytest.raises(ValueError):
            PlaybackHandle(str(bag), rate=0.0)
