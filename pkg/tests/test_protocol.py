"""Wire framing: golden frames, round-trips, topic glob language."""

import struct

import pytest
from hypothesis import given, settings, strategies as st

from condmon.model import StampedMessage, Timestamp
from condmon.bus.protocol import (
    BadMagic,
    Frame,
    FrameDecoder,
    FrameKind,
    TruncatedBody,
    UnsupportedVersion,
    decode_frame,
    decode_publish_body,
    encode_frame,
    encode_publish_body,
    match_topic,
    validate_pattern,
)


class TestGoldenFrames:
    """The two byte-level examples fixed by the wire contract."""

    def test_ping_frame_bytes(self):
        assert encode_frame(FrameKind.PING, b"") == \
            bytes.fromhex("C04D010500000000")

    def test_publish_frame_with_3_byte_body(self):
        assert encode_frame(FrameKind.PUBLISH, b"abc") == \
            bytes.fromhex("C04D010303000000616263")

    def test_golden_frames_decode_back(self):
        frame, used = decode_frame(bytes.fromhex("C04D010500000000"))
        assert (frame, used) == (Frame(FrameKind.PING, b""), 8)
        frame, used = decode_frame(bytes.fromhex("C04D010303000000616263"))
        assert (frame, used) == (Frame(FrameKind.PUBLISH, b"abc"), 11)


class TestFrameCodec:
    def test_bad_magic(self):
        with pytest.raises(BadMagic):
            decode_frame(b"\x00\x4d\x01\x05\x00\x00\x00\x00")

    def test_unsupported_version(self):
        with pytest.raises(UnsupportedVersion):
            decode_frame(b"\xc0\x4d\x02\x05\x00\x00\x00\x00")

    def test_incomplete_frame_returns_none(self):
        frame = encode_frame(FrameKind.PUBLISH, b"abcdef")
        assert decode_frame(frame[:-1]) is None

    def test_decoder_finish_flags_partial_frame(self):
        dec = FrameDecoder()
        dec.feed(encode_frame(FrameKind.PUBLISH, b"abcdef")[:-1])
        with pytest.raises(TruncatedBody):
            dec.finish()

    def test_incremental_decoder_one_byte_at_a_time(self):
        frames = [encode_frame(FrameKind.PING, b""),
                  encode_frame(FrameKind.PUBLISH, b"xyz"),
                  encode_frame(FrameKind.SUBSCRIBE, b"\x00\x01")]
        dec = FrameDecoder()
        out = []
        for byte in b"".join(frames):
            out.extend(dec.feed(bytes([byte])))
        assert out == [Frame(FrameKind.PING, b""),
                       Frame(FrameKind.PUBLISH, b"xyz"),
                       Frame(FrameKind.SUBSCRIBE, b"\x00\x01")]
        dec.finish()  # nothing pending

    def test_decoder_rejects_garbage_prefix(self):
        dec = FrameDecoder()
        with pytest.raises(BadMagic):
            dec.feed(b"\xde\xad\xbe\xef\x00\x00\x00\x00")

    @given(st.sampled_from(list(FrameKind)), st.binary(max_size=2048))
    @settings(max_examples=300)
    def test_roundtrip_fuzz(self, kind, body):
        frame, used = decode_frame(encode_frame(kind, body))
        assert frame == Frame(kind, body)
        assert used == 8 + len(body)


class TestPublishBody:
    def test_roundtrip_preserves_all_fields(self):
        stamp = Timestamp(1234, 567_890_123)
        body = encode_publish_body("robot1/wifi", stamp, 42,
                                   struct.pack("<d", -55.5), replayed=True)
        topic, msg = decode_publish_body(body)
        assert topic == "robot1/wifi"
        assert msg == StampedMessage("robot1/wifi", stamp, 42,
                                     struct.pack("<d", -55.5), replayed=True)

    def test_replayed_flag_flips_exactly_one_bit(self):
        stamp = Timestamp(0, 0)
        plain = encode_publish_body("t", stamp, 1, b"x")
        replay = encode_publish_body("t", stamp, 1, b"x", replayed=True)
        diff = [i for i, (a, b) in enumerate(zip(plain, replay)) if a != b]
        assert len(diff) == 1
        assert plain[diff[0]] ^ replay[diff[0]] == 0x01

    @given(st.text(alphabet=st.characters(min_codepoint=33,
                                          max_codepoint=126,
                                          exclude_characters="*#/"),
                   min_size=1, max_size=40),
           st.integers(0, 2**64 - 1), st.integers(0, 999_999_999),
           st.integers(1, 2**64 - 1), st.binary(max_size=512),
           st.booleans())
    @settings(max_examples=300)
    def test_roundtrip_fuzz(self, topic, sec, ns, seq, payload, replayed):
        body = encode_publish_body(topic, Timestamp(sec, ns), seq,
                                   payload, replayed)
        got_topic, msg = decode_publish_body(body)
        assert got_topic == topic
        assert (msg.stream, msg.stamp, msg.seq, bytes(msg.payload),
                msg.replayed) == (topic, Timestamp(sec, ns), seq,
                                  payload, replayed)


class TestTopicGlobs:
    @pytest.mark.parametrize("pattern", [
        "a", "a/b", "*", "*/battery", "a/*/c", "**", "a/**", "a/b/**",
    ])
    def test_valid_patterns(self, pattern):
        validate_pattern(pattern)

    @pytest.mark.parametrize("pattern", [
        "", "robot*", "*battery", "a/robot*", "a/**/c", "**/a", "a//b",
        "/a", "a/",
    ])
    def test_invalid_patterns(self, pattern):
        with pytest.raises(ValueError):
            validate_pattern(pattern)

    @pytest.mark.parametrize("pattern,topic,expect", [
        ("*/battery", "robot1/battery", True),
        ("*/battery", "robot1/wifi", False),
        ("*/battery", "a/b/battery", False),   # * is exactly one segment
        ("**", "anything/at/all", True),
        ("a/**", "a", True),                    # ** matches empty suffix
        ("a/**", "a/b/c", True),
        ("a/**", "b/a", False),
        ("a/*/c", "a/b/c", True),
        ("a/*/c", "a/c", False),
        ("human/ibi", "human/ibi", True),
        ("human/ibi", "human/ibi2", False),
    ])
    def test_matching(self, pattern, topic, expect):
        assert match_topic(pattern, topic) is expect
