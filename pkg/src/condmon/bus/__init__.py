"""Minimal pub/sub bus: framed wire protocol, broker, and client."""

from condmon.bus.protocol import (
    FrameKind,
    Frame,
    BadMagic,
    UnsupportedVersion,
    TruncatedBody,
    BodyTooLarge,
    encode_frame,
    FrameDecoder,
    match_topic,
    validate_pattern,
    encode_publish_body,
    decode_publish_body,
    encode_topic_body,
    decode_topic_body,
)
from condmon.bus.broker import Broker, Router, Subscription
from condmon.bus.client import BusClient, BrokerDisconnected, DEFAULT_ADDRESS

__all__ = [
    "FrameKind",
    "Frame",
    "BadMagic",
    "UnsupportedVersion",
    "TruncatedBody",
    "BodyTooLarge",
    "encode_frame",
    "FrameDecoder",
    "match_topic",
    "validate_pattern",
    "encode_publish_body",
    "decode_publish_body",
    "encode_topic_body",
    "decode_topic_body",
    "Broker",
    "Router",
    "Subscription",
    "BusClient",
    "BrokerDisconnected",
    "DEFAULT_ADDRESS",
]
