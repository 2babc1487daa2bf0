"""Indexed record/replay files (.cmbag)."""

from condmon.bag.format import (
    BadMagic,
    BagError,
    CorruptIndex,
    EXTENSION,
    TruncatedChunk,
)
from condmon.bag.reader import BagInfo, BagReader, StreamSummary, bag_info, read_bag
from condmon.bag.writer import BagWriter, Recorder
from condmon.bag.player import PlaybackHandle, play_bag

__all__ = [
    "BadMagic", "BagError", "CorruptIndex", "EXTENSION", "TruncatedChunk",
    "BagInfo", "BagReader", "StreamSummary", "bag_info", "read_bag",
    "BagWriter", "Recorder", "PlaybackHandle", "play_bag",
]
