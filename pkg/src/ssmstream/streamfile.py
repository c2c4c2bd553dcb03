"""Binary token-stream file format and the run-configuration document.

A stream file is a 20-byte header (magic, version, channel count, declared
frame count) followed by tightly packed float32 little-endian frames. A
declared frame count of 0 means open-ended: readers consume to end of file.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FormatError

__all__ = [
    "STREAM_MAGIC",
    "STREAM_VERSION",
    "StreamHeader",
    "StreamWriter",
    "StreamReader",
    "RunConfig",
    "parse_run_config",
]

STREAM_MAGIC = b"STSS"
STREAM_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")  # magic, version, channels, frame_count


@dataclass(frozen=True)
class StreamHeader:
    channels: int
    frame_count: int  # 0 = unknown / open-ended

    def pack(self) -> bytes:
        return _HEADER.pack(STREAM_MAGIC, STREAM_VERSION, self.channels,
                            self.frame_count)


class StreamWriter:
    """Incremental stream writer; frames are appended in blocks."""

    def __init__(self, path, channels: int, frame_count: int = 0):
        if channels < 1:
            raise FormatError("stream needs at least one channel")
        self.channels = channels
        self.frames_written = 0
        self.declared = frame_count
        self._fh = open(path, "wb")
        self._fh.write(StreamHeader(channels, frame_count).pack())

    def write_block(self, block: np.ndarray) -> None:
        """Append a [H, m] block of frames."""
        block = np.asarray(block)
        if block.ndim != 2 or block.shape[0] != self.channels:
            raise FormatError(
                f"block must have shape [{self.channels}, m], got {block.shape}"
            )
        # frames are stored frame-major: all channels of frame t, then t+1
        self._fh.write(np.ascontiguousarray(block.T, dtype="<f4").tobytes())
        self.frames_written += block.shape[1]

    def close(self) -> None:
        self._fh.close()
        if self.declared and self.frames_written != self.declared:
            raise FormatError(
                f"declared {self.declared} frames but wrote {self.frames_written}"
            )

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class StreamReader:
    """Sequential stream reader with frame-accurate seeking."""

    def __init__(self, path):
        self._fh = open(path, "rb")
        raw = self._fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise FormatError(
                f"stream header truncated at byte {len(raw)} "
                f"(need {_HEADER.size})"
            )
        magic, version, channels, frame_count = _HEADER.unpack(raw)
        if magic != STREAM_MAGIC:
            raise FormatError(f"bad stream magic {magic!r} at byte 0")
        if version != STREAM_VERSION:
            raise FormatError(f"unsupported stream version {version} at byte 4")
        if channels < 1:
            raise FormatError(f"invalid channel count {channels} at byte 8")
        self.channels = channels
        self.frame_count = frame_count
        self._frame_bytes = 4 * channels
        self._pos = 0

    def read_frames(self, max_frames: int) -> np.ndarray:
        """Next up-to-max_frames frames as a float64 [H, m] block (m may be 0)."""
        raw = self._fh.read(max_frames * self._frame_bytes)
        if len(raw) % self._frame_bytes:
            offset = _HEADER.size + self._pos * self._frame_bytes + len(raw)
            raise FormatError(f"stream payload truncated at byte {offset}")
        m = len(raw) // self._frame_bytes
        self._pos += m
        if m < max_frames and self.frame_count and self._pos != self.frame_count:
            offset = _HEADER.size + self._pos * self._frame_bytes
            raise FormatError(
                f"stream ends at byte {offset} ({self._pos} frames) but the "
                f"header declares {self.frame_count}"
            )
        if m == 0:
            return np.empty((self.channels, 0))
        frames = np.frombuffer(raw, dtype="<f4").reshape(m, self.channels)
        return np.ascontiguousarray(frames.T, dtype=np.float64)

    def seek_to_frame(self, frame: int) -> None:
        self._fh.seek(_HEADER.size + frame * self._frame_bytes)
        self._pos = frame

    @property
    def frames_read(self) -> int:
        return self._pos

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


_CONFIG_KEYS = {
    "state_size", "channels", "dt_min", "dt_max", "seed", "segment_len",
    "readout_policy", "declared_total",
}
_REQUIRED_KEYS = {"state_size", "channels", "seed", "segment_len"}
_POLICIES = ("all", "last_per_segment", "final")


@dataclass(frozen=True)
class RunConfig:
    state_size: int
    channels: int
    seed: int
    segment_len: int
    dt_min: float = 0.001
    dt_max: float = 0.1
    readout_policy: str = "last_per_segment"
    declared_total: int | None = None


def parse_run_config(text: str) -> RunConfig:
    """Strictly parse a run-configuration JSON document.

    Unknown keys are rejected outright: a silently ignored typo in an
    experiment config is worse than a hard failure.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    missing = _REQUIRED_KEYS - set(doc)
    if missing:
        raise ConfigurationError(f"missing config keys: {sorted(missing)}")
    cfg = RunConfig(**doc)
    if cfg.readout_policy not in _POLICIES:
        raise ConfigurationError(
            f"readout_policy must be one of {_POLICIES}, got "
            f"{cfg.readout_policy!r}"
        )
    for key in ("state_size", "channels", "segment_len"):
        v = getattr(cfg, key)
        if not isinstance(v, int) or v < 1:
            raise ConfigurationError(f"{key} must be a positive integer")
    if cfg.declared_total is not None and (
        not isinstance(cfg.declared_total, int) or cfg.declared_total < 1
    ):
        raise ConfigurationError("declared_total must be a positive integer")
    return cfg
