"""Raw video loading (Y4M and headerless planar YUV) and luma fidelity metrics.

Only the luma plane is kept: the partition search operates on luma, and chroma
would add I/O complexity without exercising anything downstream.  8-bit samples
only; frame dimensions must be multiples of 8 so every 8x8 map cell is fully
covered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PSNR_CAP_DB = 100.0

_CHROMA_FACTOR = {
    "420": 0.5,  # two quarter-size planes per frame
    "400": 0.0,  # monochrome
}


class VideoFormatError(ValueError):
    """Raised for malformed headers, bad dimensions, or truncated payloads."""


@dataclass(frozen=True)
class FrameBuffer:
    """One luma plane: 8-bit samples in a read-only (height, width) array."""

    width: int
    height: int
    samples: np.ndarray

    def __post_init__(self):
        if self.samples.dtype != np.uint8:
            raise VideoFormatError("samples must be 8-bit")
        if self.samples.shape != (self.height, self.width):
            raise VideoFormatError(
                f"samples shape {self.samples.shape} does not match "
                f"{self.height}x{self.width}"
            )
        if self.width % 8 or self.height % 8:
            raise VideoFormatError("dimensions must be multiples of 8")
        self.samples.flags.writeable = False


@dataclass(frozen=True)
class VideoSequence:
    """Frames in display order, all with identical dimensions."""

    frames: list[FrameBuffer]
    frame_rate: float = 30.0

    def __post_init__(self):
        dims = {(f.width, f.height) for f in self.frames}
        if len(dims) > 1:
            raise VideoFormatError(f"frames disagree on dimensions: {sorted(dims)}")

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height


def _frame_from_bytes(payload: bytes, width: int, height: int) -> FrameBuffer:
    luma = np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
    return FrameBuffer(width=width, height=height, samples=luma)


def _check_dims(width: int, height: int):
    if width <= 0 or height <= 0:
        raise VideoFormatError(f"bad dimensions {width}x{height}")
    if width % 8 or height % 8:
        raise VideoFormatError(
            f"dimensions must be multiples of 8, got {width}x{height}"
        )


def load_y4m(path) -> VideoSequence:
    """Load a YUV4MPEG2 file, keeping luma only.

    4:2:0 and monochrome colourspaces are accepted; chroma bytes are skipped.
    """
    with open(path, "rb") as fh:
        data = fh.read()

    eol = data.find(b"\n")
    if eol < 0 or not data.startswith(b"YUV4MPEG2"):
        raise VideoFormatError(f"{path}: not a YUV4MPEG2 stream")
    header = data[:eol].decode("ascii", errors="replace")

    width = height = None
    fps = 30.0
    chroma = "420"  # Y4M default when no C tag is present
    for token in header.split()[1:]:
        tag, val = token[0], token[1:]
        if tag == "W":
            width = int(val)
        elif tag == "H":
            height = int(val)
        elif tag == "F":
            num, den = val.split(":")
            fps = int(num) / int(den)
        elif tag == "C":
            if "p1" in val:  # C420p10 and friends
                raise VideoFormatError(f"{path}: only 8-bit input is supported (C{val})")
            if val.startswith("420"):
                chroma = "420"
            elif val == "mono":
                chroma = "400"
            else:
                raise VideoFormatError(f"{path}: unsupported colourspace C{val}")
    if width is None or height is None:
        raise VideoFormatError(f"{path}: header missing W or H")
    _check_dims(width, height)

    luma_size = width * height
    stride = luma_size + int(luma_size * _CHROMA_FACTOR[chroma])
    frames = []
    pos = eol + 1
    while pos < len(data):
        frame_eol = data.find(b"\n", pos)
        if frame_eol < 0 or not data[pos:frame_eol].startswith(b"FRAME"):
            raise VideoFormatError(f"{path}: missing FRAME marker at frame {len(frames)}")
        start = frame_eol + 1
        if start + stride > len(data):
            raise VideoFormatError(f"{path}: truncated payload at frame {len(frames)}")
        frames.append(_frame_from_bytes(data[start : start + luma_size], width, height))
        pos = start + stride
    return VideoSequence(frames=frames, frame_rate=fps)


def load_raw(path, width: int, height: int, count: int, chroma_format: str = "420") -> VideoSequence:
    """Load headerless planar YUV: `count` frames of `width`x`height` luma.

    `chroma_format` ("420" or "400") only affects the per-frame skip stride.
    """
    if chroma_format not in _CHROMA_FACTOR:
        raise VideoFormatError(f"unsupported chroma format {chroma_format!r}")
    _check_dims(width, height)
    if count < 1:
        raise VideoFormatError("frame count must be >= 1")

    luma_size = width * height
    stride = luma_size + int(luma_size * _CHROMA_FACTOR[chroma_format])
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < count * stride:
        raise VideoFormatError(
            f"{path}: size mismatch, need {count * stride} bytes for "
            f"{count} frames but file has {len(data)}"
        )
    frames = [
        _frame_from_bytes(data[i * stride : i * stride + luma_size], width, height)
        for i in range(count)
    ]
    return VideoSequence(frames=frames)


def write_y4m(path, seq: VideoSequence):
    """Write a monochrome Y4M file (test fixtures and synthetic inputs)."""
    num = int(round(seq.frame_rate))
    with open(path, "wb") as fh:
        fh.write(f"YUV4MPEG2 W{seq.width} H{seq.height} F{num}:1 Ip A1:1 Cmono\n".encode())
        for frame in seq.frames:
            fh.write(b"FRAME\n")
            fh.write(frame.samples.tobytes())


def psnr(reference: FrameBuffer, test: FrameBuffer) -> float:
    """Luma PSNR in dB; lossless pairs return the 100.0 dB sentinel cap."""
    if (reference.width, reference.height) != (test.width, test.height):
        raise ValueError(
            f"dimension mismatch: {reference.width}x{reference.height} vs "
            f"{test.width}x{test.height}"
        )
    diff = reference.samples.astype(np.int64) - test.samples.astype(np.int64)
    sse = int(np.sum(diff * diff))
    if sse == 0:
        return PSNR_CAP_DB
    mse = sse / diff.size
    return 10.0 * math.log10(255.0 * 255.0 / mse)
