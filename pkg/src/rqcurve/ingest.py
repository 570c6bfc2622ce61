"""Raw video input: Y4M and headerless planar YUV, luma only.

Only the Y plane is kept; chroma payloads are skipped using the sizes the
chroma tag implies. High-bit-depth streams are rejected.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from fractions import Fraction
from typing import BinaryIO, Union

import numpy as np

__all__ = [
    "VideoClip",
    "Y4MParseError",
    "parse_y4m",
    "read_y4m",
    "write_y4m",
    "read_raw_yuv",
    "downsample_to_360p",
    "box_resize",
    "chroma_plane_bytes",
]

Y4M_SIGNATURE = b"YUV4MPEG2"
FRAME_TAG = b"FRAME"
MIN_SIDE = 16


class Y4MParseError(ValueError):
    def __init__(self, message, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class VideoClip:
    width: int
    height: int
    frame_rate: Fraction
    frames: np.ndarray  # (frame_count, height, width) uint8 luma

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 3 or frames.shape[0] < 1:
            raise ValueError("clip needs at least one 2-D luma frame")
        if frames.shape[1:] != (self.height, self.width):
            raise ValueError(f"frames are {frames.shape[1:]}, header says {(self.height, self.width)}")
        if self.width < MIN_SIDE or self.height < MIN_SIDE:
            raise ValueError(f"clip must be at least {MIN_SIDE}x{MIN_SIDE}")
        if frames.dtype != np.uint8:
            raise ValueError("luma samples must be 8-bit")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "frame_rate", Fraction(self.frame_rate))

    @property
    def frame_count(self) -> int:
        return int(self.frames.shape[0])

    @property
    def duration(self) -> float:
        return self.frame_count / float(self.frame_rate) if self.frame_rate else 0.0


def chroma_plane_bytes(width: int, height: int, chroma: str) -> int:
    """Bytes of chroma payload per frame for a Y4M C tag (both planes)."""
    c = chroma.lower()
    if c.startswith("420"):
        return 2 * ((width + 1) // 2) * ((height + 1) // 2)
    if c.startswith("422"):
        return 2 * ((width + 1) // 2) * height
    if c.startswith("444") and c != "444alpha":
        return 2 * width * height
    if c == "444alpha":
        return 3 * width * height
    if c.startswith("mono"):
        return 0
    raise ValueError(f"unsupported chroma tag C{chroma}")


def _bit_depth(chroma: str) -> int:
    c = chroma.lower()
    if "p" in c and c.rsplit("p", 1)[-1].isdigit():
        return int(c.rsplit("p", 1)[-1])
    if c.startswith("mono") and c[4:].isdigit():
        return int(c[4:])
    return 8


def parse_y4m(stream: Union[bytes, bytearray, BinaryIO]) -> VideoClip:
    """Parse a whole Y4M stream into a luma-only :class:`VideoClip`."""
    data = bytes(stream) if isinstance(stream, (bytes, bytearray)) else stream.read()
    if not data.startswith(Y4M_SIGNATURE):
        raise Y4MParseError("missing YUV4MPEG2 signature", 0)
    eol = data.find(b"\n")
    if eol < 0:
        raise Y4MParseError("header is not newline-terminated", len(data))
    width = height = None
    rate = Fraction(25, 1)
    chroma = "420"
    for tok in data[len(Y4M_SIGNATURE):eol].split():
        key, val = chr(tok[0]), tok[1:].decode("ascii", "replace")
        try:
            if key == "W":
                width = int(val)
            elif key == "H":
                height = int(val)
            elif key == "F":
                num, den = val.split(":")
                rate = Fraction(int(num), int(den))
            elif key == "C":
                chroma = val
        except (ValueError, ZeroDivisionError) as exc:
            raise Y4MParseError(f"bad header tag {tok!r}", 0) from exc
    if width is None or height is None:
        raise Y4MParseError("header lacks W or H", 0)
    depth = _bit_depth(chroma)
    if depth > 8:
        raise Y4MParseError(f"unsupported bit depth {depth} (C{chroma})", 0)
    try:
        skip = chroma_plane_bytes(width, height, chroma)
    except ValueError as exc:
        raise Y4MParseError(str(exc), 0) from exc

    luma = width * height
    frames = []
    pos = eol + 1
    while pos < len(data):
        if not data.startswith(FRAME_TAG, pos):
            raise Y4MParseError(f"expected FRAME marker for frame {len(frames)}", pos)
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise Y4MParseError(f"unterminated FRAME header for frame {len(frames)}", pos)
        start = nl + 1
        end = start + luma + skip
        if end > len(data):
            raise Y4MParseError(f"truncated frame {len(frames)}", start)
        frames.append(np.frombuffer(data, dtype=np.uint8, count=luma, offset=start)
                      .reshape(height, width))
        pos = end
    if not frames:
        raise Y4MParseError("stream holds no frames", pos)
    return VideoClip(width, height, rate, np.stack(frames))


def read_y4m(path) -> VideoClip:
    with open(path, "rb") as fh:
        return parse_y4m(fh)


def write_y4m(clip: VideoClip, chroma: str = "420") -> bytes:
    """Serialize ``clip`` as Y4M with neutral (128) chroma planes."""
    fr = clip.frame_rate
    out = io.BytesIO()
    out.write(b"YUV4MPEG2 W%d H%d F%d:%d Ip A1:1 C%s\n"
              % (clip.width, clip.height, fr.numerator, fr.denominator, chroma.encode()))
    pad = b"\x80" * chroma_plane_bytes(clip.width, clip.height, chroma)
    for f in clip.frames:
        out.write(FRAME_TAG + b"\n")
        out.write(np.ascontiguousarray(f, dtype=np.uint8).tobytes())
        out.write(pad)
    return out.getvalue()


def read_raw_yuv(stream, width: int, height: int, frame_rate=Fraction(30), chroma: str = "420"):
    """Headerless planar 8-bit YUV; dimensions and rate come from the caller."""
    data = bytes(stream) if isinstance(stream, (bytes, bytearray)) else stream.read()
    frame_bytes = width * height + chroma_plane_bytes(width, height, chroma)
    n, rem = divmod(len(data), frame_bytes)
    if n == 0 or rem:
        raise Y4MParseError(f"raw stream is not a whole number of {frame_bytes}-byte frames",
                            n * frame_bytes)
    frames = [np.frombuffer(data, dtype=np.uint8, count=width * height, offset=i * frame_bytes)
              .reshape(height, width) for i in range(n)]
    return VideoClip(width, height, Fraction(frame_rate), np.stack(frames))


def _area_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Row-stochastic overlap weights mapping ``n_in`` cells onto ``n_out``."""
    edges_out = np.arange(n_out + 1) * (n_in / n_out)
    lo = np.maximum(edges_out[:-1, None], np.arange(n_in)[None, :])
    hi = np.minimum(edges_out[1:, None], np.arange(1, n_in + 1)[None, :])
    w = np.clip(hi - lo, 0.0, None)
    return w / w.sum(axis=1, keepdims=True)


def box_resize(frames: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Area-average resize of a (T, H, W) uint8 stack."""
    rh = _area_matrix(out_h, frames.shape[1])
    rw = _area_matrix(out_w, frames.shape[2])
    out = np.einsum("oh,thw,pw->top", rh, frames.astype(np.float64), rw, optimize=True)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def downsample_to_360p(clip: VideoClip) -> VideoClip:
    if clip.height <= 360:
        return clip
    out_h = 360
    out_w = max(2, int(round(clip.width * out_h / clip.height / 2.0)) * 2)
    return VideoClip(out_w, out_h, clip.frame_rate, box_resize(clip.frames, out_h, out_w))
