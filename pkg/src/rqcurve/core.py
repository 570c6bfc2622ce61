"""Domain types for the discretized CRF axis and rate-quality curves."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "CrfGrid",
    "GRID",
    "RateQualityCurve",
    "AnchorPoint",
    "FeatureVector",
    "GridError",
    "Sample",
    "crf_of",
    "index_of",
    "derive_rate_quality_pairs",
    "interpolate",
    "clamp_curve",
    "BITRATE_FLOOR",
    "DEFAULT_ANCHOR_CRF",
]

BITRATE_FLOOR = 1e-3
DEFAULT_ANCHOR_CRF = 30.4


class GridError(ValueError):
    """Raised for out-of-range indices and off-grid CRF values."""


@dataclass(frozen=True)
class CrfGrid:
    """Uniform CRF axis stored in integer quanta of ``step``.

    Points are ``min_crf + i * step`` for ``i in range(count)``; the
    default grid covers [20, 40] at 0.2 with 101 points.
    """

    min_crf: float = 20.0
    max_crf: float = 40.0
    step: float = 0.2

    def __post_init__(self):
        if self.step <= 0 or self.max_crf <= self.min_crf:
            raise GridError("grid needs step > 0 and max_crf > min_crf")
        span = (self.max_crf - self.min_crf) / self.step
        if abs(span - round(span)) > 1e-9:
            raise GridError("grid span is not a whole number of steps")

    @property
    def count(self) -> int:
        return int(round((self.max_crf - self.min_crf) / self.step)) + 1

    @property
    def values(self) -> np.ndarray:
        return np.array([self.crf_of(i) for i in range(self.count)])

    def crf_of(self, index: int) -> float:
        index = int(index)
        if not 0 <= index < self.count:
            raise GridError(f"grid index {index} outside [0, {self.count})")
        # round to one decimal of the step quantum so 20 + 52*0.2 is 30.4, not 30.400000000000002
        return round(self.min_crf + index * self.step, 10)

    def index_of(self, crf: float, tol: float = 1e-6) -> int:
        pos = (float(crf) - self.min_crf) / self.step
        idx = int(round(pos))
        if not 0 <= idx < self.count or abs(pos - idx) * self.step > tol:
            raise GridError(f"CRF {crf} is not on the grid")
        return idx

    def __len__(self):
        return self.count


GRID = CrfGrid()


def crf_of(grid: CrfGrid, index: int) -> float:
    return grid.crf_of(index)


def index_of(grid: CrfGrid, crf: float) -> int:
    return grid.index_of(crf)


def _as_vector(values, name: str, length: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.shape != (length,):
        raise ValueError(f"{name} must have {length} entries, got {arr.size}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RateQualityCurve:
    """VMAF and bitrate (kbps) sampled at every grid CRF."""

    vmaf: np.ndarray
    bitrate: np.ndarray
    grid: CrfGrid = field(default=GRID, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vmaf", _as_vector(self.vmaf, "vmaf", self.grid.count))
        object.__setattr__(self, "bitrate", _as_vector(self.bitrate, "bitrate", self.grid.count))

    @classmethod
    def from_flat(cls, flat, grid: CrfGrid = GRID) -> "RateQualityCurve":
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        n = grid.count
        if flat.size != 2 * n:
            raise ValueError(f"flat curve must have {2 * n} entries, got {flat.size}")
        return cls(flat[:n], flat[n:], grid)

    def flat(self) -> np.ndarray:
        """VMAF channel followed by the bitrate channel (202 entries by default)."""
        return np.concatenate([self.vmaf, self.bitrate])

    @property
    def crf(self) -> np.ndarray:
        return self.grid.values

    def __eq__(self, other):
        if not isinstance(other, RateQualityCurve):
            return NotImplemented
        return np.array_equal(self.vmaf, other.vmaf) and np.array_equal(self.bitrate, other.bitrate)

    __hash__ = None


@dataclass(frozen=True)
class AnchorPoint:
    """Measured bitrate and VMAF from one real encode at an on-grid CRF."""

    crf: float
    bitrate: float
    vmaf: float

    def __post_init__(self):
        if not (np.isfinite(self.bitrate) and np.isfinite(self.vmaf)):
            raise ValueError("anchor measurement must be finite")
        if self.bitrate <= 0:
            raise ValueError(f"anchor bitrate must be positive, got {self.bitrate}")
        if not 0.0 <= self.vmaf <= 100.0:
            raise ValueError(f"anchor VMAF must lie in [0, 100], got {self.vmaf}")

    def index(self, grid: CrfGrid = GRID) -> int:
        return grid.index_of(self.crf)

    def segment(self) -> np.ndarray:
        return np.array([self.bitrate, self.vmaf], dtype=np.float64)


@dataclass(frozen=True)
class FeatureVector:
    """Codec, content and (optional) anchor feature segments for one video."""

    codec: np.ndarray
    content: np.ndarray
    anchor: Optional[np.ndarray] = None

    def __post_init__(self):
        codec = np.array(self.codec, dtype=np.float64).reshape(-1)
        content = np.array(self.content, dtype=np.float64).reshape(-1)
        for name, arr in (("codec", codec), ("content", content)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} segment contains non-finite values")
            arr.setflags(write=False)
        object.__setattr__(self, "codec", codec)
        object.__setattr__(self, "content", content)
        if self.anchor is not None:
            anchor = np.array(self.anchor, dtype=np.float64).reshape(-1)
            if anchor.shape != (2,):
                raise ValueError("anchor segment must hold (bitrate, vmaf)")
            anchor.setflags(write=False)
            object.__setattr__(self, "anchor", anchor)

    def vector(self, with_anchor: bool = True) -> np.ndarray:
        parts = [self.codec, self.content]
        if with_anchor:
            if self.anchor is None:
                raise ValueError("feature vector has no anchor segment")
            parts.append(self.anchor)
        return np.concatenate(parts)

    @property
    def dims(self) -> tuple:
        return (self.codec.size, self.content.size, 0 if self.anchor is None else 2)

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        same_anchor = (self.anchor is None and other.anchor is None) or (
            self.anchor is not None and other.anchor is not None
            and np.array_equal(self.anchor, other.anchor)
        )
        return (np.array_equal(self.codec, other.codec)
                and np.array_equal(self.content, other.content) and same_anchor)

    __hash__ = None


def derive_rate_quality_pairs(curve: RateQualityCurve) -> list:
    """(bitrate, vmaf) pairs in ascending-CRF order, one per grid point."""
    return list(zip(curve.bitrate.tolist(), curve.vmaf.tolist()))


def interpolate(curve: RateQualityCurve, crf) -> tuple:
    """Linear ``(vmaf, bitrate)`` at off-grid CRF values inside the grid range."""
    crf = np.asarray(crf, dtype=np.float64)
    g = curve.grid
    if np.any(crf < g.min_crf - 1e-9) or np.any(crf > g.max_crf + 1e-9):
        raise GridError(f"CRF outside [{g.min_crf}, {g.max_crf}]")
    x = curve.crf
    return np.interp(crf, x, curve.vmaf), np.interp(crf, x, curve.bitrate)


def clamp_curve(curve: RateQualityCurve) -> RateQualityCurve:
    if not (np.all(np.isfinite(curve.vmaf)) and np.all(np.isfinite(curve.bitrate))):
        raise FloatingPointError("curve contains non-finite entries")
    return RateQualityCurve(
        np.clip(curve.vmaf, 0.0, 100.0),
        np.maximum(curve.bitrate, BITRATE_FLOOR),
        curve.grid,
    )


@dataclass(frozen=True)
class Sample:
    """One video's features with its anchor and, when labelled, its true curve."""

    id: str
    features: FeatureVector
    anchor: Optional[AnchorPoint] = None
    truth: Optional[RateQualityCurve] = None
