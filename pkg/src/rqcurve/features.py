"""Content, codec and anchor feature extraction.

Content features come straight from luma frames: grey-level co-occurrence
texture statistics, frame-difference motion statistics and three
no-reference quality proxies. Codec features are assembled from the
summary statistics of two fast pre-encodes. The anchor segment is the
(bitrate, VMAF) of one real encode at the anchor CRF.

Field layouts live in :mod:`rqcurve.schema`.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .codec import BackendError, EncodeResult, EncoderStats, encode_measure
from .core import DEFAULT_ANCHOR_CRF, GRID, AnchorPoint, FeatureVector, GridError, Sample
from .ingest import VideoClip, downsample_to_360p, read_y4m, write_y4m
from .schema import PRE_ENCODE_CRFS
from .schema import (
    CODEC_DIM, CONTENT_DIM, GLCM_OFFSETS, PER_ENCODE_FIELDS, PROPORTION_GROUPS,
)

__all__ = [
    "GlcmError",
    "CodecSchemaError",
    "GlcmStats",
    "TemporalStats",
    "SamplingConfig",
    "glcm",
    "glcm_stats",
    "temporal_stats",
    "frame_quality",
    "quality_proxies",
    "sample_indices",
    "extract_content",
    "assemble_codec_features",
    "assemble_anchor",
    "extract_record",
    "BLUR_CEILING",
    "BLOCKINESS_CEILING",
]

BLUR_CEILING = 1e3
BLOCKINESS_CEILING = 1e3
ZERO_MOTION_MAD = 0.5
_BLOCK_EPS = 1e-3
_LAPLACIAN_SIGMA_SCALE = math.sqrt(math.pi / 2.0) / 6.0


class GlcmError(ValueError):
    pass


class CodecSchemaError(ValueError):
    pass


class GlcmStats(NamedTuple):
    contrast: float
    energy: float
    entropy: float
    homogeneity: float
    correlation: float


class TemporalStats(NamedTuple):
    mean: float
    variance: float
    max: float
    zero_fraction: float
    valid: bool = True  # False when fewer than two frames were available


@dataclass(frozen=True)
class SamplingConfig:
    max_frames: int = 30
    glcm_levels: int = 16


# -- texture ---------------------------------------------------------------------


def _quantize(plane, levels):
    return (np.asarray(plane, dtype=np.int64) * levels) >> 8


def glcm(plane, offset=(1, 0), levels: int = 16) -> np.ndarray:
    """Normalized co-occurrence matrix of ``plane`` for pixel offset ``(dx, dy)``.

    Entry ``(a, b)`` is the probability that a pixel quantized to ``a`` has
    its offset neighbour quantized to ``b``. Samples are quantized
    uniformly over [0, 255].
    """
    if levels not in (2, 4, 8, 16, 32, 64, 128, 256):
        raise ValueError(f"levels must be a power of two up to 256, got {levels}")
    plane = np.asarray(plane)
    if plane.ndim != 2:
        raise GlcmError("plane must be 2-D")
    dx, dy = offset
    h, w = plane.shape
    if abs(dx) >= w or abs(dy) >= h:
        raise GlcmError(f"plane {w}x{h} too small for offset {offset}")
    q = _quantize(plane, levels)
    ys = slice(max(0, -dy), h - max(0, dy))
    xs = slice(max(0, -dx), w - max(0, dx))
    ys2 = slice(max(0, dy), h - max(0, -dy))
    xs2 = slice(max(0, dx), w - max(0, -dx))
    ref, nb = q[ys, xs], q[ys2, xs2]
    counts = np.bincount((ref * levels + nb).ravel(), minlength=levels * levels)
    total = counts.sum()
    if total == 0:
        raise GlcmError("no pixel pairs for this offset")
    return (counts / total).reshape(levels, levels)


def glcm_stats(p) -> GlcmStats:
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[0]
    a = np.arange(n, dtype=np.float64)[:, None]
    b = np.arange(n, dtype=np.float64)[None, :]
    diff = a - b
    contrast = float((p * diff ** 2).sum())
    energy = float((p ** 2).sum())
    nz = p[p > 0]
    entropy = float(-(nz * np.log2(nz)).sum())
    homogeneity = float((p / (1.0 + np.abs(diff))).sum())
    mu_a = float((p * a).sum())
    mu_b = float((p * b).sum())
    sd_a = math.sqrt(max(float((p * (a - mu_a) ** 2).sum()), 0.0))
    sd_b = math.sqrt(max(float((p * (b - mu_b) ** 2).sum()), 0.0))
    if sd_a < 1e-12 or sd_b < 1e-12:
        correlation = 0.0
    else:
        correlation = float((p * (a - mu_a) * (b - mu_b)).sum() / (sd_a * sd_b))
    return GlcmStats(contrast, energy, entropy, homogeneity, correlation)


# -- motion ------------------------------------------------------------------------


def _frames(clip_or_frames) -> np.ndarray:
    return clip_or_frames.frames if isinstance(clip_or_frames, VideoClip) else np.asarray(clip_or_frames)


def temporal_stats(clip, stride: int = 1) -> TemporalStats:
    """Statistics of the mean absolute difference between sampled frames.

    Frames ``0, stride, 2*stride, ...`` are compared pairwise in order. A pair
    counts as zero-motion when its MAD is below 0.5.
    """
    if stride < 1:
        raise ValueError("stride must be at least 1")
    frames = _frames(clip)[::stride]
    if frames.shape[0] < 2:
        return TemporalStats(0.0, 0.0, 0.0, 0.0, valid=False)
    f = frames.astype(np.int16)
    mad = np.abs(np.diff(f, axis=0)).mean(axis=(1, 2))
    return TemporalStats(float(mad.mean()), float(mad.var()), float(mad.max()),
                         float((mad < ZERO_MOTION_MAD).mean()))


# -- quality proxies ----------------------------------------------------------------------


def _laplacian_residual(f):
    # 3x3 kernel [[1,-2,1],[-2,4,-2],[1,-2,1]], valid region only
    return (f[:-2, :-2] - 2 * f[:-2, 1:-1] + f[:-2, 2:]
            - 2 * f[1:-1, :-2] + 4 * f[1:-1, 1:-1] - 2 * f[1:-1, 2:]
            + f[2:, :-2] - 2 * f[2:, 1:-1] + f[2:, 2:])


def _laplacian4(f):
    return f[:-2, 1:-1] + f[2:, 1:-1] + f[1:-1, :-2] + f[1:-1, 2:] - 4 * f[1:-1, 1:-1]


def frame_quality(frame) -> tuple:
    """``(noise_sigma, blockiness, blur)`` of one luma frame."""
    f = np.asarray(frame, dtype=np.float64)
    noise = _LAPLACIAN_SIGMA_SCALE * float(np.abs(_laplacian_residual(f)).mean())

    col_steps = np.abs(np.diff(f, axis=1))  # step between column x and x+1
    row_steps = np.abs(np.diff(f, axis=0))
    col_edge = (np.arange(1, f.shape[1]) % 8) == 0
    row_edge = (np.arange(1, f.shape[0]) % 8) == 0
    aligned = np.concatenate([col_steps[:, col_edge].ravel(), row_steps[row_edge, :].ravel()])
    other = np.concatenate([col_steps[:, ~col_edge].ravel(), row_steps[~row_edge, :].ravel()])
    a_mean = aligned.mean() if aligned.size else 0.0
    o_mean = other.mean() if other.size else 0.0
    # the epsilon makes a flat frame read 1.0 (no block structure either way)
    blockiness = min((a_mean + _BLOCK_EPS) / (o_mean + _BLOCK_EPS), BLOCKINESS_CEILING)

    luma_var = float(f.var())
    lap_var = float(_laplacian4(f).var())
    if luma_var == 0.0 or lap_var == 0.0:
        blur = BLUR_CEILING
    else:
        blur = min(luma_var / lap_var, BLUR_CEILING)
    return noise, float(blockiness), blur


def sample_indices(n_frames: int, max_frames: int = 30) -> np.ndarray:
    if n_frames <= max_frames:
        return np.arange(n_frames)
    return np.unique(np.rint(np.linspace(0, n_frames - 1, max_frames)).astype(int))


def quality_proxies(clip: VideoClip, max_frames: int = 30) -> tuple:
    frames = _frames(clip)
    if frames.shape[0] == 0:
        raise ValueError("clip has no frames")
    vals = np.array([frame_quality(frames[i]) for i in sample_indices(frames.shape[0], max_frames)])
    return tuple(float(v) for v in vals.mean(axis=0))


# -- content vector --------------------------------------------------------------------------


def _histogram_entropy(frames):
    counts = np.bincount(frames.ravel(), minlength=256).astype(np.float64)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum())


def extract_content(clip: VideoClip, config: SamplingConfig = SamplingConfig()) -> np.ndarray:
    """65-entry content feature vector in ``schema.CONTENT_FIELDS`` order."""
    frames = clip.frames
    idx = sample_indices(clip.frame_count, config.max_frames)
    sampled = frames[idx]

    texture = []
    quality = []
    for f in sampled:
        row = []
        for off in GLCM_OFFSETS.values():
            row.extend(glcm_stats(glcm(f, off, config.glcm_levels)))
        texture.append(row)
        quality.append(frame_quality(f))
    texture = np.asarray(texture)
    quality = np.asarray(quality)

    t1 = temporal_stats(clip, 1)
    t2 = temporal_stats(clip, 2)

    fl = sampled.astype(np.float64)
    globals_ = [
        float(fl.mean()),
        float(fl.var()),
        _histogram_entropy(sampled),
        float((np.diff(fl, axis=1) ** 2).mean()),
        float((np.diff(fl, axis=2) ** 2).mean()),
        float(clip.frame_rate),
        clip.duration,
        float(clip.width),
        float(clip.height),
        float(clip.width * clip.height),
        float(len(idx)),
    ]
    vec = np.concatenate([
        texture.mean(axis=0), texture.var(axis=0),
        quality.mean(axis=0), quality.var(axis=0),
        np.array(t1[:4]), np.array(t2[:4]),
        np.array(globals_),
    ])
    assert vec.size == CONTENT_DIM
    if not np.all(np.isfinite(vec)):
        raise FloatingPointError("content features contain non-finite values")
    return vec


# -- codec vector -----------------------------------------------------------------------------


def _require(stats: EncoderStats, name: str, value):
    if value is None:
        raise CodecSchemaError(f"encoder stats missing mandatory field {name!r}")
    return value


def _per_encode(stats: EncoderStats) -> np.ndarray:
    psnr = _require(stats, "psnr", stats.psnr)
    bitrate = _require(stats, "bitrate_kbps", stats.bitrate_kbps)
    vmaf = _require(stats, "vmaf", stats.vmaf)
    part = np.asarray(_require(stats, "partition_histogram", stats.partition_histogram), dtype=float)
    if part.size != 13:
        raise CodecSchemaError(f"partition histogram has {part.size} bins, expected 13")
    if bitrate <= 0:
        raise CodecSchemaError("bitrate_kbps must be positive")
    mv = stats.mv_magnitude or (0.0, 0.0)
    vec = np.concatenate([
        stats.frame_type_proportions,
        [stats.mean_qp], stats.qp_by_type,
        stats.bits_share,
        np.asarray(stats.frame_sizes) * 8.0 / 1000.0,
        psnr,
        [bitrate, math.log(bitrate), vmaf],
        part,
        stats.mode_proportions,
        [stats.skip_in_p, stats.skip_in_b],
        mv,
        stats.transform_8x8,
        stats.coded,
        stats.b_direction,
        stats.i16_modes,
    ]).astype(np.float64)
    assert vec.size == len(PER_ENCODE_FIELDS)
    for group, names in PROPORTION_GROUPS.items():
        pos = [PER_ENCODE_FIELDS.index(n) for n in names]
        total = vec[pos].sum()
        if not 0.99 <= total <= 1.01:
            raise CodecSchemaError(f"proportion group {group!r} sums to {total:.4f}")
        vec[pos] /= total
    return vec


def assemble_codec_features(stats_low: EncoderStats, stats_high: EncoderStats) -> np.ndarray:
    """113-entry codec vector from the CRF 18 (``stats_low``) and CRF 33 pre-encodes."""
    low, high = _per_encode(stats_low), _per_encode(stats_high)
    ratio = math.log(stats_low.bitrate_kbps / stats_high.bitrate_kbps)
    vec = np.concatenate([low, high, [ratio]])
    assert vec.size == CODEC_DIM
    if not np.all(np.isfinite(vec)):
        raise CodecSchemaError("codec features contain non-finite values")
    return vec


def assemble_anchor(result: EncodeResult, anchor_crf: float = DEFAULT_ANCHOR_CRF, grid=GRID):
    """``(AnchorPoint, segment)`` from the anchor encode's measurement."""
    try:
        grid.index_of(anchor_crf)
    except GridError as exc:
        raise ValueError(f"anchor CRF {anchor_crf} is not a grid point") from exc
    if abs(result.crf - anchor_crf) > 1e-6:
        raise ValueError(f"encode ran at CRF {result.crf}, anchor is {anchor_crf}")
    point = AnchorPoint(float(anchor_crf), result.bitrate, result.vmaf)
    return point, point.segment()


def _measure(backend, path, clip: VideoClip, crf, check_range):
    return encode_measure(backend, path, crf, check_range=check_range,
                          frame_rate=float(clip.frame_rate), frame_count=clip.frame_count,
                          width=clip.width, height=clip.height)


def extract_record(video_path, backend, pre_backend=None, anchor_crf: float = DEFAULT_ANCHOR_CRF,
                   sampling: SamplingConfig = SamplingConfig()) -> Sample:
    """Full feature record for one Y4M file.

    Two pre-encodes of the 360p downsample at CRF 18 and 33 supply the codec
    features; one encode of the source at ``anchor_crf`` supplies the anchor.
    ``pre_backend`` defaults to ``backend``.
    """
    pre_backend = pre_backend or backend
    clip = read_y4m(video_path)
    small = downsample_to_360p(clip)
    with tempfile.TemporaryDirectory(prefix="rqcurve-extract-") as tmp:
        small_path = os.path.join(tmp, "360p.y4m")
        with open(small_path, "wb") as fh:
            fh.write(write_y4m(small))
        pre = [_measure(pre_backend, small_path, small, crf, False) for crf in PRE_ENCODE_CRFS]
    for res in pre:
        if res.stats is None:
            raise BackendError(f"pre-encode at CRF {res.crf} produced no parsable stats log")
    codec = assemble_codec_features(pre[0].stats, pre[1].stats)
    anchor, segment = assemble_anchor(_measure(backend, video_path, clip, anchor_crf, True),
                                      anchor_crf)
    content = extract_content(small, sampling)
    rid = os.path.splitext(os.path.basename(str(video_path)))[0]
    return Sample(rid, FeatureVector(codec, content, segment), anchor)
