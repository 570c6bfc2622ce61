"""Simulated codec: a parametric ground-truth oracle for curves and features.

Each synthetic video is an 8-dim standard-normal latent ``z``. A fixed
affine map squashed into bounded ranges turns ``z`` into curve parameters

* ``v_mid`` in [32, 44]: CRF at which VMAF drops to 50,
* ``k`` in [0.15, 0.45]: logistic steepness,
* ``r20`` in [1000, 20000] kbps: bitrate at CRF 20 (log-spaced),
* ``rho`` in [0.08, 0.20]: exponential bitrate decay per CRF unit,

and the closed forms::

    vmaf(crf)    = 100 / (1 + exp(k * (crf - v_mid)))
    bitrate(crf) = r20 * exp(-rho * (crf - 20))

Feature segments are fixed random linear maps of ``z`` plus Gaussian noise.
The latent drivers of ``v_mid`` and ``k`` have correlation -0.9, so the VMAF
curves form a near one-parameter family. Noisy features pin that family
member only loosely, while the exact anchor measurement pins it tightly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .codec import EncodeResult, EncoderStats, format_stats_log
from .core import (
    DEFAULT_ANCHOR_CRF, GRID, AnchorPoint, CrfGrid, FeatureVector, RateQualityCurve, Sample,
)
from .schema import CODEC_DIM, CONTENT_DIM

__all__ = [
    "LATENT_DIM",
    "DEFAULT_NOISE",
    "theta_from_latent",
    "oracle_anchor",
    "make_sample",
    "Theta",
    "LatentVideo",
    "vmaf_gt",
    "bitrate_gt",
    "oracle_curve",
    "synth_features",
    "synth_dataset",
    "synth_stats",
    "stats_log",
    "SimCodecBackend",
]

LATENT_DIM = 8
DEFAULT_NOISE = 0.3

_MAP_SEED = 0x5EED_C0DE
_RANGES = {
    "v_mid": (32.0, 44.0),
    "k": (0.15, 0.45),
    "r20": (1000.0, 20000.0),
    "rho": (0.08, 0.20),
}
# correlation between the latent drivers of v_mid and k
_MID_STEEPNESS_CORR = -0.9


class Theta(NamedTuple):
    v_mid: float
    k: float
    r20: float
    rho: float


def _maps():
    rng = np.random.default_rng(_MAP_SEED)
    theta_map = rng.standard_normal((4, LATENT_DIM))
    theta_map /= np.linalg.norm(theta_map, axis=1, keepdims=True)
    # k shares most of its driver with v_mid, as real VMAF curves form a near one-parameter family
    perp = theta_map[1] - np.dot(theta_map[1], theta_map[0]) * theta_map[0]
    perp /= np.linalg.norm(perp)
    rho = _MID_STEEPNESS_CORR
    theta_map[1] = rho * theta_map[0] + np.sqrt(1 - rho ** 2) * perp
    codec_map = rng.standard_normal((CODEC_DIM, LATENT_DIM))
    content_map = rng.standard_normal((CONTENT_DIM, LATENT_DIM))
    # unit-scale each feature (variance 1 over z ~ N(0, I))
    codec_map /= np.linalg.norm(codec_map, axis=1, keepdims=True)
    content_map /= np.linalg.norm(content_map, axis=1, keepdims=True)
    stats_map = rng.standard_normal((24, LATENT_DIM)) / np.sqrt(LATENT_DIM)
    return theta_map, codec_map, content_map, stats_map


_THETA_MAP, _CODEC_MAP, _CONTENT_MAP, _STATS_MAP = _maps()


def _squash(u):
    return 1.0 / (1.0 + np.exp(-1.5 * u))


def theta_from_latent(z) -> Theta:
    s = _squash(_THETA_MAP @ np.asarray(z, dtype=np.float64))
    lo_v, hi_v = _RANGES["v_mid"]
    lo_k, hi_k = _RANGES["k"]
    lo_r, hi_r = _RANGES["r20"]
    lo_p, hi_p = _RANGES["rho"]
    return Theta(
        v_mid=lo_v + (hi_v - lo_v) * s[0],
        k=lo_k + (hi_k - lo_k) * s[1],
        r20=lo_r * (hi_r / lo_r) ** s[2],
        rho=lo_p + (hi_p - lo_p) * s[3],
    )


@dataclass(frozen=True)
class LatentVideo:
    seed: int
    z: np.ndarray
    theta: Theta

    @classmethod
    def from_seed(cls, seed: int) -> "LatentVideo":
        z = np.random.default_rng([int(seed), 0]).standard_normal(LATENT_DIM)
        z.setflags(write=False)
        return cls(int(seed), z, theta_from_latent(z))

    @property
    def id(self) -> str:
        return f"sim-{self.seed}"


def vmaf_gt(theta: Theta, crf):
    crf = np.asarray(crf, dtype=np.float64)
    x = np.clip(theta.k * (crf - theta.v_mid), -700.0, 700.0)
    out = np.clip(100.0 / (1.0 + np.exp(x)), 0.0, 100.0)
    return float(out) if out.ndim == 0 else out


def bitrate_gt(theta: Theta, crf):
    crf = np.asarray(crf, dtype=np.float64)
    out = theta.r20 * np.exp(-theta.rho * (crf - 20.0))
    return float(out) if out.ndim == 0 else out


def oracle_curve(theta: Theta, grid: CrfGrid = GRID) -> RateQualityCurve:
    crfs = grid.values
    return RateQualityCurve(vmaf_gt(theta, crfs), bitrate_gt(theta, crfs), grid)


def oracle_anchor(latent: LatentVideo, anchor_crf: float = DEFAULT_ANCHOR_CRF) -> AnchorPoint:
    return AnchorPoint(anchor_crf, bitrate_gt(latent.theta, anchor_crf),
                       vmaf_gt(latent.theta, anchor_crf))


def synth_features(latent: LatentVideo, noise_sigma: float = DEFAULT_NOISE,
                   anchor_crf: Optional[float] = DEFAULT_ANCHOR_CRF) -> FeatureVector:
    """Noisy codec/content segments plus the exact anchor measurement.

    Pass ``anchor_crf=None`` to omit the anchor segment.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    rng = np.random.default_rng([latent.seed, 1])
    codec = _CODEC_MAP @ latent.z + noise_sigma * rng.standard_normal(CODEC_DIM)
    content = _CONTENT_MAP @ latent.z + noise_sigma * rng.standard_normal(CONTENT_DIM)
    anchor = None
    if anchor_crf is not None:
        anchor = oracle_anchor(latent, anchor_crf).segment()
    return FeatureVector(codec, content, anchor)


def _noisy_anchor(latent: LatentVideo, anchor_crf: float, noise: float) -> AnchorPoint:
    exact = oracle_anchor(latent, anchor_crf)
    if noise <= 0:
        return exact
    # same noise model as SimCodecBackend: VMAF sigma ``noise``, bitrate ``noise`` percent
    rng = np.random.default_rng([latent.seed, 2])
    vmaf = float(np.clip(exact.vmaf + noise * rng.standard_normal(), 0.0, 100.0))
    bitrate = float(exact.bitrate * (1.0 + 0.01 * noise * rng.standard_normal()))
    return AnchorPoint(anchor_crf, bitrate, vmaf)


def make_sample(latent: LatentVideo, noise_sigma: float = DEFAULT_NOISE,
                anchor_crf: float = DEFAULT_ANCHOR_CRF, grid: CrfGrid = GRID,
                anchor_noise: float = 0.0) -> Sample:
    """One labelled sample; ``anchor_noise > 0`` perturbs the anchor measurement only."""
    grid.index_of(anchor_crf)
    if anchor_noise < 0:
        raise ValueError("anchor_noise must be non-negative")
    anchor = _noisy_anchor(latent, anchor_crf, anchor_noise)
    features = synth_features(latent, noise_sigma, None)
    return Sample(
        id=latent.id,
        features=FeatureVector(features.codec, features.content, anchor.segment()),
        anchor=anchor,
        truth=oracle_curve(latent.theta, grid),
    )


def synth_dataset(n_train: int, n_test: int, seed: int = 7,
                  noise_sigma: float = DEFAULT_NOISE,
                  anchor_crf: float = DEFAULT_ANCHOR_CRF,
                  anchor_noise: float = 0.0) -> tuple:
    """Deterministic ``(train, test)`` lists of :class:`Sample` with oracle labels.

    Anchors are exact unless ``anchor_noise`` is set.
    """
    if n_train < 1 or n_test < 1:
        raise ValueError("n_train and n_test must both be at least 1")
    seeds = np.random.default_rng(seed).choice(2**31 - 1, size=n_train + n_test, replace=False)
    samples = [make_sample(LatentVideo.from_seed(int(s)), noise_sigma, anchor_crf,
                           anchor_noise=anchor_noise) for s in seeds]
    return samples[:n_train], samples[n_train:]


# -- synthetic encoder statistics --------------------------------------------


def _softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def synth_stats(latent: LatentVideo, crf: float, n_frames: int = 150):
    """Encoder statistics of a (simulated) 360p pre-encode at ``crf``.

    Returns ``(EncoderStats, mb_lines)`` where ``mb_lines`` feeds
    :func:`rqcurve.codec.format_stats_log`.
    """
    th = latent.theta
    s = _STATS_MAP @ latent.z
    n_i = 1 + int(np.clip(np.round(2 + s[0]), 0, 5))
    n_b = int(np.clip(np.round(n_frames * (0.45 + 0.1 * np.tanh(s[1]))), 0, n_frames - n_i))
    n_p = n_frames - n_i - n_b
    base_qp = crf + 2.0 * np.tanh(s[2])
    qp = (base_qp - 3.0, base_qp, base_qp + 2.0)
    bitrate = 0.3 * bitrate_gt(th, crf)
    fps = 30.0
    # frame sizes in bytes with I:P:B weight ratios 6:2:1
    w = np.array([6.0, 2.0, 1.0]) * np.exp(0.2 * s[3:6])
    counts = np.array([n_i, n_p, n_b], dtype=np.float64)
    per_unit = bitrate * 1000 / 8 * n_frames / fps / np.dot(counts, w)
    sizes = tuple(float(v) for v in per_unit * w)
    psnr_y = 52.0 - 0.55 * crf - 1.5 * np.tanh(s[6])
    psnr = (psnr_y, psnr_y + 3.0, psnr_y + 3.5, psnr_y + 1.0, psnr_y + 0.4)

    intra_i = _softmax(np.array([s[7], s[8], -s[7]]))
    skip_p = float(np.clip(0.15 + 0.015 * (crf - 18) + 0.1 * np.tanh(s[9]), 0.0, 0.9))
    intra_p_share = 0.05 + 0.03 * _squash(s[10])
    intra_p = intra_p_share * _softmax(np.array([s[11], 0.0, -s[11]]))
    part_p = (1.0 - skip_p - intra_p_share) * _softmax(np.array([1.5, s[12], s[13], s[14], -1.0]))
    skip_b = float(np.clip(skip_p + 0.15, 0.0, 0.95))
    intra_b_share = 0.01
    intra_b = intra_b_share * _softmax(np.array([s[11], 0.0, -s[11]]))
    direct_b = 0.1 * _squash(s[15])
    part_b = (1.0 - skip_b - intra_b_share - direct_b) * _softmax(np.array([1.0, s[16], s[17]]))

    mb_lines = {
        "I": tuple(intra_i),
        "P": (tuple(intra_p), tuple(part_p), skip_p),
        "B": (tuple(intra_b), tuple(part_b), direct_b, skip_b),
    }
    hist = np.zeros(13)
    hist[0:3] += n_i * intra_i + n_p * intra_p + n_b * intra_b
    hist[3:8] += n_p * part_p
    hist[8:11] += n_b * part_b
    hist[11] += n_b * direct_b
    hist[12] += n_p * skip_p + n_b * skip_b
    hist /= hist.sum()

    stats = EncoderStats(
        frame_counts=(n_i, n_p, n_b),
        qp_by_type=tuple(float(q) for q in qp),
        frame_sizes=sizes,
        psnr=tuple(float(p) for p in psnr),
        bitrate_kbps=float(bitrate),
        vmaf=vmaf_gt(th, crf),
        partition_histogram=tuple(hist.tolist()),
        skip_in_p=skip_p,
        skip_in_b=skip_b,
        mv_magnitude=(float(2.0 + np.exp(0.5 * s[18])), float(1.0 + np.exp(0.5 * s[19]))),
        transform_8x8=(float(_squash(s[20])), float(_squash(s[21]))),
        coded=tuple(float(v) for v in np.clip(0.3 - 0.01 * (crf - 18) + 0.05 * s[22:23].repeat(6), 0, 1)),
        b_direction=tuple(_softmax(np.array([s[23], -s[23], 0.0])).tolist()),
        i16_modes=tuple(_softmax(np.array([s[0], s[1], 0.5, -s[0]])).tolist()),
    )
    return stats, mb_lines


def stats_log(latent: LatentVideo, crf: float) -> str:
    """x264-style summary log for a simulated pre-encode."""
    stats, mb_lines = synth_stats(latent, crf)
    return format_stats_log(stats, mb_lines)


class SimCodecBackend:
    """Encode-and-measure backend answering from the oracle closed forms.

    ``clip_ref`` is a :class:`LatentVideo` or its integer seed. With
    ``noise > 0`` measurements get Gaussian VMAF noise of that sigma and
    multiplicative bitrate noise of ``noise`` percent, seeded per call.
    """

    def __init__(self, noise: float = 0.0, grid: CrfGrid = GRID, seed: int = 0):
        self.noise = float(noise)
        self.grid = grid
        self.seed = seed

    def _latent(self, clip_ref) -> LatentVideo:
        if isinstance(clip_ref, LatentVideo):
            return clip_ref
        if isinstance(clip_ref, str) and clip_ref.startswith("sim-"):
            clip_ref = int(clip_ref[4:])
        return LatentVideo.from_seed(int(clip_ref))

    def encode_measure(self, clip_ref: Union[LatentVideo, int, str], crf: float,
                       **_ignored) -> EncodeResult:
        latent = self._latent(clip_ref)
        vmaf = vmaf_gt(latent.theta, crf)
        bitrate = bitrate_gt(latent.theta, crf)
        if self.noise > 0:
            rng = np.random.default_rng([self.seed, latent.seed, int(round(crf * 10))])
            vmaf = float(np.clip(vmaf + self.noise * rng.standard_normal(), 0.0, 100.0))
            bitrate = float(bitrate * (1.0 + 0.01 * self.noise * rng.standard_normal()))
        stats, _ = synth_stats(latent, crf)
        return EncodeResult(float(crf), bitrate, vmaf, stats)
