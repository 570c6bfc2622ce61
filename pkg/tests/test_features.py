import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rqcurve import simcodec
from rqcurve.codec import EncodeResult, format_stats_log, parse_stats_log
from rqcurve.features import (
    BLUR_CEILING, CodecSchemaError, GlcmError, SamplingConfig, assemble_anchor,
    assemble_codec_features, extract_content, frame_quality, glcm, glcm_stats,
    quality_proxies, temporal_stats,
)
from rqcurve.ingest import VideoClip
from rqcurve.schema import (
    CODEC_DIM, CODEC_FIELDS, CONTENT_DIM, CONTENT_FIELDS, PER_ENCODE_FIELDS, PROPORTION_GROUPS,
)


def clip_of(frames, fps=30):
    frames = np.asarray(frames, dtype=np.uint8)
    return VideoClip(frames.shape[2], frames.shape[1], Fraction(fps), frames)


def brute_glcm(plane, dx, dy, levels):
    h, w = plane.shape
    q = [[int(plane[y, x]) * levels // 256 for x in range(w)] for y in range(h)]
    m = np.zeros((levels, levels))
    for y in range(h):
        for x in range(w):
            y2, x2 = y + dy, x + dx
            if 0 <= y2 < h and 0 <= x2 < w:
                m[q[y][x], q[y2][x2]] += 1
    return m / m.sum()


def brute_stats(p):
    n = p.shape[0]
    con = ene = ent = hom = 0.0
    mua = mub = 0.0
    for a in range(n):
        for b in range(n):
            v = p[a, b]
            con += v * (a - b) ** 2
            ene += v * v
            if v > 0:
                ent -= v * math.log2(v)
            hom += v / (1 + abs(a - b))
            mua += a * v
            mub += b * v
    va = sum(p[a, b] * (a - mua) ** 2 for a in range(n) for b in range(n))
    vb = sum(p[a, b] * (b - mub) ** 2 for a in range(n) for b in range(n))
    if va == 0 or vb == 0:
        cor = 0.0
    else:
        cor = sum(p[a, b] * (a - mua) * (b - mub) for a in range(n) for b in range(n))
        cor /= math.sqrt(va * vb)
    return con, ene, ent, hom, cor


def test_glcm_examples():
    m = glcm(np.zeros((2, 2)), (1, 0), 8)
    assert m[0, 0] == 1.0 and m.sum() == 1.0
    m = glcm(np.array([[0, 255], [0, 255]]), (1, 0), 2)
    assert m[0, 1] == 1.0 and m.sum() == 1.0
    with pytest.raises(GlcmError):
        glcm(np.zeros((2, 2)), (2, 0), 8)


@pytest.mark.parametrize("offset", [(1, 0), (0, 1), (1, 1), (-1, 1)])
@pytest.mark.parametrize("seed", range(5))
def test_glcm_brute_force_4x4(offset, seed):
    plane = np.random.default_rng(seed).integers(0, 256, (4, 4))
    for levels in (8, 16):
        m = glcm(plane, offset, levels)
        assert np.allclose(m, brute_glcm(plane, *offset, levels), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(2, 12), st.sampled_from([8, 16, 32]), st.integers(0, 10 ** 6))
def test_glcm_is_probability_table(h, w, levels, seed):
    plane = np.random.default_rng(seed).integers(0, 256, (h, w))
    m = glcm(plane, (1, 1), levels)
    assert m.min() >= 0 and abs(m.sum() - 1.0) <= 1e-9


def test_glcm_stats_examples():
    s = glcm_stats(np.eye(4) / 4)
    assert s.contrast == 0 and s.homogeneity == pytest.approx(1.0)
    p = np.zeros((4, 4))
    p[0, 0] = 1.0
    s = glcm_stats(p)
    assert (s.energy, s.entropy, s.correlation) == (1.0, 0.0, 0.0)


@pytest.mark.parametrize("seed", range(10))
def test_glcm_stats_brute_force(seed):
    p = np.random.default_rng(seed).random((4, 4))
    p /= p.sum()
    assert np.allclose(glcm_stats(p), brute_stats(p), rtol=1e-12, atol=1e-14)


def test_temporal_examples():
    f = np.full((2, 16, 16), 9)
    assert tuple(temporal_stats(clip_of(f))) == (0.0, 0.0, 0.0, 1.0, True)
    f = np.stack([np.zeros((16, 16)), np.full((16, 16), 10)])
    assert tuple(temporal_stats(clip_of(f)))[:4] == (10.0, 0.0, 10.0, 0.0)
    single = temporal_stats(clip_of(np.zeros((1, 16, 16))))
    assert tuple(single) == (0.0, 0.0, 0.0, 0.0, False)
    with pytest.raises(ValueError):
        temporal_stats(clip_of(f), 0)


@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("seed", range(3))
def test_temporal_brute_force(stride, seed):
    f = np.random.default_rng(seed).integers(0, 256, (5, 16, 16))
    idx = list(range(0, 5, stride))
    mads = []
    for a, b in zip(idx, idx[1:]):
        tot = 0
        for y in range(16):
            for x in range(16):
                tot += abs(int(f[b, y, x]) - int(f[a, y, x]))
        mads.append(tot / 256)
    mean = sum(mads) / len(mads)
    var = sum((m - mean) ** 2 for m in mads) / len(mads)
    ref = (mean, var, max(mads), sum(m < 0.5 for m in mads) / len(mads))
    assert np.allclose(tuple(temporal_stats(clip_of(f), stride))[:4], ref, rtol=1e-12)


def test_quality_conventions():
    assert frame_quality(np.full((32, 32), 40)) == (0.0, 1.0, BLUR_CEILING)


def test_blockiness_detects_block_pattern():
    rng = np.random.default_rng(4)
    f = np.kron(rng.integers(0, 256, (4, 4)), np.ones((8, 8)))
    assert frame_quality(f)[1] > 1.0
    assert frame_quality(rng.integers(0, 256, (32, 32)))[1] == pytest.approx(1.0, abs=0.15)


def test_noise_estimate_on_white_noise():
    rng = np.random.default_rng(5)
    frames = np.clip(np.rint(128 + rng.normal(0, 5, (3, 128, 128))), 0, 255)
    sigma = quality_proxies(clip_of(frames))[0]
    assert abs(sigma - 5.0) <= 0.2 * 5.0


def test_blur_grows_with_smoothing():
    rng = np.random.default_rng(6)
    sharp = rng.integers(0, 256, (64, 64)).astype(float)
    k = np.ones(5) / 5
    smooth = np.apply_along_axis(lambda r: np.convolve(r, k, "same"), 1, sharp)
    smooth = np.apply_along_axis(lambda c: np.convolve(c, k, "same"), 0, smooth)
    assert frame_quality(smooth)[2] > frame_quality(sharp)[2]


def test_content_vector_layout():
    rng = np.random.default_rng(7)
    clip = clip_of(rng.integers(0, 256, (12, 32, 48)), fps=25)
    v = extract_content(clip)
    assert v.shape == (65,) == (CONTENT_DIM,) and np.all(np.isfinite(v))
    named = dict(zip(CONTENT_FIELDS, v))
    assert named["width"] == 48 and named["height"] == 32 and named["pixel_count"] == 48 * 32
    assert named["frame_rate"] == 25 and named["duration_s"] == pytest.approx(12 / 25)
    assert named["sampled_frames"] == 12
    assert np.array_equal(extract_content(clip), v)


def test_content_black_clip():
    v = dict(zip(CONTENT_FIELDS, extract_content(clip_of(np.zeros((5, 32, 32))))))
    for k, x in v.items():
        if k.startswith("temporal_") and not k.startswith("temporal_zero"):
            assert x == 0.0, k
        if any(s in k for s in ("contrast", "entropy", "correlation")):
            assert x == 0.0, k
    assert v["luma_mean"] == 0.0


def test_content_sampling_cap():
    clip = clip_of(np.random.default_rng(8).integers(0, 256, (100, 16, 16)))
    v = dict(zip(CONTENT_FIELDS, extract_content(clip, SamplingConfig(max_frames=30))))
    assert v["sampled_frames"] == 30


def test_duplicated_frames():
    rng = np.random.default_rng(9)
    frames = rng.integers(0, 256, (6, 32, 32))
    a = dict(zip(CONTENT_FIELDS, extract_content(clip_of(frames))))
    b = dict(zip(CONTENT_FIELDS, extract_content(clip_of(np.repeat(frames, 2, axis=0)))))
    for k in CONTENT_FIELDS:
        if k.startswith("glcm_"):
            assert a[k] == pytest.approx(b[k], rel=1e-12, abs=1e-12), k
    # every other pair in the doubled clip is a duplicate
    assert b["temporal_zero_motion_frac_s1"] == pytest.approx(6 / 11)


def sim_stats(seed, crf):
    return simcodec.synth_stats(simcodec.LatentVideo.from_seed(seed), crf)[0]


def test_codec_vector():
    lo, hi = sim_stats(1, 18.0), sim_stats(1, 33.0)
    v = assemble_codec_features(lo, hi)
    assert v.shape == (113,) == (CODEC_DIM,)
    named = dict(zip(CODEC_FIELDS, v))
    assert named["crf18_bitrate_kbps"] == lo.bitrate_kbps
    assert named["crf33_vmaf"] == hi.vmaf
    assert named["log_bitrate_ratio"] == pytest.approx(math.log(lo.bitrate_kbps / hi.bitrate_kbps))
    for prefix in ("crf18_", "crf33_"):
        for names in PROPORTION_GROUPS.values():
            assert sum(named[prefix + n] for n in names) == pytest.approx(1.0, abs=1e-6)


def test_codec_frame_proportions():
    lo = replace(sim_stats(2, 18.0), frame_counts=(2, 8, 10))
    v = dict(zip(CODEC_FIELDS, assemble_codec_features(lo, sim_stats(2, 33.0))))
    assert (v["crf18_frame_prop_I"], v["crf18_frame_prop_P"], v["crf18_frame_prop_B"]) == \
        pytest.approx((0.1, 0.4, 0.5))


def test_codec_through_log_matches_direct():
    lat = simcodec.LatentVideo.from_seed(3)
    pair = [simcodec.synth_stats(lat, c) for c in (18.0, 33.0)]
    direct = assemble_codec_features(pair[0][0], pair[1][0])
    parsed = [replace(parse_stats_log(format_stats_log(s, mb)), vmaf=s.vmaf) for s, mb in pair]
    # the log carries QP to 2 decimals and sizes to whole bytes
    assert np.allclose(assemble_codec_features(*parsed), direct, rtol=2e-3, atol=1e-4)


def test_codec_schema_errors():
    lo, hi = sim_stats(4, 18.0), sim_stats(4, 33.0)
    for field in ("psnr", "bitrate_kbps", "vmaf", "partition_histogram"):
        with pytest.raises(CodecSchemaError, match=field):
            assemble_codec_features(replace(lo, **{field: None}), hi)
    bad = replace(lo, partition_histogram=tuple(np.array(lo.partition_histogram) * 1.2))
    with pytest.raises(CodecSchemaError, match="part"):
        assemble_codec_features(bad, hi)
    off = replace(lo, partition_histogram=tuple(np.array(lo.partition_histogram) * 1.005))
    v = dict(zip(CODEC_FIELDS, assemble_codec_features(off, hi)))
    assert sum(v[f"crf18_part_{b}"] for b in ("I16", "I8", "I4")) < 1.0
    part = [k for k in CODEC_FIELDS if k.startswith("crf18_part_")]
    assert sum(v[k] for k in part) == pytest.approx(1.0, abs=1e-12)


def test_anchor():
    a, seg = assemble_anchor(EncodeResult(30.4, 2500.0, 92.3))
    assert list(seg) == [2500.0, 92.3] and a.crf == 30.4
    with pytest.raises(ValueError):
        assemble_anchor(EncodeResult(30.5, 2500.0, 92.3), 30.5)
    lat = simcodec.LatentVideo.from_seed(9)
    res = simcodec.SimCodecBackend().encode_measure(lat, 30.4)
    a, _ = assemble_anchor(res)
    assert a == simcodec.oracle_anchor(lat)
    assert a.vmaf == simcodec.vmaf_gt(lat.theta, 30.4)


def test_schema_lengths():
    assert len(PER_ENCODE_FIELDS) == 56
    assert len(set(CODEC_FIELDS)) == 113 and len(set(CONTENT_FIELDS)) == 65
