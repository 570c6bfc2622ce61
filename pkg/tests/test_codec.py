import json
import sys
import textwrap
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rqcurve import simcodec
from rqcurve.codec import (
    BackendConfig, BackendError, EncodeResult, ExternalBackend, StatsParseError, encode_measure,
    format_stats_log, parse_kv_config, parse_stats_log, parse_vmaf_output,
)

FIXTURES = Path(__file__).parent / "fixtures"


def test_fixture_log():
    st_ = parse_stats_log((FIXTURES / "x264_summary.log").read_text())
    assert st_.frame_counts == (2, 8, 0)
    assert st_.bitrate_kbps == 850.2
    assert st_.qp_by_type[:2] == (22.0, 25.1)
    assert st_.mean_qp == pytest.approx((2 * 22.0 + 8 * 25.1) / 10)
    assert st_.psnr == (42.1, 44.0, 45.0, 42.8, 42.3)
    assert st_.mean_psnr == 42.8
    assert st_.transform_8x8 == (0.6, 0.7)
    assert st_.i16_modes == (0.3, 0.3, 0.2, 0.2)
    assert np.allclose(st_.frame_type_proportions, [0.2, 0.8, 0.0])
    # frame-count weighted partition histogram, brute force
    hist = np.zeros(13)
    hist[0:3] += 2 * np.array([0.1, 0.6, 0.3]) + 8 * np.array([0.01, 0.02, 0.005])
    hist[3:8] += 8 * np.array([0.3, 0.1, 0.05, 0, 0])
    hist[12] += 8 * 0.515
    assert np.allclose(st_.partition_histogram, hist / hist.sum())
    assert sum(st_.partition_histogram) == pytest.approx(1.0)


def test_spec_style_minimal_log():
    text = "frame I:2 Avg QP:22.0 size: 9000\nframe P:8 Avg QP:25.1 size: 3000\nkb/s: 850.2\n"
    st_ = parse_stats_log(text)
    assert st_.frame_counts == (2, 8, 0) and st_.bitrate_kbps == 850.2
    assert st_.partition_histogram is None


def test_unknown_lines_skipped():
    clean = (FIXTURES / "x264_summary.log").read_text()
    noisy = "\n".join(f"{line}\nfoo bar: 12% baz\n" for line in clean.splitlines())
    assert parse_stats_log(noisy) == parse_stats_log(clean)


def test_empty_log_errors():
    with pytest.raises(StatsParseError):
        parse_stats_log("")
    with pytest.raises(StatsParseError):
        parse_stats_log("x264 [info]: kb/s:100.0")


@given(st.text(max_size=400))
def test_parser_total(text):
    try:
        parse_stats_log(text)
    except StatsParseError:
        pass


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_format_parse_roundtrip(seed):
    lat = simcodec.LatentVideo.from_seed(seed)
    stats, mb = simcodec.synth_stats(lat, 18.0)
    back = parse_stats_log(format_stats_log(stats, mb))
    assert back.frame_counts == stats.frame_counts
    assert np.allclose(back.partition_histogram, stats.partition_histogram, atol=1e-5)
    assert np.allclose(back.psnr, stats.psnr, atol=1e-5)
    assert back.bitrate_kbps == pytest.approx(stats.bitrate_kbps, abs=1e-5)
    assert np.allclose(back.mv_magnitude, stats.mv_magnitude, atol=1e-5)
    assert np.allclose(back.b_direction, stats.b_direction, atol=1e-5)


def test_sim_backend_matches_oracle():
    lat = simcodec.LatentVideo.from_seed(42)
    b = simcodec.SimCodecBackend()
    r = encode_measure(b, lat, 30.4)
    assert r.crf == 30.4
    assert r.vmaf == simcodec.vmaf_gt(lat.theta, 30.4)
    assert r.bitrate == simcodec.bitrate_gt(lat.theta, 30.4)
    assert encode_measure(b, "sim-42", 30.4) == r
    with pytest.raises(ValueError):
        encode_measure(b, lat, 45.0)
    # pre-encodes run below the grid
    assert encode_measure(b, lat, 18.0, check_range=False).crf == 18.0


def test_encode_result_validation():
    with pytest.raises(ValueError):
        EncodeResult(30.0, 0.0, 50.0)
    with pytest.raises(ValueError):
        EncodeResult(30.0, 10.0, 150.0)


def test_vmaf_output_formats():
    assert parse_vmaf_output(json.dumps({"pooled_metrics": {"vmaf": {"mean": 91.25}}})) == 91.25
    assert parse_vmaf_output("[Parsed_libvmaf_0] VMAF score: 87.5\n") == 87.5
    with pytest.raises(ValueError):
        parse_vmaf_output("nothing here")


def test_kv_config(tmp_path):
    assert parse_kv_config("a = 1\n# c\nb=two # trailing\n") == {"a": "1", "b": "two"}
    with pytest.raises(ValueError):
        parse_kv_config("novalue\n")
    p = tmp_path / "b.cfg"
    p.write_text("encode_cmd = x {input}\n")
    with pytest.raises(ValueError):
        BackendConfig.from_file(p)


def _fake_tools(tmp_path, vmaf=93.5, fail=False):
    enc = tmp_path / "fake_enc.py"
    enc.write_text(textwrap.dedent(f"""
        import sys, shutil
        src, out, crf, log = sys.argv[1:5]
        if {fail!r}:
            sys.stderr.write("encoder exploded\\n"); sys.exit(4)
        open(out, "wb").write(b"x" * 12500)
        shutil.copy({str(FIXTURES / 'x264_summary.log')!r}, log)
    """))
    met = tmp_path / "fake_vmaf.py"
    met.write_text(textwrap.dedent(f"""
        import sys, json
        json.dump({{"pooled_metrics": {{"vmaf": {{"mean": {vmaf}}}}}}}, open(sys.argv[3], "w"))
    """))
    py = sys.executable
    return BackendConfig(encode_cmd=f"{py} {enc} {{input}} {{output}} {{crf}} {{log}}",
                         metric_cmd=f"{py} {met} {{reference}} {{distorted}} {{log}}",
                         frame_rate=30.0, frame_count=10)


def test_external_backend(tmp_path):
    b = ExternalBackend(_fake_tools(tmp_path))
    r = encode_measure(b, tmp_path / "clip.y4m", 30.4)
    # 12500 bytes * 8 / 1000 * 30 fps / 10 frames
    assert r.bitrate == pytest.approx(300.0)
    assert r.vmaf == 93.5
    assert r.stats.frame_counts == (2, 8, 0) and r.stats.vmaf == 93.5


def test_external_backend_errors(tmp_path):
    b = ExternalBackend(_fake_tools(tmp_path, fail=True))
    with pytest.raises(BackendError) as ei:
        encode_measure(b, "clip.y4m", 30.4)
    assert "encoder exploded" in ei.value.diagnostics
    missing = ExternalBackend(BackendConfig("no-such-encoder-xyz {input}", "true",
                                            frame_rate=30, frame_count=1))
    with pytest.raises(BackendError, match="no-such-encoder-xyz"):
        encode_measure(missing, "clip.y4m", 30.4)
    slow = ExternalBackend(BackendConfig(f"{sys.executable} -c 'import time; time.sleep(5)'",
                                         "true", timeout=0.2, frame_rate=30, frame_count=1))
    with pytest.raises(BackendError, match="timed out"):
        encode_measure(slow, "clip.y4m", 30.4)
