"""Encode-and-measure backends and the encoder summary-log parser.

The log grammar is the summary block printed by x264-style encoders::

    x264 [info]: frame I:2     Avg QP:22.00  size:  9000
    x264 [info]: frame P:8     Avg QP:25.10  size:  3000
    x264 [info]: mb I  I16..4: 10.0% 60.0% 30.0%
    x264 [info]: mb P  I16..4:  1.0%  2.0%  0.5%  P16..4: 30.0% 10.0%  5.0%  0.0%  0.0%    skip:51.5%
    x264 [info]: mb B  I16..4:  0.1%  0.2%  0.1%  B16..8: 20.0%  2.0%  3.0%  direct: 5.0%  skip:69.6%  L0:40.0% L1:50.0% BI:10.0%
    x264 [info]: 8x8 transform intra:60.0% inter:70.0%
    x264 [info]: coded y,uvDC,uvAC intra: 50.0% 20.0% 5.0% inter: 10.0% 2.0% 0.1%
    x264 [info]: i16 v,h,dc,p: 30% 30% 20% 20%
    x264 [info]: PSNR Mean Y:42.100 U:44.000 V:45.000 Avg:42.800 Global:42.300 kb/s:850.20
    x264 [info]: kb/s:850.20

Only the ``frame`` lines are mandatory. One non-standard line,
``mv magnitude mean:<f> var:<f>``, is accepted from instrumented encoders;
everything else unrecognized is skipped.
"""

from __future__ import annotations

import json
import os
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .core import GRID, CrfGrid

__all__ = [
    "EncoderStats",
    "EncodeResult",
    "StatsParseError",
    "BackendError",
    "BackendConfig",
    "ExternalBackend",
    "encode_measure",
    "parse_stats_log",
    "format_stats_log",
    "parse_kv_config",
    "parse_vmaf_output",
]


class StatsParseError(ValueError):
    pass


class BackendError(RuntimeError):
    """Encoder or metric tool failure; ``diagnostics`` holds captured output."""

    def __init__(self, message, diagnostics: str = ""):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class EncoderStats:
    frame_counts: Tuple[int, int, int]
    qp_by_type: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    frame_sizes: Tuple[float, float, float] = (0.0, 0.0, 0.0)  # bytes per frame
    psnr: Optional[Tuple[float, float, float, float, float]] = None  # Y U V Avg Global
    bitrate_kbps: Optional[float] = None
    vmaf: Optional[float] = None
    partition_histogram: Optional[Tuple[float, ...]] = None  # schema.PARTITION_BINS order
    skip_in_p: float = 0.0
    skip_in_b: float = 0.0
    mv_magnitude: Optional[Tuple[float, float]] = None
    transform_8x8: Tuple[float, float] = (0.0, 0.0)
    coded: Tuple[float, ...] = (0.0,) * 6
    b_direction: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    i16_modes: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.frame_counts) != 3 or min(self.frame_counts) < 0 or sum(self.frame_counts) < 1:
            raise ValueError(f"invalid frame counts {self.frame_counts}")

    @property
    def total_frames(self) -> int:
        return int(sum(self.frame_counts))

    @property
    def mean_qp(self) -> float:
        w = np.asarray(self.frame_counts, dtype=np.float64)
        return float(np.dot(w, self.qp_by_type) / w.sum())

    @property
    def mean_psnr(self) -> Optional[float]:
        return None if self.psnr is None else self.psnr[3]

    @property
    def frame_type_proportions(self) -> np.ndarray:
        w = np.asarray(self.frame_counts, dtype=np.float64)
        return w / w.sum()

    @property
    def bits_share(self) -> np.ndarray:
        bits = np.asarray(self.frame_counts, dtype=np.float64) * np.asarray(self.frame_sizes)
        total = bits.sum()
        return bits / total if total > 0 else self.frame_type_proportions

    @property
    def mode_proportions(self) -> Optional[np.ndarray]:
        if self.partition_histogram is None:
            return None
        h = np.asarray(self.partition_histogram)
        return np.array([h[:3].sum(), h[3:12].sum(), h[12]])


@dataclass(frozen=True)
class EncodeResult:
    crf: float
    bitrate: float
    vmaf: float
    stats: Optional[EncoderStats] = None

    def __post_init__(self):
        if not self.bitrate > 0:
            raise ValueError(f"bitrate must be positive, got {self.bitrate}")
        if not 0.0 <= self.vmaf <= 100.0:
            raise ValueError(f"VMAF must lie in [0, 100], got {self.vmaf}")


# -- log parsing -------------------------------------------------------------

_NUM = r"([-+]?\d+(?:\.\d+)?)"
_RE_FRAME = re.compile(rf"frame\s+([IPB]):\s*(\d+)\s+Avg QP:\s*{_NUM}\s+size:\s*{_NUM}")
_RE_PCT = re.compile(rf"{_NUM}%")
_RE_KBPS = re.compile(rf"kb/s:\s*{_NUM}")
_RE_PSNR = re.compile(
    rf"PSNR Mean Y:\s*{_NUM}\s+U:\s*{_NUM}\s+V:\s*{_NUM}\s+Avg:\s*{_NUM}\s+Global:\s*{_NUM}"
)
_RE_MV = re.compile(rf"mv magnitude mean:\s*{_NUM}\s+var:\s*{_NUM}")
_RE_T8 = re.compile(rf"8x8 transform intra:\s*{_NUM}%\s+inter:\s*{_NUM}%")
_RE_CODED = re.compile(r"coded y,uvDC,uvAC intra:(.*)inter:(.*)")
_RE_I16 = re.compile(r"i16 v,h,dc,p:(.*)")
_RE_MB = re.compile(r"mb ([IPB])\s+(.*)")


def _pcts(text, n=None):
    vals = [float(v) / 100.0 for v in _RE_PCT.findall(text)]
    if n is not None and len(vals) != n:
        raise StatsParseError(f"expected {n} percentages in {text.strip()!r}")
    return vals


def _section(text, key, n):
    """Percentages following ``key`` up to the next alphabetic label."""
    pos = text.find(key)
    if pos < 0:
        return [0.0] * n
    vals = _pcts(text[pos + len(key):])
    if len(vals) < n:
        raise StatsParseError(f"expected {n} values after {key!r}")
    return vals[:n]


def _labeled(text, label):
    m = re.search(rf"{re.escape(label)}:\s*{_NUM}%", text)
    return float(m.group(1)) / 100.0 if m else 0.0


def parse_stats_log(text: str) -> EncoderStats:
    """Parse an encoder summary log into :class:`EncoderStats`.

    Raises :class:`StatsParseError` when no ``frame`` summary lines exist or
    a recognized line is malformed.
    """
    if not isinstance(text, str):
        raise StatsParseError("log must be text")
    counts = {"I": 0, "P": 0, "B": 0}
    qps = {"I": 0.0, "P": 0.0, "B": 0.0}
    sizes = {"I": 0.0, "P": 0.0, "B": 0.0}
    mb = {}
    seen_frames = False
    psnr = mv = kbps = None
    t8 = (0.0, 0.0)
    coded = (0.0,) * 6
    i16 = (0.0,) * 4
    try:
        for line in text.splitlines():
            m = _RE_FRAME.search(line)
            if m:
                t = m.group(1)
                counts[t] = int(m.group(2))
                qps[t] = float(m.group(3))
                sizes[t] = float(m.group(4))
                seen_frames = True
                continue
            m = _RE_MB.search(line)
            if m and "I16..4" in line:
                mb[m.group(1)] = m.group(2)
                continue
            m = _RE_PSNR.search(line)
            if m:
                psnr = tuple(float(g) for g in m.groups())
            m = _RE_KBPS.search(line)
            if m:
                kbps = float(m.group(1))
                continue
            m = _RE_MV.search(line)
            if m:
                mv = (float(m.group(1)), float(m.group(2)))
                continue
            m = _RE_T8.search(line)
            if m:
                t8 = (float(m.group(1)) / 100.0, float(m.group(2)) / 100.0)
                continue
            m = _RE_CODED.search(line)
            if m:
                coded = tuple(_pcts(m.group(1), 3) + _pcts(m.group(2), 3))
                continue
            m = _RE_I16.search(line)
            if m:
                i16 = tuple(_pcts(m.group(1), 4))
    except StatsParseError:
        raise
    except (ValueError, IndexError) as exc:  # pragma: no cover - defensive
        raise StatsParseError(f"malformed stats line: {exc}") from exc

    if not seen_frames or sum(counts.values()) == 0:
        raise StatsParseError("log has no frame-type summary lines")

    partition = skip_p = skip_b = None
    bdir = (0.0, 0.0, 0.0)
    if mb:
        hist = np.zeros(13)
        skip_p = skip_b = 0.0
        for t, body in mb.items():
            w = counts[t]
            intra = _section(body, "I16..4:", 3)
            hist[0:3] += w * np.asarray(intra)
            if t == "P":
                hist[3:8] += w * np.asarray(_section(body, "P16..4:", 5))
                skip_p = _labeled(body, "skip")
                hist[12] += w * skip_p
            elif t == "B":
                hist[8:11] += w * np.asarray(_section(body, "B16..8:", 3))
                hist[11] += w * _labeled(body, "direct")
                skip_b = _labeled(body, "skip")
                hist[12] += w * skip_b
                bdir = (_labeled(body, "L0"), _labeled(body, "L1"), _labeled(body, "BI"))
        total = hist.sum()
        if total > 0:
            partition = tuple((hist / total).tolist())

    return EncoderStats(
        frame_counts=(counts["I"], counts["P"], counts["B"]),
        qp_by_type=(qps["I"], qps["P"], qps["B"]),
        frame_sizes=(sizes["I"], sizes["P"], sizes["B"]),
        psnr=psnr,
        bitrate_kbps=kbps,
        partition_histogram=partition,
        skip_in_p=skip_p or 0.0,
        skip_in_b=skip_b or 0.0,
        mv_magnitude=mv,
        transform_8x8=t8,
        coded=coded,
        b_direction=bdir,
        i16_modes=i16,
    )


def format_stats_log(stats: EncoderStats, mb_lines: dict, prefix: str = "x264 [info]: ") -> str:
    """Render a summary log that :func:`parse_stats_log` reads back.

    ``mb_lines`` maps frame type to the per-type percentages:
    ``{"I": intra3, "P": (intra3, p5, skip), "B": (intra3, b3, direct, skip)}``.
    """
    out = []
    for t, n, qp, size in zip("IPB", stats.frame_counts, stats.qp_by_type, stats.frame_sizes):
        if n:
            out.append(f"frame {t}:{n:<6d}Avg QP:{qp:5.2f}  size:{size:7.0f}")

    def pct(vals):
        return " ".join(f"{100 * v:.4f}%" for v in vals)

    if "I" in mb_lines and stats.frame_counts[0]:
        out.append(f"mb I  I16..4: {pct(mb_lines['I'])}")
    if "P" in mb_lines and stats.frame_counts[1]:
        intra, part, skip = mb_lines["P"]
        out.append(f"mb P  I16..4: {pct(intra)}  P16..4: {pct(part)}    skip:{100 * skip:.4f}%")
    if "B" in mb_lines and stats.frame_counts[2]:
        intra, part, direct, skip = mb_lines["B"]
        l0, l1, bi = stats.b_direction
        out.append(
            f"mb B  I16..4: {pct(intra)}  B16..8: {pct(part)}  direct:{100 * direct:.4f}%"
            f"  skip:{100 * skip:.4f}%  L0:{100 * l0:.4f}% L1:{100 * l1:.4f}% BI:{100 * bi:.4f}%"
        )
    ti, tp = stats.transform_8x8
    out.append(f"8x8 transform intra:{100 * ti:.4f}% inter:{100 * tp:.4f}%")
    c = stats.coded
    out.append(f"coded y,uvDC,uvAC intra: {pct(c[:3])} inter: {pct(c[3:])}")
    out.append(f"i16 v,h,dc,p: {pct(stats.i16_modes)}")
    if stats.mv_magnitude is not None:
        out.append(f"mv magnitude mean:{stats.mv_magnitude[0]:.6f} var:{stats.mv_magnitude[1]:.6f}")
    if stats.psnr is not None:
        y, u, v, avg, glob = stats.psnr
        out.append(
            f"PSNR Mean Y:{y:.6f} U:{u:.6f} V:{v:.6f} Avg:{avg:.6f} Global:{glob:.6f}"
            f" kb/s:{stats.bitrate_kbps or 0:.6f}"
        )
    if stats.bitrate_kbps is not None:
        out.append(f"kb/s:{stats.bitrate_kbps:.6f}")
    return "\n".join(prefix + line for line in out) + "\n"


# -- backends -------------------------------------------------------------------


def parse_kv_config(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


@dataclass(frozen=True)
class BackendConfig:
    """Command templates for a real encoder and quality-metric tool.

    Placeholders: ``{input}``, ``{output}``, ``{crf}``, ``{log}`` (encode);
    ``{reference}``, ``{distorted}``, ``{log}`` (metric). ``{width}``,
    ``{height}`` and ``{fps}`` are available in both.
    """

    encode_cmd: str
    metric_cmd: str
    workdir: Optional[str] = None
    timeout: float = 600.0
    frame_rate: Optional[float] = None
    frame_count: Optional[int] = None

    @classmethod
    def from_file(cls, path) -> "BackendConfig":
        cfg = parse_kv_config(Path(path).read_text())
        missing = [k for k in ("encode_cmd", "metric_cmd") if k not in cfg]
        if missing:
            raise ValueError(f"backend config missing {', '.join(missing)}")
        return cls(
            encode_cmd=cfg["encode_cmd"],
            metric_cmd=cfg["metric_cmd"],
            workdir=cfg.get("workdir") or None,
            timeout=float(cfg.get("timeout", 600)),
            frame_rate=float(cfg["frame_rate"]) if "frame_rate" in cfg else None,
            frame_count=int(cfg["frame_count"]) if "frame_count" in cfg else None,
        )


_RE_VMAF_TEXT = re.compile(rf"VMAF score[:=\s]+{_NUM}", re.IGNORECASE)


def parse_vmaf_output(text: str) -> float:
    """Aggregate VMAF from libvmaf JSON or an ffmpeg-style ``VMAF score:`` line."""
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, TypeError):
        doc = None
    if isinstance(doc, dict):
        pooled = doc.get("pooled_metrics", {}).get("vmaf", {})
        if "mean" in pooled:
            return float(pooled["mean"])
        agg = doc.get("aggregate", {})
        if "VMAF_score" in agg:
            return float(agg["VMAF_score"])
    matches = _RE_VMAF_TEXT.findall(text or "")
    if not matches:
        raise ValueError("no VMAF score found in metric output")
    return float(matches[-1])


class ExternalBackend:
    """Runs a real encoder and metric tool through subprocess templates."""

    def __init__(self, config: BackendConfig, grid: CrfGrid = GRID):
        self.config = config
        self.grid = grid

    def _run(self, template: str, fields: dict):
        cmd = shlex.split(template.format(**fields))
        try:
            proc = subprocess.run(
                cmd, capture_output=True, text=True,
                timeout=self.config.timeout, cwd=self.config.workdir,
            )
        except FileNotFoundError as exc:
            raise BackendError(f"command not found: {cmd[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            raise BackendError(f"command timed out after {self.config.timeout}s: {cmd[0]}",
                               diagnostics=str(exc.stderr or "")) from exc
        if proc.returncode != 0:
            raise BackendError(f"{cmd[0]} exited with status {proc.returncode}",
                               diagnostics=proc.stderr[-4000:])
        return proc

    def encode_measure(self, clip_ref, crf: float, frame_rate=None, frame_count=None,
                       width=None, height=None) -> EncodeResult:
        fps = frame_rate or self.config.frame_rate
        frames = frame_count or self.config.frame_count
        if not fps or not frames:
            raise BackendError("frame rate and frame count are required to compute bitrate")
        with tempfile.TemporaryDirectory(prefix="rqcurve-") as tmp:
            out = os.path.join(tmp, "encoded.bin")
            log = os.path.join(tmp, "encode.log")
            mlog = os.path.join(tmp, "metric.json")
            common = {"width": width or "", "height": height or "", "fps": fps}
            enc = self._run(self.config.encode_cmd, dict(
                common, input=str(clip_ref), output=out, crf=f"{crf:.1f}", log=log))
            if not os.path.exists(out):
                raise BackendError("encoder produced no output file", diagnostics=enc.stderr[-4000:])
            bitrate = os.path.getsize(out) * 8 / 1000.0 * fps / frames
            met = self._run(self.config.metric_cmd, dict(
                common, reference=str(clip_ref), distorted=out, log=mlog))
            text = Path(mlog).read_text() if os.path.exists(mlog) else met.stdout + met.stderr
            try:
                vmaf = parse_vmaf_output(text)
            except ValueError as exc:
                raise BackendError("unparsable metric output", diagnostics=text[-4000:]) from exc
            log_text = Path(log).read_text() if os.path.exists(log) else enc.stderr
            try:
                stats = replace(parse_stats_log(log_text), vmaf=vmaf)
            except StatsParseError:
                stats = None
        return EncodeResult(float(crf), bitrate, min(max(vmaf, 0.0), 100.0), stats)


def encode_measure(backend, clip_ref, crf: float, check_range: bool = True,
                   **kwargs) -> EncodeResult:
    """Encode ``clip_ref`` at ``crf`` with ``backend`` and measure the result.

    Pre-encodes for codec features run outside the prediction grid (CRF 18)
    and pass ``check_range=False``.
    """
    grid = getattr(backend, "grid", GRID)
    if check_range and not grid.min_crf - 1e-9 <= crf <= grid.max_crf + 1e-9:
        raise ValueError(f"CRF {crf} outside [{grid.min_crf}, {grid.max_crf}]")
    return backend.encode_measure(clip_ref, crf, **kwargs)
