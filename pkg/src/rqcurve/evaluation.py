"""Accuracy metrics, the ablation harness and plot-data export."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .core import RateQualityCurve, Sample
from .pipeline import ABLATIONS, PredictorConfig, RateQualityModel, TrainConfig, dynamic_anchor_retarget, train
from .strategy import crf_for_target_vmaf

__all__ = [
    "DEFAULT_TARGET",
    "DEFAULT_TOLERANCE",
    "EvalRow",
    "EvalReport",
    "AblationTable",
    "curve_mae",
    "vacc",
    "evaluate",
    "evaluate_dynamic",
    "run_ablation_suite",
    "emit_curve_csv",
    "read_curve_csv",
]

DEFAULT_TARGET = 91.0
DEFAULT_TOLERANCE = 1.0
CSV_COLUMNS = ("crf", "pred_vmaf", "true_vmaf", "pred_bitrate", "true_bitrate")


@dataclass(frozen=True)
class EvalRow:
    id: str
    d: float
    crf: float
    actual_vmaf: float


@dataclass
class EvalReport:
    vmaf_mae: float
    bitrate_mae: float
    vacc: float
    n: int
    rows: List[EvalRow] = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("report needs at least one video")
        if not 0.0 <= self.vacc <= 1.0:
            raise ValueError(f"vacc {self.vacc} outside [0, 1]")

    def summary(self) -> dict:
        return {"vmaf_mae": self.vmaf_mae, "bitrate_mae": self.bitrate_mae,
                "vacc": self.vacc, "n": self.n}

    def to_json(self) -> str:
        return json.dumps({**self.summary(), "rows": [asdict(r) for r in self.rows]})


def curve_mae(pred: Sequence[RateQualityCurve], truth: Sequence[RateQualityCurve]):
    """``(vmaf_mae, bitrate_mae)`` over all videos and grid points."""
    if len(pred) != len(truth):
        raise ValueError(f"{len(pred)} predictions for {len(truth)} ground-truth curves")
    if not pred:
        raise ValueError("empty curve sets")
    pv = np.vstack([p.vmaf for p in pred])
    tv = np.vstack([t.vmaf for t in truth])
    pb = np.vstack([p.bitrate for p in pred])
    tb = np.vstack([t.bitrate for t in truth])
    if pv.shape != tv.shape:
        raise ValueError("curves are on different grids")
    return float(np.abs(pv - tv).mean()), float(np.abs(pb - tb).mean())


def vacc(actual_vmaf, target: float = DEFAULT_TARGET, tolerance: float = DEFAULT_TOLERANCE) -> float:
    """Fraction of videos whose actual VMAF is strictly within ``tolerance`` of ``target``."""
    v = np.asarray(actual_vmaf, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("vacc of an empty cohort")
    return float(np.count_nonzero(np.abs(v - target) < tolerance) / v.size)


def _report(samples, preds, selected, target, tolerance) -> EvalReport:
    vm, bm = curve_mae(preds, [s.truth for s in samples])
    rows = [EvalRow(s.id, abs(v - target), crf, v) for s, (crf, v) in zip(samples, selected)]
    acc = vacc([r.actual_vmaf for r in rows], target, tolerance)
    return EvalReport(vm, bm, acc, len(samples), rows)


def evaluate(model: RateQualityModel, samples: Sequence[Sample], target: float = DEFAULT_TARGET,
             tolerance: float = DEFAULT_TOLERANCE) -> EvalReport:
    """Score ``model`` on labelled samples.

    The CRF for ``target`` is read off each predicted curve and the actual
    VMAF is looked up on the ground-truth curve at that CRF.
    """
    if not samples:
        raise ValueError("no samples to evaluate")
    preds = model.predict_samples(samples)
    selected = []
    for p, s in zip(preds, samples):
        d = crf_for_target_vmaf(p, target)
        selected.append((d.crf, float(s.truth.vmaf[d.index])))
    return _report(samples, preds, selected, target, tolerance)


def evaluate_dynamic(model: RateQualityModel, samples: Sequence[Sample], backend,
                     target: float = DEFAULT_TARGET, tolerance: float = DEFAULT_TOLERANCE,
                     clip_refs: Optional[Sequence] = None) -> EvalReport:
    """Like :func:`evaluate`, but each video is re-anchored near ``target`` first.

    ``clip_refs`` default to the sample ids, which the simulated backend
    understands.
    """
    if not samples:
        raise ValueError("no samples to evaluate")
    refs = clip_refs if clip_refs is not None else [s.id for s in samples]
    preds, selected = [], []
    for s, ref in zip(samples, refs):
        res = dynamic_anchor_retarget(model, s.features, s.anchor, target, backend, ref)
        d = crf_for_target_vmaf(res.curve, target)
        preds.append(res.curve)
        selected.append((d.crf, float(s.truth.vmaf[d.index])))
    return _report(samples, preds, selected, target, tolerance)


@dataclass
class AblationTable:
    reports: dict  # ablation name -> EvalReport

    def rows(self):
        return [(name, r.vmaf_mae, r.bitrate_mae, r.vacc) for name, r in self.reports.items()]

    def to_text(self) -> str:
        lines = [f"{'method':<20}{'VMAF MAE':>10}{'VACC':>9}{'bitrate MAE':>14}"]
        for name, vm, bm, acc in self.rows():
            lines.append(f"{name:<20}{vm:>10.4f}{acc * 100:>8.2f}%{bm:>14.2f}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps({name: r.summary() for name, r in self.reports.items()})


def run_ablation_suite(train_samples: Sequence[Sample], test_samples: Sequence[Sample],
                       seed: int = 0, configs: Sequence[str] = ABLATIONS,
                       train_config: TrainConfig = TrainConfig(),
                       base: PredictorConfig = PredictorConfig(), progress=None) -> AblationTable:
    """Train and score each ablation on the same data with the same seed."""
    reports = {}
    for name in configs:
        cfg = replace(base, ablation=name, train=train_config)
        model, _ = train(train_samples, cfg, seed=seed)
        reports[name] = evaluate(model, test_samples)
        if progress:
            progress(name, reports[name])
    return AblationTable(reports)


def emit_curve_csv(pred: RateQualityCurve, truth: RateQualityCurve, path) -> None:
    """Write one video's predicted and true curves side by side, one row per grid CRF."""
    if pred.grid != truth.grid:
        raise ValueError("curves are on different grids")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for i, crf in enumerate(pred.crf):
            w.writerow([f"{crf:.1f}", repr(float(pred.vmaf[i])), repr(float(truth.vmaf[i])),
                        repr(float(pred.bitrate[i])), repr(float(truth.bitrate[i]))])


def read_curve_csv(path) -> dict:
    """Columns of a curve CSV as float arrays keyed by column name."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV columns {reader.fieldnames}")
    return {c: np.array([float(r[c]) for r in rows]) for c in CSV_COLUMNS}
