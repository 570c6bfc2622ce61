"""Three-stage curve predictor: first pass, anchor suspension, residual pass.

The first network maps a video's features to a raw 202-wide curve (101
VMAF values then 101 bitrates). Suspension shifts that curve so it passes
exactly through the measured anchor encode. The second network sees the
suspended curve next to the features and predicts a residual, which is
added back on. Every step is differentiable, so both networks train
jointly on a single loss over the final output.
"""

from __future__ import annotations

import io
import json
import logging
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .core import (
    BITRATE_FLOOR, DEFAULT_ANCHOR_CRF, GRID, AnchorPoint, CrfGrid, FeatureVector, GridError,
    RateQualityCurve, Sample, clamp_curve,
)
from .nn import (
    AdamState, Architecture, LossConfig, ModelFileError, Network, adam_step, loss_eq1,
    loss_eq1_grad, read_network, write_network,
)
from .schema import (
    ANCHOR_DIM, CODEC_DIM, CODEC_SCHEMA_VERSION, CONTENT_DIM, CONTENT_SCHEMA_VERSION,
)

__all__ = [
    "ABLATIONS",
    "SUSPENSION_MODES",
    "TrainConfig",
    "PredictorConfig",
    "RateQualityModel",
    "TrainingReport",
    "TrainingError",
    "DegenerateAnchorError",
    "FeatureFileError",
    "suspend",
    "suspend_batch",
    "suspend_backward",
    "train",
    "joint_loss_and_grads",
    "predict",
    "dynamic_anchor_retarget",
    "RetargetResult",
    "write_feature_file",
    "read_feature_file",
    "FeatureFile",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

ABLATIONS = ("full", "no_anchor_features", "no_suspension", "no_end2end")
SUSPENSION_MODES = ("additive", "multiplicative-bitrate")
FEATURE_FILE_FORMAT = "rqcurve-features"
FEATURE_FILE_VERSION = 1
BUNDLE_MAGIC = b"RQBUNDLE"
BUNDLE_VERSION = 1


class TrainingError(RuntimeError):
    def __init__(self, message, epoch: int):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


class DegenerateAnchorError(ValueError):
    pass


class FeatureFileError(ValueError):
    def __init__(self, message, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1.0  # decoupled, on weight matrices only
    hidden: int = 256
    n_blocks: int = 2
    gate_ratio: int = 4
    residual_scale: float = 0.1
    warm_start: bool = True  # pretrain the first network alone before joint training
    freeze_first_bn: bool = True  # first network normalizes with training-set statistics
    lr_schedule: str = "cosine"  # or "constant"
    lr_floor: float = 0.01  # final lr as a fraction of lr (cosine only)

    def lr_at(self, epoch: int) -> float:
        if self.lr_schedule == "constant" or self.epochs <= 1:
            return self.lr
        if self.lr_schedule != "cosine":
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")
        frac = epoch / (self.epochs - 1)
        return self.lr * (self.lr_floor + (1 - self.lr_floor) * 0.5 * (1 + np.cos(np.pi * frac)))


@dataclass(frozen=True)
class PredictorConfig:
    anchor_crf: float = DEFAULT_ANCHOR_CRF
    ablation: str = "full"
    suspension_mode: str = "additive"
    loss: LossConfig = LossConfig()
    train: TrainConfig = TrainConfig()

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")
        if self.suspension_mode not in SUSPENSION_MODES:
            raise ValueError(f"unknown suspension mode {self.suspension_mode!r}")
        GRID.index_of(self.anchor_crf)

    @property
    def anchor_features(self) -> bool:
        return self.ablation != "no_anchor_features"

    @property
    def suspension(self) -> bool:
        return self.ablation not in ("no_anchor_features", "no_suspension")

    @property
    def anchor_index(self) -> int:
        return GRID.index_of(self.anchor_crf)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PredictorConfig":
        d = dict(d)
        loss = LossConfig(**d.pop("loss", {}))
        tr = TrainConfig(**d.pop("train", {}))
        return cls(loss=loss, train=tr, **d)


# -- suspension ---------------------------------------------------------------


def suspend_batch(raw, anchor_index, anchors, mode: str = "additive", n: int = 101):
    """Suspend a batch of flat curves.

    ``raw`` is ``(B, 2n)``; ``anchors`` is ``(B, 2)`` holding (bitrate, vmaf);
    ``anchor_index`` is an int or a length-``B`` integer array.
    """
    raw = np.asarray(raw, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    rows = np.arange(raw.shape[0])
    a = np.broadcast_to(np.asarray(anchor_index), rows.shape)
    out = raw.copy()
    v_off = anchors[:, 1] - raw[rows, a]
    out[:, :n] += v_off[:, None]
    pred_rate = raw[rows, n + a]
    if mode == "additive":
        out[:, n:] += (anchors[:, 0] - pred_rate)[:, None]
    elif mode == "multiplicative-bitrate":
        if np.any(pred_rate < BITRATE_FLOOR):
            raise DegenerateAnchorError("predicted anchor bitrate below floor; cannot rescale")
        out[:, n:] *= (anchors[:, 0] / pred_rate)[:, None]
    else:
        raise ValueError(f"unknown suspension mode {mode!r}")
    # pin exactly; the float add above can be off by an ulp
    out[rows, a] = anchors[:, 1]
    out[rows, n + a] = anchors[:, 0]
    return out


def suspend(pred: RateQualityCurve, anchor: AnchorPoint, mode: str = "additive") -> RateQualityCurve:
    """Shift ``pred`` so it passes exactly through ``anchor``."""
    a = anchor.index(pred.grid)
    flat = suspend_batch(pred.flat()[None, :], a, anchor.segment()[None, :], mode, pred.grid.count)
    return RateQualityCurve.from_flat(flat[0], pred.grid)


def suspend_backward(upstream, anchor_index, mode: str = "additive", raw=None, anchors=None,
                     n: int = 101):
    """Vector-Jacobian product of :func:`suspend_batch`.

    For the additive channels ``d out_i / d raw_j = delta_ij - delta_ja``, so
    the anchor entry collects minus the channel sum of the upstream gradient.
    The multiplicative bitrate channel needs ``raw`` and ``anchors``.
    """
    g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    rows = np.arange(g.shape[0])
    a = np.broadcast_to(np.asarray(anchor_index), rows.shape)
    out = g.copy()
    out[rows, a] -= g[:, :n].sum(axis=1)
    if mode == "additive":
        out[rows, n + a] -= g[:, n:].sum(axis=1)
    elif mode == "multiplicative-bitrate":
        if raw is None or anchors is None:
            raise ValueError("multiplicative suspension backward needs raw and anchors")
        raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
        anchors = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
        p_a = raw[rows, n + a]
        ratio = anchors[:, 0] / p_a
        out[:, n:] = g[:, n:] * ratio[:, None]
        # the pinned anchor output does not depend on raw at all
        out[rows, n + a] -= g[rows, n + a] * ratio
        rest = (g[:, n:] * raw[:, n:]).sum(axis=1) - g[rows, n + a] * p_a
        out[rows, n + a] -= rest * anchors[:, 0] / p_a ** 2
    else:
        raise ValueError(f"unknown suspension mode {mode!r}")
    return out


# -- model -------------------------------------------------------------------------


@dataclass
class TrainingReport:
    epochs: List[dict] = field(default_factory=list)

    def add(self, **row):
        self.epochs.append(row)

    @property
    def final(self) -> dict:
        return self.epochs[-1] if self.epochs else {}


class RateQualityModel:
    """A trained pair of networks plus the configuration that wires them."""

    def __init__(self, config: PredictorConfig, net1: Network, net2: Network,
                 codec_dim: int = CODEC_DIM, content_dim: int = CONTENT_DIM,
                 grid: CrfGrid = GRID):
        self.config = config
        self.net1 = net1
        self.net2 = net2
        self.codec_dim = codec_dim
        self.content_dim = content_dim
        self.grid = grid
        self.schema = {"codec": CODEC_SCHEMA_VERSION, "content": CONTENT_SCHEMA_VERSION}

    @property
    def n(self) -> int:
        return self.grid.count

    @property
    def input_dim(self) -> int:
        return self.codec_dim + self.content_dim + (ANCHOR_DIM if self.config.anchor_features else 0)

    def design_matrix(self, features: Sequence[FeatureVector]) -> np.ndarray:
        rows = []
        for fv in features:
            if fv.codec.size != self.codec_dim or fv.content.size != self.content_dim:
                raise ValueError(
                    f"feature dims {fv.codec.size}/{fv.content.size} do not match model "
                    f"{self.codec_dim}/{self.content_dim}")
            rows.append(fv.vector(with_anchor=self.config.anchor_features))
        return np.vstack(rows)

    def _first_pass(self, x1, anchors, anchor_index=None):
        raw = self.net1.predict(x1)
        if not self.config.suspension:
            return raw
        a = self.config.anchor_index if anchor_index is None else anchor_index
        return suspend_batch(raw, a, anchors, self.config.suspension_mode, self.n)

    def predict_flat(self, x1, anchors=None, anchor_index=None) -> np.ndarray:
        """Unclamped final outputs for a design matrix (eval mode)."""
        x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
        if self.config.suspension and anchors is None:
            raise ValueError("this model needs anchor measurements")
        s = self._first_pass(x1, anchors, anchor_index)
        return s + self.net2.predict(np.hstack([s, x1]))

    def predict_samples(self, samples: Sequence[Sample]) -> List[RateQualityCurve]:
        x1 = self.design_matrix([s.features for s in samples])
        anchors = None
        if self.config.suspension:
            anchors = np.vstack([_anchor_for(s, self.config) for s in samples])
        flat = self.predict_flat(x1, anchors)
        return [clamp_curve(RateQualityCurve.from_flat(row, self.grid)) for row in flat]


def _anchor_for(sample: Sample, config: PredictorConfig) -> np.ndarray:
    if sample.anchor is not None:
        if abs(sample.anchor.crf - config.anchor_crf) > 1e-6:
            raise ValueError(f"sample {sample.id} anchor CRF {sample.anchor.crf} "
                             f"!= configured {config.anchor_crf}")
        return sample.anchor.segment()
    if sample.features.anchor is not None:
        return np.asarray(sample.features.anchor)
    raise ValueError(f"sample {sample.id} has no anchor measurement")


def predict(model: RateQualityModel, features: FeatureVector,
            anchor: Optional[AnchorPoint] = None) -> RateQualityCurve:
    """Predict one video's clamped curve."""
    x1 = model.design_matrix([features])
    anchors = None
    if model.config.suspension:
        if anchor is None:
            raise ValueError("full-mode prediction needs an AnchorPoint")
        if abs(anchor.crf - model.config.anchor_crf) > 1e-6:
            raise ValueError(f"anchor CRF {anchor.crf} != model anchor {model.config.anchor_crf}")
        anchors = anchor.segment()[None, :]
    flat = model.predict_flat(x1, anchors)[0]
    return clamp_curve(RateQualityCurve.from_flat(flat, model.grid))


# -- training ------------------------------------------------------------------------


def _stack(samples: Sequence[Sample], model: RateQualityModel):
    x1 = model.design_matrix([s.features for s in samples])
    if any(s.truth is None for s in samples):
        raise ValueError("training samples need ground-truth curves")
    y = np.vstack([s.truth.flat() for s in samples])
    anchors = None
    if model.config.suspension or model.config.anchor_features:
        anchors = np.vstack([_anchor_for(s, model.config) for s in samples])
    return x1, y, anchors


def _mae(pred, y, n):
    d = np.abs(pred - y)
    return float(d[:, :n].mean()), float(d[:, n:].mean())


def _init_model(config: PredictorConfig, x1, y, seed: int, codec_dim, content_dim):
    tc = config.train
    n_out = y.shape[1]
    arch1 = Architecture(in_dim=x1.shape[1], out_dim=n_out, hidden=tc.hidden,
                         n_blocks=tc.n_blocks, gate_ratio=tc.gate_ratio)
    arch2 = replace(arch1, in_dim=x1.shape[1] + n_out)
    seeds = np.random.SeedSequence(seed).generate_state(2)
    net1 = Network(arch1, seed=int(seeds[0]))
    net2 = Network(arch2, seed=int(seeds[1]))
    std = np.maximum(y.std(axis=0), 1e-6)
    net1.set_output_affine(std, y.mean(axis=0))
    if tc.freeze_first_bn:
        net1.freeze_input_stats(x1)
    net2.set_output_affine(tc.residual_scale * std, np.zeros(n_out))
    return RateQualityModel(config, net1, net2, codec_dim, content_dim)


def _batches(n_rows, batch_size, rng):
    order = rng.permutation(n_rows)
    for start in range(0, n_rows, batch_size):
        idx = order[start:start + batch_size]
        if idx.size >= 2:  # batch-norm needs two rows
            yield idx


def _check_finite(value, epoch):
    if not np.isfinite(value):
        raise TrainingError("loss became non-finite", epoch)


def train(samples: Sequence[Sample], config: PredictorConfig = PredictorConfig(), seed: int = 0,
          test_samples: Optional[Sequence[Sample]] = None, codec_dim: Optional[int] = None,
          content_dim: Optional[int] = None, progress=None):
    """Train both networks; returns ``(model, TrainingReport)``.

    ``progress``, when given, is called with each epoch's report row.
    """
    if not samples:
        raise ValueError("training set is empty")
    codec_dim = codec_dim or samples[0].features.codec.size
    content_dim = content_dim or samples[0].features.content.size
    probe = RateQualityModel(config, None, None, codec_dim, content_dim)
    x1, y, anchors = _stack(samples, probe)
    model = _init_model(config, x1, y, seed, codec_dim, content_dim)
    test = None
    if test_samples:
        tx, ty, ta = _stack(test_samples, model)
        test = (tx, ty, ta)

    report = TrainingReport()
    rng = np.random.default_rng(np.random.SeedSequence(seed).generate_state(3)[2])
    if config.ablation == "no_end2end":
        _train_separately(model, x1, y, anchors, rng, report, test, progress)
    else:
        _train_joint(model, x1, y, anchors, rng, report, test, progress)
    return model, report


def _epoch_row(model, epoch, phase, losses, x1, y, anchors, test):
    n = model.n
    row = {"epoch": epoch, "phase": phase, "train_loss": float(np.mean(losses))}
    pred = model.predict_flat(x1, anchors if model.config.suspension else None)
    row["train_vmaf_mae"], row["train_bitrate_mae"] = _mae(pred, y, n)
    if test is not None:
        tx, ty, ta = test
        tp = model.predict_flat(tx, ta if model.config.suspension else None)
        row["test_vmaf_mae"], row["test_bitrate_mae"] = _mae(tp, ty, n)
    return row


def _opt_kwargs(tc: TrainConfig, epoch: int):
    return dict(lr=tc.lr_at(epoch), betas=(tc.beta1, tc.beta2), eps=tc.eps,
                weight_decay=tc.weight_decay)


def joint_loss_and_grads(model: RateQualityModel, xb, yb, anchors=None):
    """Train-mode forward and backward through both networks and suspension.

    Returns ``(loss, grads_net1, grads_net2)`` for one batch.
    """
    cfg = model.config
    n, a = model.n, cfg.anchor_index
    raw, c1 = model.net1.forward(xb, train=True)
    s = suspend_batch(raw, a, anchors, cfg.suspension_mode, n) if cfg.suspension else raw
    r, c2 = model.net2.forward(np.hstack([s, xb]), train=True)
    out = s + r
    loss = loss_eq1(out, yb, cfg.loss)
    dout = loss_eq1_grad(out, yb, cfg.loss)
    g2, dx2 = model.net2.backward(c2, dout)
    ds = dout + dx2[:, : 2 * n]
    if cfg.suspension:
        draw = suspend_backward(ds, a, cfg.suspension_mode, raw, anchors, n)
    else:
        draw = ds
    g1, _ = model.net1.backward(c1, draw)
    return loss, g1, g2


def _train_first(model, x1, y, anchors, rng, report, progress):
    """First network alone, loss on its (suspended) output."""
    cfg = model.config
    tc, n, a = cfg.train, model.n, cfg.anchor_index
    opt1 = AdamState.zeros_like(model.net1.params)
    for epoch in range(tc.epochs):
        losses = []
        for idx in _batches(len(x1), tc.batch_size, rng):
            xb, yb = x1[idx], y[idx]
            raw, c1 = model.net1.forward(xb, train=True)
            if cfg.suspension:
                s = suspend_batch(raw, a, anchors[idx], cfg.suspension_mode, n)
            else:
                s = raw
            loss = loss_eq1(s, yb, cfg.loss)
            _check_finite(loss, epoch)
            losses.append(loss)
            ds = loss_eq1_grad(s, yb, cfg.loss)
            if cfg.suspension:
                ds = suspend_backward(ds, a, cfg.suspension_mode, raw, anchors[idx], n)
            g1, _ = model.net1.backward(c1, ds)
            adam_step(model.net1.params, g1, opt1, **_opt_kwargs(tc, epoch))
        row = {"epoch": epoch, "phase": "first", "train_loss": float(np.mean(losses))}
        report.add(**row)
        if progress:
            progress(row)
    return tc.epochs


def _train_joint(model, x1, y, anchors, rng, report, test, progress):
    tc = model.config.train
    start = _train_first(model, x1, y, anchors, rng, report, progress) if tc.warm_start else 0
    opt1 = AdamState.zeros_like(model.net1.params)
    opt2 = AdamState.zeros_like(model.net2.params)
    for epoch in range(tc.epochs):
        losses = []
        for idx in _batches(len(x1), tc.batch_size, rng):
            ab = anchors[idx] if anchors is not None else None
            loss, g1, g2 = joint_loss_and_grads(model, x1[idx], y[idx], ab)
            _check_finite(loss, start + epoch)
            losses.append(loss)
            adam_step(model.net1.params, g1, opt1, **_opt_kwargs(tc, epoch))
            adam_step(model.net2.params, g2, opt2, **_opt_kwargs(tc, epoch))
        row = _epoch_row(model, start + epoch, "joint", losses, x1, y, anchors, test)
        report.add(**row)
        if progress:
            progress(row)


def _train_separately(model, x1, y, anchors, rng, report, test, progress):
    cfg = model.config
    tc = cfg.train
    start = _train_first(model, x1, y, anchors, rng, report, progress)
    # frozen first pass, second network fits the residual
    s_all = model._first_pass(x1, anchors)
    x2 = np.hstack([s_all, x1])
    opt2 = AdamState.zeros_like(model.net2.params)
    for epoch in range(tc.epochs):
        losses = []
        for idx in _batches(len(x1), tc.batch_size, rng):
            r, c2 = model.net2.forward(x2[idx], train=True)
            out = s_all[idx] + r
            loss = loss_eq1(out, y[idx], cfg.loss)
            _check_finite(loss, start + epoch)
            losses.append(loss)
            g2, _ = model.net2.backward(c2, loss_eq1_grad(out, y[idx], cfg.loss))
            adam_step(model.net2.params, g2, opt2, **_opt_kwargs(tc, epoch))
        row = _epoch_row(model, start + epoch, "second", losses, x1, y, anchors, test)
        report.add(**row)
        if progress:
            progress(row)


# -- dynamic anchor -------------------------------------------------------------------


@dataclass(frozen=True)
class RetargetResult:
    anchor: AnchorPoint
    curve: RateQualityCurve
    unreachable: bool = False


def dynamic_anchor_retarget(model: RateQualityModel, features: FeatureVector,
                            initial_anchor: AnchorPoint, target_vmaf: float, backend,
                            clip_ref) -> RetargetResult:
    """Re-anchor at the CRF the first pass picks for ``target_vmaf``.

    The first pass plus fixed-anchor suspension proposes a CRF; one real
    encode there becomes the new anchor, and suspension plus the residual
    pass are rerun from it. The final curve is suspended once more on the
    new anchor so it passes through the measurement exactly.
    """
    from .codec import encode_measure
    from .strategy import crf_for_target_vmaf

    if not model.config.suspension:
        raise ValueError("dynamic anchoring needs a model trained with suspension")
    x1 = model.design_matrix([features])
    s = model._first_pass(x1, initial_anchor.segment()[None, :])
    first = clamp_curve(RateQualityCurve.from_flat(s[0], model.grid))
    decision = crf_for_target_vmaf(first, target_vmaf)
    measured = encode_measure(backend, clip_ref, decision.crf)
    anchor = AnchorPoint(decision.crf, measured.bitrate, measured.vmaf)
    a = model.grid.index_of(anchor.crf)
    flat = model.predict_flat(x1, anchor.segment()[None, :], anchor_index=a)
    flat = suspend_batch(flat, a, anchor.segment()[None, :], model.config.suspension_mode, model.n)
    curve = clamp_curve(RateQualityCurve.from_flat(flat[0], model.grid))
    return RetargetResult(anchor, curve, decision.unreachable)


# -- feature files ------------------------------------------------------------------------


@dataclass
class FeatureFile:
    header: dict
    samples: List[Sample]

    @property
    def labelled(self) -> bool:
        return all(s.truth is not None for s in self.samples)


def _header(codec_dim, content_dim, grid: CrfGrid):
    return {
        "format": FEATURE_FILE_FORMAT,
        "version": FEATURE_FILE_VERSION,
        "codec_schema": CODEC_SCHEMA_VERSION,
        "content_schema": CONTENT_SCHEMA_VERSION,
        "codec_dim": codec_dim,
        "content_dim": content_dim,
        "anchor_dim": ANCHOR_DIM,
        "grid": [grid.min_crf, grid.max_crf, grid.step],
    }


def write_feature_file(path, samples: Sequence[Sample], grid: CrfGrid = GRID):
    """One header line, then one JSON record per video."""
    if not samples:
        raise ValueError("no records to write")
    codec_dim = samples[0].features.codec.size
    content_dim = samples[0].features.content.size
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_header(codec_dim, content_dim, grid)) + "\n")
        for s in samples:
            if s.features.codec.size != codec_dim or s.features.content.size != content_dim:
                raise ValueError(f"record {s.id} does not match the file schema")
            rec = {
                "id": s.id,
                "codec": s.features.codec.tolist(),
                "content": s.features.content.tolist(),
                "anchor_features": None if s.features.anchor is None else s.features.anchor.tolist(),
                "anchor": None if s.anchor is None else
                {"crf": s.anchor.crf, "bitrate": s.anchor.bitrate, "vmaf": s.anchor.vmaf},
            }
            if s.truth is not None:
                rec["labels"] = {"vmaf": s.truth.vmaf.tolist(), "bitrate": s.truth.bitrate.tolist()}
            fh.write(json.dumps(rec) + "\n")


def read_feature_file(path) -> FeatureFile:
    """Inverse of :func:`write_feature_file`.

    Errors carry the 1-based record line number; the header is line 0.
    """
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise FeatureFileError(f"bad header: {exc}", 0) from exc
        if header.get("format") != FEATURE_FILE_FORMAT:
            raise FeatureFileError("not a feature file", 0)
        if header.get("version") != FEATURE_FILE_VERSION:
            raise FeatureFileError(f"unsupported version {header.get('version')}", 0)
        grid = CrfGrid(*header["grid"])
        cd, td = header["codec_dim"], header["content_dim"]
        samples = []
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                codec, content = rec["codec"], rec["content"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FeatureFileError(f"malformed record: {exc}", lineno) from exc
            if len(codec) != cd:
                raise FeatureFileError(f"codec segment has {len(codec)} entries, header says {cd}",
                                       lineno)
            if len(content) != td:
                raise FeatureFileError(
                    f"content segment has {len(content)} entries, header says {td}", lineno)
            try:
                anchor = rec.get("anchor")
                anchor = None if anchor is None else AnchorPoint(**anchor)
                fv = FeatureVector(codec, content, rec.get("anchor_features"))
                labels = rec.get("labels")
                truth = None if labels is None else RateQualityCurve(
                    labels["vmaf"], labels["bitrate"], grid)
            except (ValueError, KeyError, TypeError) as exc:
                raise FeatureFileError(str(exc), lineno) from exc
            samples.append(Sample(rec.get("id", str(lineno)), fv, anchor, truth))
    return FeatureFile(header, samples)


# -- model bundle ----------------------------------------------------------------------------


def save_model(path, model: RateQualityModel):
    header = {
        "version": BUNDLE_VERSION,
        "config": model.config.to_dict(),
        "schema": model.schema,
        "codec_dim": model.codec_dim,
        "content_dim": model.content_dim,
        "grid": [model.grid.min_crf, model.grid.max_crf, model.grid.step],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    meta = {"schema": model.schema, "ablation": model.config.ablation}
    with open(path, "wb") as fh:
        fh.write(BUNDLE_MAGIC)
        fh.write(struct.pack("<IQ", BUNDLE_VERSION, len(blob)))
        fh.write(blob)
        write_network(fh, model.net1, dict(meta, role="first"))
        write_network(fh, model.net2, dict(meta, role="second"))


def load_model(path) -> RateQualityModel:
    with open(path, "rb") as fh:
        if fh.read(len(BUNDLE_MAGIC)) != BUNDLE_MAGIC:
            raise ModelFileError("not a model bundle (bad magic)")
        raw = fh.read(12)
        if len(raw) != 12:
            raise ModelFileError("truncated bundle header")
        version, hlen = struct.unpack("<IQ", raw)
        if version != BUNDLE_VERSION:
            raise ModelFileError(f"unsupported bundle version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        config = PredictorConfig.from_dict(header["config"])
        expected_schema = {"codec": CODEC_SCHEMA_VERSION, "content": CONTENT_SCHEMA_VERSION}
        if header["schema"] != expected_schema:
            raise ModelFileError(f"model feature schema {header['schema']} != {expected_schema}")
        meta = {"schema": header["schema"], "ablation": config.ablation}
        net1, _ = read_network(fh, dict(meta, role="first"))
        net2, _ = read_network(fh, dict(meta, role="second"))
        if fh.read(1):
            raise ModelFileError("trailing bytes after model bundle")
    model = RateQualityModel(config, net1, net2, header["codec_dim"], header["content_dim"],
                             CrfGrid(*header["grid"]))
    if net1.arch.in_dim != model.input_dim or net2.arch.in_dim != model.input_dim + 2 * model.n:
        raise ModelFileError("network input widths do not match the bundle configuration")
    return model
