"""Dense network engine with hand-written gradients.

The network used for both prediction passes is::

    batchnorm(in) -> fc(in, hidden) -> relu -> gate -> residual blocks -> fc(hidden, out)

where ``gate`` is a squeeze-excitation style feature gate
(``h * sigmoid(fc(relu(fc(h))))``) and each residual block is
``h + fc(relu(fc(h)))``. The head output is mapped to label units with a
fixed per-channel affine (``out_scale``, ``out_shift``) so training starts
near the label distribution even when labels are in raw kbps.

Everything is float64 numpy; parameters live in ordered dicts whose key
order is fully determined by the architecture descriptor.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np

__all__ = [
    "Architecture",
    "Network",
    "LossConfig",
    "AdamState",
    "ShapeError",
    "StateError",
    "ModelFileError",
    "loss_eq1",
    "loss_eq1_grad",
    "adam_step",
    "forward",
    "backward",
    "save_network",
    "load_network",
    "write_network",
    "read_network",
]

LOG_FLOOR = 1e-3
BN_EPS = 1e-5
MODEL_MAGIC = b"RQNET\x00"
MODEL_VERSION = 1


class ShapeError(ValueError):
    pass


class StateError(RuntimeError):
    pass


class ModelFileError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    in_dim: int
    out_dim: int = 202
    hidden: int = 256
    n_blocks: int = 2
    gate_ratio: int = 4
    bn_momentum: float = 0.1

    @property
    def gate_dim(self) -> int:
        return max(1, self.hidden // self.gate_ratio)

    def param_shapes(self) -> Dict[str, tuple]:
        h, g = self.hidden, self.gate_dim
        shapes = {
            "bn_gamma": (self.in_dim,),
            "bn_beta": (self.in_dim,),
            "fc_in_W": (self.in_dim, h),
            "fc_in_b": (h,),
            "gate_W1": (h, g),
            "gate_b1": (g,),
            "gate_W2": (g, h),
            "gate_b2": (h,),
        }
        for k in range(self.n_blocks):
            shapes[f"block{k}_W1"] = (h, h)
            shapes[f"block{k}_b1"] = (h,)
            shapes[f"block{k}_W2"] = (h, h)
            shapes[f"block{k}_b2"] = (h,)
        shapes["head_W"] = (h, self.out_dim)
        shapes["head_b"] = (self.out_dim,)
        return shapes

    def buffer_shapes(self) -> Dict[str, tuple]:
        return {
            "bn_running_mean": (self.in_dim,),
            "bn_running_var": (self.in_dim,),
            "out_scale": (self.out_dim,),
            "out_shift": (self.out_dim,),
        }


@dataclass(frozen=True)
class LossConfig:
    lam: float = 1e-4
    n_vmaf: int = 101
    log_bitrate: bool = False  # compare log bitrates instead of raw kbps

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("loss weight lambda must be positive")


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(x):
    # split by sign so large |x| never overflows exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Network:
    """One prediction network: parameters, buffers and forward/backward."""

    def __init__(self, arch: Architecture, seed: Optional[int] = 0, zero: bool = False):
        self.arch = arch
        self.params: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        rng = np.random.default_rng(seed)
        for name, shape in arch.param_shapes().items():
            self.params[name] = np.zeros(shape) if zero else self._init(name, shape, rng)
        self.buffers = {
            "bn_running_mean": np.zeros(arch.in_dim),
            "bn_running_var": np.ones(arch.in_dim),
            "out_scale": np.ones(arch.out_dim),
            "out_shift": np.zeros(arch.out_dim),
        }
        self._cache_token = 0
        self.frozen_bn = False

    @staticmethod
    def _init(name, shape, rng):
        if name == "bn_gamma":
            return np.ones(shape)
        if len(shape) == 1:
            return np.zeros(shape)
        fan_in = shape[0]
        std = np.sqrt(2.0 / fan_in)
        if name.endswith("_W2") and name.startswith("block"):
            std *= 0.1
        elif name == "head_W":
            std = 0.1 / np.sqrt(fan_in)
        return rng.normal(0.0, std, size=shape)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "Network":
        net = Network(self.arch, zero=True)
        net.params = {k: v.copy() for k, v in self.params.items()}
        net.buffers = {k: v.copy() for k, v in self.buffers.items()}
        net.frozen_bn = self.frozen_bn
        return net

    def freeze_input_stats(self, x):
        """Fix the input normalization to the population statistics of ``x``."""
        x = np.asarray(x, dtype=np.float64)
        self.buffers["bn_running_mean"] = x.mean(axis=0)
        self.buffers["bn_running_var"] = x.var(axis=0)
        self.frozen_bn = True

    def set_output_affine(self, scale, shift):
        scale = np.asarray(scale, dtype=np.float64)
        shift = np.asarray(shift, dtype=np.float64)
        if scale.shape != (self.arch.out_dim,) or shift.shape != (self.arch.out_dim,):
            raise ShapeError("output affine must match out_dim")
        self.buffers["out_scale"] = scale.copy()
        self.buffers["out_shift"] = shift.copy()

    def forward(self, x, train: bool = False):
        """Return ``(output, cache)``; ``cache`` is only meaningful in train mode.

        Train mode normalizes with batch statistics and updates the running
        statistics; eval mode uses the running statistics only. With
        ``frozen_bn`` set, train mode also uses the running statistics and
        leaves them untouched.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.arch.in_dim:
            raise ShapeError(f"expected input of width {self.arch.in_dim}, got shape {x.shape}")
        p = self.params
        c = {}
        batch_stats = train and not self.frozen_bn
        if batch_stats:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            m = self.arch.bn_momentum
            self.buffers["bn_running_mean"] = (1 - m) * self.buffers["bn_running_mean"] + m * mu
            self.buffers["bn_running_var"] = (1 - m) * self.buffers["bn_running_var"] + m * var
        else:
            mu = self.buffers["bn_running_mean"]
            var = self.buffers["bn_running_var"]
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mu) * inv_std
        y = p["bn_gamma"] * xhat + p["bn_beta"]
        c["xhat"], c["inv_std"], c["y"] = xhat, inv_std, y
        c["batch_stats"] = batch_stats

        h0 = _relu(y @ p["fc_in_W"] + p["fc_in_b"])
        a1 = _relu(h0 @ p["gate_W1"] + p["gate_b1"])
        g = _sigmoid(a1 @ p["gate_W2"] + p["gate_b2"])
        h = h0 * g
        c["h0"], c["a1"], c["g"] = h0, a1, g

        hs = [h]
        for k in range(self.arch.n_blocks):
            v = _relu(h @ p[f"block{k}_W1"] + p[f"block{k}_b1"])
            h = h + v @ p[f"block{k}_W2"] + p[f"block{k}_b2"]
            c[f"v{k}"] = v
            hs.append(h)
        c["hs"] = hs
        raw = h @ p["head_W"] + p["head_b"]
        out = raw * self.buffers["out_scale"] + self.buffers["out_shift"]
        if train:
            self._cache_token += 1
            c["token"] = self._cache_token
            c["train"] = True
        return out, c

    def predict(self, x) -> np.ndarray:
        return self.forward(x, train=False)[0]

    def backward(self, cache, dout):
        """Gradients of a scalar w.r.t. parameters and input, given dL/d(output)."""
        if not cache.get("train") or cache.get("token") != self._cache_token:
            raise StateError("backward needs the cache of the most recent train-mode forward")
        p = self.params
        dout = np.asarray(dout, dtype=np.float64)
        grads = {}
        draw = dout * self.buffers["out_scale"]
        hs = cache["hs"]
        grads["head_W"] = hs[-1].T @ draw
        grads["head_b"] = draw.sum(axis=0)
        dh = draw @ p["head_W"].T

        for k in reversed(range(self.arch.n_blocks)):
            v = cache[f"v{k}"]
            grads[f"block{k}_W2"] = v.T @ dh
            grads[f"block{k}_b2"] = dh.sum(axis=0)
            du = (dh @ p[f"block{k}_W2"].T) * (v > 0)
            grads[f"block{k}_W1"] = hs[k].T @ du
            grads[f"block{k}_b1"] = du.sum(axis=0)
            dh = dh + du @ p[f"block{k}_W1"].T

        h0, a1, g = cache["h0"], cache["a1"], cache["g"]
        dh0 = dh * g
        dzg = dh * h0 * g * (1.0 - g)
        grads["gate_W2"] = a1.T @ dzg
        grads["gate_b2"] = dzg.sum(axis=0)
        da1 = (dzg @ p["gate_W2"].T) * (a1 > 0)
        grads["gate_W1"] = h0.T @ da1
        grads["gate_b1"] = da1.sum(axis=0)
        dh0 = dh0 + da1 @ p["gate_W1"].T

        dz0 = dh0 * (h0 > 0)
        y = cache["y"]
        grads["fc_in_W"] = y.T @ dz0
        grads["fc_in_b"] = dz0.sum(axis=0)
        dy = dz0 @ p["fc_in_W"].T

        xhat, inv_std = cache["xhat"], cache["inv_std"]
        grads["bn_gamma"] = (dy * xhat).sum(axis=0)
        grads["bn_beta"] = dy.sum(axis=0)
        dxhat = dy * p["bn_gamma"]
        if cache["batch_stats"]:
            n = dxhat.shape[0]
            dx = (inv_std / n) * (
                n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
            )
        else:
            dx = dxhat * inv_std
        ordered = {name: grads[name] for name in self.params}
        return ordered, dx


def forward(net: Network, x, mode: str = "eval"):
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return net.forward(x, train=(mode == "train"))


def backward(net: Network, cache, upstream):
    return net.backward(cache, upstream)


def _split(arr, n_vmaf):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr[:, :n_vmaf], arr[:, n_vmaf:]


def _bitrate_residual(pred_r, truth_r, cfg: LossConfig):
    if not cfg.log_bitrate:
        return pred_r - truth_r, np.ones_like(pred_r)
    floor = np.maximum(pred_r, LOG_FLOOR)
    deriv = np.where(pred_r > LOG_FLOOR, 1.0 / floor, 0.0)
    return np.log(floor) - np.log(np.maximum(truth_r, LOG_FLOOR)), deriv


def loss_eq1(pred, truth, cfg: LossConfig = LossConfig()) -> float:
    """Batch mean of ``|dV|^2 + lam * |dR|^2`` over flat (VMAF, bitrate) rows."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(truth))):
        raise FloatingPointError("non-finite values in loss inputs")
    pv, pr = _split(pred, cfg.n_vmaf)
    tv, tr = _split(truth, cfg.n_vmaf)
    dr, _ = _bitrate_residual(pr, tr, cfg)
    per_sample = ((pv - tv) ** 2).sum(axis=1) + cfg.lam * (dr ** 2).sum(axis=1)
    return float(per_sample.mean())


def loss_eq1_grad(pred, truth, cfg: LossConfig = LossConfig()) -> np.ndarray:
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    b = pred.shape[0]
    pv, pr = _split(pred, cfg.n_vmaf)
    tv, tr = _split(truth, cfg.n_vmaf)
    dr, deriv = _bitrate_residual(pr, tr, cfg)
    return np.hstack([2.0 * (pv - tv), 2.0 * cfg.lam * dr * deriv]) / b


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params, grads, state: AdamState, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
              weight_decay=0.0):
    """In-place bias-corrected Adam update; returns ``(params, state)``.

    ``weight_decay`` shrinks weight matrices (names containing ``_W``)
    directly, decoupled from the adaptive step.
    """
    if set(grads) != set(params) or set(state.m) != set(params):
        raise ShapeError("optimizer state, gradients and parameters disagree on names")
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if weight_decay and "_W" in name:
            p *= 1.0 - lr * weight_decay
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


# -- model file -------------------------------------------------------------
#
# layout: magic, u32 version, u64 header length, UTF-8 JSON header, then
# little-endian float64 tensors in architecture order (params, then buffers)


def _tensor_order(arch: Architecture):
    return list(arch.param_shapes().items()) + list(arch.buffer_shapes().items())


def write_network(fh, net: Network, meta: Optional[dict] = None):
    header = {"version": MODEL_VERSION, "arch": asdict(net.arch), "meta": meta or {}}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    fh.write(MODEL_MAGIC)
    fh.write(struct.pack("<IQ", MODEL_VERSION, len(blob)))
    fh.write(blob)
    for name, shape in _tensor_order(net.arch):
        arr = net.params[name] if name in net.params else net.buffers[name]
        if not np.all(np.isfinite(arr)):
            raise ModelFileError(f"tensor {name} is not finite")
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_network(fh, expect_meta: Optional[dict] = None) -> tuple:
    """Read one network; returns ``(network, meta)``.

    ``expect_meta`` entries must match the stored meta exactly.
    """
    if fh.read(len(MODEL_MAGIC)) != MODEL_MAGIC:
        raise ModelFileError("not a network file (bad magic)")
    raw = fh.read(12)
    if len(raw) != 12:
        raise ModelFileError("truncated network header")
    version, hlen = struct.unpack("<IQ", raw)
    if version != MODEL_VERSION:
        raise ModelFileError(f"unsupported network file version {version}")
    header = json.loads(fh.read(hlen).decode("utf-8"))
    arch = Architecture(**header["arch"])
    meta = header.get("meta", {})
    for key, value in (expect_meta or {}).items():
        if meta.get(key) != value:
            raise ModelFileError(f"model {key} is {meta.get(key)!r}, expected {value!r}")
    net = Network(arch, zero=True)
    for name, shape in _tensor_order(arch):
        n = int(np.prod(shape))
        buf = fh.read(8 * n)
        if len(buf) != 8 * n:
            raise ModelFileError(f"truncated tensor {name}")
        arr = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
        if name in net.params:
            net.params[name] = arr
        else:
            net.buffers[name] = arr
    if np.any(net.buffers["bn_running_var"] <= 0):
        raise ModelFileError("running variance must be positive")
    return net, meta


def save_network(path, net: Network, meta: Optional[dict] = None):
    with open(path, "wb") as fh:
        write_network(fh, net, meta)


def load_network(path, expect_meta: Optional[dict] = None) -> tuple:
    with open(path, "rb") as fh:
        return read_network(fh, expect_meta)
