"""Bottleneck residual feature extractor, stacked LSTM and output heads."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..engine import ops
from ..engine.tensor import DimensionError, Tensor
from .config import HeadKind, LstmConfig, ResNetConfig

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    bound = xavier_bound(fan_in, fan_out)
    return rng.uniform(-bound, bound, size=shape)


# -- parameter layout --------------------------------------------------------
def _stage_layout(cfg: ResNetConfig):
    """Yield (prefix, in_channels, widths, stride, needs_projection) per block."""
    cin = cfg.stem_channels
    for s, (reps, widths, stride) in enumerate(zip(cfg.block_replications, cfg.block_widths, cfg.stage_strides)):
        for b in range(reps):
            block_stride = stride if b == 0 else 1
            proj = block_stride != 1 or cin != widths[2]
            yield f"stage{s + 1}.block{b}", cin, widths, block_stride, proj
            cin = widths[2]


def _conv_specs(cfg: ResNetConfig):
    """Every convolution as (prefix, out, in, kernel)."""
    yield "stem", cfg.stem_channels, cfg.in_channels, cfg.stem_kernel
    for prefix, cin, (w1, w2, w3), _, proj in _stage_layout(cfg):
        yield f"{prefix}.conv1", w1, cin, 1
        yield f"{prefix}.conv2", w2, w1, 3
        yield f"{prefix}.conv3", w3, w2, 1
        if proj:
            yield f"{prefix}.downsample", w3, cin, 1


def init_extractor(cfg: ResNetConfig, rng: np.random.Generator):
    params: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    for name, f, c, k in _conv_specs(cfg):
        params[f"{name}.weight"] = xavier_uniform(rng, (f, c, k, k), c * k * k, f * k * k)
        if cfg.use_batch_norm:
            params[f"{name}.bn.gamma"] = np.ones(f)
            params[f"{name}.bn.beta"] = np.zeros(f)
            buffers[f"{name}.bn.running_mean"] = np.zeros(f)
            buffers[f"{name}.bn.running_var"] = np.ones(f)
        else:
            params[f"{name}.bias"] = np.zeros(f)
    return params, buffers


def init_lstm(cfg: LstmConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = {}
    d = cfg.input_dim
    h4 = 4 * cfg.hidden
    for layer in range(cfg.layers):
        params[f"lstm.layer{layer}.w_ih"] = xavier_uniform(rng, (d, h4), d, h4)
        params[f"lstm.layer{layer}.w_hh"] = xavier_uniform(rng, (cfg.hidden, h4), cfg.hidden, h4)
        params[f"lstm.layer{layer}.bias"] = np.zeros(h4)
        d = cfg.hidden
    return params


def init_head(hidden: int, head: HeadKind, rng: np.random.Generator) -> dict[str, np.ndarray]:
    k = head.width
    return {
        "head.weight": xavier_uniform(rng, (hidden, k), hidden, k),
        "head.bias": np.zeros(k),
    }


# -- forward -----------------------------------------------------------------
Params = dict[str, Tensor]


def conv_bn(
    x: Tensor,
    params: Params,
    buffers: dict[str, np.ndarray],
    name: str,
    stride: int,
    padding: int,
    train: bool,
) -> Tensor:
    """Convolution followed by batch norm, or by a bias when batch norm is off."""
    bias = params.get(f"{name}.bias")
    y = ops.conv2d(x, params[f"{name}.weight"], bias, stride=stride, padding=padding)
    if f"{name}.bn.gamma" in params:
        y = ops.batch_norm(
            y,
            params[f"{name}.bn.gamma"],
            params[f"{name}.bn.beta"],
            buffers[f"{name}.bn.running_mean"],
            buffers[f"{name}.bn.running_var"],
            train=train,
            eps=BN_EPS,
            momentum=BN_MOMENTUM,
        )
    return y


def bottleneck_forward(
    x: Tensor,
    params: Params,
    buffers: dict[str, np.ndarray],
    prefix: str,
    stride: int = 1,
    train: bool = False,
) -> Tensor:
    """``relu(F(x) + shortcut(x))`` with F = 1x1 -> 3x3 -> 1x1.

    The shortcut is a strided 1x1 projection when ``{prefix}.downsample``
    parameters exist, the identity otherwise.
    """
    out = ops.relu(conv_bn(x, params, buffers, f"{prefix}.conv1", 1, 0, train))
    out = ops.relu(conv_bn(out, params, buffers, f"{prefix}.conv2", stride, 1, train))
    out = conv_bn(out, params, buffers, f"{prefix}.conv3", 1, 0, train)
    if f"{prefix}.downsample.weight" in params:
        shortcut = conv_bn(x, params, buffers, f"{prefix}.downsample", stride, 0, train)
    else:
        if stride != 1 or out.shape != x.shape:
            raise DimensionError(f"{prefix}: identity shortcut needs matching shapes, {x.shape} vs {out.shape}")
        shortcut = x
    return ops.relu(ops.add(out, shortcut))


def extract_features(
    params: Params,
    buffers: dict[str, np.ndarray],
    cfg: ResNetConfig,
    frames: Tensor,
    train: bool = False,
) -> Tensor:
    """Map frames [N, C, H, W] to pooled features [N, D]."""
    if frames.ndim != 4 or tuple(frames.shape[2:]) != cfg.input_size or frames.shape[1] != cfg.in_channels:
        raise DimensionError(
            f"frames must be [N, {cfg.in_channels}, {cfg.input_size[0]}, {cfg.input_size[1]}], got {frames.shape}"
        )
    x = ops.relu(conv_bn(frames, params, buffers, "stem", cfg.stem_stride, cfg.stem_padding, train))
    x = ops.max_pool2d(x, cfg.pool_window, cfg.pool_stride)
    for prefix, _, _, stride, _ in _stage_layout(cfg):
        x = bottleneck_forward(x, params, buffers, prefix, stride, train)
    return ops.global_avg_pool(x)


def _lstm_step(gates_x: Tensor, h: Tensor, c: Tensor, w_hh: Tensor, hidden: int) -> tuple[Tensor, Tensor]:
    gates = ops.add(gates_x, ops.matmul(h, w_hh))
    i = ops.sigmoid(gates[:, 0:hidden])
    f = ops.sigmoid(gates[:, hidden : 2 * hidden])
    g = ops.tanh(gates[:, 2 * hidden : 3 * hidden])
    o = ops.sigmoid(gates[:, 3 * hidden : 4 * hidden])
    c_new = ops.add(ops.mul(f, c), ops.mul(i, g))
    h_new = ops.mul(o, ops.tanh(c_new))
    return h_new, c_new


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step; gate order along the 4H axis is input, forget, cell, output."""
    hidden = h.shape[1]
    return _lstm_step(ops.linear(x, w_ih, bias), h, c, w_hh, hidden)


def lstm_forward(params: Params, cfg: LstmConfig, features: Tensor) -> Tensor:
    """Run the stacked LSTM from a zero state over [B, T, D]; returns [B, T, H]."""
    if features.ndim != 3 or features.shape[2] != cfg.input_dim:
        raise DimensionError(f"features must be [B, T, {cfg.input_dim}], got {features.shape}")
    B, T, _ = features.shape
    H = cfg.hidden
    seq = features
    for layer in range(cfg.layers):
        p = f"lstm.layer{layer}"
        d = seq.shape[2]
        gx = ops.linear(ops.reshape(seq, (B * T, d)), params[f"{p}.w_ih"], params[f"{p}.bias"])
        gx = ops.reshape(gx, (B, T, 4 * H))
        zeros = np.zeros((B, H), dtype=features.dtype)
        h, c = Tensor(zeros), Tensor(zeros)
        outputs = []
        for t in range(T):
            h, c = _lstm_step(gx[:, t, :], h, c, params[f"{p}.w_hh"], H)
            outputs.append(h)
        seq = ops.stack(outputs, axis=1)
    return seq


def head_forward(params: Params, hidden_seq: Tensor) -> Tensor:
    B, T, H = hidden_seq.shape
    out = ops.linear(ops.reshape(hidden_seq, (B * T, H)), params["head.weight"], params["head.bias"])
    return ops.reshape(out, (B, T, params["head.bias"].shape[0]))


@dataclass
class Model:
    """Parameters, buffers and configuration of one feature+context+head network.

    ``params`` is the ordered map of learnable tensors. ``buffers`` holds
    batch-norm running statistics, which train-mode forwards update in place.
    """

    resnet: ResNetConfig
    lstm: LstmConfig
    head: HeadKind
    params: dict[str, Tensor]
    buffers: dict[str, np.ndarray]

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.params.values())).dtype

    def features(self, frames: Tensor, train: bool = False) -> Tensor:
        return extract_features(self.params, self.buffers, self.resnet, frames, train)

    def forward(self, clip, train: bool = False) -> Tensor:
        """Per-frame outputs [B, T, K] for a clip [B, T, C, H, W].

        The categorical head returns raw logits; the dimensional head returns
        unbounded (arousal, valence) values.
        """
        clip = clip if isinstance(clip, Tensor) else Tensor(np.asarray(clip, dtype=self.dtype))
        if clip.ndim != 5:
            raise DimensionError(f"clip must be [B, T, C, H, W], got {clip.shape}")
        B, T = clip.shape[:2]
        frames = ops.reshape(clip, (B * T,) + tuple(clip.shape[2:]))
        feats = self.features(frames, train)
        seq = lstm_forward(self.params, self.lstm, ops.reshape(feats, (B, T, feats.shape[1])))
        return head_forward(self.params, seq)

    __call__ = forward

    def parameter_count(self, predicate: Callable[[str], bool] = lambda name: True) -> int:
        return sum(t.size for name, t in self.params.items() if predicate(name))

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def astype(self, dtype) -> Model:
        return Model(
            self.resnet,
            self.lstm,
            self.head,
            {n: Tensor(t.data.astype(dtype), requires_grad=True) for n, t in self.params.items()},
            {n: b.astype(np.float64) for n, b in self.buffers.items()},
        )


def is_extractor_param(name: str) -> bool:
    return not (name.startswith("lstm.") or name.startswith("head."))


def layer_group(name: str) -> str:
    """Coarse group of a parameter: stem, stage1..4, lstm or head."""
    return name.split(".")[0]
