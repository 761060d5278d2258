"""1-D U-Net denoiser predicting the clean signal from its noisy version.

The noisy signal and the conditioner enter as two channels. The encoder
halves the length seven times (stride-2 convolutions), the bottleneck is a
six-layer residual dilated convolution stack (dilations 1..32) for
long-range temporal structure, and the decoder mirrors the encoder with
nearest-neighbor upsampling and channel-concatenated skip connections. Every
resolution block receives the timestep embedding additively.

Parameters live in a flat name -> array mapping. `unet_apply` accepts either
plain arrays (fast untraced path) or autodiff Vars for the parameters, and
weight arrays may carry an extra leading batch axis (used by the vectorized
finite-difference checks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfig, LengthNotDivisible, ShapeMismatch
from . import autodiff as ops

N_STAGES = 7
TOTAL_STRIDE = 2 ** N_STAGES
BOTTLENECK_DILATIONS = (1, 2, 4, 8, 16, 32)


@dataclass(frozen=True)
class UNetConfig:
    input_length: int
    base_channels: int = 32
    channel_multipliers: tuple[int, ...] = (1, 1, 2, 2, 4, 4, 8)
    bottleneck_dilations: tuple[int, ...] = BOTTLENECK_DILATIONS
    time_embed_dim: int = 0  # 0 -> 4 * base_channels
    channel_cap: int = 256
    norm_groups: int = 8
    dtype: str = "float64"

    def __post_init__(self):
        if self.input_length <= 0 or self.input_length % TOTAL_STRIDE != 0:
            raise InvalidConfig(
                f"input_length must be a positive multiple of {TOTAL_STRIDE}, "
                f"got {self.input_length}"
            )
        if self.base_channels < 1:
            raise InvalidConfig(f"base_channels must be >= 1, got {self.base_channels}")
        if len(self.channel_multipliers) != N_STAGES:
            raise InvalidConfig(
                f"need exactly {N_STAGES} channel multipliers, "
                f"got {len(self.channel_multipliers)}"
            )
        if any(m < 1 for m in self.channel_multipliers):
            raise InvalidConfig("channel multipliers must be >= 1")
        if tuple(self.bottleneck_dilations) != BOTTLENECK_DILATIONS:
            raise InvalidConfig(
                f"bottleneck dilations are fixed to {BOTTLENECK_DILATIONS}"
            )
        if self.time_embed_dim < 0 or self.time_embed_dim % 2 != 0:
            raise InvalidConfig("time_embed_dim must be a non-negative even number")
        if self.channel_cap < 1 or self.norm_groups < 1:
            raise InvalidConfig("channel_cap and norm_groups must be >= 1")
        if self.dtype not in ("float64", "float32"):
            raise InvalidConfig(f"dtype must be float64 or float32, got {self.dtype}")
        for c in self.channels:
            if c % self.norm_groups != 0:
                raise InvalidConfig(
                    f"stage width {c} not divisible by norm_groups {self.norm_groups}"
                )

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(
            min(self.base_channels * m, self.channel_cap)
            for m in self.channel_multipliers
        )

    @property
    def temb_dim(self) -> int:
        return self.time_embed_dim if self.time_embed_dim else 4 * self.base_channels

    @property
    def bottleneck_length(self) -> int:
        return self.input_length // TOTAL_STRIDE


def desk_config(input_length: int = 2048) -> UNetConfig:
    """Small preset for laptop-scale training and strict gradient checks."""
    return UNetConfig(input_length=input_length, base_channels=8)


def paper_config(input_length: int = 24576) -> UNetConfig:
    """Full-scale preset (base 32, capped at 256 channels)."""
    return UNetConfig(input_length=input_length, base_channels=32)


def _resblock_shapes(prefix: str, c_in: int, c_out: int, temb_dim: int) -> dict:
    shapes = {
        f"{prefix}.norm1.g": (c_in,),
        f"{prefix}.norm1.b": (c_in,),
        f"{prefix}.conv1.w": (c_out, c_in, 3),
        f"{prefix}.conv1.b": (c_out,),
        f"{prefix}.temb.w": (temb_dim, c_out),
        f"{prefix}.temb.b": (c_out,),
        f"{prefix}.norm2.g": (c_out,),
        f"{prefix}.norm2.b": (c_out,),
        f"{prefix}.conv2.w": (c_out, c_out, 3),
        f"{prefix}.conv2.b": (c_out,),
    }
    if c_in != c_out:
        shapes[f"{prefix}.skip.w"] = (c_out, c_in, 1)
        shapes[f"{prefix}.skip.b"] = (c_out,)
    return shapes


def layer_shapes(config: UNetConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter tensor's shape, in deterministic build order."""
    chs = config.channels
    d = config.temb_dim
    shapes: dict[str, tuple[int, ...]] = {}
    shapes["temb.lin1.w"] = (d, d)
    shapes["temb.lin1.b"] = (d,)
    shapes["temb.lin2.w"] = (d, d)
    shapes["temb.lin2.b"] = (d,)
    shapes["stem.w"] = (chs[0], 2, 3)
    shapes["stem.b"] = (chs[0],)
    prev = chs[0]
    for i, c in enumerate(chs):
        shapes.update(_resblock_shapes(f"enc{i}.res", prev, c, d))
        shapes[f"enc{i}.down.w"] = (c, c, 3)
        shapes[f"enc{i}.down.b"] = (c,)
        prev = c
    for j in range(len(config.bottleneck_dilations)):
        shapes[f"mid{j}.norm.g"] = (chs[-1],)
        shapes[f"mid{j}.norm.b"] = (chs[-1],)
        shapes[f"mid{j}.conv.w"] = (chs[-1], chs[-1], 3)
        shapes[f"mid{j}.conv.b"] = (chs[-1],)
    for i in range(N_STAGES - 1, -1, -1):
        c_up_in = chs[i + 1] if i + 1 < N_STAGES else chs[-1]
        shapes[f"dec{i}.up.w"] = (chs[i], c_up_in, 3)
        shapes[f"dec{i}.up.b"] = (chs[i],)
        shapes.update(_resblock_shapes(f"dec{i}.res", 2 * chs[i], chs[i], d))
    shapes["head.norm.g"] = (chs[0],)
    shapes["head.norm.b"] = (chs[0],)
    shapes["head.conv.w"] = (1, chs[0], 3)
    shapes["head.conv.b"] = (1,)
    return shapes


def parameter_count(config: UNetConfig) -> int:
    return sum(int(np.prod(s)) for s in layer_shapes(config).values())


def init_params(config: UNetConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fan-in-scaled random weights, zero biases, unit norm gains."""
    dtype = np.dtype(config.dtype)
    params: dict[str, np.ndarray] = {}
    for name, shape in layer_shapes(config).items():
        kind = name.rsplit(".", 1)[-1]
        if kind == "w":
            if len(shape) == 3:  # conv: (c_out, c_in, ksize)
                fan_in = shape[1] * shape[2]
            else:  # linear: (d_in, d_out)
                fan_in = shape[0]
            params[name] = (rng.standard_normal(shape) / math.sqrt(fan_in)).astype(
                dtype
            )
        elif kind == "g":
            params[name] = np.ones(shape, dtype=dtype)
        else:  # biases and norm shifts
            params[name] = np.zeros(shape, dtype=dtype)
    return params


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal features at geometrically spaced frequencies.

    Layout interleaves (sin, cos) pairs: index 2i is sin(t * w_i), index
    2i + 1 is cos(t * w_i), with w_0 = 1 and w_i decreasing geometrically
    down to 1/10000.
    """
    if dim % 2 != 0 or dim <= 0:
        raise ValueError(f"embedding dim must be positive and even, got {dim}")
    t = np.asarray(t, dtype=np.float64)
    half = dim // 2
    if half == 1:
        freqs = np.ones(1)
    else:
        freqs = np.exp(-math.log(10000.0) * np.arange(half) / (half - 1))
    angles = t[..., None] * freqs
    emb = np.empty(t.shape + (dim,), dtype=np.float64)
    emb[..., 0::2] = np.sin(angles)
    emb[..., 1::2] = np.cos(angles)
    return emb


def _linear(x, w, b):
    # x: (..., D). Weights may carry leading batch dims; go through a
    # (..., 1, D) @ (..., D, Do) matmul so both layouts work.
    xe = ops.reshape(x, tuple(x.shape[:-1]) + (1, x.shape[-1]))
    y = ops.matmul(xe, w)
    y = ops.reshape(y, tuple(y.shape[:-2]) + (y.shape[-1],))
    return ops.add(y, b)


def _conv(params, prefix, x, stride=1, dilation=1, padding=1):
    w = params[prefix + ".w"]
    b = params[prefix + ".b"]
    y = ops.conv1d(x, w, stride=stride, dilation=dilation, padding=padding)
    bb = ops.reshape(b, tuple(b.shape) + (1,))
    return ops.add(y, bb)


def _resblock(params, prefix, x, temb_act, groups):
    h = ops.group_norm(x, params[f"{prefix}.norm1.g"], params[f"{prefix}.norm1.b"], groups)
    h = ops.silu(h)
    h = _conv(params, f"{prefix}.conv1", h)
    tproj = _linear(temb_act, params[f"{prefix}.temb.w"], params[f"{prefix}.temb.b"])
    h = ops.add(h, ops.reshape(tproj, tuple(tproj.shape) + (1,)))
    h = ops.group_norm(h, params[f"{prefix}.norm2.g"], params[f"{prefix}.norm2.b"], groups)
    h = ops.silu(h)
    h = _conv(params, f"{prefix}.conv2", h)
    if f"{prefix}.skip.w" in params:
        x = _conv(params, f"{prefix}.skip", x, padding=0)
    return ops.add(h, x)


def unet_apply(params, x_t, c, t, config: UNetConfig, trace: dict | None = None):
    """Generic forward pass; params may be arrays or autodiff Vars.

    x_t, c: (batch, 1, K). t: scalar or (batch,) integer timesteps.
    Returns the clean-signal estimate with the shape of x_t. When ``trace``
    is given, activation shapes are recorded under "enc{i}", "bottleneck",
    and "dec{i}" keys.
    """
    x_t = np.asarray(x_t)
    c = np.asarray(c)
    if x_t.shape != c.shape:
        raise ShapeMismatch(f"x_t shape {x_t.shape} != conditioner shape {c.shape}")
    if x_t.ndim != 3 or x_t.shape[1] != 1:
        raise ShapeMismatch(f"expected (batch, 1, K), got {x_t.shape}")
    k = x_t.shape[-1]
    if k % TOTAL_STRIDE != 0:
        raise LengthNotDivisible(f"length {k} not divisible by {TOTAL_STRIDE}")
    groups = config.norm_groups

    t = np.asarray(t)
    if t.ndim == 0:
        t = t.reshape(1)
    temb = time_embedding(t, config.temb_dim).astype(config.dtype)
    temb = _linear(temb, params["temb.lin1.w"], params["temb.lin1.b"])
    temb = ops.silu(temb)
    temb = _linear(temb, params["temb.lin2.w"], params["temb.lin2.b"])
    temb_act = ops.silu(temb)

    h = _conv(params, "stem", np.concatenate([c, x_t], axis=-2))
    skips = []
    for i in range(N_STAGES):
        h = _resblock(params, f"enc{i}.res", h, temb_act, groups)
        skips.append(h)
        h = _conv(params, f"enc{i}.down", h, stride=2)
        if trace is not None:
            trace[f"enc{i}"] = tuple(h.shape)
    if trace is not None:
        trace["bottleneck"] = tuple(h.shape)
    for j, dil in enumerate(config.bottleneck_dilations):
        hn = ops.group_norm(
            h, params[f"mid{j}.norm.g"], params[f"mid{j}.norm.b"], groups
        )
        h = ops.add(h, _conv(params, f"mid{j}.conv", ops.silu(hn), dilation=dil, padding=dil))
    for i in range(N_STAGES - 1, -1, -1):
        h = ops.upsample_nearest2(h)
        h = _conv(params, f"dec{i}.up", h)
        h = ops.concat([h, skips[i]], axis=-2)
        h = _resblock(params, f"dec{i}.res", h, temb_act, groups)
        if trace is not None:
            trace[f"dec{i}"] = tuple(h.shape)
    h = ops.group_norm(h, params["head.norm.g"], params["head.norm.b"], groups)
    h = ops.silu(h)
    return _conv(params, "head.conv", h)


def unet_forward(params, x_t, c, t, config: UNetConfig) -> np.ndarray:
    """Untraced forward pass on plain arrays."""
    out = unet_apply(params, x_t, c, t, config)
    return out.data if isinstance(out, ops.Var) else out


def make_denoiser(params, config: UNetConfig):
    """Wrap the network as a (x_t, c, t) -> x0_hat callable on (K,) or (B, K)."""

    def denoise(x_t, c, t):
        single = x_t.ndim == 1
        xb = x_t[None, None, :] if single else x_t[:, None, :]
        cb = c[None, None, :] if single else c[:, None, :]
        out = unet_forward(params, xb, cb, t, config)
        return out[0, 0] if single else out[:, 0, :]

    return denoise
