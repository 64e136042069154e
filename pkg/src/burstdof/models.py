"""Blur prediction and multi-scale merging networks.

The blur prediction network is a U-Net over a single color channel's burst
stack [1, N, H, W]: a shared encoder feeds two mirrored decoders, one
producing the defocused image (sigmoid, in [0, 1]) and one an unconstrained
disparity estimate. Applied at full, half, and quarter scale it yields a
pyramid whose entries are upsampled back to full resolution; a small
merging network turns per-scale disparity magnitude/consistency cues into
per-pixel softmax blending weights over the three scales.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import ndgrad
from .burst import Burst
from .ndgrad import Tensor

SCALE_FACTORS = (1, 2, 4)


@dataclass(frozen=True)
class BpnConfig:
    levels: int = 3
    base_width: int = 8
    burst_len: int = 9
    leaky_slope: float = 0.1

    def level_widths(self) -> list[int]:
        return [self.base_width * 2**i for i in range(self.levels)]


@dataclass(frozen=True)
class MmnConfig:
    hidden_width: int = 16
    leaky_slope: float = 0.1
    # two features (disparity magnitude, cross-channel variance) per scale
    in_channels: int = 2 * len(SCALE_FACTORS)


def _conv_init(rng: np.random.Generator, f: int, c: int, k: int, slope: float) -> np.ndarray:
    std = np.sqrt(2.0 / (c * k * k * (1.0 + slope**2)))
    return rng.normal(0.0, std, size=(f, c, k, k))


class BpnModel:
    """Parameter container for the dual-decoder U-Net."""

    def __init__(self, config: BpnConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: BpnConfig = BpnConfig(), seed: int = 0) -> "BpnModel":
        rng = np.random.default_rng(seed)
        slope = config.leaky_slope
        widths = config.level_widths()
        params: dict[str, Tensor] = {}

        def conv(name: str, f: int, c: int, k: int = 3) -> None:
            params[f"{name}.w"] = Tensor(_conv_init(rng, f, c, k, slope), requires_grad=True)
            params[f"{name}.b"] = Tensor(np.zeros(f), requires_grad=True)

        c_in = config.burst_len
        for i, width in enumerate(widths):
            conv(f"enc{i}.conv0", width, c_in)
            conv(f"enc{i}.conv1", width, width)
            c_in = width
        mid = widths[-1] * 2
        conv("mid.conv0", mid, widths[-1])
        conv("mid.conv1", mid, mid)
        for branch in ("def", "disp"):
            c_prev = mid
            for i in reversed(range(config.levels)):
                conv(f"{branch}{i}.conv0", widths[i], c_prev + widths[i])
                conv(f"{branch}{i}.conv1", widths[i], widths[i])
                c_prev = widths[i]
            conv(f"{branch}_head", 1, widths[0], k=1)
        return cls(config, params)


class MmnModel:
    """Parameter container for the per-pixel scale-weight predictor."""

    def __init__(self, config: MmnConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: MmnConfig = MmnConfig(), seed: int = 0) -> "MmnModel":
        rng = np.random.default_rng(seed)
        slope = config.leaky_slope
        h = config.hidden_width
        params: dict[str, Tensor] = {}
        params["conv0.w"] = Tensor(
            _conv_init(rng, h, config.in_channels, 3, slope), requires_grad=True
        )
        params["conv0.b"] = Tensor(np.zeros(h), requires_grad=True)
        params["conv1.w"] = Tensor(_conv_init(rng, h, h, 3, slope), requires_grad=True)
        params["conv1.b"] = Tensor(np.zeros(h), requires_grad=True)
        # zero-initialized head: untrained weights start uniform over scales
        params["conv2.w"] = Tensor(
            np.zeros((len(SCALE_FACTORS), h, 3, 3)), requires_grad=True
        )
        params["conv2.b"] = Tensor(np.zeros(len(SCALE_FACTORS)), requires_grad=True)
        return cls(config, params)


@dataclass(frozen=True)
class ScalePyramid:
    """Full, half, and quarter scale outputs of one color channel, all
    upsampled to full resolution; disparity values share full-scale pixel
    units."""

    defocus: tuple[Tensor, Tensor, Tensor]
    disparity: tuple[Tensor, Tensor, Tensor]

    def __post_init__(self):
        shapes = {t.data.shape for t in self.defocus + self.disparity}
        if len(self.defocus) != len(SCALE_FACTORS) or len(shapes) != 1:
            raise ValueError("pyramid needs three scales at one full-resolution shape")


def _conv_block(x: Tensor, params: dict[str, Tensor], name: str, slope: float) -> Tensor:
    x = ndgrad.add_bias(ndgrad.conv2d(x, params[f"{name}.w"], 1, 1), params[f"{name}.b"])
    return ndgrad.leaky_relu(x, slope)


def bpn_forward(model: BpnModel, x) -> tuple[Tensor, Tensor]:
    """Run the U-Net on one channel's burst stack [1, N, H, W].

    Returns (defocused image, disparity estimate), both [1, 1, H, W]; the
    defocused image passes through a sigmoid. H and W must be divisible by
    2^levels.
    """
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
    cfg = model.config
    if x.data.ndim != 4 or x.data.shape[0] != 1:
        raise ValueError(f"expected burst stack [1, N, H, W], got {x.data.shape}")
    if x.data.shape[1] != cfg.burst_len:
        raise ValueError(
            f"burst stack has {x.data.shape[1]} frames, model expects {cfg.burst_len}"
        )
    h, w = x.data.shape[2:]
    div = 2**cfg.levels
    if h % div or w % div:
        raise ValueError(f"spatial size {h}x{w} not divisible by {div}")

    p, slope = model.params, cfg.leaky_slope
    skips = []
    feat = x
    for i in range(cfg.levels):
        feat = _conv_block(feat, p, f"enc{i}.conv0", slope)
        feat = _conv_block(feat, p, f"enc{i}.conv1", slope)
        skips.append(feat)
        feat = ndgrad.downsample2(feat)
    feat = _conv_block(feat, p, "mid.conv0", slope)
    feat = _conv_block(feat, p, "mid.conv1", slope)

    def decode(branch: str) -> Tensor:
        d = feat
        for i in reversed(range(cfg.levels)):
            d = ndgrad.upsample2(d)
            d = ndgrad.concat(d, skips[i], axis=1)
            d = _conv_block(d, p, f"{branch}{i}.conv0", slope)
            d = _conv_block(d, p, f"{branch}{i}.conv1", slope)
        return ndgrad.add_bias(
            ndgrad.conv2d(d, p[f"{branch}_head.w"], 1, 0), p[f"{branch}_head.b"]
        )

    return ndgrad.sigmoid(decode("def")), decode("disp")


def multiscale_bpn(model: BpnModel, x) -> ScalePyramid:
    """Apply the same network at full, half, and quarter scale.

    Each scale's outputs are bilinearly upsampled back to full resolution;
    disparity values are doubled per halving level so all scales report
    full-resolution pixel units. H and W must be divisible by 4 * 2^levels.
    """
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
    h, w = x.data.shape[2:]
    div = SCALE_FACTORS[-1] * 2**model.config.levels
    if h % div or w % div:
        raise ValueError(f"spatial size {h}x{w} not divisible by {div}")

    defs, disps = [], []
    scaled = x
    for level, factor in enumerate(SCALE_FACTORS):
        if level > 0:
            scaled = ndgrad.downsample2(scaled)
        i_def, i_disp = bpn_forward(model, scaled)
        for _ in range(level):
            i_def = ndgrad.upsample2(i_def)
            i_disp = ndgrad.upsample2(i_disp)
        if factor > 1:
            i_disp = float(factor) * i_disp
        defs.append(i_def)
        disps.append(i_disp)
    return ScalePyramid(tuple(defs), tuple(disps))


def mmn_features(pyramids: list[ScalePyramid]) -> Tensor:
    """Per-scale disparity cues pooled over color channels.

    For each scale: mean absolute disparity across the channels' estimates
    (magnitude) and their population variance (inconsistency), stacked as
    [1, 6, H, W] in scale order (magnitude, variance) per scale. The result
    is a constant input to the merging network; gradients do not flow back
    into the pyramid through it.
    """
    if not pyramids:
        raise ValueError("at least one channel pyramid required")
    planes = []
    for s in range(len(SCALE_FACTORS)):
        try:
            stack = np.stack([p.disparity[s].data[0, 0] for p in pyramids])
        except IndexError as e:
            raise ValueError(f"pyramid missing scale {s}") from e
        planes.append(np.abs(stack).mean(axis=0))
        planes.append(stack.var(axis=0))
    return Tensor(np.stack(planes)[None])


def mmn_forward(model: MmnModel, features) -> Tensor:
    """Predict per-pixel blending weights [1, 3, H, W]; softmax over scales."""
    features = features if isinstance(features, Tensor) else Tensor(features)
    if features.data.ndim != 4 or features.data.shape[1] != model.config.in_channels:
        raise ValueError(
            f"expected features [1, {model.config.in_channels}, H, W], "
            f"got {features.data.shape}"
        )
    p, slope = model.params, model.config.leaky_slope
    h = _conv_block(features, p, "conv0", slope)
    h = _conv_block(h, p, "conv1", slope)
    logits = ndgrad.add_bias(ndgrad.conv2d(h, p["conv2.w"], 1, 1), p["conv2.b"])
    return ndgrad.softmax(logits, axis=1)


def merge(pyramid: ScalePyramid, weights: Tensor) -> Tensor:
    """Blend the pyramid's defocus images with per-pixel weights.

    weights is [1, 3, H, W], normalized over the scale axis; output is the
    pixelwise weighted sum [1, 1, H, W].
    """
    d0, d1, d2 = pyramid.defocus
    stack = ndgrad.concat(ndgrad.concat(d0, d1, axis=1), d2, axis=1)
    if weights.data.shape != stack.data.shape:
        raise ValueError(
            f"weights shape {weights.data.shape} != pyramid stack {stack.data.shape}"
        )
    return ndgrad.sum_axis(ndgrad.mul(weights, stack), axis=1, keepdims=True)


def run_pipeline(bpn: BpnModel, mmn: MmnModel, burst: Burst) -> np.ndarray:
    """Full inference: per-channel multi-scale prediction, shared blending
    weights, merged RGB output [H, W, C]."""
    channels = burst.frames.shape[3]
    pyramids = [multiscale_bpn(bpn, burst.channel_stack(c)) for c in range(channels)]
    weights = mmn_forward(mmn, mmn_features(pyramids))
    outs = [merge(p, weights).data[0, 0] for p in pyramids]
    return np.stack(outs, axis=-1)


def full_scale_output(bpn: BpnModel, burst: Burst) -> np.ndarray:
    """Single-scale prediction only (no merging), as [H, W, C]."""
    channels = burst.frames.shape[3]
    outs = []
    for c in range(channels):
        i_def, _ = bpn_forward(bpn, burst.channel_stack(c))
        outs.append(i_def.data[0, 0])
    return np.stack(outs, axis=-1)


def save_bpn(model: BpnModel, path: str | os.PathLike) -> None:
    ndgrad.save_checkpoint(model.params, path)
    sidecar = {
        "kind": "bpn",
        "levels": model.config.levels,
        "base": model.config.base_width,
        "burst_len": model.config.burst_len,
        "leaky_slope": model.config.leaky_slope,
    }
    with open(f"{path}.json", "w") as f:
        json.dump(sidecar, f, sort_keys=True, indent=1)


def load_bpn(path: str | os.PathLike) -> BpnModel:
    with open(f"{path}.json") as f:
        meta = json.load(f)
    if meta.get("kind") != "bpn":
        raise ValueError(f"{path}.json does not describe a blur-prediction checkpoint")
    config = BpnConfig(
        levels=meta["levels"],
        base_width=meta["base"],
        burst_len=meta["burst_len"],
        leaky_slope=meta.get("leaky_slope", 0.1),
    )
    reference = BpnModel.init(config, seed=0)
    stored = ndgrad.load_checkpoint(path)
    return BpnModel(config, _restore_params(reference.params, stored, path))


def save_mmn(model: MmnModel, path: str | os.PathLike) -> None:
    ndgrad.save_checkpoint(model.params, path)
    sidecar = {
        "kind": "mmn",
        "hidden": model.config.hidden_width,
        "leaky_slope": model.config.leaky_slope,
    }
    with open(f"{path}.json", "w") as f:
        json.dump(sidecar, f, sort_keys=True, indent=1)


def load_mmn(path: str | os.PathLike) -> MmnModel:
    with open(f"{path}.json") as f:
        meta = json.load(f)
    if meta.get("kind") != "mmn":
        raise ValueError(f"{path}.json does not describe a merging-network checkpoint")
    config = MmnConfig(
        hidden_width=meta["hidden"], leaky_slope=meta.get("leaky_slope", 0.1)
    )
    reference = MmnModel.init(config, seed=0)
    stored = ndgrad.load_checkpoint(path)
    return MmnModel(config, _restore_params(reference.params, stored, path))


def _restore_params(
    reference: dict[str, Tensor], stored: dict[str, np.ndarray], path
) -> dict[str, Tensor]:
    if set(reference) != set(stored):
        missing = set(reference) - set(stored)
        extra = set(stored) - set(reference)
        raise ValueError(f"{path}: parameter mismatch (missing {missing}, extra {extra})")
    out: dict[str, Tensor] = {}
    for name, ref in reference.items():
        values = stored[name]
        if values.shape != ref.data.shape:
            raise ValueError(
                f"{path}: {name!r} has shape {values.shape}, expected {ref.data.shape}"
            )
        out[name] = Tensor(values.astype(np.float64), requires_grad=True)
    return out
