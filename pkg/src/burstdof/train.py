"""Loss functions, data augmentation, and the two-stage training procedure.

The blur predictor trains first on per-channel samples; the merging network
trains second with the blur predictor frozen, optimizing the merged output
within the full multi-scale pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import ndgrad
from .burst import extract_burst, sample_trajectory
from .evaluate import ssim_metric
from .lfcore import DisparityMap, LightField, bias_disparity, circular_aperture_mask, ground_truth
from .models import (
    BpnConfig,
    BpnModel,
    MmnConfig,
    MmnModel,
    bpn_forward,
    merge,
    mmn_features,
    mmn_forward,
    multiscale_bpn,
)
from .ndgrad import AdamState, Tape, Tensor, adam_step, collect_grads, no_grad, zero_grads


class TrainingDiverged(RuntimeError):
    """Loss or gradients went non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    lambda_color: float = 0.5
    lambda_disparity: float = 0.1
    alpha_range: tuple[float, float] = (0.0, 4.0)
    invert_prob: float = 0.5
    downscale_prob: float = 0.5
    lr: float = 1e-3
    batch_size: int = 1
    steps: int = 2000
    seed: int = 0
    burst_len: int = 9
    aperture_radius: float = 4.0
    max_jitter: int = 1
    val_fraction: float = 0.1
    eval_interval: int = 200
    min_sample_size: int = 16

    def __post_init__(self):
        if self.lambda_color < 0 or self.lambda_disparity < 0:
            raise ValueError("loss weights must be non-negative")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be positive")


@dataclass(frozen=True)
class TrainSample:
    """One augmented scene: per-channel burst stacks [C, N, H, W], matching
    reference images [C, H, W], re-referenced disparity [H, W], and the
    refocus factor that produced them."""

    bursts: np.ndarray
    references: np.ndarray
    disparity: np.ndarray
    alpha: float
    inverted: bool = False
    downscaled: bool = False

    @property
    def channels(self) -> int:
        return self.bursts.shape[0]


def bpn_loss(i_def, i_gt, i_disp, i_disp_gt, cfg: TrainConfig) -> Tensor:
    """Structural + color + disparity loss for the blur predictor.

    -ms_ssim(defocus, reference) + lambda_color * mean|defocus - reference|
    + lambda_disparity * mean|disparity - reference disparity|. Equals -1
    exactly at a perfect prediction.
    """
    return (
        -ndgrad.ms_ssim(i_def, i_gt)
        + cfg.lambda_color * ndgrad.l1_loss(i_def, i_gt)
        + cfg.lambda_disparity * ndgrad.l1_loss(i_disp, i_disp_gt)
    )


def mmn_loss(i_out, i_gt) -> Tensor:
    """Structural loss for the merged output: -ms_ssim(merged, reference)."""
    return -ndgrad.ms_ssim(i_out, i_gt)


def _downsample_hw(arr: np.ndarray) -> np.ndarray:
    """2x2 mean over the last two axes."""
    *lead, h, w = arr.shape
    return arr.reshape(*lead, h // 2, 2, w // 2, 2).mean(axis=(-3, -1))


def make_sample(
    lf: LightField, disparity: DisparityMap, cfg: TrainConfig, seed: int
) -> TrainSample:
    """Draw one augmented training sample from a scene.

    The refocus factor is uniform over cfg.alpha_range; the burst and the
    aperture-averaged reference share it, and the disparity target is
    re-referenced to the refocused plane. With probability invert_prob all
    images flip to their color negative (disparity unchanged); with
    probability downscale_prob everything is halved in resolution, which
    also halves disparity values measured in pixels.
    """
    rng = np.random.default_rng(seed)
    alpha = float(rng.uniform(*cfg.alpha_range))
    traj = sample_trajectory(
        cfg.burst_len,
        lf.grid_size,
        seed=int(rng.integers(0, 2**31)),
        max_jitter=cfg.max_jitter,
    )
    burst = extract_burst(lf, traj, alpha)
    mask = circular_aperture_mask(lf.grid_size, cfg.aperture_radius)
    reference = ground_truth(lf, mask, alpha)
    disp = bias_disparity(disparity, alpha).values

    bursts = burst.frames.transpose(3, 0, 1, 2)  # [C, N, H, W]
    references = reference.transpose(2, 0, 1)  # [C, H, W]

    inverted = bool(rng.uniform() < cfg.invert_prob)
    if inverted:
        bursts = 1.0 - bursts
        references = 1.0 - references

    downscaled = bool(rng.uniform() < cfg.downscale_prob)
    if downscaled:
        h, w = references.shape[1:]
        if h % 2 or w % 2 or min(h, w) // 2 < cfg.min_sample_size:
            raise ValueError(f"scene {h}x{w} too small to downscale")
        bursts = _downsample_hw(bursts)
        references = _downsample_hw(references)
        disp = 0.5 * _downsample_hw(disp)

    return TrainSample(bursts, references, disp, alpha, inverted, downscaled)


def _sample_stream(dataset, cfg: TrainConfig, rng: np.random.Generator):
    """Yield (sample, channel) pairs forever; channels of a scene are
    independent consecutive samples."""
    while True:
        idx = int(rng.integers(0, len(dataset)))
        lf, disp = dataset[idx]
        sample = make_sample(lf, disp, cfg, seed=int(rng.integers(0, 2**31)))
        for c in range(sample.channels):
            yield sample, c


def _split_validation(dataset, cfg: TrainConfig):
    n_val = int(round(len(dataset) * cfg.val_fraction))
    if len(dataset) < 5 or n_val < 1:
        return list(dataset), []
    return list(dataset[:-n_val]), list(dataset[-n_val:])


def _validation_samples(val_scenes, cfg: TrainConfig):
    """Deterministic unaugmented samples (alpha 0) for checkpoint selection."""
    fixed = replace(
        cfg, alpha_range=(0.0, 0.0), invert_prob=0.0, downscale_prob=0.0
    )
    return [
        make_sample(lf, disp, fixed, seed=9000 + i)
        for i, (lf, disp) in enumerate(val_scenes)
    ]


def train_bpn(
    dataset: list[tuple[LightField, DisparityMap]],
    cfg: TrainConfig,
    config: BpnConfig | None = None,
) -> tuple[BpnModel, list[dict]]:
    """Optimize the blur predictor; returns (best-by-validation model, curve).

    The curve holds one row per step: {"step", "loss"} plus "val_ssim" at
    evaluation intervals. Raises TrainingDiverged on non-finite loss.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    config = config or BpnConfig(burst_len=cfg.burst_len)
    if config.burst_len != cfg.burst_len:
        raise ValueError("model burst_len differs from training burst_len")
    model = BpnModel.init(config, seed=cfg.seed)
    state = AdamState(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    train_scenes, val_scenes = _split_validation(dataset, cfg)
    val_samples = _validation_samples(val_scenes, cfg)
    stream = _sample_stream(train_scenes, cfg, rng)

    def val_ssim() -> float:
        scores = []
        with no_grad():
            for sample in val_samples:
                for c in range(sample.channels):
                    i_def, _ = bpn_forward(model, sample.bursts[c][None])
                    scores.append(
                        ssim_metric(i_def.data[0, 0], sample.references[c])
                    )
        return float(np.mean(scores))

    curve: list[dict] = []
    best = (-np.inf, None)
    try:
        for step in range(1, cfg.steps + 1):
            zero_grads(model.params)
            loss_value = 0.0
            for _ in range(cfg.batch_size):
                sample, c = next(stream)
                with Tape() as tape:
                    i_def, i_disp = bpn_forward(model, sample.bursts[c][None])
                    loss = bpn_loss(
                        i_def,
                        Tensor(sample.references[c][None, None]),
                        i_disp,
                        Tensor(sample.disparity[None, None]),
                        cfg,
                    )
                tape.backward(loss)
                loss_value += loss.item()
            loss_value /= cfg.batch_size
            if not np.isfinite(loss_value):
                raise TrainingDiverged(f"non-finite loss at step {step}")
            grads = {
                k: g / cfg.batch_size for k, g in collect_grads(model.params).items()
            }
            adam_step(model.params, grads, state)

            row = {"step": step, "loss": loss_value}
            if val_samples and (step % cfg.eval_interval == 0 or step == cfg.steps):
                score = val_ssim()
                row["val_ssim"] = score
                if score > best[0]:
                    best = (score, {k: p.data.copy() for k, p in model.params.items()})
            curve.append(row)
    except ndgrad.NonFiniteError as e:
        raise TrainingDiverged(str(e)) from e

    if best[1] is not None:
        for k, p in model.params.items():
            p.data = best[1][k]
    return model, curve


def train_mmn(
    dataset: list[tuple[LightField, DisparityMap]],
    bpn: BpnModel,
    cfg: TrainConfig,
    config: MmnConfig | None = None,
) -> tuple[MmnModel, list[dict]]:
    """Optimize the merging network with the blur predictor frozen.

    Blur-predictor parameters never enter the optimizer and its forward
    passes run without gradient tracking, so they are bitwise unchanged.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if bpn.config.burst_len != cfg.burst_len:
        raise ValueError("blur predictor burst_len differs from training burst_len")
    model = MmnModel.init(config or MmnConfig(), seed=cfg.seed)
    state = AdamState(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    train_scenes, val_scenes = _split_validation(dataset, cfg)
    val_samples = _validation_samples(val_scenes, cfg)

    def merged_outputs(sample: TrainSample):
        with no_grad():
            pyramids = [
                multiscale_bpn(bpn, sample.bursts[c][None])
                for c in range(sample.channels)
            ]
        weights = mmn_forward(model, mmn_features(pyramids))
        return [merge(p, weights) for p in pyramids]

    def val_ssim() -> float:
        scores = []
        with no_grad():
            for sample in val_samples:
                outs = merged_outputs(sample)
                for c, out in enumerate(outs):
                    scores.append(ssim_metric(out.data[0, 0], sample.references[c]))
        return float(np.mean(scores))

    curve: list[dict] = []
    best = (-np.inf, None)
    try:
        for step in range(1, cfg.steps + 1):
            zero_grads(model.params)
            loss_value = 0.0
            for _ in range(cfg.batch_size):
                idx = int(rng.integers(0, len(train_scenes)))
                lf, disp = train_scenes[idx]
                sample = make_sample(lf, disp, cfg, seed=int(rng.integers(0, 2**31)))
                with Tape() as tape:
                    outs = merged_outputs(sample)
                    terms = [
                        mmn_loss(out, Tensor(sample.references[c][None, None]))
                        for c, out in enumerate(outs)
                    ]
                    loss = terms[0]
                    for term in terms[1:]:
                        loss = loss + term
                    loss = loss * (1.0 / len(terms))
                tape.backward(loss)
                loss_value += loss.item()
            loss_value /= cfg.batch_size
            if not np.isfinite(loss_value):
                raise TrainingDiverged(f"non-finite loss at step {step}")
            grads = {
                k: g / cfg.batch_size for k, g in collect_grads(model.params).items()
            }
            adam_step(model.params, grads, state)

            row = {"step": step, "loss": loss_value}
            if val_samples and (step % cfg.eval_interval == 0 or step == cfg.steps):
                score = val_ssim()
                row["val_ssim"] = score
                if score > best[0]:
                    best = (score, {k: p.data.copy() for k, p in model.params.items()})
            curve.append(row)
    except ndgrad.NonFiniteError as e:
        raise TrainingDiverged(str(e)) from e

    if best[1] is not None:
        for k, p in model.params.items():
            p.data = best[1][k]
    return model, curve
