"""Experiment: MMN training + criterion-7 style multiscale benefit check."""
import time

import numpy as np

from burstdof import models, scenegen, train
from burstdof.burst import extract_burst, sample_trajectory
from burstdof.evaluate import ssim_metric
from burstdof.lfcore import circular_aperture_mask, ground_truth
from burstdof.scenegen import LayerSpec, SceneSpec, generate_scene

bpn = models.load_bpn("/tmp/exp_bpn.ndg")

# training scenes for the merger: wide disparity range so full scale fails
t0 = time.time()
mmn_set = scenegen.generate_dataset(80, size=64, seed=300, disparity_range=(-6, 6))
print("mmn dataset", round(time.time() - t0, 1), "s", flush=True)

cfg = train.TrainConfig(
    steps=400, lr=3e-3, seed=1, alpha_range=(0.0, 1.5), eval_interval=100,
    downscale_prob=0.0,
)
t0 = time.time()
mmn, curve = train.train_mmn(mmn_set, bpn, cfg)
print("mmn train", round((time.time() - t0) / 60, 1), "min", flush=True)
print("vals:", [(r["step"], round(r["val_ssim"], 4)) for r in curve if "val_ssim" in r], flush=True)
models.save_mmn(mmn, "/tmp/exp_mmn.ndg")


def highd_scene(i):
    rng = np.random.default_rng(5000 + i)
    sign = 1 if rng.uniform() < 0.5 else -1
    layers = [
        LayerSpec(
            disparity=float(rng.uniform(-1.5, 1.5)),
            texture_kind=["checker", "noise", "gradient"][int(rng.integers(3))],
            texture_seed=int(rng.integers(2**31)),
        ),
        LayerSpec(
            disparity=float(sign * 6.0),
            mask_kind="rect" if rng.uniform() < 0.5 else "ellipse",
            mask_params=(
                float(rng.uniform(0.3, 0.7)), float(rng.uniform(0.3, 0.7)),
                float(rng.uniform(0.15, 0.3)), float(rng.uniform(0.15, 0.3)),
            ),
            texture_kind=["checker", "noise"][int(rng.integers(2))],
            texture_seed=int(rng.integers(2**31)),
        ),
    ]
    return generate_scene(SceneSpec(height=64, width=64, layers=tuple(layers),
                                    disparity_range=(-6.5, 6.5)))


mask = circular_aperture_mask(9, 4)
wins = 0
merged_scores, full_scores = [], []
for i in range(20):
    lf, disp = highd_scene(i)
    traj = sample_trajectory(9, 9, seed=777 + i, center_of_mass_constrained=True)
    b = extract_burst(lf, traj, 0.0)
    gt = ground_truth(lf, mask, 0.0)
    merged = models.run_pipeline(bpn, mmn, b)
    full = models.full_scale_output(bpn, b)
    sm, sf = ssim_metric(merged, gt), ssim_metric(full, gt)
    merged_scores.append(sm)
    full_scores.append(sf)
    wins += sm > sf
    print(f"scene {i}: merged {sm:.4f} full {sf:.4f} {'WIN' if sm > sf else 'lose'}", flush=True)
print("mean merged:", round(np.mean(merged_scores), 4), "mean full:", round(np.mean(full_scores), 4))
print("wins:", wins, "/ 20")
