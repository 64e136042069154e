"""Experiment: criterion-6 style training run + eval vs center view."""
import time

import numpy as np

from burstdof import evaluate as evalmod
from burstdof import models, scenegen, train

t0 = time.time()
train_set = scenegen.generate_dataset(200, size=64, seed=100, disparity_range=(-3, 3))
held_out = scenegen.generate_dataset(20, size=64, seed=999, disparity_range=(-3, 3))
print("datasets built", round(time.time() - t0, 1), "s", flush=True)

cfg = train.TrainConfig(steps=3500, lr=1e-3, seed=0, eval_interval=250)
t0 = time.time()
model, curve = train.train_bpn(train_set, cfg)
print("train time", round((time.time() - t0) / 60, 1), "min", flush=True)
vals = [(r["step"], round(r["val_ssim"], 4)) for r in curve if "val_ssim" in r]
print("val curve:", vals, flush=True)
losses = [r["loss"] for r in curve]
print("loss curve (500-step means):",
      [round(float(np.mean(losses[i:i+500])), 4) for i in range(0, len(losses), 500)], flush=True)

models.save_bpn(model, "/tmp/exp_bpn.ndg")

# evaluate full-scale BPN only (no merge) on held-out scenes
from burstdof.models import full_scale_output

report = evalmod.evaluate(
    lambda b: full_scale_output(model, b), held_out, evalmod.EvalConfig(seed=5)
)
m = report.to_dict()["aggregate"]
print("full-scale BPN:", {k: round(v, 4) for k, v in m.items()})
per = [(round(r["model_ssim"], 3), round(r["center_ssim"], 3)) for r in report.per_scene]
print("per-scene (model, center):", per)
