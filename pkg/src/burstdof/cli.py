"""Command-line entry point wiring all pipeline stages.

Subcommands: gen-data, make-gt, simulate-burst, train-bpn, train-mmn,
infer, eval, grad-check. Every command takes --seed and is reproducible:
identical flags and seed produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import sys

import numpy as np

from . import evaluate as evalmod
from . import fileio, lfcore, models, scenegen
from .burst import Burst, BurstTrajectory, extract_burst, sample_trajectory
from .ndgrad import gradient_suite
from .train import TrainConfig, train_bpn, train_mmn

SCENE_DIR_PATTERN = "scene_{:04d}"
DISPARITY_FILE = "disparity.pfm"
TRAJECTORY_FILE = "trajectory.json"


class CommandError(Exception):
    pass


def _load_scene_dirs(data_dir: str, grid_size: int):
    scene_dirs = sorted(glob.glob(os.path.join(data_dir, "scene_*")))
    if not scene_dirs:
        raise CommandError(f"no scene_* directories under {data_dir}")
    dataset = []
    for d in scene_dirs:
        lf = lfcore.load_lightfield(d, grid_size)
        disp_path = os.path.join(d, DISPARITY_FILE)
        if not os.path.exists(disp_path):
            raise CommandError(f"missing {DISPARITY_FILE} in {d}")
        dataset.append((lf, lfcore.DisparityMap(fileio.read_pfm(disp_path))))
    return dataset


def _train_config(args) -> TrainConfig:
    overrides = {}
    if args.config:
        with open(args.config) as f:
            overrides = json.load(f)
    if args.seed is not None:
        overrides["seed"] = args.seed
    valid = set(TrainConfig.__dataclass_fields__)
    unknown = set(overrides) - valid
    if unknown:
        raise CommandError(f"unknown config keys: {sorted(unknown)}")
    for key in ("alpha_range",):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    return TrainConfig(**overrides)


def _write_curve(curve, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "loss", "val_ssim"])
        for row in curve:
            writer.writerow([row["step"], repr(row["loss"]), repr(row["val_ssim"]) if "val_ssim" in row else ""])


def cmd_gen_data(args) -> None:
    if args.n < 1:
        raise CommandError(f"--n must be >= 1, got {args.n}")
    dataset = scenegen.generate_dataset(
        args.n,
        size=args.size,
        seed=args.seed,
        grid_size=args.grid,
        channels=args.channels,
        disparity_range=(args.disparity_min, args.disparity_max),
    )
    os.makedirs(args.out, exist_ok=True)
    for i, (lf, disp) in enumerate(dataset):
        scene_dir = os.path.join(args.out, SCENE_DIR_PATTERN.format(i))
        lfcore.save_lightfield(lf, scene_dir)
        fileio.write_pfm(os.path.join(scene_dir, DISPARITY_FILE), disp.values)
    print(f"wrote {args.n} scenes to {args.out}")


def cmd_make_gt(args) -> None:
    lf = lfcore.load_lightfield(args.lf, args.grid)
    mask = lfcore.circular_aperture_mask(args.grid, args.radius)
    reference = lfcore.ground_truth(lf, mask, args.alpha)
    fileio.write_image(args.out_image, reference)
    disp_path = os.path.join(args.lf, DISPARITY_FILE)
    if os.path.exists(disp_path):
        disp = lfcore.DisparityMap(fileio.read_pfm(disp_path))
        biased = lfcore.bias_disparity(disp, args.alpha)
        fileio.write_pfm(args.out_disparity, biased.values)
        print(f"wrote {args.out_image} and {args.out_disparity}")
    else:
        print(f"wrote {args.out_image} (no {DISPARITY_FILE} to bias)")


def cmd_simulate_burst(args) -> None:
    lf = lfcore.load_lightfield(args.lf, args.grid)
    traj = sample_trajectory(
        args.frames, args.grid, seed=args.seed,
        center_of_mass_constrained=args.constrained,
    )
    burst = extract_burst(lf, traj, args.alpha)
    os.makedirs(args.out, exist_ok=True)
    for i in range(len(burst)):
        fileio.write_image(os.path.join(args.out, f"frame_{i:02d}.png"), burst.frames[i])
    with open(os.path.join(args.out, TRAJECTORY_FILE), "w") as f:
        json.dump(
            {"viewpoints": [[u, v] for u, v in traj.viewpoints], "alpha": args.alpha},
            f,
        )
    print(f"wrote {len(burst)} frames to {args.out}")


def cmd_train_bpn(args) -> None:
    cfg = _train_config(args)
    dataset = _load_scene_dirs(args.data, args.grid)
    model, curve = train_bpn(dataset, cfg)
    models.save_bpn(model, args.out)
    _write_curve(curve, args.curve or f"{args.out}.csv")
    print(f"trained blur predictor: {args.out} (final loss {curve[-1]['loss']:.4f})")


def cmd_train_mmn(args) -> None:
    cfg = _train_config(args)
    dataset = _load_scene_dirs(args.data, args.grid)
    bpn = models.load_bpn(args.bpn)
    model, curve = train_mmn(dataset, bpn, cfg)
    models.save_mmn(model, args.out)
    _write_curve(curve, args.curve or f"{args.out}.csv")
    print(f"trained merging network: {args.out} (final loss {curve[-1]['loss']:.4f})")


def _load_burst_dir(path: str) -> Burst:
    traj_path = os.path.join(path, TRAJECTORY_FILE)
    if not os.path.exists(traj_path):
        raise CommandError(f"missing {TRAJECTORY_FILE} in {path}")
    with open(traj_path) as f:
        meta = json.load(f)
    viewpoints = tuple((int(u), int(v)) for u, v in meta["viewpoints"])
    frames = []
    for i in range(len(viewpoints)):
        fpath = os.path.join(path, f"frame_{i:02d}.png")
        if not os.path.exists(fpath):
            raise CommandError(f"missing frame_{i:02d}.png in {path}")
        img = fileio.read_image(fpath)
        frames.append(img[:, :, None] if img.ndim == 2 else img)
    return Burst(
        np.stack(frames), BurstTrajectory(viewpoints), float(meta.get("alpha", 0.0))
    )


def cmd_infer(args) -> None:
    bpn = models.load_bpn(args.bpn)
    mmn = models.load_mmn(args.mmn)
    burst = _load_burst_dir(args.burst)
    if len(burst) != bpn.config.burst_len:
        raise CommandError(
            f"burst has {len(burst)} frames, model expects {bpn.config.burst_len}"
        )
    output = models.run_pipeline(bpn, mmn, burst)
    fileio.write_image(args.out, output)
    print(f"wrote {args.out}")


def cmd_eval(args) -> None:
    bpn = models.load_bpn(args.bpn)
    mmn = models.load_mmn(args.mmn)
    dataset = _load_scene_dirs(args.data, args.grid)
    cfg = evalmod.EvalConfig(
        burst_len=bpn.config.burst_len,
        alpha=args.alpha,
        use_autofocus=args.autofocus,
        seed=args.seed,
    )
    report = evalmod.evaluate(
        lambda burst: models.run_pipeline(bpn, mmn, burst), dataset, cfg
    )
    with open(args.out, "w") as f:
        json.dump(report.to_dict(), f, sort_keys=True, indent=1)
    agg = report.to_dict()["aggregate"]
    print(
        f"model {agg['model_ssim']:.4f}  center {agg['center_ssim']:.4f}  "
        f"depth-blur {agg['depth_blur_ssim']:.4f}  -> {args.out}"
    )


def cmd_grad_check(args) -> None:
    results = gradient_suite(n_seeds=args.seeds, tol=args.tol)
    print(f"{'op':18s} {'max rel err':>12s} {'tol':>8s}  status")
    failed = False
    for r in results:
        status = "pass" if r.passed else "FAIL"
        failed |= not r.passed
        print(f"{r.op:18s} {r.max_rel_err:12.3e} {r.tolerance:8.0e}  {status}")
    if failed:
        raise CommandError("gradient checks failed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="burstdof",
        description="Shallow depth-of-field synthesis from simulated handheld bursts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic light-field scenes")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--grid", type=int, default=9)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--disparity-min", type=float, default=-4.0)
    p.add_argument("--disparity-max", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("make-gt", help="render the aperture-average reference image")
    p.add_argument("--lf", required=True, help="light-field directory")
    p.add_argument("--grid", type=int, default=9)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--radius", type=float, default=4.0)
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-disparity", default="disparity_biased.pfm")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_gt)

    p = sub.add_parser("simulate-burst", help="extract a handheld burst from a light field")
    p.add_argument("--lf", required=True)
    p.add_argument("--grid", type=int, default=9)
    p.add_argument("--frames", type=int, default=9)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--constrained", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate_burst)

    p = sub.add_parser("train-bpn", help="train the blur predictor")
    p.add_argument("--data", required=True)
    p.add_argument("--grid", type=int, default=9)
    p.add_argument("--config", help="JSON file with TrainConfig overrides")
    p.add_argument("--out", required=True)
    p.add_argument("--curve", help="loss curve CSV path (default <out>.csv)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train_bpn)

    p = sub.add_parser("train-mmn", help="train the merging network (blur predictor frozen)")
    p.add_argument("--data", required=True)
    p.add_argument("--grid", type=int, default=9)
    p.add_argument("--bpn", required=True)
    p.add_argument("--config", help="JSON file with TrainConfig overrides")
    p.add_argument("--out", required=True)
    p.add_argument("--curve")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train_mmn)

    p = sub.add_parser("infer", help="run the full pipeline on a burst directory")
    p.add_argument("--burst", required=True)
    p.add_argument("--bpn", required=True)
    p.add_argument("--mmn", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score checkpoints against the baselines")
    p.add_argument("--bpn", required=True)
    p.add_argument("--mmn", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--grid", type=int, default=9)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--autofocus", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grad-check", help="finite-difference check of every differentiable op")
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (CommandError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
