"""Simulated handheld bursts extracted from light fields.

A burst walks the viewpoint grid top to bottom (strictly decreasing v) with
small random horizontal jitter, mimicking lateral hand translation during
capture. Frames can be refocused on extraction; translational alignment and
contrast-detection autofocus cover the classical preprocessing steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lfcore import LightField, RefocusFactor, translate_image

LAPLACIAN_3X3 = np.array(
    [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]], dtype=np.float64
)


@dataclass(frozen=True)
class BurstTrajectory:
    """Ordered (u, v) viewpoints; v strictly decreasing (top to bottom)."""

    viewpoints: tuple[tuple[int, int], ...]

    def __post_init__(self):
        vs = [v for _, v in self.viewpoints]
        if any(b >= a for a, b in zip(vs, vs[1:])):
            raise ValueError(f"trajectory v coordinates must strictly decrease: {vs}")

    def __len__(self) -> int:
        return len(self.viewpoints)


@dataclass(frozen=True)
class Burst:
    """Refocused frames [N, H, W, C] plus the trajectory that produced them."""

    frames: np.ndarray
    trajectory: BurstTrajectory
    alpha_applied: RefocusFactor

    def __post_init__(self):
        if self.frames.ndim != 4:
            raise ValueError(f"frames must be [N, H, W, C], got {self.frames.shape}")
        if self.frames.shape[0] != len(self.trajectory):
            raise ValueError(
                f"{self.frames.shape[0]} frames for {len(self.trajectory)} viewpoints"
            )

    def __len__(self) -> int:
        return self.frames.shape[0]

    def channel_stack(self, channel: int) -> np.ndarray:
        """Frames of one color channel stacked as [1, N, H, W]."""
        return self.frames[:, :, :, channel][None]


def sample_trajectory(
    n_frames: int,
    grid_size: int,
    seed: int,
    center_of_mass_constrained: bool = False,
    max_jitter: int = 1,
) -> BurstTrajectory:
    """Sample a top-to-bottom viewpoint walk.

    v takes n_frames rows evenly spread from the top row toward the bottom
    (all rows for n_frames == grid_size); u jitters uniformly in
    [-max_jitter, +max_jitter] per frame. With the center-of-mass constraint
    the u sequence is resampled until mean(u) == 0 (the symmetric v spread
    already averages to zero).
    """
    if grid_size % 2 == 0 or grid_size < 1:
        raise ValueError(f"grid_size must be odd and positive, got {grid_size}")
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    if n_frames > grid_size:
        raise ValueError(f"n_frames {n_frames} exceeds grid_size {grid_size}")
    m = (grid_size - 1) // 2
    if n_frames == 1:
        vs = np.array([0])
    else:
        vs = np.round(np.linspace(m, -m, n_frames)).astype(int)
    assert np.all(np.diff(vs) < 0), "even spread must keep v strictly decreasing"

    rng = np.random.default_rng(seed)
    jitter_range = min(max_jitter, m)
    for _ in range(100_000):
        us = rng.integers(-jitter_range, jitter_range + 1, size=n_frames)
        if not center_of_mass_constrained or us.sum() == 0:
            return BurstTrajectory(tuple((int(u), int(v)) for u, v in zip(us, vs)))
    raise ValueError(
        f"could not satisfy center-of-mass constraint for n_frames={n_frames}, "
        f"grid_size={grid_size}"
    )


def extract_burst(lf: LightField, traj: BurstTrajectory, alpha: RefocusFactor) -> Burst:
    """Extract trajectory views, each refocused by sampling at
    (x - alpha*u, y - alpha*v). alpha=0 yields the raw sub-aperture views."""
    frames = np.empty(
        (len(traj), lf.height, lf.width, lf.channels), dtype=np.float64
    )
    for i, (u, v) in enumerate(traj.viewpoints):
        view = lf.view(u, v)  # raises if outside grid
        if alpha == 0:
            frames[i] = view
        else:
            frames[i] = translate_image(view, alpha * u, alpha * v)
    return Burst(frames, traj, alpha)


def _as_gray(frame: np.ndarray) -> np.ndarray:
    return frame.mean(axis=2) if frame.ndim == 3 else frame


def align_translation(
    frames: list[np.ndarray] | np.ndarray,
    roi: tuple[int, int, int, int],
    search_radius: int = 8,
) -> tuple[list[np.ndarray], list[tuple[int, int]]]:
    """Align frames to frame 0 by integer translation.

    roi is (y0, x0, height, width) within every frame. For each frame the
    (dx, dy) in [-search_radius, +search_radius]^2 maximizing normalized
    cross-correlation against frame 0 over the roi is taken as that frame's
    translation; the aligned frame is shifted by (-dx, -dy) with edge clamp.
    Returns (aligned frames, shifts). Raises on a flat (zero-variance) roi.
    """
    frames = [np.asarray(f, dtype=np.float64) for f in frames]
    y0, x0, rh, rw = roi
    h, w = frames[0].shape[:2]
    if y0 < 0 or x0 < 0 or y0 + rh > h or x0 + rw > w:
        raise ValueError(f"roi {roi} outside frame bounds {h}x{w}")

    ref = _as_gray(frames[0])[y0 : y0 + rh, x0 : x0 + rw]
    ref_centered = ref - ref.mean()
    ref_norm = np.sqrt((ref_centered**2).sum())
    if ref_norm < 1e-12:
        raise ValueError("unalignable region: roi has zero variance")

    aligned = [frames[0]]
    shifts = [(0, 0)]
    for frame in frames[1:]:
        gray = _as_gray(frame)
        best, best_shift = -np.inf, (0, 0)
        for dy in range(-search_radius, search_radius + 1):
            ya, yb = y0 + dy, y0 + dy + rh
            if ya < 0 or yb > h:
                continue
            for dx in range(-search_radius, search_radius + 1):
                xa, xb = x0 + dx, x0 + dx + rw
                if xa < 0 or xb > w:
                    continue
                crop = gray[ya:yb, xa:xb]
                crop_centered = crop - crop.mean()
                denom = ref_norm * np.sqrt((crop_centered**2).sum())
                if denom < 1e-12:
                    continue
                ncc = (ref_centered * crop_centered).sum() / denom
                if ncc > best:
                    best, best_shift = ncc, (dx, dy)
        dx, dy = best_shift
        aligned.append(translate_image(frame, -dx, -dy))
        shifts.append(best_shift)
    return aligned, shifts


def laplacian_variance(img: np.ndarray) -> float:
    """Variance of the 3x3 Laplacian response; higher means sharper."""
    img = np.asarray(img, dtype=np.float64)
    resp = (
        -4.0 * img[1:-1, 1:-1]
        + img[:-2, 1:-1]
        + img[2:, 1:-1]
        + img[1:-1, :-2]
        + img[1:-1, 2:]
    )
    return float(resp.var())


def autofocus(
    lf: LightField,
    traj: BurstTrajectory,
    roi: tuple[int, int, int, int],
    alpha_range: tuple[float, float],
    step: float = 0.25,
) -> RefocusFactor:
    """Contrast-detection autofocus over the burst.

    Grid-searches alpha over [lo, hi], scoring the Laplacian variance of the
    mean refocused frame (averaged over channels) inside the roi, then
    refines the peak with a 3-point parabolic fit. Returns the best alpha.
    """
    lo, hi = alpha_range
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
        raise ValueError(f"invalid alpha range [{lo}, {hi}]")
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    y0, x0, rh, rw = roi
    if y0 < 0 or x0 < 0 or y0 + rh > lf.height or x0 + rw > lf.width:
        raise ValueError(f"roi {roi} outside image bounds {lf.height}x{lf.width}")

    alphas = np.arange(lo, hi + step * 0.5, step) if hi > lo else np.array([lo])

    def sharpness(alpha: float) -> float:
        mean_frame = np.zeros((lf.height, lf.width), dtype=np.float64)
        for u, v in traj.viewpoints:
            view = lf.view(u, v).mean(axis=2)
            mean_frame += translate_image(view, alpha * u, alpha * v)
        mean_frame /= len(traj)
        return laplacian_variance(mean_frame[y0 : y0 + rh, x0 : x0 + rw])

    scores = np.array([sharpness(a) for a in alphas])
    k = int(scores.argmax())
    best = float(alphas[k])
    if 0 < k < len(alphas) - 1:
        fm, f0, fp = scores[k - 1], scores[k], scores[k + 1]
        denom = fm - 2.0 * f0 + fp
        if denom < 0:  # genuine local maximum
            offset = 0.5 * step * (fm - fp) / denom
            best = float(np.clip(best + offset, lo, hi))
    return best
