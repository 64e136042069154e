"""Procedural generator of plane-stack light fields with exact disparity maps.

Scenes are stacks of fronto-parallel textured layers, each at a fixed
disparity. A layer at disparity d appears in view (u, v) sampled at
(x + d*u, y + d*v), so refocusing with alpha == d renders it sharp. Layer
textures live on padded canvases large enough that every view samples real
texture, never a clamped edge. The returned disparity map is the disparity
of the frontmost opaque layer at each center-view pixel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lfcore import DisparityMap, LightField


@dataclass(frozen=True)
class LayerSpec:
    """One fronto-parallel plane: disparity, opacity mask, texture.

    mask_kind: "full", "rect", or "ellipse"; mask_params are fractional
    (cy, cx, half_h, half_w) of the image size for rect/ellipse.
    texture_kind: "checker", "noise", or "gradient".
    """

    disparity: float
    mask_kind: str = "full"
    mask_params: tuple[float, float, float, float] = (0.5, 0.5, 0.25, 0.25)
    texture_kind: str = "noise"
    texture_seed: int = 0


@dataclass(frozen=True)
class SceneSpec:
    height: int = 64
    width: int = 64
    grid_size: int = 9
    channels: int = 3
    layers: tuple[LayerSpec, ...] = field(default_factory=tuple)
    disparity_range: tuple[float, float] = (-4.0, 4.0)

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("scene needs at least one layer")
        lo, hi = self.disparity_range
        for layer in self.layers:
            if not lo <= layer.disparity <= hi:
                raise ValueError(
                    f"layer disparity {layer.disparity} outside range [{lo}, {hi}]"
                )
        max_shift = max(abs(l.disparity) for l in self.layers) * (self.grid_size - 1) / 2
        if max_shift >= min(self.height, self.width):
            raise ValueError(
                f"max view shift {max_shift:.1f}px exceeds image size "
                f"{self.height}x{self.width}"
            )


def _render_texture(kind: str, h: int, w: int, channels: int, seed: int) -> np.ndarray:
    """Procedural [h, w, channels] texture in [0, 1]."""
    rng = np.random.default_rng(seed)
    if kind == "checker":
        period = int(rng.integers(4, 13))
        phase_y, phase_x = rng.integers(0, period, size=2)
        yy, xx = np.mgrid[0:h, 0:w]
        cells = ((yy + phase_y) // period + (xx + phase_x) // period) % 2
        color_a = rng.uniform(0.0, 0.45, size=channels)
        color_b = rng.uniform(0.55, 1.0, size=channels)
        tex = np.where(cells[:, :, None] == 0, color_a, color_b)
    elif kind == "noise":
        # coarse random grid upsampled bilinearly, so texture has structure
        # at a few-pixel scale instead of per-pixel speckle
        cell = int(rng.integers(2, 6))
        gh, gw = h // cell + 2, w // cell + 2
        coarse = rng.uniform(0.0, 1.0, size=(gh, gw, channels))
        ys = np.arange(h) / cell
        xs = np.arange(w) / cell
        y0 = ys.astype(int)
        x0 = xs.astype(int)
        fy = (ys - y0)[:, None, None]
        fx = (xs - x0)[None, :, None]
        top = coarse[y0][:, x0] * (1 - fx) + coarse[y0][:, x0 + 1] * fx
        bot = coarse[y0 + 1][:, x0] * (1 - fx) + coarse[y0 + 1][:, x0 + 1] * fx
        tex = top * (1 - fy) + bot * fy
    elif kind == "gradient":
        angle = rng.uniform(0, 2 * np.pi)
        yy, xx = np.mgrid[0:h, 0:w]
        ramp = (np.cos(angle) * xx + np.sin(angle) * yy) / max(h, w)
        ramp = (ramp - ramp.min()) / max(np.ptp(ramp), 1e-9)
        color_a = rng.uniform(0.1, 0.9, size=channels)
        color_b = rng.uniform(0.1, 0.9, size=channels)
        tex = ramp[:, :, None] * color_b + (1 - ramp[:, :, None]) * color_a
        # fine grain so even smooth layers respond to focus (a pure linear
        # ramp has zero Laplacian and defeats contrast detection)
        tex = tex + rng.uniform(-0.04, 0.04, size=(h, w, 1))
    else:
        raise ValueError(f"unknown texture kind {kind!r}")
    return np.clip(tex, 0.0, 1.0)


def _render_mask(kind: str, params, h: int, w: int) -> np.ndarray:
    """Binary [h, w] opacity mask."""
    if kind == "full":
        return np.ones((h, w), dtype=np.float64)
    cy, cx, hh, hw = params
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = cy * h, cx * w
    hh, hw = max(hh * h, 1.0), max(hw * w, 1.0)
    if kind == "rect":
        inside = (np.abs(yy - cy) <= hh) & (np.abs(xx - cx) <= hw)
    elif kind == "ellipse":
        inside = ((yy - cy) / hh) ** 2 + ((xx - cx) / hw) ** 2 <= 1.0
    else:
        raise ValueError(f"unknown mask kind {kind!r}")
    return inside.astype(np.float64)


def _sample_padded(canvas: np.ndarray, pad: int, du: float, dv: float) -> np.ndarray:
    """Sample a padded canvas at (x + du, y + dv); exact for integer offsets."""
    h = canvas.shape[0] - 2 * pad
    w = canvas.shape[1] - 2 * pad
    ys = np.arange(h, dtype=np.float64) + pad + dv
    xs = np.arange(w, dtype=np.float64) + pad + du
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = ys - y0
    fx = xs - x0
    if canvas.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    top = canvas[y0][:, x0] * (1.0 - fx) + canvas[y0][:, x0 + 1] * fx
    bot = canvas[y0 + 1][:, x0] * (1.0 - fx) + canvas[y0 + 1][:, x0 + 1] * fx
    return top * (1.0 - fy) + bot * fy


def generate_scene(spec: SceneSpec) -> tuple[LightField, DisparityMap]:
    """Render all views of a plane-stack scene plus its center-view disparity.

    Layers composite back-to-front; layer k appears in view (u, v) sampled
    at (x + d_k*u, y + d_k*v). The first layer should be fully opaque
    (background); pixels no layer covers stay black.
    """
    h, w, g = spec.height, spec.width, spec.grid_size
    m = (g - 1) // 2
    max_d = max(abs(l.disparity) for l in spec.layers)
    pad = int(np.ceil(max_d * m)) + 2

    textures = []
    masks = []
    for layer in spec.layers:
        tex = _render_texture(
            layer.texture_kind, h + 2 * pad, w + 2 * pad, spec.channels,
            layer.texture_seed,
        )
        mask_core = _render_mask(layer.mask_kind, layer.mask_params, h, w)
        mask = np.zeros((h + 2 * pad, w + 2 * pad), dtype=np.float64)
        mask[pad : pad + h, pad : pad + w] = mask_core
        textures.append(tex)
        masks.append(mask)

    data = np.zeros((g, g, h, w, spec.channels), dtype=np.float32)
    for r in range(g):
        v = m - r
        for c in range(g):
            u = c - m
            out = np.zeros((h, w, spec.channels), dtype=np.float64)
            for layer, tex, mask in zip(spec.layers, textures, masks):
                du = layer.disparity * u
                dv = layer.disparity * v
                tex_v = _sample_padded(tex, pad, du, dv)
                mask_v = _sample_padded(mask, pad, du, dv)[:, :, None]
                out = mask_v * tex_v + (1.0 - mask_v) * out
            data[r, c] = np.clip(out, 0.0, 1.0)

    # frontmost opaque layer wins; pixels no layer covers stay at disparity 0
    disparity = np.zeros((h, w), dtype=np.float64)
    for layer, mask in zip(spec.layers, masks):
        opaque = mask[pad : pad + h, pad : pad + w] >= 0.5
        disparity = np.where(opaque, layer.disparity, disparity)

    return LightField(data), DisparityMap(disparity)


def random_scene_spec(
    rng: np.random.Generator,
    size: int = 64,
    grid_size: int = 9,
    channels: int = 3,
    disparity_range: tuple[float, float] = (-4.0, 4.0),
    layer_count: int | None = None,
    min_separation: float = 1.0,
) -> SceneSpec:
    """Draw a random scene spec: 1-4 layers, separated disparities, mixed
    textures. Layer 0 is a full-frame background."""
    if layer_count is None:
        layer_count = int(rng.integers(1, 5))
    lo, hi = disparity_range
    disparities: list[float] = []
    for _ in range(layer_count):
        for _ in range(200):
            d = float(rng.uniform(lo, hi))
            if all(abs(d - prev) >= min_separation for prev in disparities):
                disparities.append(d)
                break
        else:
            break  # range too crowded; settle for fewer layers
    kinds = ["checker", "noise", "gradient"]
    layers = []
    for i, d in enumerate(disparities):
        if i == 0:
            mask_kind, params = "full", (0.5, 0.5, 0.25, 0.25)
        else:
            mask_kind = "rect" if rng.uniform() < 0.5 else "ellipse"
            params = (
                float(rng.uniform(0.25, 0.75)),
                float(rng.uniform(0.25, 0.75)),
                float(rng.uniform(0.12, 0.3)),
                float(rng.uniform(0.12, 0.3)),
            )
        layers.append(
            LayerSpec(
                disparity=d,
                mask_kind=mask_kind,
                mask_params=params,
                texture_kind=kinds[int(rng.integers(0, 3))],
                texture_seed=int(rng.integers(0, 2**31)),
            )
        )
    return SceneSpec(
        height=size,
        width=size,
        grid_size=grid_size,
        channels=channels,
        layers=tuple(layers),
        disparity_range=disparity_range,
    )


def generate_dataset(
    n_scenes: int,
    size: int = 64,
    seed: int = 0,
    grid_size: int = 9,
    channels: int = 3,
    disparity_range: tuple[float, float] = (-4.0, 4.0),
) -> list[tuple[LightField, DisparityMap]]:
    """Generate n deterministic random scenes (per-scene rng streams derived
    from the master seed)."""
    if n_scenes < 1:
        raise ValueError(f"n_scenes must be >= 1, got {n_scenes}")
    seeds = np.random.SeedSequence(seed).spawn(n_scenes)
    scenes = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        spec = random_scene_spec(
            rng,
            size=size,
            grid_size=grid_size,
            channels=channels,
            disparity_range=disparity_range,
        )
        scenes.append(generate_scene(spec))
    return scenes
