import numpy as np
import pytest

from burstdof.burst import laplacian_variance
from burstdof.lfcore import circular_aperture_mask, photograph
from burstdof.scenegen import (
    LayerSpec,
    SceneSpec,
    generate_dataset,
    generate_scene,
    random_scene_spec,
)


def composite_center(spec):
    """Independent center-view render: plain back-to-front compositing."""
    from burstdof.scenegen import _render_mask, _render_texture

    h, w = spec.height, spec.width
    out = np.zeros((h, w, spec.channels))
    for layer in spec.layers:
        # textures live on padded canvases; crop the central window
        max_d = max(abs(l.disparity) for l in spec.layers)
        pad = int(np.ceil(max_d * (spec.grid_size - 1) / 2)) + 2
        tex = _render_texture(
            layer.texture_kind, h + 2 * pad, w + 2 * pad, spec.channels, layer.texture_seed
        )[pad : pad + h, pad : pad + w]
        mask = _render_mask(layer.mask_kind, layer.mask_params, h, w)[:, :, None]
        out = mask * tex + (1 - mask) * out
    return out


class TestGenerateScene:
    def test_zero_disparity_views_identical(self):
        spec = SceneSpec(
            height=24, width=24,
            layers=(LayerSpec(disparity=0.0, texture_kind="checker", texture_seed=1),),
        )
        lf, disp = generate_scene(spec)
        center = lf.view(0, 0)
        for u in (-4, 0, 3):
            for v in (-2, 1, 4):
                assert np.array_equal(lf.view(u, v), center)
        assert np.all(disp.values == 0.0)

    def test_unit_disparity_shifts_sampling_by_viewpoint(self):
        spec = SceneSpec(
            height=32, width=32,
            layers=(LayerSpec(disparity=1.0, texture_kind="checker", texture_seed=2),),
        )
        lf, _ = generate_scene(spec)
        center = lf.view(0, 0)
        pad = 6
        for u, v in [(1, 0), (0, 1), (2, -3), (-4, 4)]:
            view = lf.view(u, v)
            # view (u, v) samples the layer at (x + u, y + v): interior pixels
            # of the view match center-view content offset by (u, v)
            inner = view[pad:-pad, pad:-pad]
            shifted = center[pad + v : 32 - pad + v, pad + u : 32 - pad + u]
            assert np.allclose(inner, shifted, atol=1e-6)

    def test_two_layer_disparity_map(self):
        spec = SceneSpec(
            height=32, width=32,
            layers=(
                LayerSpec(disparity=0.0, texture_kind="noise", texture_seed=3),
                LayerSpec(
                    disparity=2.0, mask_kind="rect", mask_params=(0.5, 0.5, 0.2, 0.2),
                    texture_kind="checker", texture_seed=4,
                ),
            ),
        )
        _, disp = generate_scene(spec)
        assert disp.values[16, 16] == 2.0
        assert disp.values[1, 1] == 0.0
        inside = np.isclose(disp.values, 2.0).sum()
        assert 0 < inside < 32 * 32

    def test_center_view_is_exact_composite(self):
        rng = np.random.default_rng(5)
        for trial in range(5):
            spec = random_scene_spec(rng, size=24)
            lf, _ = generate_scene(spec)
            expected = composite_center(spec).astype(np.float32)
            assert np.array_equal(lf.view(0, 0), expected)

    def test_excessive_disparity_rejected(self):
        with pytest.raises(ValueError, match="shift"):
            SceneSpec(
                height=16, width=16,
                layers=(LayerSpec(disparity=4.0),),
                disparity_range=(-4, 4),
            )

    def test_refocus_is_sharpest_at_layer_disparity(self):
        from scipy.ndimage import binary_erosion

        rng = np.random.default_rng(6)
        mask = circular_aperture_mask(9, 4)
        for trial in range(3):
            spec = random_scene_spec(
                rng, size=48, disparity_range=(-3, 3), layer_count=2
            )
            lf, disp = generate_scene(spec)
            for layer in spec.layers:
                d = layer.disparity
                visible = np.isclose(disp.values, d)
                # erode away from frame borders and other layers'
                # silhouettes: parallax plus blur leaks across boundaries
                visible[:2, :] = visible[-2:, :] = False
                visible[:, :2] = visible[:, -2:] = False
                visible = binary_erosion(visible, iterations=9)
                if visible.sum() < 60:
                    continue
                def masked_sharpness(alpha):
                    img = photograph(lf, mask, alpha, 0)
                    resp = (
                        -4 * img[1:-1, 1:-1] + img[:-2, 1:-1] + img[2:, 1:-1]
                        + img[1:-1, :-2] + img[1:-1, 2:]
                    )
                    return resp[visible[1:-1, 1:-1]].var()
                sharp_at = masked_sharpness(d)
                assert sharp_at > masked_sharpness(d - 1.0)
                assert sharp_at > masked_sharpness(d + 1.0)


class TestGenerateDataset:
    def test_deterministic(self):
        a = generate_dataset(3, size=16, seed=7)
        b = generate_dataset(3, size=16, seed=7)
        for (lf1, d1), (lf2, d2) in zip(a, b):
            assert np.array_equal(lf1.data, lf2.data)
            assert np.array_equal(d1.values, d2.values)

    def test_different_seeds_differ(self):
        a = generate_dataset(1, size=16, seed=1)
        b = generate_dataset(1, size=16, seed=2)
        assert not np.array_equal(a[0][0].data, b[0][0].data)

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match=">= 1"):
            generate_dataset(0)

    def test_bulk_invariants(self):
        # desk-scale version of the large-batch invariant sweep
        scenes = generate_dataset(40, size=32, seed=11)
        assert len(scenes) == 40
        sizes = set()
        for lf, disp in scenes:
            assert lf.data.min() >= 0.0 and lf.data.max() <= 1.0
            assert np.all(np.isfinite(lf.data))
            assert np.all(np.isfinite(disp.values))
            assert np.abs(disp.values).max() <= 4.0
            sizes.add(lf.data.shape)
        assert sizes == {(9, 9, 32, 32, 3)}
