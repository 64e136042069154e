import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import map_coordinates

from burstdof import fileio
from burstdof.burst import laplacian_variance
from burstdof.lfcore import (
    ApertureMask,
    DisparityMap,
    LightField,
    bias_disparity,
    circular_aperture_mask,
    ground_truth,
    load_lightfield,
    photograph,
    save_lightfield,
    translate_image,
)
from burstdof.scenegen import LayerSpec, SceneSpec, generate_scene


def random_lightfield(rng, grid=9, size=16, channels=3):
    data = rng.uniform(0.0, 1.0, size=(grid, grid, size, size, channels))
    return LightField(data.astype(np.float32))


def brute_force_photograph(lf, mask, alpha, channel):
    """Independent oracle: shift each full view with scipy's bilinear
    resampler (edge clamp), then weighted-sum."""
    h, w = lf.height, lf.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.zeros((h, w))
    for (u, v), weight in zip(mask.offsets, mask.weights):
        view = lf.view(u, v)[:, :, channel].astype(np.float64)
        sampled = map_coordinates(
            view, [yy - alpha * v, xx - alpha * u], order=1, mode="nearest"
        )
        out += weight * sampled
    return out


class TestLightField:
    def test_rejects_even_grid(self):
        with pytest.raises(ValueError, match="odd"):
            LightField(np.zeros((4, 4, 8, 8, 3)))

    def test_rejects_out_of_range(self):
        data = np.zeros((3, 3, 4, 4, 1))
        data[0, 0, 0, 0, 0] = 1.5
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            LightField(data)

    def test_rejects_non_finite(self):
        data = np.zeros((3, 3, 4, 4, 1))
        data[1, 2, 3, 0, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            LightField(data)

    def test_view_indexing_row0_is_top(self):
        # encode the viewpoint into each view so indexing is observable
        data = np.zeros((3, 3, 2, 2, 1))
        for r in range(3):
            for c in range(3):
                data[r, c] = (r * 3 + c) / 10.0
        lf = LightField(data)
        # row 0 is v=+1 (topmost), col 0 is u=-1
        assert lf.view(-1, 1)[0, 0, 0] == 0.0
        assert lf.view(0, 0)[0, 0, 0] == pytest.approx(0.4)
        assert lf.view(1, -1)[0, 0, 0] == pytest.approx(0.8)

    def test_view_outside_grid(self):
        lf = random_lightfield(np.random.default_rng(0), grid=3, size=4)
        with pytest.raises(ValueError, match="outside grid"):
            lf.view(2, 0)


class TestCircularApertureMask:
    def test_radius_4_gives_49_viewpoints(self):
        mask = circular_aperture_mask(9, 4)
        assert len(mask) == 49
        assert abs(mask.weights.sum() - 1.0) < 1e-12

    def test_radius_0_is_center_only(self):
        mask = circular_aperture_mask(9, 0)
        assert mask.offsets == ((0, 0),)
        assert mask.weights[0] == 1.0

    def test_radius_10_covers_grid(self):
        # brute-force count over the grid
        expected = sum(
            1 for u in range(-4, 5) for v in range(-4, 5) if u * u + v * v <= 100
        )
        assert expected == 81
        assert len(circular_aperture_mask(9, 10)) == 81

    @given(
        grid=st.sampled_from([1, 3, 5, 7, 9]),
        radius=st.floats(0, 12, allow_nan=False),
    )
    def test_matches_brute_force_count(self, grid, radius):
        m = (grid - 1) // 2
        expected = sum(
            1
            for u in range(-m, m + 1)
            for v in range(-m, m + 1)
            if u * u + v * v <= radius * radius
        )
        mask = circular_aperture_mask(grid, radius)
        assert len(mask) == expected
        assert abs(mask.weights.sum() - 1.0) < 1e-12

    def test_uniqueness_enforced(self):
        with pytest.raises(ValueError, match="unique"):
            ApertureMask(((0, 0), (0, 0)), np.array([0.5, 0.5]))


class TestPhotograph:
    def test_constant_lightfield_any_mask(self):
        lf = LightField(np.full((9, 9, 12, 12, 3), 0.7, dtype=np.float32))
        for alpha in (0.0, 1.3, 3.0):
            img = photograph(lf, circular_aperture_mask(9, 4), alpha, 1)
            assert np.allclose(img, 0.7, atol=1e-12)

    def test_center_mask_is_exact_center_view(self):
        lf = random_lightfield(np.random.default_rng(1))
        img = photograph(lf, circular_aperture_mask(9, 0), 3.0, 2)
        assert np.array_equal(img, lf.view(0, 0)[:, :, 2].astype(np.float64))

    @pytest.mark.parametrize("d", [2.0, 3.0])
    def test_single_plane_refocuses_to_center_view(self, d):
        # integer disparity keeps every per-view shift integral, so all
        # shifted views coincide exactly (fractional d would add bilinear
        # smoothing on top)
        spec = SceneSpec(
            height=48,
            width=48,
            layers=(LayerSpec(disparity=d, texture_kind="noise", texture_seed=3),),
        )
        lf, _ = generate_scene(spec)
        mask = circular_aperture_mask(9, 4)
        img = photograph(lf, mask, d, 0)
        center = lf.view(0, 0)[:, :, 0].astype(np.float64)
        margin = int(np.ceil(4 * d)) + 1
        interior = (slice(margin, -margin), slice(margin, -margin))
        assert np.abs(img[interior] - center[interior]).max() < 1e-5

    def test_linearity(self):
        rng = np.random.default_rng(2)
        lf1 = random_lightfield(rng)
        lf2 = random_lightfield(rng)
        a, b = 0.3, 0.45  # convex so combined samples stay in [0, 1]
        combined = LightField(a * lf1.data + b * lf2.data)
        mask = circular_aperture_mask(9, 2.5)
        alpha = 1.7
        lhs = photograph(combined, mask, alpha, 0)
        rhs = a * photograph(lf1, mask, alpha, 0) + b * photograph(lf2, mask, alpha, 0)
        assert np.abs(lhs - rhs).max() < 1e-6

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            lf = random_lightfield(rng)
            radius = rng.uniform(0, 5)
            mask = circular_aperture_mask(9, radius)
            alpha = float(rng.uniform(0, 2.5))
            channel = int(rng.integers(0, 3))
            ours = photograph(lf, mask, alpha, channel)
            oracle = brute_force_photograph(lf, mask, alpha, channel)
            assert np.abs(ours - oracle).max() < 1e-6

    def test_output_in_unit_range(self):
        lf = random_lightfield(np.random.default_rng(4))
        img = photograph(lf, circular_aperture_mask(9, 3), 2.2, 0)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_channel_out_of_range(self):
        lf = random_lightfield(np.random.default_rng(5))
        with pytest.raises(ValueError, match="channel"):
            photograph(lf, circular_aperture_mask(9, 1), 0.0, 3)


class TestGroundTruth:
    def test_matches_per_channel_photograph(self):
        lf = random_lightfield(np.random.default_rng(6))
        mask = circular_aperture_mask(9, 4)
        gt = ground_truth(lf, mask, 1.2)
        assert gt.shape == (16, 16, 3)
        for c in range(3):
            assert np.array_equal(gt[:, :, c], photograph(lf, mask, 1.2, c))

    def test_grayscale(self):
        lf = random_lightfield(np.random.default_rng(7), channels=1)
        gt = ground_truth(lf, circular_aperture_mask(9, 2), 0.5)
        assert gt.shape == (16, 16, 1)


class TestBiasDisparity:
    def test_alpha_zero_is_identity(self):
        d = DisparityMap(np.random.default_rng(8).uniform(-4, 4, (8, 8)))
        assert np.array_equal(bias_disparity(d, 0.0).values, d.values)

    def test_constant_plane_maps_to_zero(self):
        d = DisparityMap(np.full((8, 8), 2.0))
        assert np.all(bias_disparity(d, 2.0).values == 0.0)

    def test_zero_plane_alpha_3(self):
        d = DisparityMap(np.zeros((4, 4)))
        assert np.all(bias_disparity(d, 3.0).values == -3.0)

    @given(
        alpha_num=st.integers(-1024, 1024),
        d_num=st.integers(-1024, 1024),
    )
    def test_invertible_on_dyadic_values(self, alpha_num, d_num):
        # dyadic rationals make float subtraction exact, so the roundtrip
        # is bitwise
        alpha = alpha_num / 256.0
        d = DisparityMap(np.full((2, 2), d_num / 256.0))
        roundtrip = bias_disparity(bias_disparity(d, alpha), -alpha)
        assert np.array_equal(roundtrip.values, d.values)

    @settings(deadline=None, max_examples=5)
    @given(d_value=st.sampled_from([0.0, 1.0, 2.0, 3.0]))
    def test_sharpness_peaks_at_plane_disparity(self, d_value):
        spec = SceneSpec(
            height=48,
            width=48,
            layers=(
                LayerSpec(disparity=d_value, texture_kind="noise", texture_seed=9),
            ),
        )
        lf, _ = generate_scene(spec)
        mask = circular_aperture_mask(9, 4)
        scores = {
            a: laplacian_variance(photograph(lf, mask, float(a), 0)[8:-8, 8:-8])
            for a in range(0, 5)
        }
        assert max(scores, key=scores.get) == d_value


class TestTranslateImage:
    def test_integer_shift_matches_slicing(self):
        rng = np.random.default_rng(9)
        img = rng.uniform(0, 1, (10, 12))
        out = translate_image(img, 3, -2)
        assert np.array_equal(out[2:8, 3:], img[4:10, :9])

    def test_zero_shift_identity(self):
        img = np.random.default_rng(10).uniform(0, 1, (6, 6, 3))
        assert np.array_equal(translate_image(img, 0.0, 0.0), img)


class TestLightFieldIO:
    def test_save_load_roundtrip(self, tmp_path):
        lf = random_lightfield(np.random.default_rng(11), grid=3, size=8)
        save_lightfield(lf, tmp_path / "lf")
        loaded = load_lightfield(tmp_path / "lf", 3)
        assert loaded.data.shape == lf.data.shape
        # 8-bit quantization bounds the roundtrip error
        assert np.abs(loaded.data - lf.data).max() <= 0.5 / 255 + 1e-9

    def test_missing_view_reported(self, tmp_path):
        lf = random_lightfield(np.random.default_rng(12), grid=3, size=4)
        save_lightfield(lf, tmp_path / "lf")
        (tmp_path / "lf" / "view_2_2.png").unlink()
        with pytest.raises(FileNotFoundError, match=r"missing view \(2,2\)"):
            load_lightfield(tmp_path / "lf", 3)

    def test_dimension_mismatch_rejected(self, tmp_path):
        lf = random_lightfield(np.random.default_rng(13), grid=3, size=4)
        save_lightfield(lf, tmp_path / "lf")
        fileio.write_image(tmp_path / "lf" / "view_1_1.png", np.zeros((5, 5, 3)))
        with pytest.raises(ValueError, match="shape"):
            load_lightfield(tmp_path / "lf", 3)

    def test_single_view_grid(self, tmp_path):
        data = np.random.default_rng(14).uniform(0, 1, (1, 1, 6, 6, 3))
        save_lightfield(LightField(data.astype(np.float32)), tmp_path / "lf")
        loaded = load_lightfield(tmp_path / "lf", 1)
        assert loaded.grid_size == 1 and loaded.view(0, 0).shape == (6, 6, 3)

    def test_even_grid_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="odd"):
            load_lightfield(tmp_path, 4)

    def test_16bit_views_supported(self, tmp_path):
        from PIL import Image

        d = tmp_path / "lf"
        d.mkdir()
        value = 40000
        arr = np.full((4, 4), value, dtype=np.uint16)
        Image.fromarray(arr).save(d / "view_0_0.png")
        lf = load_lightfield(d, 1)
        assert np.allclose(lf.view(0, 0), value / 65535.0, atol=1e-6)
