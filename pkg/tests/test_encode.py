import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tnqc import encode
from tnqc.errors import DegenerateDataError, DomainError, ShapeError


def square_images():
    return st.integers(2, 9).flatmap(lambda n: arrays(np.float64, (n, n), elements=st.floats(0, 10)))


class TestScaler:
    def test_fit_single_image(self):
        s = encode.fit_scaler(np.array([[0.0, 2.0], [2.0, 0.0]]))
        assert (s.lo, s.hi) == (0.0, 2.0)

    def test_endpoints_and_midpoint(self):
        s = encode.Scaler(1.0, 3.0)
        assert s(3.0) == math.pi
        assert s(1.0) == 0.0
        assert s(2.0) == pytest.approx(math.pi / 2, abs=1e-15)

    def test_clamping(self):
        s = encode.Scaler(0.0, 1.0)
        assert encode.standardize(5.0, s) == math.pi
        assert encode.standardize(-1.0, s) == 0.0

    def test_fit_uses_first_images_only(self):
        imgs = np.stack([np.full((2, 2), 1.0), np.full((2, 2), 2.0), np.full((2, 2), 100.0)])
        imgs[0, 0, 0] = 0.0
        s = encode.fit_scaler(imgs, n_fit=2)
        assert (s.lo, s.hi) == (0.0, 2.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateDataError):
            encode.fit_scaler(np.ones((3, 3)))
        with pytest.raises(DegenerateDataError):
            encode.Scaler(1.0, 1.0)

    @settings(max_examples=50, deadline=None)
    @given(square_images())
    def test_standardized_range(self, img):
        if img.max() == img.min():
            return
        x = encode.standardize(img, encode.fit_scaler(img))
        assert x.min() >= 0 and x.max() <= math.pi


class TestFlip:
    def test_top_right_unchanged(self):
        img = np.zeros((4, 4))
        img[0, 3] = 1
        np.testing.assert_array_equal(encode.flip_to_top_right(img), img)

    def test_bottom_left_moves(self):
        img = np.zeros((5, 5))
        img[4, 0] = 1
        out = encode.flip_to_top_right(img)
        assert out[0, 4] == 1 and out.sum() == 1

    def test_uniform_unchanged(self):
        img = np.ones((6, 6))
        np.testing.assert_array_equal(encode.flip_to_top_right(img), img)

    def test_tie_prefers_horizontal_over_vertical(self):
        img = np.zeros((4, 4))
        img[0, 0] = 1  # top-left
        img[3, 3] = 1  # bottom-right
        out = encode.flip_to_top_right(img)
        np.testing.assert_array_equal(out, img[:, ::-1])

    def test_stack(self):
        imgs = np.zeros((2, 4, 4))
        imgs[0, 3, 0] = 1
        imgs[1, 0, 0] = 1
        out = encode.flip_to_top_right(imgs)
        assert out[0, 0, 3] == 1 and out[1, 0, 3] == 1

    @settings(max_examples=60, deadline=None)
    @given(square_images())
    def test_idempotent_and_top_right_maximal(self, img):
        out = encode.flip_to_top_right(img)
        np.testing.assert_array_equal(encode.flip_to_top_right(out), out)
        q = encode._quadrant_sums(out)
        assert q["tr"] == max(q.values())


class TestCropDownsample:
    @pytest.mark.parametrize("crop,shape", [(12, (6, 6)), (14, (4, 4))])
    def test_reference_shapes(self, crop, shape):
        assert encode.crop_downsample(np.zeros((37, 37)), crop, 2).shape == shape

    def test_identity(self, rng):
        img = rng.random((5, 7))
        np.testing.assert_array_equal(encode.crop_downsample(img, 0, 1), img)

    def test_crop_too_large(self):
        with pytest.raises(ShapeError):
            encode.crop_downsample(np.zeros((10, 10)), 5, 2)

    def test_values(self):
        img = np.arange(16.0).reshape(4, 4)
        np.testing.assert_array_equal(encode.crop_downsample(img, 0, 2), [[2.5, 4.5], [10.5, 12.5]])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 4), st.integers(1, 3), st.integers(0, 10**6))
    def test_mean_preserved_over_retained_window(self, crop, pool, seed):
        img = np.random.default_rng(seed).random((17, 17))
        out = encode.crop_downsample(img, crop, pool)
        h = out.shape[0] * pool
        window = img[crop : crop + h, crop : crop + h]
        assert out.mean() == pytest.approx(window.mean(), rel=1e-12)


class TestSelection:
    grid = np.arange(16.0).reshape(4, 4)

    def test_central4(self):
        np.testing.assert_array_equal(encode.select_pixels(self.grid, "central4"), [5, 6, 9, 10])

    def test_central4_top2(self):
        np.testing.assert_array_equal(encode.select_pixels(self.grid, "central4+top2"), [1, 2, 5, 6, 9, 10])

    def test_full(self):
        np.testing.assert_array_equal(encode.select_pixels(np.array([[1, 2], [3, 4]]), "full"), [1, 2, 3, 4])

    def test_wrong_size(self):
        with pytest.raises(ShapeError):
            encode.select_pixels(np.zeros((6, 6)), "central4")

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            encode.select_pixels(self.grid, "corners")

    def test_s_order(self):
        np.testing.assert_array_equal(encode.s_order(np.array([[1, 2], [3, 4]])), [1, 2, 4, 3])
        np.testing.assert_array_equal(encode.s_order(np.arange(5)[None]), np.arange(5))
        np.testing.assert_array_equal(encode.s_order(np.arange(9).reshape(3, 3)), [0, 1, 2, 5, 4, 3, 6, 7, 8])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10**6))
    def test_s_order_is_permutation(self, h, w, seed):
        img = np.random.default_rng(seed).random((h, w))
        np.testing.assert_array_equal(np.sort(encode.s_order(img)), np.sort(img.ravel()))

    def test_stacked_selection(self, rng):
        imgs = rng.random((3, 4, 4))
        out = encode.select_pixels(imgs, "central4+top2")
        assert out.shape == (3, 6)
        np.testing.assert_array_equal(out[1], encode.select_pixels(imgs[1], "central4+top2"))


class TestFeatureMaps:
    @pytest.mark.parametrize("x", [0.0, math.pi, math.pi / 2])
    def test_angle_encode(self, x):
        assert encode.angle_encode(x) == x

    def test_d2_is_cos_sin(self, rng):
        x = rng.uniform(0, math.pi, 1000)
        xt = x / math.pi
        v = encode.hypersphere_map(x, 2)
        assert np.array_equal(v[:, 0], np.cos(xt * math.pi / 2))
        assert np.array_equal(v[:, 1], np.sin(xt * math.pi / 2))

    def test_d2_at_zero(self):
        np.testing.assert_array_equal(encode.hypersphere_map(0.0, 2), [1.0, 0.0])

    def test_d3_symmetric_point(self):
        np.testing.assert_allclose(encode.hypersphere_map(math.pi / 2, 3), [0.5, 0.7071067812, 0.5], atol=1e-10)

    def test_small_d(self):
        with pytest.raises(DomainError):
            encode.hypersphere_map(0.3, 1)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, math.pi), st.integers(2, 16))
    def test_unit_norm(self, x, D):
        assert np.linalg.norm(encode.hypersphere_map(x, D)) == pytest.approx(1.0, abs=1e-12)

    def test_shape(self):
        assert encode.hypersphere_map(np.zeros((5, 6)), 4).shape == (5, 6, 4)


def test_preprocess_pipeline(rng):
    imgs = rng.random((3, 37, 37))
    out = encode.preprocess(imgs, 12, 2)
    assert out.shape == (3, 6, 6)
    np.testing.assert_array_equal(out[0], encode.crop_downsample(encode.flip_to_top_right(imgs[0]), 12, 2))
