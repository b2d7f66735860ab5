import itertools
import math

import numpy as np
import pytest

from gimpml.core import ImageBuffer
from gimpml.ops import (
    KMeansConfig,
    RegionMask,
    colorize,
    desaturate,
    edge_detect,
    gaussian_blur,
    grayscale,
    hue_saturation,
    invert,
    kmeans_cluster,
    resize_bicubic,
    run_lloyd,
    selective_apply,
)


def _img(arr):
    return ImageBuffer(np.asarray(arr, dtype=np.float32))


def _random_img(rng, h, w, c=3):
    return ImageBuffer(rng.random((h, w, c), dtype=np.float32))


# --- independent oracles -----------------------------------------------------


def brute_force_best_sse(points, k):
    """Minimum SSE over every possible assignment of points to k clusters."""
    points = np.asarray(points, dtype=np.float64)
    best = math.inf
    for assignment in itertools.product(range(k), repeat=len(points)):
        sse = 0.0
        for c in range(k):
            members = points[[i for i, a in enumerate(assignment) if a == c]]
            if len(members):
                sse += ((members - members.mean(axis=0)) ** 2).sum()
        best = min(best, sse)
    return best


def naive_gaussian_blur(arr, sigma):
    """Direct-summation convolution with clamp padding, no separability tricks."""
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-(x * x) / (2 * sigma * sigma))
    k1 /= k1.sum()
    kern = np.outer(k1, k1)
    h, w, c = arr.shape
    out = np.zeros_like(arr, dtype=np.float64)
    for y in range(h):
        for xx in range(w):
            acc = np.zeros(c)
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    sy = min(max(y + dy, 0), h - 1)
                    sx = min(max(xx + dx, 0), w - 1)
                    acc += kern[dy + radius, dx + radius] * arr[sy, sx]
            out[y, xx] = acc
    return out


# --- kmeans ------------------------------------------------------------------


class TestKMeans:
    def test_k1_gives_per_channel_mean(self):
        rng = np.random.default_rng(0)
        img = _random_img(rng, 6, 5)
        out, labels = kmeans_cluster(img, KMeansConfig(k=1, seed=1))
        mean = img.data.reshape(-1, 3).astype(np.float64).mean(axis=0)
        assert np.allclose(out.data.reshape(-1, 3), mean, atol=1e-6)
        assert np.all(labels.labels == 0)

    def test_black_white_reaches_brute_force_optimum(self):
        # oracle: enumerate all 2^4 assignments; optimum is SSE 0
        pixels = np.array([[0.0], [0.0], [1.0], [1.0]])
        assert brute_force_best_sse(pixels, 2) == 0.0
        img = _img(pixels.reshape(2, 2, 1))
        for seed in (0, 1, 42, 12345):
            _, labels = kmeans_cluster(img, KMeansConfig(k=2, seed=seed))
            result = run_lloyd(pixels, 2, np.random.default_rng(seed))
            assert result.sse_history[-1] == 0.0
            # black pixels share one cluster, white the other
            flat = labels.labels.reshape(-1)
            assert flat[0] == flat[1] and flat[2] == flat[3] and flat[0] != flat[2]

    def test_fixed_seed_is_bit_deterministic(self):
        rng = np.random.default_rng(9)
        img = _random_img(rng, 8, 8)
        cfg = KMeansConfig(k=4, seed=77, use_position=True)
        out1, lab1 = kmeans_cluster(img, cfg)
        out2, lab2 = kmeans_cluster(img, cfg)
        assert out1.data.tobytes() == out2.data.tobytes()
        assert np.array_equal(lab1.labels, lab2.labels)

    def test_sse_non_increasing_per_iteration(self):
        rng = np.random.default_rng(10)
        for trial in range(10):
            feats = rng.random((60, 3))
            result = run_lloyd(feats, 5, np.random.default_rng(trial), tol=0.0, max_iter=25)
            hist = result.sse_history
            assert all(hist[i + 1] <= hist[i] + 1e-12 for i in range(len(hist) - 1))

    def test_at_most_k_distinct_colors(self):
        rng = np.random.default_rng(11)
        img = _random_img(rng, 10, 10)
        out, _ = kmeans_cluster(img, KMeansConfig(k=3, seed=5))
        distinct = {tuple(px) for px in out.data.reshape(-1, 3)}
        assert len(distinct) <= 3

    def test_position_features_can_split_identical_colors(self):
        img = _img(np.full((4, 4, 3), 0.5))
        out, labels = kmeans_cluster(img, KMeansConfig(k=2, seed=3, use_position=True))
        assert len(np.unique(labels.labels)) == 2
        # output colors still come from color components only
        assert np.allclose(out.data, 0.5, atol=1e-6)

    def test_k_larger_than_pixion_count_rejected(self):
        img = _img(np.zeros((2, 2, 3)))
        with pytest.raises(ValueError, match="exceeds pixel count"):
            kmeans_cluster(img, KMeansConfig(k=5))

    def test_k_zero_rejected(self):
        with pytest.raises(ValueError, match="k must be at least 1"):
            KMeansConfig(k=0)

    def test_labelmap_palette_covers_labels(self):
        rng = np.random.default_rng(12)
        img = _random_img(rng, 6, 6)
        _, labels = kmeans_cluster(img, KMeansConfig(k=4, seed=8))
        for lab in np.unique(labels.labels):
            assert int(lab) in labels.palette


# --- pointwise color ops -----------------------------------------------------


class TestGrayscaleFamily:
    def test_white_luma_is_one(self):
        out = grayscale(_img(np.ones((1, 1, 3))))
        assert out.data[0, 0, 0] == pytest.approx(1.0)

    def test_red_luma(self):
        out = grayscale(_img([[[1.0, 0.0, 0.0]]]))
        assert out.data[0, 0, 0] == pytest.approx(0.299, abs=1e-6)

    def test_grayscale_channel_count(self):
        rng = np.random.default_rng(1)
        assert grayscale(_random_img(rng, 2, 2, 3)).channels == 1
        assert grayscale(_random_img(rng, 2, 2, 4)).channels == 1
        assert grayscale(_random_img(rng, 2, 2, 1)).channels == 1

    def test_desaturate_keeps_alpha(self):
        rng = np.random.default_rng(2)
        img = _random_img(rng, 3, 3, 4)
        out = desaturate(img)
        assert out.channels == 4
        assert np.array_equal(out.data[:, :, 3], img.data[:, :, 3])
        assert np.array_equal(out.data[:, :, 0], out.data[:, :, 1])
        assert np.array_equal(out.data[:, :, 1], out.data[:, :, 2])

    def test_invert_is_involution(self):
        rng = np.random.default_rng(3)
        img = _random_img(rng, 4, 4, 3)
        out = invert(invert(img))
        assert np.allclose(out.data, img.data, atol=1e-7)

    def test_invert_leaves_alpha(self):
        img = _img(np.dstack([np.full((2, 2), 0.25)] * 3 + [np.full((2, 2), 0.7)]))
        out = invert(img)
        assert np.allclose(out.data[:, :, :3], 0.75, atol=1e-7)
        assert np.allclose(out.data[:, :, 3], 0.7, atol=1e-7)

    def test_pointwise_shuffle_equivariance(self):
        # pixel permutation before == pixel permutation after
        rng = np.random.default_rng(4)
        img = _random_img(rng, 4, 4, 3)
        perm = rng.permutation(16)
        shuffled = ImageBuffer(img.data.reshape(16, 1, 3)[perm].reshape(4, 4, 3))
        for op in (grayscale, desaturate, invert):
            a = op(shuffled).data
            b = op(img).data
            b_shuffled = b.reshape(16, 1, b.shape[2])[perm].reshape(a.shape)
            assert np.array_equal(a, b_shuffled)


class TestColorize:
    def test_zero_saturation_replicates_gray(self):
        rng = np.random.default_rng(5)
        gray = _random_img(rng, 3, 3, 1)
        out = colorize(gray, 120.0, 0.0)
        for c in range(3):
            assert np.allclose(out.data[:, :, c], gray.data[:, :, 0], atol=1e-6)

    def test_black_stays_black(self):
        out = colorize(_img(np.zeros((2, 2, 1))), 200.0, 1.0)
        assert not out.data.any()

    def test_mid_gray_full_saturation_red(self):
        # hand HSL evaluation: L=0.5, H=0, S=1 -> (1, 0, 0)
        out = colorize(_img(np.full((1, 1, 1), 0.5)), 0.0, 1.0)
        assert np.allclose(out.data[0, 0], [1.0, 0.0, 0.0], atol=1e-6)

    def test_requires_single_channel(self):
        with pytest.raises(ValueError, match="1-channel"):
            colorize(_img(np.zeros((2, 2, 3))), 0.0, 1.0)


class TestHueSaturation:
    def test_identity_parameters(self):
        rng = np.random.default_rng(6)
        img = _random_img(rng, 5, 5, 3)
        out = hue_saturation(img, 0.0, 1.0, 0.0)
        assert np.allclose(out.data, img.data, atol=1e-6)

    def test_full_turn_equals_zero_shift(self):
        rng = np.random.default_rng(7)
        img = _random_img(rng, 4, 4, 3)
        a = hue_saturation(img, 360.0, 1.0, 0.0)
        b = hue_saturation(img, 0.0, 1.0, 0.0)
        assert np.allclose(a.data, b.data, atol=1e-6)

    def test_zero_saturation_grays(self):
        rng = np.random.default_rng(8)
        out = hue_saturation(_random_img(rng, 4, 4, 3), 0.0, 0.0, 0.0)
        assert np.allclose(out.data[:, :, 0], out.data[:, :, 1], atol=1e-6)
        assert np.allclose(out.data[:, :, 1], out.data[:, :, 2], atol=1e-6)

    def test_alpha_preserved(self):
        rng = np.random.default_rng(9)
        img = _random_img(rng, 3, 3, 4)
        out = hue_saturation(img, 90.0, 0.5, 0.1)
        assert np.array_equal(out.data[:, :, 3], img.data[:, :, 3])


# --- filters -----------------------------------------------------------------


class TestGaussianBlur:
    def test_sigma_zero_is_bitwise_identity(self):
        rng = np.random.default_rng(10)
        img = _random_img(rng, 4, 4)
        out = gaussian_blur(img, 0.0)
        assert out.data.tobytes() == img.data.tobytes()

    def test_constant_image_unchanged(self):
        img = _img(np.full((6, 6, 3), 0.3))
        out = gaussian_blur(img, 2.0)
        assert np.allclose(out.data, 0.3, atol=1e-6)

    def test_matches_direct_summation_oracle(self):
        rng = np.random.default_rng(11)
        arr = rng.random((8, 7, 3))
        expected = naive_gaussian_blur(arr, 1.2)
        out = gaussian_blur(ImageBuffer(arr), 1.2)
        assert np.allclose(out.data, expected, atol=1e-6)

    def test_mean_preserved_within_tolerance(self):
        rng = np.random.default_rng(12)
        arr = rng.random((16, 16, 3))
        out = gaussian_blur(ImageBuffer(arr), 0.6)
        assert abs(float(out.data.mean()) - float(arr.mean())) < 1e-4

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            gaussian_blur(_img(np.zeros((2, 2, 3))), -1.0)


class TestEdgeDetect:
    def test_constant_is_all_zero(self):
        out = edge_detect(_img(np.full((5, 5, 3), 0.5)))
        assert not out.data.any()

    def test_vertical_step_peaks_on_the_step(self):
        arr = np.zeros((8, 8, 1))
        arr[:, 4:] = 1.0
        out = edge_detect(ImageBuffer(arr))
        col_means = out.data[:, :, 0].mean(axis=0)
        assert np.argmax(col_means) in (3, 4)
        assert out.data.max() == 1.0

    def test_normalized_to_unit_max(self):
        rng = np.random.default_rng(13)
        out = edge_detect(_random_img(rng, 6, 6))
        assert out.data.max() == pytest.approx(1.0)


class TestSelectiveApply:
    def test_zero_mask_returns_base(self):
        rng = np.random.default_rng(14)
        base, proc = _random_img(rng, 3, 3), _random_img(rng, 3, 3)
        out = selective_apply(base, proc, RegionMask(np.zeros((3, 3))))
        assert np.array_equal(out.data, base.data)

    def test_ones_mask_returns_processed(self):
        rng = np.random.default_rng(15)
        base, proc = _random_img(rng, 3, 3), _random_img(rng, 3, 3)
        out = selective_apply(base, proc, RegionMask(np.ones((3, 3))))
        assert np.array_equal(out.data, proc.data)

    def test_quarter_weight_blend(self):
        base = _img(np.zeros((1, 1, 3)))
        proc = _img(np.ones((1, 1, 3)))
        out = selective_apply(base, proc, RegionMask(np.full((1, 1), 0.25)))
        assert np.allclose(out.data, 0.25, atol=1e-7)

    def test_binary_mask_is_per_pixel_select(self):
        rng = np.random.default_rng(16)
        base, proc = _random_img(rng, 4, 4), _random_img(rng, 4, 4)
        m = (rng.random((4, 4)) > 0.5).astype(np.float32)
        out = selective_apply(base, proc, RegionMask(m))
        expected = np.where(m[:, :, None] == 1.0, proc.data, base.data)
        assert np.array_equal(out.data, expected)

    def test_dimension_mismatch_rejected(self):
        rng = np.random.default_rng(17)
        with pytest.raises(ValueError, match="dimension mismatch"):
            selective_apply(_random_img(rng, 3, 3), _random_img(rng, 3, 4), RegionMask(np.zeros((3, 3))))


class TestResizeBicubic:
    def test_constant_stays_constant_at_4x(self):
        out = resize_bicubic(_img(np.full((3, 5, 3), 0.4)), 4)
        assert out.data.shape == (12, 20, 3)
        assert np.allclose(out.data, 0.4, atol=1e-6)

    def test_output_dimensions(self):
        rng = np.random.default_rng(18)
        img = _random_img(rng, 16, 16)
        out = resize_bicubic(img, 4)
        assert (out.height, out.width) == (64, 64)

    def test_reproduces_linear_ramp(self):
        # oracle: the analytic ramp evaluated at output sample coordinates
        h, w = 16, 16
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        ramp = (xs / (w - 1) * 0.5 + ys / (h - 1) * 0.3 + 0.05)
        img = ImageBuffer(ramp[:, :, None])
        for scale in (2, 3, 4):
            out = resize_bicubic(img, scale)
            oy, ox = np.mgrid[0 : h * scale, 0 : w * scale].astype(np.float64)
            sx = (ox + 0.5) / scale - 0.5
            sy = (oy + 0.5) / scale - 0.5
            expected = sx / (w - 1) * 0.5 + sy / (h - 1) * 0.3 + 0.05
            assert np.abs(out.data[:, :, 0] - expected).max() < 1e-3

    def test_unsupported_scale_rejected(self):
        img = _img(np.zeros((2, 2, 3)))
        for bad in (1, 5, 0):
            with pytest.raises(ValueError, match="unsupported scale"):
                resize_bicubic(img, bad)


class TestDimensionContracts:
    def test_ops_preserve_dimensions(self):
        rng = np.random.default_rng(19)
        img = _random_img(rng, 7, 9, 3)
        for op in (
            lambda x: gaussian_blur(x, 1.0),
            invert,
            desaturate,
            lambda x: hue_saturation(x, 10.0, 0.9, 0.05),
            edge_detect,
        ):
            out = op(img)
            assert (out.height, out.width) == (7, 9)
