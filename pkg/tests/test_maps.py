import numpy as np
import pytest

from gimpml.core import ImageBuffer
from gimpml.maps import (
    FACE_PALETTE,
    TRIMAP_BACKGROUND,
    TRIMAP_FOREGROUND,
    TRIMAP_UNKNOWN,
    VOC_PALETTE,
    DisparityMap,
    Hint,
    HintSet,
    LabelMap,
    class_mask,
    decode_trimap,
    encode_trimap,
    labelmap_from_buffer,
    labelmap_to_buffer,
    normalize_disparity,
    parse_hint_layer,
    rasterize_hints,
    relight,
)


def _gray_raster(value_u8, h=4, w=4):
    return ImageBuffer(np.full((h, w, 1), value_u8 / 255.0, dtype=np.float64))


class TestTrimap:
    def test_all_white_is_foreground(self):
        tri = decode_trimap(_gray_raster(255))
        assert np.all(tri.values == TRIMAP_FOREGROUND)

    def test_value_127_reports_pixel(self):
        arr = np.full((3, 3, 1), 128 / 255.0)
        arr[1, 2, 0] = 127 / 255.0
        with pytest.raises(ValueError, match=r"invalid trimap value 127 at pixel \(2, 1\)"):
            decode_trimap(ImageBuffer(arr))

    def test_checkerboard_background_foreground(self):
        arr = np.indices((4, 4)).sum(axis=0) % 2
        tri = decode_trimap(ImageBuffer(arr.astype(np.float64)[:, :, None]))
        assert not np.any(tri.values == TRIMAP_UNKNOWN)
        assert tri.values[0, 0] == TRIMAP_BACKGROUND
        assert tri.values[0, 1] == TRIMAP_FOREGROUND

    def test_exactly_the_three_levels_accepted(self):
        accepted = []
        for v in range(256):
            try:
                decode_trimap(_gray_raster(v))
                accepted.append(v)
            except ValueError:
                pass
        assert accepted == [0, 128, 255]

    def test_channels_must_agree(self):
        arr = np.zeros((2, 2, 3))
        arr[0, 1] = (0.0, 128 / 255.0, 128 / 255.0)
        with pytest.raises(ValueError, match=r"at pixel \(1, 0\)"):
            decode_trimap(ImageBuffer(arr))

    def test_rgb_raster_with_agreeing_channels(self):
        arr = np.full((2, 2, 3), 128 / 255.0)
        tri = decode_trimap(ImageBuffer(arr))
        assert np.all(tri.values == TRIMAP_UNKNOWN)

    def test_encode_decode_round_trip(self):
        rng = np.random.default_rng(0)
        levels = np.array([0.0, 128 / 255.0, 1.0], dtype=np.float32)
        raster = ImageBuffer(levels[rng.integers(0, 3, size=(6, 5))][:, :, None])
        tri = decode_trimap(raster)
        back = encode_trimap(tri)
        assert np.array_equal(back.data, raster.data)

    def test_alpha_channel_ignored(self):
        arr = np.zeros((2, 2, 4))
        arr[:, :, :3] = 1.0
        arr[:, :, 3] = 0.33  # not an 8-bit trimap level, but not a color channel
        tri = decode_trimap(ImageBuffer(arr))
        assert np.all(tri.values == TRIMAP_FOREGROUND)


class TestHints:
    def test_empty_set_is_fully_transparent(self):
        out = rasterize_hints(HintSet(), 8, 8)
        assert not out.data[:, :, 3].any()

    def test_single_dot_stamp_extent(self):
        # enumeration oracle: the stamp covers [7,13) x [7,13) exactly
        out = rasterize_hints(HintSet((Hint(10, 10, (1.0, 0.0, 0.0)),)), 32, 32)
        alpha = out.data[:, :, 3]
        expected = np.zeros((32, 32), dtype=np.float32)
        for y in range(32):
            for x in range(32):
                if 7 <= x < 13 and 7 <= y < 13:
                    expected[y, x] = 1.0
        assert np.array_equal(alpha, expected)
        assert np.all(out.data[7:13, 7:13, 0] == 1.0)
        assert np.all(out.data[7:13, 7:13, 1] == 0.0)

    def test_corner_dot_clipped(self):
        out = rasterize_hints(HintSet((Hint(0, 0, (0.0, 1.0, 0.0)),)), 16, 16)
        alpha = out.data[:, :, 3]
        assert np.all(alpha[0:3, 0:3] == 1.0)
        assert alpha.sum() == 9.0

    def test_out_of_bounds_center_rejected(self):
        with pytest.raises(ValueError, match="outside image bounds"):
            rasterize_hints(HintSet((Hint(16, 3, (1.0, 1.0, 1.0)),)), 16, 16)

    def test_restamping_same_dot_is_idempotent(self):
        one = rasterize_hints(HintSet((Hint(5, 5, (0.2, 0.4, 0.6)),)), 16, 16)
        twice = rasterize_hints(HintSet((Hint(5, 5, (0.2, 0.4, 0.6)),) * 2), 16, 16)
        assert np.array_equal(one.data, twice.data)

    def test_later_dots_overwrite(self):
        dots = (Hint(5, 5, (1.0, 0.0, 0.0)), Hint(6, 5, (0.0, 0.0, 1.0)))
        out = rasterize_hints(HintSet(dots), 16, 16)
        assert np.array_equal(out.data[5, 5, :3], [0.0, 0.0, 1.0])

    def test_parse_rasterize_round_trip(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            dots = []
            taken = []
            while len(dots) < 4:
                x = int(rng.integers(3, 29))
                y = int(rng.integers(3, 29))
                if all(max(abs(x - tx), abs(y - ty)) >= 7 for tx, ty in taken):
                    taken.append((x, y))
                    color = tuple(float(c) for c in np.float32(rng.random(3)))
                    dots.append(Hint(x, y, color))
            hints = HintSet(tuple(dots))
            recovered = parse_hint_layer(rasterize_hints(hints, 32, 32))
            assert {(d.x, d.y, d.color) for d in recovered.dots} == {
                (d.x, d.y, d.color) for d in hints.dots
            }

    def test_fully_transparent_parses_empty(self):
        assert parse_hint_layer(ImageBuffer(np.zeros((8, 8, 4)))) == HintSet()

    def test_touching_dots_merge(self):
        dots = (Hint(8, 8, (1.0, 0.0, 0.0)), Hint(13, 8, (1.0, 0.0, 0.0)))
        recovered = parse_hint_layer(rasterize_hints(HintSet(dots), 32, 32))
        assert len(recovered.dots) == 1


class TestLabelMap:
    def test_palette_must_cover_labels(self):
        with pytest.raises(ValueError, match="missing from palette"):
            LabelMap(np.array([[0, 7]]), {0: ("bg", (0.0, 0.0, 0.0))})

    def test_palette_sizes(self):
        assert len(FACE_PALETTE) == 19
        assert len(VOC_PALETTE) == 21  # 20 classes + background
        assert FACE_PALETTE[0][0] == "background"
        assert VOC_PALETTE[0][0] == "background"
        assert VOC_PALETTE[1][0] == "person"
        assert FACE_PALETTE[17][0] == "hair"

    def test_class_mask_all_classes_is_ones(self):
        labels = LabelMap(np.array([[0, 1], [2, 3]]), VOC_PALETTE)
        mask = class_mask(labels, range(21))
        assert np.all(mask.weights == 1.0)

    def test_class_mask_empty_set_is_zeros(self):
        labels = LabelMap(np.array([[0, 1]]), VOC_PALETTE)
        assert not class_mask(labels, ()).weights.any()

    def test_class_mask_single_class_map(self):
        labels = LabelMap(np.full((3, 3), 5), VOC_PALETTE)
        assert np.all(class_mask(labels, [5]).weights == 1.0)

    def test_class_mask_unknown_id_rejected(self):
        labels = LabelMap(np.array([[0]]), VOC_PALETTE)
        with pytest.raises(ValueError, match="unknown class ids \\[99\\]"):
            class_mask(labels, [99])

    def test_disjoint_sets_make_disjoint_masks_and_union_covers(self):
        rng = np.random.default_rng(2)
        labels = LabelMap(rng.integers(0, 19, size=(8, 8)), FACE_PALETTE)
        a = class_mask(labels, range(0, 9)).weights
        b = class_mask(labels, range(9, 19)).weights
        assert not np.any((a == 1.0) & (b == 1.0))
        assert np.all((a + b) == 1.0)

    def test_buffer_round_trip(self):
        rng = np.random.default_rng(3)
        labels = LabelMap(rng.integers(0, 21, size=(6, 6)), VOC_PALETTE)
        back = labelmap_from_buffer(labelmap_to_buffer(labels), VOC_PALETTE)
        assert np.array_equal(back.labels, labels.labels)


class TestDisparity:
    def test_constant_map_normalizes_to_half(self):
        out = normalize_disparity(DisparityMap(np.full((3, 3), 7.0)))
        assert np.all(out.data == 0.5)

    def test_three_level_normalization(self):
        out = normalize_disparity(DisparityMap(np.array([[0.0, 2.0, 4.0]])))
        assert out.data[0, :, 0].tolist() == [0.0, 0.5, 1.0]

    def test_output_always_within_unit_range(self):
        rng = np.random.default_rng(4)
        out = normalize_disparity(DisparityMap(rng.random((5, 5)) * 1000.0))
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0

    def test_invariant_under_positive_affine_rescale(self):
        rng = np.random.default_rng(5)
        vals = rng.random((6, 6)).astype(np.float32) * 10.0
        base = normalize_disparity(DisparityMap(vals))
        scaled = normalize_disparity(DisparityMap(vals * 3.5 + 2.0))
        assert np.allclose(base.data, scaled.data, atol=1e-6)

    def test_negative_values_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            DisparityMap(np.array([[-1.0]]))

    def test_nan_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            DisparityMap(np.array([[np.nan]]))


class TestRelight:
    def test_strength_zero_is_bitwise_identity(self):
        rng = np.random.default_rng(6)
        img = ImageBuffer(rng.random((4, 4, 3), dtype=np.float32))
        d = DisparityMap(rng.random((4, 4)).astype(np.float32))
        out = relight(img, d, 40.0, 0.6, 0.0)
        assert out.data.tobytes() == img.data.tobytes()

    def test_black_light_layer_means_no_change(self):
        # constant disparity -> normalized 0.5; to get an all-black light use
        # maximal disparity everywhere except one far pixel, then check the
        # near (inverted 0 -> L=0) pixels pass through even at full strength
        rng = np.random.default_rng(7)
        img = ImageBuffer(rng.random((2, 2, 3), dtype=np.float32))
        d = DisparityMap(np.array([[0.0, 4.0], [4.0, 4.0]], dtype=np.float32))
        out = relight(img, d, 120.0, 0.8, 1.0)
        # pixels with disparity 4 (the max) get inverted lightness 0 = black light
        for y, x in ((0, 1), (1, 0), (1, 1)):
            assert np.allclose(out.data[y, x], img.data[y, x], atol=1e-6)

    def test_screen_of_black_image_with_half_red_light(self):
        # hand evaluation: screen(0, (0.5,0,0)) = (0.5,0,0) at full strength
        img = ImageBuffer(np.zeros((2, 2, 3), dtype=np.float32))
        d = DisparityMap(np.array([[0.0, 3.0], [4.0, 4.0]], dtype=np.float32))
        out = relight(img, d, 0.0, 1.0, 1.0)
        # disparity 3 -> normalized 0.75 -> inverted 0.25 -> HSL(0,1,0.25) = (0.5,0,0)
        assert np.allclose(out.data[0, 1], [0.5, 0.0, 0.0], atol=1e-6)

    def test_monotone_in_strength_where_light_positive(self):
        rng = np.random.default_rng(8)
        img = ImageBuffer(rng.random((5, 5, 3), dtype=np.float32) * 0.9)
        d = DisparityMap(rng.random((5, 5)).astype(np.float32))
        light = None
        prev = None
        for s in (0.0, 0.25, 0.5, 0.75, 1.0):
            out = relight(img, d, 45.0, 0.7, s).data
            if prev is not None:
                assert np.all(out >= prev - 1e-6)
            prev = out

    def test_dimension_mismatch_rejected(self):
        img = ImageBuffer(np.zeros((3, 3, 3)))
        with pytest.raises(ValueError, match="dimension mismatch"):
            relight(img, DisparityMap(np.zeros((2, 2))), 0.0, 1.0, 0.5)

    def test_alpha_preserved(self):
        rng = np.random.default_rng(9)
        img = ImageBuffer(rng.random((3, 3, 4), dtype=np.float32))
        d = DisparityMap(rng.random((3, 3)).astype(np.float32))
        out = relight(img, d, 10.0, 0.5, 0.7)
        assert np.array_equal(out.data[:, :, 3], img.data[:, :, 3])
