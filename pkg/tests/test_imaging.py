import math

import numpy as np
import pytest

from wildface.errors import DataError
from wildface.imaging import (
    BoundingBox,
    ImageBuffer,
    Point2,
    SsimParams,
    crop,
    resize,
    rotate_about,
    rotate_crop,
    ssim,
    to_grayscale,
)

from conftest import blob_image, gray, noise_image, ramp_image, smooth_image
from oracles import forward_rotate, gaussian_window, intensity_centroid, naive_ssim


class TestImageBuffer:
    def test_pixel_count_must_match_dims(self):
        with pytest.raises(DataError):
            ImageBuffer(width=2, height=2, channels=1, data=np.zeros(3, dtype=np.uint8))

    def test_channels_must_be_1_or_3(self):
        with pytest.raises(DataError):
            ImageBuffer(width=1, height=1, channels=2, data=np.zeros(2, dtype=np.uint8))

    def test_values_outside_range_rejected(self):
        with pytest.raises(DataError):
            ImageBuffer.from_array(np.array([[300]], dtype=np.int32))

    def test_data_is_read_only(self):
        img = gray([[1, 2], [3, 4]])
        with pytest.raises(ValueError):
            img.data[0, 0, 0] = 9


class TestGrayscale:
    def test_identity_on_single_channel(self):
        img = noise_image(8, 6, seed=3)
        assert to_grayscale(img) == img

    def test_equal_channels_pass_through(self):
        img = ImageBuffer.from_array(np.full((4, 5, 3), 100, dtype=np.uint8))
        out = to_grayscale(img)
        assert out.channels == 1
        assert np.all(out.plane() == 100)

    def test_pure_red_weights(self):
        # round(0.299 * 255) = 76 by hand
        img = ImageBuffer.from_array(np.array([[[255, 0, 0]]], dtype=np.uint8))
        assert to_grayscale(img).pixels[0] == 76


class TestRotate:
    def test_angle_zero_is_identity(self):
        img = noise_image(17, 13, seed=5)
        assert rotate_about(img, Point2(4.2, 7.7), 0.0) == img

    def test_quarter_turn_of_centered_square(self):
        plane = np.zeros((40, 40), dtype=np.uint8)
        plane[14:26, 14:26] = 255  # square centered at (20, 20)
        img = gray(plane)
        out = rotate_about(img, Point2(20.0, 20.0), math.pi / 2)
        assert np.abs(out.plane().astype(int) - plane.astype(int)).max() <= 1

    def test_five_point_pattern_relocates_per_coordinate_oracle(self):
        pts = [(30.5, 20.5), (35.5, 20.5), (30.5, 26.5), (24.5, 20.5), (30.5, 13.5)]
        plane = np.zeros((48, 48), dtype=np.uint8)
        for x, y in pts:
            plane[int(y - 0.5), int(x - 0.5)] = 255
        img = gray(plane)
        cx, cy = 24.5, 24.5
        out = rotate_about(img, Point2(cx, cy), math.pi / 2).plane()
        for x, y in pts:
            ex, ey = forward_rotate(x, y, cx, cy, math.pi / 2)
            assert out[int(ey - 0.5), int(ex - 0.5)] == 255

    def test_single_bright_pixel_moves_up_for_quarter_turn(self):
        plane = np.zeros((41, 41), dtype=np.uint8)
        plane[20, 30] = 255  # center (30.5, 20.5) = (cx + 10, cy)
        out = rotate_about(gray(plane), Point2(20.5, 20.5), math.pi / 2).plane()
        ii, jj = np.nonzero(out)
        assert (ii.tolist(), jj.tolist()) == ([10], [20])  # (cx, cy - 10)

    def test_round_trip_mae_small_on_interior(self):
        img = smooth_image(120, 120, seed=2)
        c = Point2(60.0, 60.0)
        back = rotate_about(rotate_about(img, c, 0.35), c, -0.35)
        margin = 12
        a = img.plane()[margin:-margin, margin:-margin].astype(np.float64)
        b = back.plane()[margin:-margin, margin:-margin].astype(np.float64)
        assert np.abs(a - b).mean() <= 2.0

    def test_fused_rotate_crop_matches_two_step_bitwise(self, rng):
        for trial in range(10):
            w, h = int(rng.integers(30, 160)), int(rng.integers(30, 160))
            img = noise_image(w, h, seed=trial)
            c = Point2(float(rng.uniform(0, w)), float(rng.uniform(0, h)))
            angle = float(rng.uniform(-3, 3))
            box = BoundingBox(
                float(rng.uniform(-25, w)),
                float(rng.uniform(-25, h)),
                float(rng.uniform(5, 100)),
                float(rng.uniform(5, 100)),
            )
            assert rotate_crop(img, c, angle, box) == crop(rotate_about(img, c, angle), box)

    def test_blob_centroid_follows_rotation(self):
        img = blob_image(96, 96, [(40.0, 28.0, 6.0, 220)])
        c = Point2(48.0, 48.0)
        for angle in (0.3, -0.7, 1.2):
            out = rotate_about(img, c, angle)
            got = intensity_centroid(out.plane())
            want = forward_rotate(40.0, 28.0, c.x, c.y, angle)
            assert math.hypot(got[0] - want[0], got[1] - want[1]) <= 0.5


class TestCrop:
    def test_full_image_box_is_identity(self):
        img = noise_image(9, 7, seed=1)
        assert crop(img, BoundingBox(0, 0, 9, 7)) == img

    def test_box_fully_outside_gives_black(self):
        img = noise_image(8, 8, seed=2)
        out = crop(img, BoundingBox(100, 100, 5, 4))
        assert (out.width, out.height) == (5, 4)
        assert not out.pixels.any()

    def test_corner_of_ramp_matches_index_oracle(self):
        img = ramp_image(4, 4)
        out = crop(img, BoundingBox(0, 0, 2, 2))
        assert out.plane().tolist() == [[0, 1], [4, 5]]

    def test_tiling_reassembles_exactly(self):
        img = noise_image(10, 10, seed=7)
        tl = crop(img, BoundingBox(0, 0, 4, 6))
        tr = crop(img, BoundingBox(4, 0, 6, 6))
        bl = crop(img, BoundingBox(0, 6, 4, 4))
        br = crop(img, BoundingBox(4, 6, 6, 4))
        top = np.hstack([tl.plane(), tr.plane()])
        bottom = np.hstack([bl.plane(), br.plane()])
        assert np.array_equal(np.vstack([top, bottom]), img.plane())

    def test_partial_overlap_pads_black(self):
        img = ramp_image(4, 4)
        out = crop(img, BoundingBox(-1, -1, 3, 3))
        expect = [[0, 0, 0], [0, 0, 1], [0, 4, 5]]
        assert out.plane().tolist() == expect

    def test_empty_rounded_box_errors(self):
        img = noise_image(4, 4, seed=0)
        with pytest.raises(DataError):
            crop(img, BoundingBox(0, 0, 0.3, 5))


class TestResize:
    def test_same_dims_is_identity(self):
        img = noise_image(11, 5, seed=9)
        assert resize(img, 11, 5) == img

    def test_uniform_stays_uniform(self):
        for v in (0, 97, 255):
            img = ImageBuffer.from_array(np.full((3, 7), v, dtype=np.uint8))
            for w, h in ((14, 6), (2, 2), (13, 13)):
                assert np.all(resize(img, w, h).pixels == v)

    def test_upscale_matches_hand_bilinear(self):
        # centers 0.25/0.75/1.25/1.75 against [0, 255]: 0, 63.75, 191.25, 255
        img = gray([[0, 255]])
        out = resize(img, 4, 1)
        assert out.pixels.tolist() == [0, 64, 191, 255]
        diffs = np.diff(out.pixels.astype(int))
        assert np.all(diffs >= 0)


class TestSsim:
    def test_self_similarity_is_one(self):
        p = SsimParams(compare_size=64)
        for seed in range(4):
            img = noise_image(64, 64, seed=seed)
            assert abs(ssim(img, img, p) - 1.0) <= 1e-9

    def test_exact_symmetry(self, rng):
        p = SsimParams(compare_size=64)
        for seed in range(3):
            a = noise_image(50, 40, seed=seed)
            b = noise_image(64, 64, seed=100 + seed)
            assert ssim(a, b, p) == ssim(b, a, p)

    def test_constant_images_match_closed_form(self):
        p = SsimParams()
        c1 = (p.k1 * p.dynamic_range) ** 2
        c2 = (p.k2 * p.dynamic_range) ** 2
        expected = (c1 * c2) / ((255.0**2 + c1) * c2)
        u0 = ImageBuffer.from_array(np.zeros((16, 16), dtype=np.uint8))
        u255 = ImageBuffer.from_array(np.full((32, 48), 255, dtype=np.uint8))
        assert ssim(u0, u255, p) == pytest.approx(expected, abs=1e-9)
        assert ssim(u0, u255, p) < 0.01

    def test_agrees_with_naive_reference(self):
        p = SsimParams(compare_size=64)
        window = gaussian_window(p.window_side, p.sigma)
        for seed in (0, 1):
            a = noise_image(64, 64, seed=seed)
            b = noise_image(64, 64, seed=50 + seed)
            ref = naive_ssim(a.plane(), b.plane(), window, p.k1, p.k2, p.dynamic_range)
            assert ssim(a, b, p) == pytest.approx(ref, abs=1e-6)

    def test_uniform_window_variant(self):
        p = SsimParams(window_kind="uniform", compare_size=64)
        a = noise_image(64, 64, seed=1)
        assert abs(ssim(a, a, p) - 1.0) <= 1e-9
        n = p.window_side
        window = np.full((n, n), 1.0 / (n * n))
        b = noise_image(64, 64, seed=2)
        ref = naive_ssim(a.plane(), b.plane(), window, p.k1, p.k2, p.dynamic_range)
        assert ssim(a, b, p) == pytest.approx(ref, abs=1e-6)

    def test_heterogeneous_sizes_are_commensurable(self):
        # different resolutions of the same content score near 1
        base = smooth_image(128, 128, seed=4)
        small = resize(base, 32, 32)
        assert ssim(base, small, SsimParams(compare_size=64)) > 0.8

    def test_param_validation(self):
        with pytest.raises(DataError):
            SsimParams(window_side=4)
        with pytest.raises(DataError):
            SsimParams(window_kind="hann")
        with pytest.raises(DataError):
            SsimParams(k1=0)
