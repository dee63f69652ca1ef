"""Point-cloud cropping and bird's-eye-view rasterization."""

import hashlib

import numpy as np
import pytest

from bevloc.bev import CropWindow, crop, rasterize, to_pgm, write_pgm
from bevloc.errors import ConfigError


def random_window_cloud(rng, n):
    """Uniform points strictly inside the default window."""
    return np.column_stack([
        rng.uniform(-25.0, 25.0, n),
        rng.uniform(0.0, 50.0, n),
        rng.uniform(-5.0, 5.0, n),
    ])


class TestCrop:
    def test_point_beyond_x_is_removed(self):
        assert len(crop(np.array([[30.0, 10.0, 0.0]]), CropWindow())) == 0

    def test_interior_point_is_retained(self):
        cloud = crop(np.array([[0.0, 25.0, 0.0]]), CropWindow())
        np.testing.assert_array_equal(cloud, [[0.0, 25.0, 0.0]])

    def test_half_open_boundaries(self):
        cloud = np.array([[-25.0, 0.0, -5.0], [25.0, 50.0, 5.0]])
        kept = crop(cloud, CropWindow())
        np.testing.assert_array_equal(kept, [[-25.0, 0.0, -5.0]])

    def test_window_rejects_inverted_range(self):
        with pytest.raises(ValueError):
            CropWindow(x_range=(5.0, -5.0))

    def test_crop_is_idempotent(self):
        rng = np.random.default_rng(1)
        cloud = rng.uniform(-60.0, 60.0, size=(500, 3))
        window = CropWindow()
        once = crop(cloud, window)
        np.testing.assert_array_equal(crop(once, window), once)


class TestRasterize:
    def test_default_window_is_125_by_125(self):
        image = rasterize(np.zeros((0, 3)), CropWindow(), 0.4)
        assert (image.rows, image.cols) == (125, 125)

    def test_empty_cloud_is_all_zero(self):
        image = rasterize(np.zeros((0, 3)), CropWindow(), 0.4)
        assert not image.values.any()
        assert not image.raw_counts.any()

    def test_origin_point_bin_arithmetic(self):
        image = rasterize(np.array([[0.0, 0.0, 0.0]]), CropWindow(), 0.4)
        assert image.raw_counts[124, 62] == 1
        assert image.values[124, 62] == 1.0
        assert image.raw_counts.sum() == 1

    def test_forward_point_lands_on_top_row(self):
        image = rasterize(np.array([[0.0, 49.9, 0.0]]), CropWindow(), 0.4)
        assert image.raw_counts[0, 62] == 1

    def test_max_normalization(self):
        cloud = np.array([
            [0.1, 0.1, 0.0], [0.15, 0.12, 0.0], [0.18, 0.05, 0.0],  # one cell
            [10.0, 30.0, 0.0],                                       # another
        ])
        image = rasterize(cloud, CropWindow(), 0.4)
        nonzero = np.sort(image.values[image.values > 0])
        np.testing.assert_allclose(nonzero, [1 / 3, 1.0])

    def test_out_of_window_point_is_contract_violation(self):
        with pytest.raises(ValueError):
            rasterize(np.array([[30.0, 0.0, 0.0]]), CropWindow(), 0.4)

    def test_non_divisible_extent_is_config_error(self):
        with pytest.raises(ConfigError):
            rasterize(np.zeros((0, 3)), CropWindow(), cell_size=0.3)

    def test_nonpositive_cell_size_is_config_error(self):
        with pytest.raises(ConfigError):
            rasterize(np.zeros((0, 3)), CropWindow(), cell_size=0.0)

    def test_count_conservation_100_random_clouds(self):
        rng = np.random.default_rng(7)
        window = CropWindow()
        for _ in range(100):
            n = int(rng.integers(0, 2000))
            image = rasterize(random_window_cloud(rng, n), window, 0.4)
            assert image.raw_counts.sum() == n

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        cloud = random_window_cloud(rng, 800)
        window = CropWindow()
        a = rasterize(cloud, window, 0.4)
        b = rasterize(cloud[rng.permutation(len(cloud))], window, 0.4)
        np.testing.assert_array_equal(a.raw_counts, b.raw_counts)
        np.testing.assert_array_equal(a.values, b.values)

    def test_translation_equivariance_by_whole_cells(self):
        rng = np.random.default_rng(9)
        window = CropWindow()
        cloud = random_window_cloud(rng, 600)
        k = 3
        shifted = cloud + np.array([k * 0.4, 0.0, 0.0])
        base = rasterize(crop(cloud, window), window, 0.4).raw_counts
        moved = rasterize(crop(shifted, window), window, 0.4).raw_counts
        # columns that stay in view must shift right by k
        np.testing.assert_array_equal(moved[:, k:], base[:, :-k][:, : moved.shape[1] - k])

    def test_values_in_unit_range_with_max_one(self):
        rng = np.random.default_rng(10)
        image = rasterize(random_window_cloud(rng, 300), CropWindow(), 0.4)
        assert image.values.min() >= 0.0
        assert image.values.max() == 1.0


class TestPgmExport:
    def make_fixture_image(self):
        rng = np.random.default_rng(2024)
        return rasterize(random_window_cloud(rng, 4000), CropWindow(), 0.4)

    def test_golden_image_is_byte_stable(self):
        data = to_pgm(self.make_fixture_image())
        assert hashlib.sha256(data).hexdigest() == (
            "cd151aa9546149b4e3bd3f11c11d4adfcaa1c7209764fe3d2fe893b93ec2f20a"
        )

    def test_header_and_payload_size(self):
        image = self.make_fixture_image()
        data = to_pgm(image)
        assert data.startswith(b"P5\n125 125\n255\n")
        assert len(data) == len(b"P5\n125 125\n255\n") + 125 * 125

    def test_rounding_half_up(self):
        image = rasterize(
            np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.1], [10.0, 30.0, 0.0]]),
            CropWindow(), 0.4)
        data = to_pgm(image)
        payload = np.frombuffer(data, dtype=np.uint8)[-125 * 125:]
        assert set(payload.tolist()) == {0, 128, 255}  # 0.5*255 rounds up to 128

    def test_write_pgm_matches_bytes(self, tmp_path):
        image = self.make_fixture_image()
        path = tmp_path / "bev.pgm"
        write_pgm(image, path)
        assert path.read_bytes() == to_pgm(image)
