import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from skimage.metrics import structural_similarity

from uvsplat.attributes import GaussianSet, assemble_gaussians
from uvsplat.camera import orbit_cameras
from uvsplat.errors import LineOutOfBounds
from uvsplat.mesh import sample_uv_grid
from uvsplat.metrics import epi_strip, psnr, ssim
from uvsplat.rasterizer import render
from uvsplat.scenes import textured_maps


def skimage_ssim(a, b):
    return structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                 use_sample_covariance=False, channel_axis=-1, K1=0.01, K2=0.03)


class TestPsnr:
    def test_identical_is_inf(self):
        a = np.random.default_rng(0).uniform(size=(8, 8, 3))
        assert psnr(a, a) == math.inf

    def test_uniform_offset(self):
        a = np.random.default_rng(1).uniform(0, 0.5, (8, 8, 3))
        assert abs(psnr(a, a + 0.1) - 20.0) < 1e-9

    def test_doubling_error(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(size=(8, 8))
        e = rng.normal(0, 0.05, (8, 8))
        assert abs(psnr(a, a + e) - psnr(a, a + 2 * e) - 20 * math.log10(2)) < 1e-9

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        a, b = rng.uniform(size=(2, 6, 6, 3))
        assert psnr(a, b) == psnr(b, a)


class TestSsim:
    def test_matches_skimage(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            a = rng.uniform(size=(32, 40, 3))
            b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
            assert abs(ssim(a, b) - skimage_ssim(a, b)) < 1e-10

    def test_identical_is_one(self):
        a = np.random.default_rng(5).uniform(size=(16, 16, 3))
        assert ssim(a, a) == 1.0

    def test_negative_image_below_one(self):
        a = np.random.default_rng(6).uniform(size=(16, 16, 3))
        assert ssim(a, 1 - a) < 1.0

    def test_constant_images(self):
        a = np.full((16, 16, 3), 0.2)
        b = np.full((16, 16, 3), 0.7)
        c1 = 0.01 ** 2
        expected = (2 * 0.2 * 0.7 + c1) / (0.2 ** 2 + 0.7 ** 2 + c1)
        assert abs(ssim(a, b) - expected) < 1e-12
        assert ssim(a, b) < 1.0

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (12, 12, 3), elements=st.floats(0, 1)),
           arrays(np.float64, (12, 12, 3), elements=st.floats(0, 1)))
    def test_symmetric_and_bounded(self, a, b):
        s = ssim(a, b)
        assert s == ssim(b, a)
        assert -1.0 <= s <= 1.0
        assert ssim(a, a) == 1.0


@pytest.fixture(scope="module")
def scene(sphere_index):
    return assemble_gaussians(textured_maps(16), sample_uv_grid(sphere_index, 16))


class TestEpi:
    def test_static_camera_rows_identical(self, scene):
        cam = orbit_cameras((0, 0, 0), 0.45, 0, 1, 32, 32)[0]
        strip = epi_strip(lambda c: render(scene, c).color, [cam] * 5, (16, 4, 28))
        assert strip.shape == (5, 24, 3)
        assert np.all(strip == strip[0])

    def test_empty_scene_white(self):
        cams = orbit_cameras((0, 0, 0), 1.0, 0, 4, 16, 16)
        strip = epi_strip(lambda c: render(GaussianSet.empty(), c).color, cams, (8, 0, 16))
        assert np.all(strip == 1.0)

    def test_orbit_range_and_determinism(self, scene):
        cams = orbit_cameras((0, 0, 0), 0.45, 10, 12, 32, 32, sweep_deg=60)
        a = epi_strip(lambda c: render(scene, c).color, cams, (16, 0, 32))
        b = epi_strip(lambda c: render(scene, c).color, cams, (16, 0, 32))
        assert np.all(np.isfinite(a)) and a.min() >= 0 and a.max() <= 1
        np.testing.assert_array_equal(a, b)

    def test_out_of_bounds(self, scene):
        cams = orbit_cameras((0, 0, 0), 0.45, 0, 2, 32, 32)
        with pytest.raises(LineOutOfBounds):
            epi_strip(lambda c: render(scene, c).color, cams, (40, 0, 8))
        with pytest.raises(LineOutOfBounds):
            epi_strip(lambda c: render(scene, c).color, cams, (4, 10, 33))
