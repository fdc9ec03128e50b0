import numpy as np
import pytest

from uvsplat.attributes import AttributeMaps, assemble_gaussians
from uvsplat.errors import FormatError
from uvsplat.mesh import sample_uv_grid
from uvsplat.ply import PROPERTIES, SH_C0, read_ply, write_ply
from uvsplat.scenes import textured_maps


def normwise_rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.fixture(scope="module")
def gaussians(sphere_index):
    maps = textured_maps(16, seed=2)
    maps.data[..., :10] += np.random.default_rng(0).normal(0, 0.5, maps.data[..., :10].shape)
    return assemble_gaussians(maps, sample_uv_grid(sphere_index, 16))


def test_header_layout(tmp_path, gaussians):
    path = tmp_path / "g.ply"
    write_ply(path, gaussians)
    blob = path.read_bytes()
    header = blob[:blob.index(b"end_header\n")].decode().splitlines()
    assert header[:3] == ["ply", "format binary_little_endian 1.0",
                          f"element vertex {len(gaussians)}"]
    assert [line.split()[-1] for line in header[3:]] == list(PROPERTIES)


def test_roundtrip(tmp_path, gaussians):
    path = tmp_path / "g.ply"
    write_ply(path, gaussians)
    again = read_ply(path)
    assert len(again) == len(gaussians)
    for name in ("means", "scales", "rotations", "colors", "opacities"):
        assert normwise_rel(getattr(again, name), getattr(gaussians, name)) <= 1e-6, name


def test_zero_maps_store_zero_opacity_logit(tmp_path, sphere_index):
    grid = sample_uv_grid(sphere_index, 8)
    write_ply(tmp_path / "z.ply", assemble_gaussians(AttributeMaps.zeros(8), grid))
    blob = (tmp_path / "z.ply").read_bytes()
    body = blob[blob.index(b"end_header\n") + len(b"end_header\n"):]
    rec = np.frombuffer(body, dtype=[(p, "<f4") for p in PROPERTIES])
    assert len(rec) == grid.count
    assert np.all(rec["opacity"] == 0.0)
    assert np.all(rec["f_dc_0"] == 0.0)
    np.testing.assert_allclose(rec["rot_0"], 1.0)


def test_sh_convention(tmp_path, gaussians):
    write_ply(tmp_path / "g.ply", gaussians)
    blob = (tmp_path / "g.ply").read_bytes()
    body = blob[blob.index(b"end_header\n") + len(b"end_header\n"):]
    rec = np.frombuffer(body, dtype=[(p, "<f4") for p in PROPERTIES])
    np.testing.assert_allclose(rec["f_dc_1"], (gaussians.colors[:, 1] - 0.5) / SH_C0, rtol=1e-6,
                               atol=1e-6)
    np.testing.assert_allclose(rec["scale_2"], np.log(gaussians.scales[:, 2]), rtol=1e-6)


def test_rejects_non_ply(tmp_path):
    (tmp_path / "x.ply").write_bytes(b"solid ascii stl\n")
    with pytest.raises(FormatError):
        read_ply(tmp_path / "x.ply")
    (tmp_path / "y.ply").write_bytes(b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(FormatError):
        read_ply(tmp_path / "y.ply")
