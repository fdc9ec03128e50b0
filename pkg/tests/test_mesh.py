import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uvsplat.errors import IndexOutOfRange, MalformedRecord, MissingTexCoords
from uvsplat.mesh import (
    TemplateMesh,
    build_uv_index,
    load_obj,
    parse_obj,
    sample_uv_grid,
    texel_centers,
    uv_to_surface,
)
from uvsplat.scenes import unit_square_plane, uv_sphere

TWO_TRIANGLES = """\
# unit square split along the diagonal
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
vt 0 0
vt 1 0
vt 1 1
vt 0 1
vn 0 0 1
o square
f 1/1/1 2/2/1 3/3/1
f 1/1/1 3/3/1 4/4/1
"""

SINGLE = """\
v 0 0 0
v 2 0 0
v 0 3 1
vt 0 0
vt 1 0
vt 0 1
f 1/1 2/2 3/3
"""


def brute_force_locate(mesh, point, tol=1e-12):
    """Scan every triangle; the lowest face id containing the point wins."""
    px, py = point
    for f, ((ax, ay), (bx, by), (cx, cy)) in enumerate(mesh.uv_coords):
        det = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy)
        if abs(det) <= 1e-15:
            continue
        l0 = ((by - cy) * (px - cx) + (cx - bx) * (py - cy)) / det
        l1 = ((cy - ay) * (px - cx) + (ax - cx) * (py - cy)) / det
        l2 = 1.0 - l0 - l1
        if min(l0, l1, l2) >= -tol:
            return f
    return -1


def random_mesh(rng, n_faces):
    uv = rng.uniform(0, 1, (n_faces, 3, 2))
    verts = rng.normal(size=(3 * n_faces, 3))
    faces = np.arange(3 * n_faces).reshape(n_faces, 3)
    return TemplateMesh(verts, faces, uv)


class TestParseObj:
    def test_counts(self):
        mesh = parse_obj(TWO_TRIANGLES)
        assert mesh.vertices.shape == (4, 3)
        assert mesh.faces.shape == (2, 3)
        assert mesh.uv_coords.reshape(-1, 2).shape == (6, 2)

    def test_corner_uvs_follow_vt_indices(self):
        mesh = parse_obj(TWO_TRIANGLES)
        np.testing.assert_array_equal(mesh.uv_coords[1], [[0, 0], [1, 1], [0, 1]])

    def test_missing_texcoords(self):
        with pytest.raises(MissingTexCoords):
            parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        with pytest.raises(MissingTexCoords):
            parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n")

    def test_quad_is_fan_triangulated(self):
        mesh = parse_obj(TWO_TRIANGLES.split("f ")[0] + "f 1/1 2/2 3/3 4/4\n")
        np.testing.assert_array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])

    def test_negative_indices(self):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf -3/-3 -2/-2 -1/-1\n"
        np.testing.assert_array_equal(parse_obj(text).faces, [[0, 1, 2]])

    def test_malformed_line_reports_number(self):
        with pytest.raises(MalformedRecord) as info:
            parse_obj("v 0 0 0\nv 1 0 0\nv 0 one 0\n")
        assert info.value.lineno == 3

    def test_unknown_record(self):
        with pytest.raises(MalformedRecord):
            parse_obj(TWO_TRIANGLES + "bogus 1 2\n")

    def test_index_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 7/1\n")
        with pytest.raises(IndexOutOfRange):
            parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/2\n")

    def test_texcoord_outside_unit_square(self):
        with pytest.raises(MalformedRecord):
            parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 1.5 0\n")

    def test_roundtrip_through_text(self, tmp_path):
        mesh = uv_sphere(n_lon=6, n_lat=4)
        path = tmp_path / "sphere.obj"
        path.write_text(mesh.to_obj())
        again = load_obj(path)
        np.testing.assert_array_equal(again.vertices, mesh.vertices)
        np.testing.assert_array_equal(again.faces, mesh.faces)
        np.testing.assert_array_equal(again.uv_coords, mesh.uv_coords)


class TestUvIndex:
    def test_single_triangle_hit_and_gutter(self):
        index = build_uv_index(parse_obj(SINGLE))
        assert uv_to_surface(index, (0.1, 0.1))[1] == 0
        assert uv_to_surface(index, (0.9, 0.9)) is None

    def test_corner_returns_vertex(self):
        mesh = parse_obj(SINGLE)
        index = build_uv_index(mesh)
        for uv, vert in [((0, 0), 0), ((1, 0), 1), ((0, 1), 2)]:
            pos, _, _ = uv_to_surface(index, uv)
            np.testing.assert_array_equal(pos, mesh.vertices[vert])

    def test_centroid_returns_vertex_mean(self):
        mesh = parse_obj(SINGLE)
        pos, face, bary = uv_to_surface(build_uv_index(mesh), (1 / 3, 1 / 3))
        np.testing.assert_allclose(bary, [1 / 3] * 3, atol=1e-12)
        np.testing.assert_allclose(pos, mesh.vertices.mean(axis=0), atol=1e-12)

    def test_degenerate_triangles_are_counted_not_fatal(self):
        uv = np.array([[[0, 0], [1, 0], [0, 1]], [[0.2, 0.2], [0.4, 0.4], [0.6, 0.6]]], dtype=float)
        mesh = TemplateMesh(np.eye(3), [[0, 1, 2], [0, 1, 2]], uv)
        index = build_uv_index(mesh)
        assert index.n_degenerate == 1
        assert uv_to_surface(index, (0.3, 0.3))[1] == 0

    def test_overlap_lowest_face_wins(self):
        uv = np.array([[[0, 0], [1, 0], [0, 1]]] * 3, dtype=float)
        mesh = TemplateMesh(np.arange(9.0).reshape(3, 3), [[2, 1, 0], [0, 1, 2], [1, 2, 0]], uv)
        for cells in (1, 3, 8):
            assert uv_to_surface(build_uv_index(mesh, cells), (0.2, 0.3))[1] == 0

    def test_matches_brute_force_on_random_meshes(self):
        rng = np.random.default_rng(7)
        for trial in range(5):
            mesh = random_mesh(rng, 12)
            index = build_uv_index(mesh)
            pts = rng.uniform(0, 1, (2000, 2))
            face, _ = index.locate(pts)
            expected = [brute_force_locate(mesh, p) for p in pts]
            np.testing.assert_array_equal(face, expected)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), cells=st.integers(1, 12))
    def test_barycentric_reconstructs_query(self, seed, cells):
        rng = np.random.default_rng(seed)
        mesh = random_mesh(rng, 6)
        index = build_uv_index(mesh, cells)
        pts = rng.uniform(0, 1, (200, 2))
        face, bary = index.locate(pts)
        hit = face >= 0
        assert np.all(bary[hit] >= 0)
        np.testing.assert_allclose(bary[hit].sum(axis=1), 1.0, atol=1e-9)
        rebuilt = np.einsum("nk,nkd->nd", bary[hit], mesh.uv_coords[face[hit]])
        np.testing.assert_allclose(rebuilt, pts[hit], atol=1e-7)


class TestUvGrid:
    def test_candidate_counts(self, plane_index):
        assert len(texel_centers(256)) == 65536
        assert len(texel_centers(512)) == 262144

    def test_unit_square_r2(self, plane_index):
        grid = sample_uv_grid(plane_index, 2)
        assert grid.valid_mask.all()
        np.testing.assert_array_equal(grid.coords, [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75],
                                                    [0.75, 0.75]])

    def test_gutter_points_are_invalid(self):
        index = build_uv_index(parse_obj(SINGLE))
        grid = sample_uv_grid(index, 8)
        u, v = grid.coords.T
        np.testing.assert_array_equal(grid.valid_mask, u + v <= 1.0)
        assert np.all(grid.face_ids[~grid.valid_mask] == -1)

    def test_deterministic(self, sphere_index):
        a = sample_uv_grid(sphere_index, 32)
        b = sample_uv_grid(sphere_index, 32)
        np.testing.assert_array_equal(a.anchors, b.anchors)
        np.testing.assert_array_equal(a.valid_mask, b.valid_mask)

    def test_resolution_monotone(self):
        index = build_uv_index(parse_obj(SINGLE))
        for r in (3, 5, 8):
            coarse = sample_uv_grid(index, r)
            fine = sample_uv_grid(index, 2 * r)
            dist = np.abs(coarse.valid_coords[:, None, :] - fine.valid_coords[None]).max(axis=2)
            assert np.all(dist.min(axis=1) <= 1.0 / r)

    def test_sphere_anchors_on_surface(self, sphere_index):
        grid = sample_uv_grid(sphere_index, 16)
        assert grid.count == 256
        r = np.linalg.norm(grid.valid_anchors, axis=1)
        assert np.all(r <= 0.1 + 1e-12) and np.all(r > 0.09)

    def test_plane_full_coverage(self):
        index = build_uv_index(unit_square_plane(n=3))
        assert sample_uv_grid(index, 17).valid_mask.all()
