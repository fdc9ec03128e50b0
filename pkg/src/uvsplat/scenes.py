"""Procedural templates, textures and multi-view target sets for tests and demos."""

from __future__ import annotations

import numpy as np
from scipy.special import logit

from .attributes import COLOR, OPACITY, SCALE, AttributeMaps
from .camera import orbit_cameras
from .mesh import TemplateMesh, texel_centers


def uv_sphere(radius=0.1, n_lon=32, n_lat=32, center=(0.0, 0.0, 0.0)):
    """Latitude-longitude sphere whose UV layout covers the whole unit square.

    u runs with longitude (u = 0.5 faces +z, the seam sits at -z), v runs from
    the north pole (+y, v = 0) to the south pole (v = 1).
    """
    u = np.linspace(0.0, 1.0, n_lon + 1)
    v = np.linspace(0.0, 1.0, n_lat + 1)
    uu, vv = np.meshgrid(u, v, indexing="xy")
    phi = 2 * np.pi * (uu - 0.5)
    theta = np.pi * vv
    pos = np.stack([np.sin(theta) * np.sin(phi), np.cos(theta), np.sin(theta) * np.cos(phi)], -1)
    verts = (radius * pos + np.asarray(center)).reshape(-1, 3)
    uvs = np.stack([uu, vv], -1).reshape(-1, 2)

    def vid(i, j):
        return j * (n_lon + 1) + i

    faces = []
    for j in range(n_lat):
        for i in range(n_lon):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            faces.append((a, b, c))
            faces.append((a, c, d))
    faces = np.array(faces, dtype=np.int64)
    return TemplateMesh(verts, faces, uvs[faces])


def unit_square_plane(size=0.2, n=1):
    """Flat z = 0 plane spanning the full UV square (x to the right, y down)."""
    t = np.linspace(0.0, 1.0, n + 1)
    uu, vv = np.meshgrid(t, t, indexing="xy")
    verts = np.stack([(uu - 0.5) * size, (vv - 0.5) * size, np.zeros_like(uu)], -1).reshape(-1, 3)
    uvs = np.stack([uu, vv], -1).reshape(-1, 2)
    faces = []
    for j in range(n):
        for i in range(n):
            a, b = j * (n + 1) + i, j * (n + 1) + i + 1
            c, d = (j + 1) * (n + 1) + i + 1, (j + 1) * (n + 1) + i
            faces += [(a, b, c), (a, c, d)]
    faces = np.array(faces, dtype=np.int64)
    return TemplateMesh(verts, faces, uvs[faces])


def procedural_texture(uv, seed=0):
    """Smooth colorful pattern over UV space, values in [0.08, 0.92]."""
    rng = np.random.default_rng(seed)
    uv = np.asarray(uv, dtype=np.float64)
    out = np.empty(uv.shape[:-1] + (3,))
    for ch in range(3):
        fu, fv = rng.integers(1, 4, size=2)
        pu, pv = rng.uniform(0, 2 * np.pi, size=2)
        wave = np.sin(2 * np.pi * fu * uv[..., 0] + pu) * np.cos(2 * np.pi * fv * uv[..., 1] + pv)
        out[..., ch] = 0.5 + 0.42 * wave
    return out


def textured_maps(resolution, seed=0, opacity=0.98, scale_raw=0.0, dtype=np.float32):
    """Raw maps whose activated colors reproduce :func:`procedural_texture`."""
    maps = AttributeMaps.zeros(resolution, dtype=np.float64)
    uv = texel_centers(resolution).reshape(resolution, resolution, 2)
    maps.data[..., COLOR] = logit(procedural_texture(uv, seed))
    maps.data[..., OPACITY] = logit(opacity)
    maps.data[..., SCALE] = scale_raw
    return AttributeMaps(maps.data.astype(dtype))


def ring_cameras(n_views, width, height, distance=0.45, elevation_deg=15.0, fov_y_deg=30.0,
                 sweep_deg=360.0, start_deg=0.0):
    return orbit_cameras((0.0, 0.0, 0.0), distance, elevation_deg, n_views, width, height,
                         fov_y_deg=fov_y_deg, start_deg=start_deg, sweep_deg=sweep_deg)
