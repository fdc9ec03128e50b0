"""Scene builders and numeric utilities shared by the tests."""

import numpy as np

from uvsplat.attributes import GaussianSet
from uvsplat.camera import Camera


def axis_camera(width=32, height=32, f=32.0):
    """Camera at the origin looking down +z, principal point at the image center."""
    return Camera(f, f, width / 2.0, height / 2.0, np.eye(4), width, height)


def unit_quaternions(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def smooth_scene(rng, n, spread=0.3, depth=(1.5, 2.5), scale=(0.8, 1.4), opacity=(0.05, 0.2)):
    """Large, faint, well-separated Gaussians in front of :func:`axis_camera`.

    Every footprint covers the whole 32x32 image, opacities stay far from the
    clamp and the transmittance floor, so the rendered image is a smooth
    function of all parameters and finite differences are meaningful.
    """
    z = np.sort(rng.uniform(*depth, n))
    z += np.arange(n) * 1e-3  # keep depths distinct
    means = np.c_[rng.uniform(-spread, spread, (n, 2)), rng.permutation(z)]
    return GaussianSet(means, rng.uniform(*scale, (n, 3)), unit_quaternions(rng, n),
                       rng.uniform(0, 1, (n, 3)), rng.uniform(*opacity, n), rng.uniform(0, 1, (n, 2)))


def small_scene(rng, n, width=16, height=16):
    """A few compact Gaussians spread over the image, arbitrary opacities."""
    means = np.c_[rng.uniform(-0.4, 0.4, (n, 2)), rng.uniform(1.0, 3.0, n)]
    return GaussianSet(means, rng.uniform(0.02, 0.15, (n, 3)), unit_quaternions(rng, n),
                       rng.uniform(0, 1, (n, 3)), rng.uniform(0.1, 0.999, n),
                       rng.uniform(0, 1, (n, 2)))


def replace_attr(g, name, value):
    fields = dict(means=g.means, scales=g.scales, rotations=g.rotations, colors=g.colors,
                  opacities=g.opacities, uvs=g.uvs, anchors=g.anchors)
    fields[name] = value
    return GaussianSet(**fields)


def central_difference(f, x, h):
    """Central finite-difference gradient of scalar f at array x."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2 * h)
    return grad


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)


def reference_render(g, cam, background=(1.0, 1.0, 1.0), uv_mode=False):
    """Straightforward per-pixel compositing used as an oracle for the tiled renderer.

    Rotations go through scipy (x, y, z, w order), every Gaussian is evaluated
    at every pixel, no tiling or culling beyond the depth range.
    """
    from scipy.spatial.transform import Rotation

    bg = np.asarray(background, dtype=np.float64)
    w2c = np.asarray(cam.world_to_camera)
    view = g.means @ w2c[:3, :3].T + w2c[:3, 3]
    splats = []
    for i in range(len(g)):
        x, y, z = view[i]
        if not cam.znear <= z <= cam.zfar:
            continue
        q = g.rotations[i] / np.linalg.norm(g.rotations[i])
        rot = Rotation.from_quat([q[1], q[2], q[3], q[0]]).as_matrix()
        sigma = rot @ np.diag(g.scales[i] ** 2) @ rot.T
        jac = np.array([[cam.fx / z, 0.0, -cam.fx * x / z ** 2],
                        [0.0, cam.fy / z, -cam.fy * y / z ** 2]])
        m = jac @ w2c[:3, :3]
        cov = m @ sigma @ m.T + 0.3 * np.eye(2)
        center = np.array([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy])
        color = np.array([g.uvs[i, 0], g.uvs[i, 1], 0.0]) if uv_mode else g.colors[i]
        splats.append((z, i, center, np.linalg.inv(cov), g.opacities[i], color))
    splats.sort(key=lambda s: (s[0], s[1]))
    img = np.zeros((cam.height, cam.width, 3))
    alpha = np.zeros((cam.height, cam.width))
    for r in range(cam.height):
        for c in range(cam.width):
            T = 1.0
            acc = np.zeros(3)
            for _, _, center, inv, opac, color in splats:
                d = np.array([c, r], dtype=np.float64) - center
                a = min(0.99, opac * np.exp(-0.5 * d @ inv @ d))
                if a < 1.0 / 255.0:
                    continue
                if T * (1.0 - a) < 1e-4:
                    break
                acc += a * T * color
                T *= 1.0 - a
            img[r, c] = acc + T * bg
            alpha[r, c] = 1.0 - T
    return img, alpha


def tiny_fit_scene(seed=0):
    """8x8 maps on a 2 cm sphere seen from 20 cm at 16x16, with every kink avoided.

    Large raw scales make each footprint cover the image, low raw opacities keep
    compositing away from the clamp and the transmittance floor, and the random
    offsets separate the depths so the sort order is stable under small nudges.
    Returns (maps, grid, camera).
    """
    from uvsplat.attributes import AttributeMaps
    from uvsplat.mesh import build_uv_index, sample_uv_grid
    from uvsplat.scenes import ring_cameras, uv_sphere

    grid = sample_uv_grid(build_uv_index(uv_sphere(radius=0.02, n_lon=12, n_lat=8)), 8)
    cam = ring_cameras(1, 16, 16, distance=0.2)[0]
    rng = np.random.default_rng(seed)
    d = np.zeros((8, 8, 14))
    d[..., 0:3] = rng.normal(0, 0.05, (8, 8, 3))
    d[..., 3:6] = rng.uniform(7.5, 8.5, (8, 8, 3))
    d[..., 6:10] = rng.normal(size=(8, 8, 4))
    d[..., 10:13] = rng.normal(size=(8, 8, 3))
    d[..., 13] = rng.uniform(-2.6, -2.0, (8, 8))
    return AttributeMaps(d), grid, cam
