"""Tile-based differentiable Gaussian rasterizer (CPU, numba).

Forward: project every Gaussian to a 2D ellipse (EWA local affine
approximation), sort globally by view-space depth, bin into square tiles and
alpha-composite front to back per pixel. Backward: replay each pixel back to
front from its final transmittance, accumulate per-fragment partials into a
per-(tile, entry) buffer, and reduce that buffer in a fixed order. Every pixel
and every fragment is processed by exactly one tile, so outputs are bitwise
identical for any worker count and, on the same fragment lists, any tile size.

Pixel (row r, column c) has its center at image coordinates (c, r).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np
from numba import prange

from ._threads import apply_thread_limit
from .attributes import GaussianGrads, GaussianSet
from .errors import InvalidBackground, ShapeMismatch

LOW_PASS = 0.3  # px^2 added to the 2D covariance diagonal
ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
T_MIN = 1e-4  # compositing stops once transmittance would drop below this
DEFAULT_TILE = 8

SplatGradients = GaussianGrads


class RenderMode(str, enum.Enum):
    COLOR = "color"
    UV = "uv"


@dataclass
class Projection:
    view: np.ndarray  # (N, 3) view-space means
    mean2d: np.ndarray  # (N, 2)
    cov3d: np.ndarray  # (N, 3, 3)
    cov2d: np.ndarray  # (N, 2, 2), low-pass included
    conic: np.ndarray  # (N, 3) inverse cov2d as (a, b, c)
    jacobian: np.ndarray  # (N, 2, 3)
    rotmat: np.ndarray  # (N, 3, 3)
    visible: np.ndarray  # (N,) bool
    pix_lo: np.ndarray  # (N, 2) first covered pixel (x, y)
    pix_hi: np.ndarray  # (N, 2) last covered pixel (x, y)


@dataclass
class RenderOutput:
    color: np.ndarray  # (H, W, 3)
    alpha: np.ndarray  # (H, W)
    depth: np.ndarray  # (H, W), alpha-normalized expected depth, 0 where alpha == 0
    mode: RenderMode
    state: "_ForwardState" = None


@dataclass
class _ForwardState:
    proj: Projection
    order: np.ndarray  # visible Gaussian ids in depth order
    tile_size: int
    tile_start: np.ndarray
    tile_ids: np.ndarray  # entries index into `order`
    final_T: np.ndarray
    last: np.ndarray
    colors: np.ndarray  # per sorted Gaussian, after mode override
    background: np.ndarray


# -- geometry -------------------------------------------------------------------


def quat_to_rotmat(q):
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r = np.empty(q.shape[:-1] + (3, 3))
    r[..., 0, 0] = 1 - 2 * (y * y + z * z)
    r[..., 0, 1] = 2 * (x * y - w * z)
    r[..., 0, 2] = 2 * (x * z + w * y)
    r[..., 1, 0] = 2 * (x * y + w * z)
    r[..., 1, 1] = 1 - 2 * (x * x + z * z)
    r[..., 1, 2] = 2 * (y * z - w * x)
    r[..., 2, 0] = 2 * (x * z - w * y)
    r[..., 2, 1] = 2 * (y * z + w * x)
    r[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def _rotmat_vjp(q, g):
    """Gradient w.r.t. the (unnormalized) quaternion given dL/dR."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    out = np.empty((len(q), 4))
    out[:, 0] = 2 * (-z * g[:, 0, 1] + y * g[:, 0, 2] + z * g[:, 1, 0]
                     - x * g[:, 1, 2] - y * g[:, 2, 0] + x * g[:, 2, 1])
    out[:, 1] = 2 * (y * g[:, 0, 1] + z * g[:, 0, 2] + y * g[:, 1, 0] - 2 * x * g[:, 1, 1]
                     - w * g[:, 1, 2] + z * g[:, 2, 0] + w * g[:, 2, 1] - 2 * x * g[:, 2, 2])
    out[:, 2] = 2 * (-2 * y * g[:, 0, 0] + x * g[:, 0, 1] + w * g[:, 0, 2] + x * g[:, 1, 0]
                     + z * g[:, 1, 2] - w * g[:, 2, 0] + z * g[:, 2, 1] - 2 * y * g[:, 2, 2])
    out[:, 3] = 2 * (-2 * z * g[:, 0, 0] - w * g[:, 0, 1] + x * g[:, 0, 2] + w * g[:, 1, 0]
                     - 2 * z * g[:, 1, 1] + y * g[:, 1, 2] + x * g[:, 2, 0] + y * g[:, 2, 1])
    return out


def project_gaussians(g: GaussianSet, cam) -> Projection:
    """Vectorized EWA projection and visibility for every Gaussian.

    A Gaussian is visible when its view depth lies in [znear, zfar] and its
    alpha >= 1/255 footprint covers at least one pixel center.
    """
    rot = cam.rotation
    view = g.means @ rot.T + cam.translation
    x, y, z = view[:, 0], view[:, 1], view[:, 2]
    in_depth = (z >= cam.znear) & (z <= cam.zfar)
    zs = np.where(in_depth, z, 1.0)

    n = len(g)
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = cam.fx / zs
    jac[:, 0, 2] = -cam.fx * x / (zs * zs)
    jac[:, 1, 1] = cam.fy / zs
    jac[:, 1, 2] = -cam.fy * y / (zs * zs)

    rotmat = quat_to_rotmat(g.rotations)
    m = rotmat * g.scales[:, None, :]
    cov3d = m @ np.swapaxes(m, 1, 2)
    t = jac @ rot
    cov2d = t @ cov3d @ np.swapaxes(t, 1, 2)
    cov2d[:, 0, 0] += LOW_PASS
    cov2d[:, 1, 1] += LOW_PASS
    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] * cov2d[:, 1, 0]
    conic = np.stack([cov2d[:, 1, 1] / det, -cov2d[:, 0, 1] / det, cov2d[:, 0, 0] / det], axis=1)
    mean2d = np.stack([cam.fx * x / zs + cam.cx, cam.fy * y / zs + cam.cy], axis=1)

    # alpha >= 1/255 exactly on the ellipse d^T cov^-1 d <= 2 ln(255 sigma)
    strength = 255.0 * g.opacities
    k2 = np.where(strength > 1.0, 2.0 * np.log(np.maximum(strength, 1.0)), 0.0)
    half = np.sqrt(k2[:, None] * np.stack([cov2d[:, 0, 0], cov2d[:, 1, 1]], axis=1))
    half = half * (1 + 1e-9) + 1e-9
    lo = np.ceil(mean2d - half)
    hi = np.floor(mean2d + half)
    size = np.array([cam.width - 1, cam.height - 1], dtype=np.float64)
    overlaps = np.all((hi >= 0) & (lo <= size) & (lo <= hi), axis=1)
    visible = in_depth & (strength > 1.0) & overlaps & np.all(np.isfinite(mean2d), axis=1)
    pix_lo = np.clip(np.where(visible[:, None], lo, 0), 0, size).astype(np.int64)
    pix_hi = np.clip(np.where(visible[:, None], hi, 0), 0, size).astype(np.int64)
    return Projection(view, mean2d, cov3d, cov2d, conic, jac, rotmat, visible, pix_lo, pix_hi)


def project_gaussian(g: GaussianSet, index, cam):
    """Single-Gaussian projection: (mean2d, cov2d, depth) or None when culled."""
    p = project_gaussians(g.subset([index]), cam)
    if not p.visible[0]:
        return None
    return p.mean2d[0], p.cov2d[0], float(p.view[0, 2])


# -- kernels --------------------------------------------------------------------


@numba.njit(cache=True)
def _bin_tiles(pix_lo, pix_hi, tile, ntx, nty):
    n = pix_lo.shape[0]
    counts = np.zeros(ntx * nty + 1, dtype=np.int64)
    for i in range(n):
        for ty in range(pix_lo[i, 1] // tile, pix_hi[i, 1] // tile + 1):
            for tx in range(pix_lo[i, 0] // tile, pix_hi[i, 0] // tile + 1):
                counts[ty * ntx + tx + 1] += 1
    start = np.cumsum(counts)
    fill = start[:-1].copy()
    ids = np.empty(start[-1], dtype=np.int64)
    for i in range(n):
        for ty in range(pix_lo[i, 1] // tile, pix_hi[i, 1] // tile + 1):
            for tx in range(pix_lo[i, 0] // tile, pix_hi[i, 0] // tile + 1):
                t = ty * ntx + tx
                ids[fill[t]] = i
                fill[t] += 1
    return start, ids


@numba.njit(parallel=True, cache=True)
def _forward_kernel(width, height, tile, ntx, nty, tile_start, tile_ids, mean2d, conic,
                    opacity, power_min, color, depth, bg, out_color, out_depth, out_T, out_last):
    for t in prange(ntx * nty):
        ty = t // ntx
        tx = t - ty * ntx
        s0 = tile_start[t]
        s1 = tile_start[t + 1]
        for py in range(ty * tile, min((ty + 1) * tile, height)):
            for px in range(tx * tile, min((tx + 1) * tile, width)):
                T = 1.0
                c0 = 0.0
                c1 = 0.0
                c2 = 0.0
                d = 0.0
                last = s0
                for e in range(s0, s1):
                    g = tile_ids[e]
                    dx = px - mean2d[g, 0]
                    dy = py - mean2d[g, 1]
                    power = -0.5 * (conic[g, 0] * dx * dx + conic[g, 2] * dy * dy) \
                        - conic[g, 1] * dx * dy
                    if power > 0.0 or power < power_min[g]:
                        continue
                    alpha = min(ALPHA_MAX, opacity[g] * math.exp(power))
                    if alpha < ALPHA_MIN:
                        continue
                    test_T = T * (1.0 - alpha)
                    if test_T < T_MIN:
                        break
                    w = alpha * T
                    c0 += w * color[g, 0]
                    c1 += w * color[g, 1]
                    c2 += w * color[g, 2]
                    d += w * depth[g]
                    T = test_T
                    last = e + 1
                out_color[py, px, 0] = c0 + T * bg[0]
                out_color[py, px, 1] = c1 + T * bg[1]
                out_color[py, px, 2] = c2 + T * bg[2]
                acc = 1.0 - T
                out_depth[py, px] = d / acc if acc > 0.0 else 0.0
                out_T[py, px] = T
                out_last[py, px] = last


@numba.njit(parallel=True, cache=True)
def _backward_kernel(width, height, tile, ntx, nty, tile_start, tile_ids, mean2d, conic,
                     opacity, power_min, color, bg, final_T, last_entry, grad_color, grad_alpha,
                     buf):
    # buf[e] = d/d(mean_x, mean_y, conic_a, conic_b, conic_c, opacity, r, g, b)
    for t in prange(ntx * nty):
        ty = t // ntx
        tx = t - ty * ntx
        s0 = tile_start[t]
        for py in range(ty * tile, min((ty + 1) * tile, height)):
            for px in range(tx * tile, min((tx + 1) * tile, width)):
                last = last_entry[py, px]
                if last == s0:
                    continue
                T_final = final_T[py, px]
                T = T_final
                gc0 = grad_color[py, px, 0]
                gc1 = grad_color[py, px, 1]
                gc2 = grad_color[py, px, 2]
                ga = grad_alpha[py, px]
                bgs = gc0 * bg[0] + gc1 * bg[1] + gc2 * bg[2]
                acc = 0.0  # sum over later fragments of w_k * <gc, c_k>
                for e in range(last - 1, s0 - 1, -1):
                    g = tile_ids[e]
                    dx = px - mean2d[g, 0]
                    dy = py - mean2d[g, 1]
                    power = -0.5 * (conic[g, 0] * dx * dx + conic[g, 2] * dy * dy) \
                        - conic[g, 1] * dx * dy
                    if power > 0.0 or power < power_min[g]:
                        continue
                    gauss = math.exp(power)
                    raw_alpha = opacity[g] * gauss
                    alpha = min(ALPHA_MAX, raw_alpha)
                    if alpha < ALPHA_MIN:
                        continue
                    one_minus = 1.0 - alpha
                    T = T / one_minus
                    w = alpha * T
                    buf[e, 6] += gc0 * w
                    buf[e, 7] += gc1 * w
                    buf[e, 8] += gc2 * w
                    gcc = gc0 * color[g, 0] + gc1 * color[g, 1] + gc2 * color[g, 2]
                    d_alpha = T * gcc - (acc + T_final * bgs) / one_minus + ga * T_final / one_minus
                    acc += w * gcc
                    if raw_alpha < ALPHA_MAX:
                        buf[e, 5] += d_alpha * gauss
                        d_power = d_alpha * alpha
                        buf[e, 0] += d_power * (conic[g, 0] * dx + conic[g, 1] * dy)
                        buf[e, 1] += d_power * (conic[g, 1] * dx + conic[g, 2] * dy)
                        buf[e, 2] += -0.5 * d_power * dx * dx
                        buf[e, 3] += -d_power * dx * dy
                        buf[e, 4] += -0.5 * d_power * dy * dy


@numba.njit(cache=True)
def _reduce_entries(tile_ids, buf, n):
    out = np.zeros((n, buf.shape[1]))
    for e in range(tile_ids.shape[0]):
        g = tile_ids[e]
        for k in range(buf.shape[1]):
            out[g, k] += buf[e, k]
    return out


# -- public API -----------------------------------------------------------------


def _power_cutoff(opacity):
    # below this exponent alpha < 1/255 for sure; the margin keeps the exact test authoritative
    return np.log(ALPHA_MIN / opacity) - 1e-6


def _check_background(background):
    bg = np.asarray(background, dtype=np.float64).reshape(-1)
    if bg.shape != (3,) or np.any(bg < 0.0) or np.any(bg > 1.0) or not np.all(np.isfinite(bg)):
        raise InvalidBackground(f"background must be 3 values in [0, 1], got {background!r}")
    return bg


def render(gaussians: GaussianSet, cam, mode=RenderMode.COLOR, background=(1.0, 1.0, 1.0),
           tile_size=DEFAULT_TILE) -> RenderOutput:
    """Rasterize `gaussians` from `cam`.

    In UV mode each Gaussian's color is replaced by (u, v, 0) before compositing.
    The returned output carries the state needed by :func:`render_backward`.
    """
    mode = RenderMode(mode)
    bg = _check_background(background)
    apply_thread_limit()
    proj = project_gaussians(gaussians, cam)
    vis = np.flatnonzero(proj.visible)
    order = vis[np.argsort(proj.view[vis, 2], kind="stable")]

    if mode is RenderMode.UV:
        colors = np.zeros((len(order), 3))
        colors[:, :2] = gaussians.uvs[order]
    else:
        colors = np.ascontiguousarray(gaussians.colors[order])

    h, w = cam.height, cam.width
    ntx = -(-w // tile_size)
    nty = -(-h // tile_size)
    start, ids = _bin_tiles(proj.pix_lo[order], proj.pix_hi[order], tile_size, ntx, nty)

    opac = np.ascontiguousarray(gaussians.opacities[order])
    out_color = np.empty((h, w, 3))
    out_depth = np.empty((h, w))
    out_T = np.empty((h, w))
    out_last = np.empty((h, w), dtype=np.int64)
    _forward_kernel(w, h, tile_size, ntx, nty, start, ids,
                    np.ascontiguousarray(proj.mean2d[order]), np.ascontiguousarray(proj.conic[order]),
                    opac, _power_cutoff(opac), colors,
                    np.ascontiguousarray(proj.view[order, 2]), bg,
                    out_color, out_depth, out_T, out_last)
    state = _ForwardState(proj, order, tile_size, start, ids, out_T, out_last, colors, bg)
    return RenderOutput(out_color, 1.0 - out_T, out_depth, mode, state)


def render_backward(gaussians, cam, mode=RenderMode.COLOR, background=(1.0, 1.0, 1.0),
                    grad_color=None, grad_alpha=None, forward=None,
                    tile_size=DEFAULT_TILE) -> SplatGradients:
    """Gradients of L = <grad_color, color> + <grad_alpha, alpha> w.r.t. the Gaussians.

    Pass the matching forward `RenderOutput` to skip re-rendering. Culled
    Gaussians receive zeros; in UV mode the color gradient is zero.
    """
    mode = RenderMode(mode)
    h, w = cam.height, cam.width
    grad_color = np.zeros((h, w, 3)) if grad_color is None else np.asarray(grad_color, np.float64)
    grad_alpha = np.zeros((h, w)) if grad_alpha is None else np.asarray(grad_alpha, np.float64)
    if grad_color.shape != (h, w, 3) or grad_alpha.shape != (h, w):
        raise ShapeMismatch(f"gradient images must be {(h, w, 3)} and {(h, w)}, got "
                            f"{grad_color.shape} and {grad_alpha.shape}")
    if forward is None or forward.state is None:
        forward = render(gaussians, cam, mode, background, tile_size)
    st = forward.state
    apply_thread_limit()
    proj = st.proj
    order = st.order
    ntx = -(-w // st.tile_size)
    nty = -(-h // st.tile_size)

    buf = np.zeros((len(st.tile_ids), 9))
    mean2d = np.ascontiguousarray(proj.mean2d[order])
    conic = np.ascontiguousarray(proj.conic[order])
    opac = np.ascontiguousarray(gaussians.opacities[order])
    _backward_kernel(w, h, st.tile_size, ntx, nty, st.tile_start, st.tile_ids, mean2d, conic,
                     opac, _power_cutoff(opac), st.colors, st.background,
                     st.final_T, st.last, np.ascontiguousarray(grad_color),
                     np.ascontiguousarray(grad_alpha), buf)
    per = _reduce_entries(st.tile_ids, buf, len(order))

    grads = GaussianGrads.zeros(len(gaussians))
    if len(order) == 0:
        return grads
    geo = _geometry_backward(gaussians, cam, proj, order, per[:, 0:2], per[:, 2:5])
    grads.means[order] = geo[0]
    grads.scales[order] = geo[1]
    grads.rotations[order] = geo[2]
    grads.opacities[order] = per[:, 5]
    if mode is RenderMode.COLOR:
        grads.colors[order] = per[:, 6:9]
    return grads


def _geometry_backward(g, cam, proj, order, d_mean2d, d_conic):
    """Chain screen-space partials through the EWA projection to (mean, scale, quat)."""
    rot = cam.rotation
    view = proj.view[order]
    x, y, z = view[:, 0], view[:, 1], view[:, 2]
    fx, fy = cam.fx, cam.fy
    conic = proj.conic[order]
    q_mat = np.empty((len(order), 2, 2))
    q_mat[:, 0, 0] = conic[:, 0]
    q_mat[:, 0, 1] = q_mat[:, 1, 0] = conic[:, 1]
    q_mat[:, 1, 1] = conic[:, 2]
    g_q = np.empty_like(q_mat)
    g_q[:, 0, 0] = d_conic[:, 0]
    g_q[:, 0, 1] = g_q[:, 1, 0] = 0.5 * d_conic[:, 1]
    g_q[:, 1, 1] = d_conic[:, 2]
    g_cov2d = -q_mat @ g_q @ q_mat

    jac = proj.jacobian[order]
    t = jac @ rot
    cov3d = proj.cov3d[order]
    g_cov3d = np.swapaxes(t, 1, 2) @ g_cov2d @ t
    g_t = 2.0 * g_cov2d @ t @ cov3d
    g_j = g_t @ rot.T

    g_view = np.zeros((len(order), 3))
    g_view[:, 0] = d_mean2d[:, 0] * fx / z - g_j[:, 0, 2] * fx / (z * z)
    g_view[:, 1] = d_mean2d[:, 1] * fy / z - g_j[:, 1, 2] * fy / (z * z)
    g_view[:, 2] = (-d_mean2d[:, 0] * fx * x / (z * z) - d_mean2d[:, 1] * fy * y / (z * z)
                    - g_j[:, 0, 0] * fx / (z * z) + g_j[:, 0, 2] * 2 * fx * x / z ** 3
                    - g_j[:, 1, 1] * fy / (z * z) + g_j[:, 1, 2] * 2 * fy * y / z ** 3)
    g_means = g_view @ rot

    rotmat = proj.rotmat[order]
    scales = g.scales[order]
    m = rotmat * scales[:, None, :]
    g_m = 2.0 * g_cov3d @ m
    g_scales = np.einsum("nij,nij->nj", rotmat, g_m)
    g_rotmat = g_m * scales[:, None, :]
    g_quat = _rotmat_vjp(g.rotations[order], g_rotmat)
    return g_means, g_scales, g_quat


def render_depth_normals(gaussians, cam, background=(1.0, 1.0, 1.0)):
    """Composited depth and camera-space normals from screen-space depth differences.

    Normals face the camera (negative z) and are zero where alpha < 0.5 or where
    no valid neighbor exists along an axis. Forward only.
    """
    out = render(gaussians, cam, RenderMode.COLOR, background)
    depth = out.depth
    h, w = depth.shape
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    pts = np.stack([(cols - cam.cx) / cam.fx * depth, (rows - cam.cy) / cam.fy * depth, depth], axis=-1)
    valid = out.alpha >= 0.5

    def diff(axis):
        fwd = np.zeros_like(pts)
        bwd = np.zeros_like(pts)
        ok_f = np.zeros_like(valid)
        ok_b = np.zeros_like(valid)
        if axis == 1:
            fwd[:, :-1] = pts[:, 1:] - pts[:, :-1]
            ok_f[:, :-1] = valid[:, 1:] & valid[:, :-1]
            bwd[:, 1:] = pts[:, 1:] - pts[:, :-1]
            ok_b[:, 1:] = valid[:, 1:] & valid[:, :-1]
        else:
            fwd[:-1] = pts[1:] - pts[:-1]
            ok_f[:-1] = valid[1:] & valid[:-1]
            bwd[1:] = pts[1:] - pts[:-1]
            ok_b[1:] = valid[1:] & valid[:-1]
        both = ok_f & ok_b
        d = np.where(both[..., None], 0.5 * (fwd + bwd), np.where(ok_f[..., None], fwd, bwd))
        return d, ok_f | ok_b

    du, ok_u = diff(1)
    dv, ok_v = diff(0)
    n = np.cross(dv, du)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    good = valid & ok_u & ok_v & (norm[..., 0] > 0)
    normals = np.where(good[..., None], n / np.where(norm > 0, norm, 1.0), 0.0)
    return depth, normals
