"""Raw UV attribute maps, bilinear lookup, and activations into valid Gaussians.

Channel layout of the 14 raw planes::

    [0:3]   position offset   -> anchor + gamma_pos * tanh(raw)
    [3:6]   scale             -> exp(-s_max - softplus(s_init - s_max - raw))
    [6:10]  rotation (w,x,y,z)-> L2-normalized, zero vector -> identity
    [10:13] color             -> sigmoid
    [13]    opacity           -> sigmoid

Every activation has a matching ``*_grad`` helper giving the elementwise (or,
for rotation, Jacobian-vector) derivative used by :func:`assemble_backward`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import CoordOutOfDomain, EmptyGaussianSet, FormatError, ShapeMismatch

N_CHANNELS = 14
POSITION = slice(0, 3)
SCALE = slice(3, 6)
ROTATION = slice(6, 10)
COLOR = slice(10, 13)
OPACITY = 13

# Raw opacity is clipped here so sigmoid stays strictly inside (0, 1) in float64.
OPACITY_RAW_LIMIT = 30.0
# Log-scale floor; keeps exp() from underflowing to an exact zero.
MIN_LOG_SCALE = -50.0
IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class ActivationConfig:
    gamma_pos: float = 0.25
    s_max: float = 3.0
    s_init: float = 5.0

    def __post_init__(self):
        if not self.gamma_pos > 0:
            raise ValueError("gamma_pos must be positive")
        if not self.s_max < self.s_init:
            raise ValueError("s_max must be below s_init")


@dataclass
class AttributeMaps:
    """H x W x 14 raw (pre-activation) values. Stored in float32 by default."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or self.data.shape[2] != N_CHANNELS:
            raise ShapeMismatch(f"attribute maps must be H x W x {N_CHANNELS}, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("attribute maps contain non-finite values")

    @classmethod
    def zeros(cls, height, width=None, dtype=np.float32):
        width = height if width is None else width
        return cls(np.zeros((height, width, N_CHANNELS), dtype=dtype))

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def position(self):
        return self.data[..., POSITION]

    @property
    def scale(self):
        return self.data[..., SCALE]

    @property
    def rotation(self):
        return self.data[..., ROTATION]

    @property
    def color(self):
        return self.data[..., COLOR]

    @property
    def opacity(self):
        return self.data[..., OPACITY]

    def copy(self):
        return AttributeMaps(self.data.copy())


@dataclass
class GaussianSet:
    means: np.ndarray  # (N, 3)
    scales: np.ndarray  # (N, 3)
    rotations: np.ndarray  # (N, 4) unit quaternions, w first
    colors: np.ndarray  # (N, 3)
    opacities: np.ndarray  # (N,)
    uvs: np.ndarray = None  # (N, 2)
    anchors: np.ndarray = None  # (N, 3)

    def __post_init__(self):
        n = len(self.means)
        if self.uvs is None:
            self.uvs = np.zeros((n, 2))
        if self.anchors is None:
            self.anchors = np.array(self.means, dtype=np.float64)
        shapes = {"means": (n, 3), "scales": (n, 3), "rotations": (n, 4), "colors": (n, 3),
                  "opacities": (n,), "uvs": (n, 2), "anchors": (n, 3)}
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ShapeMismatch(f"{name} must have shape {shape}, got {arr.shape}")
            setattr(self, name, arr)

    def __len__(self):
        return len(self.means)

    @classmethod
    def empty(cls):
        z = np.zeros
        return cls(z((0, 3)), z((0, 3)), z((0, 4)), z((0, 3)), z(0), z((0, 2)), z((0, 3)))

    def subset(self, idx):
        return GaussianSet(self.means[idx], self.scales[idx], self.rotations[idx],
                           self.colors[idx], self.opacities[idx], self.uvs[idx], self.anchors[idx])


# -- GridSample -----------------------------------------------------------------


def _bilinear_setup(coords, height, width):
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    if np.any(coords < 0.0) or np.any(coords > 1.0) or not np.all(np.isfinite(coords)):
        raise CoordOutOfDomain("grid_sample coordinates must lie in [0, 1]^2")

    def axis(t, n):
        x = np.clip(t * n - 0.5, 0.0, n - 1.0)
        if n == 1:
            z = np.zeros(len(t), dtype=np.int64)
            return z, z, np.zeros(len(t))
        i0 = np.minimum(np.floor(x).astype(np.int64), n - 2)
        return i0, i0 + 1, x - i0

    x0, x1, fx = axis(coords[:, 0], width)
    y0, y1, fy = axis(coords[:, 1], height)
    idx = (y0, x0), (y0, x1), (y1, x0), (y1, x1)
    w = ((1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx)
    return idx, w


def grid_sample(maps, coords):
    """Bilinear lookup of the raw maps at UV coords; returns (N, 14) float64 rows.

    Texel (row j, column i) sits at UV ((i + 0.5) / W, (j + 0.5) / H); queries
    beyond the outermost texel centers clamp to the edge.
    """
    data = maps.data if isinstance(maps, AttributeMaps) else np.asarray(maps)
    idx, w = _bilinear_setup(coords, data.shape[0], data.shape[1])
    out = np.zeros((len(w[0]), data.shape[2]), dtype=np.float64)
    for (jj, ii), wk in zip(idx, w):
        out += wk[:, None] * data[jj, ii].astype(np.float64)
    return out


def grid_sample_backward(grad_rows, coords, height, width):
    """Scatter row gradients back onto the texels (adjoint of :func:`grid_sample`)."""
    grad_rows = np.asarray(grad_rows, dtype=np.float64)
    idx, w = _bilinear_setup(coords, height, width)
    grad = np.zeros((height, width, grad_rows.shape[1]), dtype=np.float64)
    for (jj, ii), wk in zip(idx, w):
        np.add.at(grad, (jj, ii), wk[:, None] * grad_rows)
    return grad


# -- activations ----------------------------------------------------------------


def activate_position(raw, anchor, cfg=ActivationConfig()):
    return np.asarray(anchor, dtype=np.float64) + cfg.gamma_pos * np.tanh(raw)


def activate_position_grad(raw, cfg=ActivationConfig()):
    t = np.tanh(raw)
    return cfg.gamma_pos * (1.0 - t * t)


def _scale_log(raw, cfg):
    arg = cfg.s_init - cfg.s_max - np.asarray(raw, dtype=np.float64)
    return -cfg.s_max - np.logaddexp(0.0, arg), arg


def activate_scale(raw, cfg=ActivationConfig()):
    """exp(-s_max - softplus(-(raw - s_init) - s_max)); bounded above by e^-s_max."""
    log_s, _ = _scale_log(raw, cfg)
    return np.exp(np.maximum(log_s, MIN_LOG_SCALE))


def activate_scale_grad(raw, cfg=ActivationConfig()):
    log_s, arg = _scale_log(raw, cfg)
    return np.where(log_s > MIN_LOG_SCALE, np.exp(log_s) * expit(arg), 0.0)


def activate_rotation(raw):
    raw = np.asarray(raw, dtype=np.float64)
    norm = np.linalg.norm(raw, axis=-1, keepdims=True)
    safe = norm > 0.0
    q = np.where(safe, raw / np.where(safe, norm, 1.0), IDENTITY_QUAT)
    return q


def activate_rotation_vjp(raw, grad_q):
    """Pull a gradient w.r.t. the unit quaternion back to the raw 4-vector."""
    raw = np.asarray(raw, dtype=np.float64)
    norm = np.linalg.norm(raw, axis=-1, keepdims=True)
    safe = norm > 0.0
    inv = np.where(safe, 1.0 / np.where(safe, norm, 1.0), 0.0)
    q = raw * inv
    dot = np.sum(q * grad_q, axis=-1, keepdims=True)
    return (grad_q - q * dot) * inv


def _clipped_opacity_raw(raw):
    return np.clip(np.asarray(raw, dtype=np.float64), -OPACITY_RAW_LIMIT, OPACITY_RAW_LIMIT)


def activate_opacity(raw):
    return expit(_clipped_opacity_raw(raw))


def activate_opacity_grad(raw):
    raw = np.asarray(raw, dtype=np.float64)
    s = expit(_clipped_opacity_raw(raw))
    return np.where(np.abs(raw) <= OPACITY_RAW_LIMIT, s * (1.0 - s), 0.0)


def activate_color(raw):
    return expit(np.asarray(raw, dtype=np.float64))


def activate_color_grad(raw):
    s = expit(np.asarray(raw, dtype=np.float64))
    return s * (1.0 - s)


# -- assembly -------------------------------------------------------------------


def assemble_gaussians(maps, grid, cfg=ActivationConfig()):
    """Instantiate one activated Gaussian per valid grid point."""
    if grid.count == 0:
        raise EmptyGaussianSet("no grid point lies inside a UV chart")
    uvs = grid.valid_coords
    rows = grid_sample(maps, uvs)
    return GaussianSet(
        means=activate_position(rows[:, POSITION], grid.valid_anchors, cfg),
        scales=activate_scale(rows[:, SCALE], cfg),
        rotations=activate_rotation(rows[:, ROTATION]),
        colors=activate_color(rows[:, COLOR]),
        opacities=activate_opacity(rows[:, OPACITY]),
        uvs=uvs.copy(),
        anchors=grid.valid_anchors.copy(),
    )


@dataclass
class GaussianGrads:
    """Gradients of a scalar loss w.r.t. activated per-Gaussian attributes."""

    means: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    colors: np.ndarray
    opacities: np.ndarray
    extra: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, n):
        z = np.zeros
        return cls(z((n, 3)), z((n, 3)), z((n, 4)), z((n, 3)), z(n))

    def __iadd__(self, other):
        self.means += other.means
        self.scales += other.scales
        self.rotations += other.rotations
        self.colors += other.colors
        self.opacities += other.opacities
        return self

    def scaled(self, k):
        return GaussianGrads(self.means * k, self.scales * k, self.rotations * k,
                             self.colors * k, self.opacities * k)


def assemble_backward(maps, grid, grads, cfg=ActivationConfig()):
    """Chain per-Gaussian gradients through activations and GridSample to the raw maps."""
    uvs = grid.valid_coords
    rows = grid_sample(maps, uvs)
    g = np.zeros_like(rows)
    g[:, POSITION] = grads.means * activate_position_grad(rows[:, POSITION], cfg)
    g[:, SCALE] = grads.scales * activate_scale_grad(rows[:, SCALE], cfg)
    g[:, ROTATION] = activate_rotation_vjp(rows[:, ROTATION], grads.rotations)
    g[:, COLOR] = grads.colors * activate_color_grad(rows[:, COLOR])
    g[:, OPACITY] = grads.opacities * activate_opacity_grad(rows[:, OPACITY])
    return grid_sample_backward(g, uvs, maps.height, maps.width)


# -- GGUV binary format ---------------------------------------------------------

_GGUV_HEADER = struct.Struct("<4sIIII")


def write_gguv(path, maps):
    data = np.ascontiguousarray(maps.data, dtype="<f4")
    h, w, c = data.shape
    with open(path, "wb") as fh:
        fh.write(_GGUV_HEADER.pack(b"GGUV", 1, h, w, c))
        fh.write(data.tobytes(order="C"))


def read_gguv(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _GGUV_HEADER.size:
        raise FormatError("truncated GGUV header")
    magic, version, h, w, c = _GGUV_HEADER.unpack_from(blob)
    if magic != b"GGUV":
        raise FormatError(f"bad magic {magic!r}, expected b'GGUV'")
    if version != 1:
        raise FormatError(f"unsupported GGUV version {version}")
    if c != N_CHANNELS:
        raise FormatError(f"GGUV channel count must be {N_CHANNELS}, got {c}")
    payload = blob[_GGUV_HEADER.size:]
    if len(payload) != h * w * c * 4:
        raise FormatError("GGUV payload size does not match header")
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, c).astype(np.float32)
    return AttributeMaps(data)
