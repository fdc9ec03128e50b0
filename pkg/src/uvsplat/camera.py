"""Pinhole cameras (OpenCV convention: +x right, +y down, +z forward)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    world_to_camera: np.ndarray  # 4 x 4 rigid transform
    width: int
    height: int
    znear: float = 0.01
    zfar: float = 100.0

    def __post_init__(self):
        m = np.asarray(self.world_to_camera, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError("world_to_camera must be 4 x 4")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not 0 < self.znear < self.zfar:
            raise ValueError("need 0 < znear < zfar")
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError("image size must be at least 1 x 1")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "world_to_camera", m)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def rotation(self):
        return self.world_to_camera[:3, :3]

    @property
    def translation(self):
        return self.world_to_camera[:3, 3]

    @property
    def position(self):
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def resized(self, width, height):
        """Same pose and field of view at a different image size."""
        sx, sy = width / self.width, height / self.height
        return Camera(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy,
                      self.world_to_camera, width, height, self.znear, self.zfar)

    def to_dict(self):
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "znear": self.znear, "zfar": self.zfar,
            "world_to_camera": self.world_to_camera.reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        m = np.asarray(d["world_to_camera"], dtype=np.float64).reshape(4, 4)
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]), m,
                   int(d["width"]), int(d["height"]),
                   float(d.get("znear", 0.01)), float(d.get("zfar", 100.0)))


def save_camera(path, cam):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cam.to_dict(), fh, indent=2)


def load_camera(path):
    with open(path, encoding="utf-8") as fh:
        return Camera.from_dict(json.load(fh))


def look_at(eye, target, up=(0.0, 1.0, 0.0)):
    """World-to-camera matrix for a camera at `eye` looking at `target`.

    `up` is the world up direction; it maps to -y in the image.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    m = np.eye(4)
    m[:3, :3] = rot
    m[:3, 3] = -rot @ eye
    return m


def intrinsics_from_fov(width, height, fov_y_deg):
    f = 0.5 * height / math.tan(math.radians(fov_y_deg) / 2)
    return f, f, width / 2.0, height / 2.0


def orbit_cameras(center, radius, elevation_deg, n_frames, width, height, fov_y_deg=30.0,
                  start_deg=0.0, sweep_deg=360.0, znear=0.01, zfar=100.0):
    """Cameras on a horizontal circle (world +y up) looking at `center`.

    Azimuth 0 puts the camera on the +z side of the center.
    """
    if radius <= 0:
        raise ValueError("orbit radius must be positive")
    if n_frames < 1:
        raise ValueError("need at least one frame")
    fx, fy, cx, cy = intrinsics_from_fov(width, height, fov_y_deg)
    center = np.asarray(center, dtype=np.float64)
    el = math.radians(elevation_deg)
    step = sweep_deg / n_frames
    cams = []
    for k in range(n_frames):
        az = math.radians(start_deg + k * step)
        eye = center + radius * np.array([math.cos(el) * math.sin(az), math.sin(el),
                                          math.cos(el) * math.cos(az)])
        cams.append(Camera(fx, fy, cx, cy, look_at(eye, center), width, height, znear, zfar))
    return cams
