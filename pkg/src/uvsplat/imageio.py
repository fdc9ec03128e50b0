"""PNG (8-bit, sRGB-encoded) and PFM (32-bit float) image files."""

import numpy as np
from PIL import Image

from .errors import FormatError


def linear_to_srgb(x):
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1 / 2.4) - 0.055)


def srgb_to_linear(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.04045, x / 12.92, np.power((x + 0.055) / 1.055, 2.4))


def write_png(path, image, srgb=True):
    """Write an H x W or H x W x 3 image in [0, 1] as 8-bit PNG."""
    img = np.asarray(image, dtype=np.float64)
    img = linear_to_srgb(img) if srgb else np.clip(img, 0.0, 1.0)
    Image.fromarray(np.round(img * 255.0).astype(np.uint8)).save(path)


def read_png(path, srgb=True):
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return srgb_to_linear(img) if srgb else img


def write_pfm(path, image):
    """Little-endian PFM; rows are stored bottom-to-top as the format requires."""
    img = np.asarray(image, dtype="<f4")
    color = img.ndim == 3
    if color and img.shape[2] != 3:
        raise ValueError("PFM color images need 3 channels")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"PF\n" if color else b"Pf\n")
        fh.write(f"{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img[::-1]).tobytes())


def read_pfm(path):
    with open(path, "rb") as fh:
        tag = fh.readline().strip()
        if tag not in (b"PF", b"Pf"):
            raise FormatError(f"not a PFM file: {path}")
        w, h = (int(v) for v in fh.readline().split())
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        shape = (h, w, 3) if tag == b"PF" else (h, w)
        data = np.frombuffer(fh.read(), dtype=dtype)
    if data.size != np.prod(shape):
        raise FormatError("PFM payload size does not match header")
    return data.reshape(shape)[::-1].astype(np.float32)


def read_image(path):
    """Load a target image as float64 H x W x 3 (PFM exact, PNG decoded from sRGB)."""
    path = str(path)
    if path.lower().endswith(".pfm"):
        img = read_pfm(path).astype(np.float64)
        if img.ndim == 2:
            img = np.repeat(img[..., None], 3, axis=2)
        return img
    return read_png(path)
