"""Image quality metrics and spatio-temporal (EPI) strips for view consistency."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from .errors import LineOutOfBounds


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size=11, sigma=1.5):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def _filter_valid(img, win):
    # separable window, keeping only positions where the window fits entirely
    out = correlate1d(correlate1d(img, win, axis=0, mode="constant"), win, axis=1, mode="constant")
    r = len(win) // 2
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim(a, b, peak=1.0, k1=0.01, k2=0.03, win_size=11, sigma=1.5):
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5); channels averaged."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if min(a.shape[:2]) < win_size:
        raise ValueError(f"images must be at least {win_size} pixels on each side")
    win = _gaussian_window(win_size, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    scores = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mx, my = _filter_valid(x, win), _filter_valid(y, win)
        sxx = _filter_valid(x * x, win) - mx * mx
        syy = _filter_valid(y * y, win) - my * my
        sxy = _filter_valid(x * y, win) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def epi_strip(render_fn, cameras, line):
    """Stack one horizontal pixel segment across a camera path.

    `render_fn(camera)` must return an H x W x 3 image; `line` is
    (row, col_start, col_end) with col_end exclusive. Row t of the result is
    the segment from the t-th rendering.
    """
    row, c0, c1 = (int(v) for v in line)
    if len(cameras) < 2:
        raise ValueError("an EPI strip needs at least two cameras")
    if c1 - c0 < 2:
        raise ValueError("line segment must span at least two pixels")
    rows = []
    for cam in cameras:
        img = np.asarray(render_fn(cam))
        h, w = img.shape[:2]
        if not (0 <= row < h and 0 <= c0 < c1 <= w):
            raise LineOutOfBounds(f"line {line} does not fit a {w}x{h} image")
        rows.append(img[row, c0:c1, :3])
    return np.clip(np.stack(rows), 0.0, 1.0)
