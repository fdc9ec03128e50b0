"""
Checking renderer gradients against finite differences
======================================================

The backward pass is hand-written, so every partial is compared with a central
difference of the forward pass on a small smooth scene.
"""

import numpy as np

from uvsplat.attributes import GaussianSet
from uvsplat.camera import Camera
from uvsplat.rasterizer import render, render_backward

rng = np.random.default_rng(0)
n = 6
q = rng.normal(size=(n, 4))
scene = GaussianSet(
    means=np.c_[rng.uniform(-0.3, 0.3, (n, 2)), rng.uniform(1.5, 2.5, n)],
    scales=rng.uniform(0.8, 1.4, (n, 3)),
    rotations=q / np.linalg.norm(q, axis=1, keepdims=True),
    colors=rng.uniform(0, 1, (n, 3)),
    opacities=rng.uniform(0.05, 0.2, n),
)
cam = Camera(32, 32, 16, 16, np.eye(4), 32, 32)

# a random linear functional of the image makes every pixel count
weights = rng.normal(size=(32, 32, 3))


def loss(g):
    return float(np.sum(weights * render(g, cam).color))


grads = render_backward(scene, cam, grad_color=weights)

h = 1e-4
for name in ("means", "scales", "rotations", "colors", "opacities"):
    base = getattr(scene, name)
    fd = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        step = np.zeros_like(base)
        step[idx] = h
        fields = {k: getattr(scene, k) for k in ("means", "scales", "rotations", "colors",
                                                 "opacities")}
        fields[name] = base + step
        up = loss(GaussianSet(**fields))
        fields[name] = base - step
        fd[idx] = (up - loss(GaussianSet(**fields))) / (2 * h)
    analytic = getattr(grads, name)
    err = np.abs(analytic - fd).max() / np.abs(fd).max()
    print(f"{name:10s} max error relative to largest partial: {err:.1e}")
