"""
Rendering attribute maps on a template
======================================

Attribute maps live in UV space. Sampling them on a texel grid and placing one
Gaussian per sample on the template surface gives a renderable scene.
"""

from pathlib import Path

import numpy as np

from uvsplat import imageio
from uvsplat.attributes import assemble_gaussians
from uvsplat.mesh import build_uv_index, sample_uv_grid
from uvsplat.rasterizer import RenderMode, render, render_depth_normals
from uvsplat.scenes import ring_cameras, textured_maps, uv_sphere

out = Path("demo_output")
out.mkdir(exist_ok=True)

# a 10 cm sphere whose UV layout covers the whole unit square
index = build_uv_index(uv_sphere())
grid = sample_uv_grid(index, 64)
print(f"{grid.count} Gaussians from a 64x64 grid")

maps = textured_maps(64, seed=0)
gaussians = assemble_gaussians(maps, grid)
cam = ring_cameras(1, 256, 256)[0]

color = render(gaussians, cam)
imageio.write_png(out / "sphere_color.png", color.color)

# UV mode swaps each color for the Gaussian's own (u, v, 0)
uv = render(gaussians, cam, RenderMode.UV, background=(0.0, 0.0, 0.0))
imageio.write_png(out / "sphere_uv.png", uv.color, srgb=False)

depth, normals = render_depth_normals(gaussians, cam)
imageio.write_png(out / "sphere_depth.png", depth / depth.max(), srgb=False)
imageio.write_png(out / "sphere_normals.png", 0.5 - 0.5 * normals, srgb=False)

print("coverage", float(np.mean(color.alpha > 0.5)))
