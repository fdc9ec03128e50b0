"""Differentiable Gaussian splatting for UV-parameterized template heads."""

from ._threads import configure_pool as _configure_pool

_configure_pool()

from .attributes import (  # noqa: E402
    ActivationConfig,
    AttributeMaps,
    GaussianGrads,
    GaussianSet,
    assemble_backward,
    assemble_gaussians,
    grid_sample,
    read_gguv,
    write_gguv,
)
from .camera import Camera, look_at, orbit_cameras  # noqa: E402
from .mesh import (  # noqa: E402
    TemplateMesh,
    UvChartIndex,
    UvGrid,
    build_uv_index,
    load_obj,
    parse_obj,
    sample_uv_grid,
    uv_to_surface,
)
from .rasterizer import RenderMode, RenderOutput, render, render_backward, render_depth_normals  # noqa: E402

__all__ = [
    "ActivationConfig",
    "AttributeMaps",
    "Camera",
    "GaussianGrads",
    "GaussianSet",
    "RenderMode",
    "RenderOutput",
    "TemplateMesh",
    "UvChartIndex",
    "UvGrid",
    "assemble_backward",
    "assemble_gaussians",
    "build_uv_index",
    "grid_sample",
    "load_obj",
    "look_at",
    "orbit_cameras",
    "parse_obj",
    "read_gguv",
    "render",
    "render_backward",
    "render_depth_normals",
    "sample_uv_grid",
    "uv_to_surface",
    "write_gguv",
]
