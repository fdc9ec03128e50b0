"""Command-line entry point: fit, render, orbit, epi, bench, export-ply.

Exit codes: 0 success, 2 bad input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import statistics
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imageio
from .attributes import ActivationConfig, AttributeMaps, assemble_gaussians, read_gguv, write_gguv
from .camera import Camera, load_camera, orbit_cameras, save_camera
from .errors import NonFiniteLoss, UvSplatError
from .fit import FitConfig, TargetSet, fit_maps, write_history, write_optimizer_state
from .mesh import build_uv_index, load_obj, sample_uv_grid
from .metrics import epi_strip
from .ply import write_ply
from .rasterizer import RenderMode, render, render_backward, render_depth_normals

log = logging.getLogger("uvsplat")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    """Bad command-line input; reported and mapped to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text, n, name):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"{name}: expected {n} comma-separated numbers, got {text!r}") from None
    if len(vals) != n:
        raise UsageError(f"{name}: expected {n} comma-separated numbers, got {text!r}")
    return vals


def _ints(text, name):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{name}: expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise UsageError(f"{name}: empty list")
    return vals


def _read_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} {path} is not valid JSON: {exc}") from None


@dataclass
class Scene:
    index: object
    maps: AttributeMaps
    activation: ActivationConfig
    uv_resolution: int
    background: tuple

    def grid(self, resolution=None):
        return sample_uv_grid(self.index, resolution or self.uv_resolution)

    def gaussians(self, resolution=None):
        return assemble_gaussians(self.maps, self.grid(resolution), self.activation)

    def frame_center_radius(self):
        v = self.index.mesh.vertices
        lo, hi = v.min(axis=0), v.max(axis=0)
        center = 0.5 * (lo + hi)
        return center, float(np.linalg.norm(v - center, axis=1).max())


def _load_scene(args):
    if args.uv_res < 1:
        raise UsageError("--uv-res must be >= 1")
    if not Path(args.template).is_file():
        raise UsageError(f"template not found: {args.template}")
    mesh = load_obj(args.template)
    if args.maps is not None:
        if not Path(args.maps).is_file():
            raise UsageError(f"maps file not found: {args.maps}")
        maps = read_gguv(args.maps)
    else:
        if args.map_res < 1:
            raise UsageError("--map-res must be >= 1")
        maps = AttributeMaps.zeros(args.map_res)
    act = ActivationConfig(**_read_json(args.activation, "activation config")) \
        if args.activation else ActivationConfig()
    bg = _floats(args.background, 3, "--background")
    return Scene(build_uv_index(mesh), maps, act, args.uv_res, bg)


def _add_scene_args(p):
    p.add_argument("--template", required=True, help="template mesh (.obj with texture coordinates)")
    p.add_argument("--maps", default=None, help="attribute maps (.gguv); zero maps if omitted")
    p.add_argument("--map-res", type=int, default=256, help="zero-map size when --maps is omitted")
    p.add_argument("--uv-res", type=int, default=256, help="UV sampling grid resolution")
    p.add_argument("--activation", default=None, help="JSON file with activation constants")
    p.add_argument("--background", default="1,1,1", help="background color R,G,B in [0, 1]")
    p.add_argument("--seed", type=int, default=0)


def _add_orbit_args(p):
    p.add_argument("--center", default=None, help="orbit center x,y,z (default: template center)")
    p.add_argument("--radius", type=float, default=None,
                   help="orbit radius (default: fit the template in view)")
    p.add_argument("--elevation", type=float, default=0.0, help="elevation in degrees")
    p.add_argument("--frames", type=int, default=36)
    p.add_argument("--sweep", type=float, default=360.0, help="azimuth range in degrees")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--fov", type=float, default=30.0, help="vertical field of view in degrees")


def _default_radius(radius, fov_deg):
    return 1.15 * radius / np.sin(np.radians(fov_deg) / 2)


def _orbit(scene, args):
    center, bound = scene.frame_center_radius()
    if args.center is not None:
        center = np.array(_floats(args.center, 3, "--center"))
    radius = args.radius if args.radius is not None else _default_radius(bound, args.fov)
    if not radius > 0:
        raise UsageError("--radius must be positive")
    if args.frames < 1:
        raise UsageError("--frames must be >= 1")
    return orbit_cameras(center, radius, args.elevation, args.frames, args.width, args.height,
                         fov_y_deg=args.fov, sweep_deg=args.sweep)


def _write_image(path, img, srgb=True):
    path = str(path)
    if path.lower().endswith(".pfm"):
        imageio.write_pfm(path, img)
    else:
        imageio.write_png(path, img, srgb=srgb)


def _render_image(scene, gaussians, cam, mode):
    if mode == "depth":
        depth, _ = render_depth_normals(gaussians, cam, scene.background)
        return depth, None
    out = render(gaussians, cam, RenderMode(mode), scene.background)
    return out.color, out.alpha


# -- commands -------------------------------------------------------------------


def cmd_fit(args):
    cfg = _read_json(args.config, "fit config")
    if not isinstance(cfg, dict):
        raise UsageError("fit config must be a JSON object")
    base = Path(args.config).resolve().parent

    def rel(p):
        return str((base / p) if not Path(p).is_absolute() else Path(p))

    try:
        template = rel(cfg["template"])
        target_specs = cfg["targets"]
    except KeyError as exc:
        raise UsageError(f"fit config is missing {exc.args[0]!r}") from None
    fit_dict = dict(cfg.get("fit", {}))
    if args.seed is not None:
        fit_dict["seed"] = args.seed
    fit_cfg = FitConfig.from_dict(fit_dict)
    act = ActivationConfig(**cfg.get("activation", {}))
    bg = tuple(float(v) for v in cfg.get("background", (1.0, 1.0, 1.0)))
    index = build_uv_index(load_obj(template))
    views = []
    for entry in target_specs:
        cam = load_camera(rel(entry["camera"]))
        views.append((cam, imageio.read_image(rel(entry["image"]))))
    targets = TargetSet(views, bg)
    init = read_gguv(rel(cfg["init_maps"])) if cfg.get("init_maps") else None
    if init is not None and init.height != fit_cfg.map_resolution:
        log.info("map resolution taken from init maps (%d)", init.height)

    def report(step, maps, rec):
        if step % 50 == 0 or step == fit_cfg.iterations - 1:
            log.info("step %5d  total %.6g  psnr %.2f dB  n=%d", step, rec["total"], rec["psnr"],
                     rec["n_gaussians"])

    maps, history, state = fit_maps(targets, index, act, fit_cfg, init_maps=init,
                                    callback=report, return_state=True)
    out = Path(args.out or base)
    out.mkdir(parents=True, exist_ok=True)
    write_gguv(out / "maps.gguv", maps)
    write_optimizer_state(out / "optimizer.ggos", state)
    write_history(out / "history.json", history)
    final = history[-1] if history else {}
    print(json.dumps({"maps": str(out / "maps.gguv"), "iterations": len(history),
                      "psnr": final.get("psnr")}))
    return EXIT_OK


def cmd_render(args):
    scene = _load_scene(args)
    cam = load_camera(args.camera)
    img, alpha = _render_image(scene, scene.gaussians(), cam, args.mode)
    if args.mode == "depth" and not str(args.out).lower().endswith(".pfm"):
        peak = float(img.max())
        img = img / peak if peak > 0 else img
    _write_image(args.out, img, srgb=args.mode == "color")
    if args.alpha and alpha is not None:
        imageio.write_pfm(args.alpha, alpha)
    return EXIT_OK


def cmd_orbit(args):
    scene = _load_scene(args)
    cams = _orbit(scene, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gs = scene.gaussians()
    for k, cam in enumerate(cams):
        img, _ = _render_image(scene, gs, cam, args.mode)
        if args.mode == "depth":
            peak = float(img.max())
            img = img / peak if peak > 0 else img
        _write_image(out / f"frame_{k:04d}.png", img, srgb=args.mode == "color")
        save_camera(out / f"camera_{k:04d}.json", cam)
    return EXIT_OK


def cmd_epi(args):
    scene = _load_scene(args)
    cams = _orbit(scene, args)
    if len(cams) < 2:
        raise UsageError("an EPI strip needs --frames >= 2")
    row, c0, c1 = _ints(args.line, "--line") if args.line else (args.height // 2, 0, args.width)
    gs = scene.gaussians()
    strip = epi_strip(lambda cam: render(gs, cam, RenderMode.COLOR, scene.background).color, cams,
                      (row, c0, c1))
    _write_image(args.out, strip)
    return EXIT_OK


def _bench_camera(scene, size, fov=30.0):
    center, bound = scene.frame_center_radius()
    return orbit_cameras(center, _default_radius(bound, fov), 0.0, 1, size, size, fov_y_deg=fov)[0]


def _median_ms(fn, reps, warmup):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


def cmd_bench(args):
    if args.repetitions < 10:
        raise UsageError("--repetitions must be at least 10")
    scene = _load_scene(args)
    uv_list = _ints(args.uv_resolutions, "--uv-resolutions") if args.uv_resolutions \
        else [scene.uv_resolution]
    sizes = _ints(args.resolutions, "--resolutions")
    if min(uv_list) < 1 or min(sizes) < 1:
        raise UsageError("resolutions must be >= 1")
    entries = []
    for uv_res in uv_list:
        grid = scene.grid(uv_res)
        gs = assemble_gaussians(scene.maps, grid, scene.activation)
        gen_ms = _median_ms(lambda: assemble_gaussians(scene.maps, grid, scene.activation),
                            args.repetitions, args.warmup)
        for size in sizes:
            cam = _bench_camera(scene, size)
            grad = np.full((size, size, 3), 1.0 / (3 * size * size))
            fwd = render(gs, cam, RenderMode.COLOR, scene.background)
            render_ms = _median_ms(lambda: render(gs, cam, RenderMode.COLOR, scene.background),
                                   args.repetitions, args.warmup)
            backward_ms = _median_ms(
                lambda: render_backward(gs, cam, RenderMode.COLOR, scene.background, grad,
                                        forward=fwd), args.repetitions, args.warmup)
            entry = {"uv_resolution": uv_res, "resolution": size, "gaussian_count": grid.count,
                     "generation_ms": gen_ms, "render_ms": render_ms, "backward_ms": backward_ms}
            log.info("%s", entry)
            entries.append(entry)
    report = {
        "machine": {"platform": platform.platform(), "processor": platform.processor(),
                    "python": platform.python_version(), "cpu_count": os.cpu_count(),
                    "threads": os.environ.get("GG_THREADS")},
        "repetitions": args.repetitions,
        "warmup": args.warmup,
        "entries": entries,
    }
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_export_ply(args):
    scene = _load_scene(args)
    write_ply(args.out, scene.gaussians())
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="uvsplat", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit attribute maps to target views")
    p.add_argument("config", help="fit configuration (JSON)")
    p.add_argument("--out", default=None, help="output directory (default: next to the config)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("render", help="render one view")
    _add_scene_args(p)
    p.add_argument("--camera", required=True, help="camera JSON")
    p.add_argument("--mode", choices=("color", "uv", "depth"), default="color")
    p.add_argument("--out", required=True, help="output image (.png or .pfm)")
    p.add_argument("--alpha", default=None, help="optional PFM file for the alpha channel")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("orbit", help="render a frame sequence on a horizontal orbit")
    _add_scene_args(p)
    _add_orbit_args(p)
    p.add_argument("--mode", choices=("color", "uv", "depth"), default="color")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_orbit)

    p = sub.add_parser("epi", help="stack one pixel row segment across an orbit")
    _add_scene_args(p)
    _add_orbit_args(p)
    p.add_argument("--line", default=None, help="row,col_start,col_end (end exclusive)")
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(func=cmd_epi)

    p = sub.add_parser("bench", help="time generation, rendering and backward passes")
    _add_scene_args(p)
    p.add_argument("--uv-resolutions", default=None, help="comma-separated UV grid sizes")
    p.add_argument("--resolutions", default="256,512", help="comma-separated image side lengths")
    p.add_argument("--repetitions", type=int, default=30)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-ply", help="write the Gaussians as a binary PLY")
    _add_scene_args(p)
    p.add_argument("--out", required=True, help="output .ply")
    p.set_defaults(func=cmd_export_ply)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NonFiniteLoss as exc:
        print(f"uvsplat: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, UvSplatError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"uvsplat: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
