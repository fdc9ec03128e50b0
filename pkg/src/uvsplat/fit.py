"""Inverse rendering: optimize raw attribute maps against multi-view target images.

Each iteration assembles Gaussians from the maps, renders every view, takes the
mean squared photometric error plus the map regularizers (and, once enabled, the
Beta opacity prior and the UV total-variation loss), backpropagates through the
rasterizer, activations and GridSample, and applies one Adam step.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import losses
from .attributes import (
    OPACITY,
    POSITION,
    SCALE,
    ActivationConfig,
    AttributeMaps,
    assemble_backward,
    assemble_gaussians,
    activate_opacity,
    activate_opacity_grad,
)
from .errors import ConfigError, EmptyTargets, FormatError, NonFiniteLoss, ShapeMismatch
from .mesh import UvGrid, sample_uv_grid
from .rasterizer import RenderMode, render, render_backward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float = 0.0025
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    iterations: int = 2000
    loss_weights: losses.LossWeights = field(default_factory=losses.LossWeights)
    # None: at the first growth event; never without growth
    uv_tv_enabled_from: int | None = None
    grow_schedule: tuple = ()  # ((iteration, uv_resolution), ...)
    photometric_weight: float = 1.0
    seed: int = 0
    map_resolution: int = 64
    uv_resolution: int = 64
    init_noise: float = 0.0  # std of Gaussian noise on non-position raw maps at init

    def __post_init__(self):
        if not (isinstance(self.learning_rate, (int, float)) and self.learning_rate > 0):
            raise ConfigError("learning_rate", f"must be positive, got {self.learning_rate}")
        for name in ("adam_beta1", "adam_beta2"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ConfigError(name, f"must lie in [0, 1), got {v}")
        if not self.adam_eps > 0:
            raise ConfigError("adam_eps", "must be positive")
        if int(self.iterations) < 0:
            raise ConfigError("iterations", "must be non-negative")
        if not self.photometric_weight >= 0:
            raise ConfigError("photometric_weight", "must be non-negative")
        if int(self.map_resolution) < 1:
            raise ConfigError("map_resolution", "must be >= 1")
        if int(self.uv_resolution) < 1:
            raise ConfigError("uv_resolution", "must be >= 1")
        if not self.init_noise >= 0:
            raise ConfigError("init_noise", "must be non-negative")
        sched = tuple((int(i), int(r)) for i, r in self.grow_schedule)
        res = [self.uv_resolution] + [r for _, r in sched]
        if any(b <= a for a, b in zip(res, res[1:])):
            raise ConfigError("grow_schedule", "resolutions must be strictly increasing")
        if any(b <= a for a, b in zip([i for i, _ in sched], [i for i, _ in sched][1:])):
            raise ConfigError("grow_schedule", "iterations must be strictly increasing")
        object.__setattr__(self, "grow_schedule", sched)

    @property
    def staged_start(self):
        """Iteration from which the opacity prior and UV TV loss are active (None: never)."""
        if self.uv_tv_enabled_from is not None:
            return int(self.uv_tv_enabled_from)
        return self.grow_schedule[0][0] if self.grow_schedule else None

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown fit option")
        if "loss_weights" in d:
            try:
                d["loss_weights"] = losses.LossWeights(**d["loss_weights"])
            except (TypeError, ValueError) as exc:
                raise ConfigError("loss_weights", str(exc)) from None
        if "grow_schedule" in d:
            d["grow_schedule"] = tuple(tuple(x) for x in d["grow_schedule"])
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["grow_schedule"] = [list(x) for x in self.grow_schedule]
        return d


@dataclass
class TargetSet:
    views: list  # [(Camera, H x W x 3 image), ...]
    background: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if not self.views:
            raise EmptyTargets("need at least one target view")
        checked = []
        for cam, img in self.views:
            img = np.asarray(img, dtype=np.float64)
            if img.shape != (cam.height, cam.width, 3):
                raise ShapeMismatch(f"target image {img.shape} does not match camera "
                                    f"{(cam.height, cam.width, 3)}")
            checked.append((cam, img))
        self.views = checked


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def fresh(cls, maps):
        return cls(np.zeros_like(maps.data), np.zeros_like(maps.data), 0)


def adam_step(maps, grads, state, cfg):
    """One bias-corrected Adam update; returns (new_maps, new_state)."""
    grads = np.asarray(grads)
    if grads.shape != maps.data.shape or state.m.shape != maps.data.shape:
        raise ShapeMismatch(f"maps {maps.data.shape}, grads {grads.shape} and state "
                            f"{state.m.shape} must agree")
    dtype = maps.data.dtype
    g = grads.astype(np.float64)
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    step = state.step + 1
    m = b1 * state.m.astype(np.float64) + (1 - b1) * g
    v = b2 * state.v.astype(np.float64) + (1 - b2) * g * g
    m_hat = m / (1 - b1 ** step)
    v_hat = v / (1 - b2 ** step)
    new = maps.data.astype(np.float64) - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return (AttributeMaps(new.astype(dtype)),
            OptimizerState(m.astype(dtype), v.astype(dtype), step))


def grow_density(grid: UvGrid, new_resolution) -> UvGrid:
    """Resample the same template charts at a higher UV density; maps are untouched."""
    if new_resolution <= grid.resolution:
        raise ValueError("growth must increase the resolution")
    if grid.index is None:
        raise ValueError("grid carries no chart index to resample")
    return sample_uv_grid(grid.index, new_resolution)


@dataclass
class Evaluation:
    breakdown: losses.LossBreakdown
    psnr: float
    mse: float
    grad: np.ndarray = None
    n_gaussians: int = 0


def _check(step, name, value):
    if not np.all(np.isfinite(value)):
        raise NonFiniteLoss(step, name)


def evaluate(maps, grid, targets, act_cfg, fit_cfg, staged=True, with_grad=True, step=0):
    """Total loss (and gradient w.r.t. the raw maps) at the current maps."""
    weights = fit_cfg.loss_weights
    lam_o = weights.lambda_o if staged else 0.0
    lam_uv = weights.lambda_uv if staged else 0.0
    gs = assemble_gaussians(maps, grid, act_cfg)
    n_views = len(targets.views)
    gauss_grads = None
    mse_total = 0.0
    tv_total = 0.0
    white = (1.0, 1.0, 1.0)
    for cam, target in targets.views:
        out = render(gs, cam, RenderMode.COLOR, targets.background)
        diff = out.color - target
        mse = float(np.mean(diff * diff))
        _check(step, "photometric", mse)
        mse_total += mse / n_views
        if with_grad:
            gc = diff * (2.0 * fit_cfg.photometric_weight / (diff.size * n_views))
            gg = render_backward(gs, cam, RenderMode.COLOR, targets.background, gc, None, forward=out)
            if gauss_grads is None:
                gauss_grads = gg
            else:
                gauss_grads += gg
        if lam_uv > 0:
            uv_out = render(gs, cam, RenderMode.UV, white)
            tv, d_uv, d_alpha = losses.uv_tv_loss(uv_out.color, uv_out.alpha)
            _check(step, "uv_tv", tv)
            tv_total += tv / n_views
            if with_grad:
                k = lam_uv / n_views
                gauss_grads += render_backward(gs, cam, RenderMode.UV, white, d_uv * k,
                                               d_alpha * k, forward=uv_out)

    raw = maps.data.astype(np.float64)
    reg_pos = losses.reg_position(raw[..., POSITION])
    reg_scale = losses.reg_scale(raw[..., SCALE])
    opac = activate_opacity(raw[..., OPACITY])
    reg_opac = losses.reg_opacity(opac) if lam_o > 0 else 0.0
    eff = replace(weights, lambda_o=lam_o, lambda_uv=lam_uv)
    breakdown = losses.total_generator_loss(fit_cfg.photometric_weight * mse_total, reg_pos,
                                            reg_scale, reg_opac, tv_total, eff)
    for name in ("reg_pos", "reg_scale", "reg_opac", "total"):
        _check(step, name, getattr(breakdown, name))
    value_psnr = math.inf if mse_total == 0 else 10.0 * math.log10(1.0 / mse_total)

    grad = None
    if with_grad:
        grad = assemble_backward(maps, grid, gauss_grads, act_cfg)
        grad[..., POSITION] += weights.lambda_p * losses.reg_position_grad(raw[..., POSITION])
        grad[..., SCALE] += weights.lambda_s * losses.reg_scale_grad(raw[..., SCALE])
        if lam_o > 0:
            grad[..., OPACITY] += lam_o * losses.reg_opacity_grad(opac) * \
                activate_opacity_grad(raw[..., OPACITY])
        _check(step, "gradient", grad)
    return Evaluation(breakdown, value_psnr, mse_total, grad, len(gs))


def initial_maps(fit_cfg, dtype=np.float32):
    """All-zero raw maps (offsets start on the template), plus optional seeded noise."""
    maps = AttributeMaps.zeros(fit_cfg.map_resolution, dtype=np.float64)
    if fit_cfg.init_noise > 0:
        rng = np.random.default_rng(fit_cfg.seed)
        maps.data[..., 3:] = rng.normal(0.0, fit_cfg.init_noise, maps.data[..., 3:].shape)
    return AttributeMaps(maps.data.astype(dtype))


def fit_maps(targets, index, act_cfg=ActivationConfig(), fit_cfg=FitConfig(), init_maps=None,
             callback=None, return_state=False):
    """Run the optimization loop; returns (maps, history).

    `index` is the template's :class:`UvChartIndex`. History holds one record
    per iteration (losses at the maps *before* that iteration's update) with
    keys step, adv (the weighted photometric term), reg_pos, reg_scale,
    reg_opac, uv_tv, total, psnr and n_gaussians.

    `callback(step, maps, record)` runs after each update; returning True stops
    the loop early. With `return_state` the final :class:`OptimizerState` is
    appended to the result.
    """
    if not isinstance(targets, TargetSet):
        targets = TargetSet(list(targets))
    maps = init_maps.copy() if init_maps is not None else initial_maps(fit_cfg)
    grid = sample_uv_grid(index, fit_cfg.uv_resolution)
    state = OptimizerState.fresh(maps)
    growth = dict(fit_cfg.grow_schedule)
    history = []
    for it in range(fit_cfg.iterations):
        if it in growth:
            grid = grow_density(grid, growth[it])
            state = OptimizerState.fresh(maps)
            log.info("step %d: UV density -> %d^2 (%d Gaussians)", it, grid.resolution, grid.count)
        staged = fit_cfg.staged_start is not None and it >= fit_cfg.staged_start
        ev = evaluate(maps, grid, targets, act_cfg, fit_cfg, staged=staged, step=it)
        rec = ev.breakdown.record(it, psnr=ev.psnr, n_gaussians=ev.n_gaussians)
        history.append(rec)
        maps, state = adam_step(maps, ev.grad, state, fit_cfg)
        _check(it, "maps", maps.data)
        if callback is not None and callback(it, maps, rec):
            break
    if return_state:
        return maps, history, state
    return maps, history


# -- optimizer checkpoint (GGOS) ------------------------------------------------

_GGOS_HEADER = struct.Struct("<4sIIIII")


def write_optimizer_state(path, state):
    m = np.ascontiguousarray(state.m, dtype="<f4")
    v = np.ascontiguousarray(state.v, dtype="<f4")
    h, w, c = m.shape
    with open(path, "wb") as fh:
        fh.write(_GGOS_HEADER.pack(b"GGOS", 1, h, w, c, int(state.step)))
        fh.write(m.tobytes())
        fh.write(v.tobytes())


def read_optimizer_state(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _GGOS_HEADER.size:
        raise FormatError("truncated GGOS header")
    magic, version, h, w, c, step = _GGOS_HEADER.unpack_from(blob)
    if magic != b"GGOS" or version != 1:
        raise FormatError(f"not a GGOS v1 file (magic {magic!r}, version {version})")
    n = h * w * c
    payload = np.frombuffer(blob[_GGOS_HEADER.size:], dtype="<f4")
    if payload.size != 2 * n:
        raise FormatError("GGOS payload size does not match header")
    return OptimizerState(payload[:n].reshape(h, w, c).astype(np.float32),
                          payload[n:].reshape(h, w, c).astype(np.float32), int(step))


def write_history(path, history):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(history, fh, indent=1, allow_nan=True)
