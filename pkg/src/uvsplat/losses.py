"""Generator loss terms: map regularizers, Beta opacity prior, UV total variation.

Each differentiable term comes with a ``*_grad`` companion returning the
gradient with respect to its array input(s).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

OPACITY_EPS = 1e-3
UV_ALPHA_EPS = 0.05


@dataclass(frozen=True)
class LossWeights:
    lambda_p: float = 0.1
    lambda_s: float = 0.05
    lambda_o: float = 1.0
    lambda_uv: float = 100.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value >= 0:
                raise ValueError(f"{name} must be non-negative, got {value}")


@dataclass
class LossBreakdown:
    adv: float = 0.0
    reg_pos: float = 0.0
    reg_scale: float = 0.0
    reg_opac: float = 0.0
    uv_tv: float = 0.0
    total: float = 0.0

    def record(self, step, **extra):
        rec = {"step": int(step), **{k: float(v) for k, v in asdict(self).items()}}
        rec.update(extra)
        return rec

    def to_json(self, step):
        return json.dumps(self.record(step))


def _mean_square(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x)) if x.size else 0.0


def reg_position(m_position):
    """Mean of squared raw position offsets; pulls Gaussians onto the template."""
    return _mean_square(m_position)


def reg_position_grad(m_position):
    x = np.asarray(m_position, dtype=np.float64)
    return 2.0 * x / max(x.size, 1)


def reg_scale(m_scale):
    """Mean of squared raw scales; pulls activated scales toward their default."""
    return _mean_square(m_scale)


reg_scale_grad = reg_position_grad


def reg_opacity(opacities, eps=OPACITY_EPS):
    """Beta(0.5, 0.5) negative log-likelihood (up to ln pi), averaged.

    Largest at 0.5, decreasing toward 0 and 1.
    """
    s = np.asarray(opacities, dtype=np.float64)
    return float(np.mean(0.5 * (np.log(s + eps) + np.log(1.0 - s + eps))))


def reg_opacity_grad(opacities, eps=OPACITY_EPS):
    s = np.asarray(opacities, dtype=np.float64)
    return 0.5 * (1.0 / (s + eps) - 1.0 / (1.0 - s + eps)) / s.size


def unblend_uv(r_uv, r_alpha, eps_alpha=UV_ALPHA_EPS):
    """Undo compositing over a white background: (R_uv - (1 - alpha)) / alpha.

    Pixels with alpha below `eps_alpha` are marked invalid and set to zero.
    """
    r_uv = np.asarray(r_uv, dtype=np.float64)
    a = np.asarray(r_alpha, dtype=np.float64)
    valid = a >= eps_alpha
    safe = np.where(valid, a, 1.0)[..., None]
    out = np.where(valid[..., None], (r_uv - (1.0 - a[..., None])) / safe, 0.0)
    return out, valid


def unblend_uv_grad(r_uv, r_alpha, grad_out, eps_alpha=UV_ALPHA_EPS):
    """Gradients w.r.t. (R_uv, R_alpha) given dL/dR'_uv."""
    r_uv = np.asarray(r_uv, dtype=np.float64)
    a = np.asarray(r_alpha, dtype=np.float64)
    valid = (a >= eps_alpha)[..., None]
    safe = np.where(valid, a[..., None], 1.0)
    g = np.where(valid, grad_out, 0.0)
    d_uv = g / safe
    d_alpha = np.sum(g * (1.0 - r_uv) / (safe * safe), axis=-1)
    return d_uv, d_alpha


def _tv_pairs(valid_mask):
    h_ok = valid_mask[:, 1:] & valid_mask[:, :-1]
    v_ok = valid_mask[1:, :] & valid_mask[:-1, :]
    return h_ok, v_ok, int(h_ok.sum() + v_ok.sum())


def tv_uv(r_uv_prime, valid_mask):
    """Anisotropic L1 total variation over 4-neighbor pairs with both pixels valid.

    Averaged over the number of such pairs; 0 when there are none.
    """
    x = np.asarray(r_uv_prime, dtype=np.float64)
    valid_mask = np.asarray(valid_mask, dtype=bool)
    h_ok, v_ok, n = _tv_pairs(valid_mask)
    if n == 0:
        return 0.0
    dh = np.abs(x[:, 1:] - x[:, :-1]).sum(axis=-1)
    dv = np.abs(x[1:, :] - x[:-1, :]).sum(axis=-1)
    return float((dh[h_ok].sum() + dv[v_ok].sum()) / n)


def tv_uv_grad(r_uv_prime, valid_mask):
    x = np.asarray(r_uv_prime, dtype=np.float64)
    valid_mask = np.asarray(valid_mask, dtype=bool)
    h_ok, v_ok, n = _tv_pairs(valid_mask)
    grad = np.zeros_like(x)
    if n == 0:
        return grad
    sh = np.sign(x[:, 1:] - x[:, :-1]) * h_ok[..., None] / n
    sv = np.sign(x[1:, :] - x[:-1, :]) * v_ok[..., None] / n
    grad[:, 1:] += sh
    grad[:, :-1] -= sh
    grad[1:, :] += sv
    grad[:-1, :] -= sv
    return grad


def uv_tv_loss(r_uv, r_alpha, eps_alpha=UV_ALPHA_EPS):
    """TV of the alpha-unblended UV rendering, plus its gradients w.r.t. (R_uv, R_alpha)."""
    prime, valid = unblend_uv(r_uv, r_alpha, eps_alpha)
    value = tv_uv(prime, valid)
    g_prime = tv_uv_grad(prime, valid)
    d_uv, d_alpha = unblend_uv_grad(r_uv, r_alpha, g_prime, eps_alpha)
    return value, d_uv, d_alpha


def generator_adv_loss(d_scores):
    """Non-saturating generator loss: mean softplus(-D)."""
    s = np.asarray(d_scores, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, -s)))


def total_generator_loss(adv=0.0, reg_pos=0.0, reg_scale=0.0, reg_opac=0.0, uv_tv=0.0,
                         weights=LossWeights()) -> LossBreakdown:
    total = (adv + weights.lambda_p * reg_pos + weights.lambda_s * reg_scale
             + weights.lambda_o * reg_opac + weights.lambda_uv * uv_tv)
    return LossBreakdown(adv, reg_pos, reg_scale, reg_opac, uv_tv, total)
