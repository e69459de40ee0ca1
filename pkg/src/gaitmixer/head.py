"""Representation head: pool to d, then LN -> FC -> l2 normalisation."""
from __future__ import annotations

from . import init
from .errors import ShapeError
from .numerics import ops


def init_head_params(cfg, rng, params=None) -> dict:
    params = {} if params is None else params
    init.layer_norm_params(params, "head.norm", cfg.d_model, rng)
    params["head.fc.weight"] = init.uniform_fan_in(rng, (cfg.d_model, cfg.embed_dim), cfg.d_model)
    params["head.fc.bias"] = init.constant(rng, (cfg.embed_dim,), 0.0)
    return params


def pool(x_temp, joints, d):
    """Average ``[..., C, T]`` over joints and time, leaving ``[..., d]``."""
    x_temp = ops.as_tensor(x_temp)
    *lead, C, T = x_temp.shape
    if C != joints * d:
        raise ShapeError(f"pool: {C} channels is not {joints} joints x {d}")
    x = x_temp.reshape(tuple(lead) + (joints, d, T))
    n = x.ndim
    return ops.mean(x, axis=(n - 3, n - 1))


def project(hidden, params):
    h = ops.layer_norm(hidden, params["head.norm.gamma"], params["head.norm.beta"])
    h = ops.linear(h, params["head.fc.weight"], params["head.fc.bias"])
    return ops.l2_normalize(h, axis=-1)
