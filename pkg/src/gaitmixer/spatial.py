"""Spatial mixer: per-frame self-attention over joint tokens.

Layouts: a sample is ``[..., T, J, 2]``; the mixer output is
``[..., T, J, d_model]``. Every frame goes through the same weights and
never sees any other frame.
"""
from __future__ import annotations

import math

from . import init
from .numerics import ops


def init_spatial_params(cfg, rng, params=None) -> dict:
    params = {} if params is None else params
    d = cfg.d_model
    params["spatial.embed.weight"] = init.uniform_fan_in(rng, (2, d), 2)
    params["spatial.embed.bias"] = init.constant(rng, (d,), 0.0)
    if cfg.use_joint_embedding:
        params["spatial.joint_embedding"] = init.normal(rng, (cfg.joints, d), 0.02)
    for i in range(cfg.spatial_blocks):
        p = f"spatial.block{i}"
        init.layer_norm_params(params, f"{p}.norm1", d, rng)
        init.attention_params(params, f"{p}.attn", d, rng)
        init.layer_norm_params(params, f"{p}.norm2", d, rng)
        params[f"{p}.mlp.fc1.weight"] = init.uniform_fan_in(rng, (d, cfg.mlp_hidden), d)
        params[f"{p}.mlp.fc1.bias"] = init.constant(rng, (cfg.mlp_hidden,), 0.0)
        params[f"{p}.mlp.fc2.weight"] = init.uniform_fan_in(rng, (cfg.mlp_hidden, d), cfg.mlp_hidden)
        params[f"{p}.mlp.fc2.bias"] = init.constant(rng, (d,), 0.0)
    return params


def embed_tokens(frames, params, use_joint_embedding=True):
    """Project each (x, y) joint token to d_model channels: ``x W + b (+ E_joint)``."""
    out = ops.linear(frames, params["spatial.embed.weight"], params["spatial.embed.bias"])
    if use_joint_embedding and "spatial.joint_embedding" in params:
        out = out + params["spatial.joint_embedding"]
    return out


def multi_head_attention(x, params, prefix, heads, weights_out=None):
    """Scaled dot-product self-attention with ``heads`` heads over axis -2 of ``[N, L, d]``.

    Head outputs are concatenated and passed through the output projection.
    If ``weights_out`` is a list, the ``[N, h, L, L]`` attention weights are
    appended to it.
    """
    N, L, d = x.shape
    dh = d // heads

    def split(t):
        return t.reshape(N, L, heads, dh).transpose(0, 2, 1, 3)

    q = split(ops.linear(x, params[f"{prefix}.wq"], params[f"{prefix}.bq"]))
    k = split(ops.linear(x, params[f"{prefix}.wk"], params[f"{prefix}.bk"]))
    v = split(ops.linear(x, params[f"{prefix}.wv"], params[f"{prefix}.bv"]))
    scores = ops.scale(ops.matmul(q, k.transpose(0, 1, 3, 2)), 1.0 / math.sqrt(dh))
    attn = ops.softmax(scores, axis=-1)
    if weights_out is not None:
        weights_out.append(attn.data)
    mixed = ops.matmul(attn, v).transpose(0, 2, 1, 3).reshape(N, L, d)
    return ops.linear(mixed, params[f"{prefix}.wo"], params[f"{prefix}.bo"])


def self_attention_block(x, params, prefix, heads, weights_out=None):
    """Pre-norm transformer block on ``[N, J, d]``.

    ``x + MHSA(LN(x))`` followed by ``x + FFN(LN(x))`` with a GELU FFN.
    """
    h = ops.layer_norm(x, params[f"{prefix}.norm1.gamma"], params[f"{prefix}.norm1.beta"])
    x = x + multi_head_attention(h, params, f"{prefix}.attn", heads, weights_out)
    h = ops.layer_norm(x, params[f"{prefix}.norm2.gamma"], params[f"{prefix}.norm2.beta"])
    h = ops.gelu(ops.linear(h, params[f"{prefix}.mlp.fc1.weight"], params[f"{prefix}.mlp.fc1.bias"]))
    h = ops.linear(h, params[f"{prefix}.mlp.fc2.weight"], params[f"{prefix}.mlp.fc2.bias"])
    return x + h


def spatial_forward(sample, params, cfg, hooks=None, weights_out=None):
    """Encode ``[..., T, J, 2]`` into ``[..., T, J, d_model]`` frame by frame."""
    sample = ops.as_tensor(sample)
    lead = sample.shape[:-2]
    J = sample.shape[-2]
    x = embed_tokens(sample, params, cfg.use_joint_embedding)
    x = x.reshape(-1, J, cfg.d_model)
    for i in range(cfg.spatial_blocks):
        x = self_attention_block(x, params, f"spatial.block{i}", cfg.heads, weights_out)
        if hooks is not None:
            hooks[f"spatial.block{i}"] = x.reshape(lead + (J, cfg.d_model))
    return x.reshape(lead + (J, cfg.d_model))


def to_joint_major(y):
    """``[..., T, J, d]`` -> ``z`` with layout ``[..., J, T, d]``."""
    n = y.ndim
    axes = tuple(range(n - 3)) + (n - 2, n - 3, n - 1)
    return ops.transpose(y, axes)
