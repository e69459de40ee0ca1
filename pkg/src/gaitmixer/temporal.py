"""Temporal mixer over ``z`` (``[..., J, T, d]``).

The joint-major feature map is flattened to ``[..., C, T]`` with channel
index ``c = j * d + k``. Each block is

    x = x + dwconv(x) + b              token mixer, one K-tap kernel per channel
    h = GELU(LN_joint(x))              LN over the d channels of each joint
    x = x + W h + b                    channel mixer across all C channels

The GaitFormer variant swaps the depthwise convolution for self-attention
along T (separately per joint) and adds a learnable temporal position
embedding once before the first block.
"""
from __future__ import annotations

from . import init
from .errors import ShapeError
from .numerics import ops
from .spatial import multi_head_attention


def init_temporal_params(cfg, rng, params=None) -> dict:
    params = {} if params is None else params
    C, d, K = cfg.channels, cfg.d_model, cfg.kernel_size
    if cfg.variant == "gaitformer":
        params["temporal.pos_embedding"] = init.normal(rng, (d, cfg.frames), 0.02)
    for i in range(cfg.temporal_blocks):
        p = f"temporal.block{i}"
        if cfg.variant == "gaitmixer":
            params[f"{p}.dw.kernels"] = init.uniform_fan_in(rng, (C, K), K)
            params[f"{p}.dw.bias"] = init.constant(rng, (C,), 0.0)
        else:
            init.layer_norm_params(params, f"{p}.attn_norm", d, rng)
            init.attention_params(params, f"{p}.attn", d, rng)
        init.layer_norm_params(params, f"{p}.norm", d, rng)
        params[f"{p}.pw.weight"] = init.uniform_fan_in(rng, (C, C), C)
        params[f"{p}.pw.bias"] = init.constant(rng, (C,), 0.0)
    return params


def flatten_joints(z):
    """``[..., J, T, d]`` -> ``[..., J*d, T]``; element (j, t, k) lands at (j*d + k, t)."""
    z = ops.as_tensor(z)
    *lead, J, T, d = z.shape
    n = z.ndim
    axes = tuple(range(n - 3)) + (n - 3, n - 1, n - 2)
    return ops.transpose(z, axes).reshape(tuple(lead) + (J * d, T))


def unflatten_joints(x, joints):
    """Inverse of :func:`flatten_joints`."""
    x = ops.as_tensor(x)
    *lead, C, T = x.shape
    if C % joints:
        raise ShapeError(f"{C} channels do not split into {joints} joints")
    d = C // joints
    n = x.ndim + 1
    y = x.reshape(tuple(lead) + (joints, d, T))
    axes = tuple(range(n - 3)) + (n - 3, n - 1, n - 2)
    return ops.transpose(y, axes)


def _joint_norm_gelu(x, params, prefix, joints):
    *lead, C, T = x.shape
    d = C // joints
    h = x.reshape(tuple(lead) + (joints, d, T))
    h = ops.layer_norm(h, params[f"{prefix}.norm.gamma"], params[f"{prefix}.norm.beta"], axis=-2)
    return ops.gelu(h).reshape(tuple(lead) + (C, T))


def _channel_mixer(x, params, prefix, joints):
    h = _joint_norm_gelu(x, params, prefix, joints)
    return x + ops.pointwise_conv(h, params[f"{prefix}.pw.weight"], params[f"{prefix}.pw.bias"])


def token_mixer(x, params, prefix, padding):
    """Depthwise large-kernel convolution along T (no cross-channel flow)."""
    y = ops.depthwise_conv1d(x, params[f"{prefix}.dw.kernels"], padding)
    return y + params[f"{prefix}.dw.bias"].reshape(-1, 1)


def temporal_block(x, params, prefix, cfg):
    """One GaitMixer temporal block on ``[..., C, T]``; preserves T."""
    x = x + token_mixer(x, params, prefix, cfg.padding())
    return _channel_mixer(x, params, prefix, cfg.joints)


def attention_token_mixer(x, params, prefix, cfg, weights_out=None):
    """Self-attention along T within each joint's d channels."""
    *lead, C, T = x.shape
    J, d = cfg.joints, cfg.d_model
    u = x.reshape(tuple(lead) + (J, d, T))
    n = u.ndim
    u = ops.transpose(u, tuple(range(n - 2)) + (n - 1, n - 2)).reshape(-1, T, d)
    u = ops.layer_norm(u, params[f"{prefix}.attn_norm.gamma"], params[f"{prefix}.attn_norm.beta"])
    a = multi_head_attention(u, params, f"{prefix}.attn", cfg.temporal_heads, weights_out)
    a = a.reshape(tuple(lead) + (J, T, d))
    a = ops.transpose(a, tuple(range(n - 2)) + (n - 1, n - 2))
    return a.reshape(tuple(lead) + (C, T))


def gaitformer_block(x, params, prefix, cfg, weights_out=None):
    x = x + attention_token_mixer(x, params, prefix, cfg, weights_out)
    return _channel_mixer(x, params, prefix, cfg.joints)


def temporal_forward(z, params, cfg, hooks=None):
    """``z [..., J, T, d]`` -> ``[..., C, T]`` through the configured block stack."""
    if cfg.variant == "gaitformer":
        return temporal_forward_gaitformer(z, params, cfg, hooks)
    x = flatten_joints(z)
    for i in range(cfg.temporal_blocks):
        x = temporal_block(x, params, f"temporal.block{i}", cfg)
        if hooks is not None:
            hooks[f"temporal.block{i}"] = x
    return x


def temporal_forward_gaitformer(z, params, cfg, hooks=None, weights_out=None):
    x = flatten_joints(z)
    *lead, C, T = x.shape
    pos = params["temporal.pos_embedding"]
    if pos.shape[1] != T:
        raise ShapeError(f"temporal position embedding covers {pos.shape[1]} frames, input has {T}")
    x = (x.reshape(tuple(lead) + (cfg.joints, cfg.d_model, T)) + pos).reshape(tuple(lead) + (C, T))
    for i in range(cfg.temporal_blocks):
        x = gaitformer_block(x, params, f"temporal.block{i}", cfg, weights_out)
        if hooks is not None:
            hooks[f"temporal.block{i}"] = x
    return x
