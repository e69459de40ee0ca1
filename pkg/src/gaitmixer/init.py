"""Parameter initialisers.

Every helper draws from an explicit numpy Generator. Passing ``rng=None``
returns :class:`ParamShape` placeholders instead, which lets callers list
the parameter layout of a config without allocating it.
"""
from typing import NamedTuple

import numpy as np

from .numerics import Tensor


class ParamShape(NamedTuple):
    shape: tuple


def uniform_fan_in(rng, shape, fan_in):
    if rng is None:
        return ParamShape(tuple(shape))
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def normal(rng, shape, std):
    if rng is None:
        return ParamShape(tuple(shape))
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def constant(rng, shape, value):
    if rng is None:
        return ParamShape(tuple(shape))
    return Tensor(np.full(shape, float(value)), requires_grad=True)


def layer_norm_params(params, prefix, n, rng):
    params[f"{prefix}.gamma"] = constant(rng, (n,), 1.0)
    params[f"{prefix}.beta"] = constant(rng, (n,), 0.0)


def attention_params(params, prefix, d, rng):
    for name in ("wq", "wk", "wv", "wo"):
        params[f"{prefix}.{name}"] = uniform_fan_in(rng, (d, d), d)
        params[f"{prefix}.b{name[1]}"] = constant(rng, (d,), 0.0)
