"""Central finite-difference checks for the autodiff engine."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, no_grad


def numerical_grad(fn, tensor: Tensor, h: float = 1e-4, indices=None) -> np.ndarray:
    """d fn() / d tensor by central differences at ``indices`` (flat; default all)."""
    flat = tensor.data.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    out = np.zeros(len(indices))
    with no_grad():
        for n, i in enumerate(indices):
            orig = flat[i]
            flat[i] = orig + h
            up = float(fn().data)
            flat[i] = orig - h
            down = float(fn().data)
            flat[i] = orig
            out[n] = (up - down) / (2.0 * h)
    return out


def relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Norm-wise ``||a - n|| / max(||a||, ||n||, floor)``.

    The floor keeps exactly-zero gradients (e.g. attention key biases) from
    turning finite-difference round-off into a relative error of 1.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / scale)


def check_gradients(fn, tensors, h: float = 1e-4, max_entries: int | None = None,
                    rng=None) -> dict:
    """Compare backprop and finite differences for every tensor in ``tensors``.

    ``fn`` must rebuild the forward graph on every call and return a scalar.
    With ``max_entries`` only a random subset of coordinates per tensor is
    probed. Returns ``{name: relative_error}``.
    """
    if isinstance(tensors, (list, tuple)):
        tensors = {str(i): t for i, t in enumerate(tensors)}
    for t in tensors.values():
        t.grad = None
    fn().backward()
    rng = rng if rng is not None else np.random.default_rng(0)
    errors = {}
    for name, t in tensors.items():
        size = t.data.size
        if max_entries is not None and size > max_entries:
            idx = np.sort(rng.choice(size, max_entries, replace=False))
        else:
            idx = np.arange(size)
        analytic = (t.grad if t.grad is not None else np.zeros_like(t.data)).reshape(-1)[idx]
        numeric = numerical_grad(fn, t, h=h, indices=idx)
        errors[name] = relative_error(analytic, numeric)
    return errors
