"""Pure numpy fallbacks with the same contract as the compiled ``_dwconv`` kernels."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def dwconv_forward(xp, w):
    K = w.shape[1]
    windows = sliding_window_view(xp, K, axis=-1)  # [N, C, T, K]
    return np.einsum("nctk,ck->nct", windows, w)


def dwconv_backward(g, xp, w):
    K = w.shape[1]
    T = g.shape[-1]
    windows = sliding_window_view(xp, K, axis=-1)
    dw = np.einsum("nct,nctk->ck", g, windows)
    dxp = np.zeros_like(xp)
    for k in range(K):
        dxp[..., k:k + T] += g * w[:, k, None]
    return dxp, dw


def gelu_forward(x, need_deriv=True):
    """tanh-approximate GELU and (optionally) its derivative."""
    c, a = 0.7978845608028654, 0.044715
    x2 = x * x
    th = np.tanh(c * x * (1.0 + a * x2))
    out = 0.5 * x * (1.0 + th)
    if not need_deriv:
        return out, None
    # d/dx = 0.5 (1 + th) + 0.5 x (1 - th^2) c (1 + 3 a x^2)
    deriv = 1.0 - th * th
    deriv *= x
    deriv *= c * (1.0 + 3.0 * a * x2)
    deriv += 1.0 + th
    deriv *= 0.5
    return out, deriv
