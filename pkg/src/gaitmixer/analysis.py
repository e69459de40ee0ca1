"""Feature-map spectra and Grad-CAM attribution, plus PNG rendering."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .numerics import Tensor, ops
from .temporal import unflatten_joints


@dataclass
class SpectrumMap:
    """``magnitudes[i]`` is the fftshifted |FFT2| of channel ``channels[i]`` (J x T)."""

    magnitudes: np.ndarray
    channels: list
    layer: str = ""


@dataclass
class AttributionMap:
    grid: np.ndarray  # [J, T], nonnegative
    layer: str = ""
    score: float = float("nan")


def fft2_magnitude(feature: np.ndarray, log_scale: bool = False) -> np.ndarray:
    """|2-D DFT| over the last two axes with the zero frequency moved to the centre."""
    mag = np.abs(np.fft.fftshift(np.fft.fft2(feature), axes=(-2, -1)))
    return np.log1p(mag) if log_scale else mag


def joint_time_maps(activation: np.ndarray, layer: str, joints: int) -> np.ndarray:
    """Bring a hooked activation (batch dim removed) to ``[J, T, d]``."""
    if layer.startswith("temporal."):
        return np.asarray(unflatten_joints(Tensor(activation), joints).data)  # [C,T] -> [J,T,d]
    if layer.startswith("spatial."):
        return np.ascontiguousarray(np.transpose(activation, (1, 0, 2)))  # [T,J,d] -> [J,T,d]
    raise ConfigError(f"layer {layer!r} has no joint x time layout")


def select_channels(maps: np.ndarray, n: int = 4) -> list:
    """Indices of the ``n`` channels with the largest activation variance over (J, T)."""
    var = maps.reshape(-1, maps.shape[-1]).var(axis=0)
    order = np.argsort(-var, kind="stable")
    return [int(i) for i in order[:n]]


def feature_spectrum(maps: np.ndarray, channels=None, n: int = 4, layer: str = "",
                     log_scale: bool = False) -> SpectrumMap:
    """Spectra of selected channels of a ``[J, T, d]`` feature map."""
    if channels is None:
        channels = select_channels(maps, n)
    d = maps.shape[-1]
    for c in channels:
        if not 0 <= c < d:
            raise ConfigError(f"channel {c} out of range for {d} channels")
    stack = np.stack([maps[..., c] for c in channels])
    return SpectrumMap(fft2_magnitude(stack, log_scale), list(channels), layer)


def high_frequency_fraction(maps_jt: np.ndarray) -> float:
    """Share of spectral energy outside the central low-frequency quarter band.

    Each map is mean-centred first so the DC term does not swamp the ratio.
    The low band is the centred box spanning a quarter of the frequency range
    along each axis (|k_j| <= J/8 and |k_t| <= T/8).
    """
    x = np.asarray(maps_jt, dtype=np.float64)
    x = x - x.mean(axis=(-2, -1), keepdims=True)
    power = np.abs(np.fft.fft2(x)) ** 2
    J, T = x.shape[-2:]
    kj = np.abs(np.fft.fftfreq(J) * J)
    kt = np.abs(np.fft.fftfreq(T) * T)
    low = (kj[:, None] <= J / 8) & (kt[None, :] <= T / 8)
    total = power.sum()
    if total == 0:
        return 0.0
    return float(power[..., ~low].sum() / total)


def model_high_frequency_fraction(model, windows: np.ndarray, layer: str | None = None,
                                  n_channels: int = 4) -> float:
    """Mean high-frequency share over samples for the top-variance channels of ``layer``."""
    layer = layer or f"temporal.block{model.cfg.temporal_blocks - 1}"
    fracs = []
    from .numerics import no_grad
    for w in windows:
        hooks = {}
        with no_grad():
            model.forward(w[None], hooks)
        maps = joint_time_maps(hooks[layer].data[0], layer, model.cfg.joints)
        chans = select_channels(maps, n_channels)
        fracs.append(high_frequency_fraction(np.moveaxis(maps[..., chans], -1, 0)))
    return float(np.mean(fracs))


# -- Grad-CAM -------------------------------------------------------------------

def cam_from_gradients(activation: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    """Grad-CAM on ``[J, T, d]`` arrays.

    Channel weights are the gradient averaged over joints and frames; the
    weighted channel sum is rectified.
    """
    weights = gradient.mean(axis=(0, 1))
    return np.maximum(activation @ weights, 0.0)


def grad_cam(model, window: np.ndarray, reference: np.ndarray, layer: str | None = None,
             ) -> AttributionMap:
    """Attribution of ``cos(embedding(window), reference)`` to a hooked layer.

    ``layer`` defaults to the last temporal block.
    """
    layer = layer or f"temporal.block{model.cfg.temporal_blocks - 1}"
    valid = [h for h in model.hook_names() if h.startswith(("spatial.", "temporal."))]
    if layer not in valid:
        raise ConfigError(f"unknown layer {layer!r}; valid hooks: {', '.join(valid)}")
    hooks: dict = {}
    x = np.asarray(window, dtype=np.float64)[None]
    emb = model.forward(x, hooks)
    act = hooks[layer].retain_grad()
    score = ops.cosine_similarity(emb, Tensor(np.asarray(reference, dtype=np.float64)[None]))
    total = ops.sum(score)
    total.backward()
    grad = act.grad if act.grad is not None else np.zeros_like(act.data)
    model.zero_grad()
    a = joint_time_maps(act.data[0], layer, model.cfg.joints)
    g = joint_time_maps(grad[0], layer, model.cfg.joints)
    return AttributionMap(cam_from_gradients(a, g), layer, float(total.data))


# -- rendering --------------------------------------------------------------------

# "heat" palette: value 0 -> black, then purple, red, yellow, 1 -> white
PALETTES = {
    "heat": np.array([[0, 0, 0], [87, 16, 110], [188, 55, 84], [249, 142, 9], [252, 255, 164]],
                     dtype=np.float64),
    "gray": np.array([[0, 0, 0], [255, 255, 255]], dtype=np.float64),
}


def colorize(grid: np.ndarray, palette: str = "heat") -> np.ndarray:
    """Map a 2-D grid to uint8 RGB.

    Values are min-max scaled to [0, 1] (a constant grid maps to 0) and
    linearly interpolated between the palette's evenly spaced anchors.
    """
    if palette not in PALETTES:
        raise ConfigError(f"unknown palette {palette!r}; choose from {sorted(PALETTES)}")
    g = np.asarray(grid, dtype=np.float64)
    lo, hi = g.min(), g.max()
    u = (g - lo) / (hi - lo) if hi > lo else np.zeros_like(g)
    anchors = PALETTES[palette]
    pos = u * (len(anchors) - 1)
    i0 = np.clip(np.floor(pos).astype(int), 0, len(anchors) - 2)
    frac = (pos - i0)[..., None]
    rgb = anchors[i0] * (1 - frac) + anchors[i0 + 1] * frac
    return np.round(rgb).astype(np.uint8)


def render(grid: np.ndarray, path, palette: str = "heat", cell: int = 8) -> tuple[Path, Path]:
    """Write ``path`` (PNG, each grid cell a ``cell`` x ``cell`` block) and a ``.npy`` sidecar."""
    from PIL import Image

    path = Path(path)
    if not path.parent.is_dir():
        raise DataError(f"output directory {path.parent} does not exist")
    rgb = colorize(grid, palette)
    rgb = np.repeat(np.repeat(rgb, cell, axis=0), cell, axis=1)
    sidecar = path.with_suffix(".npy")
    try:
        Image.fromarray(rgb, mode="RGB").save(path, format="PNG", optimize=False)
        np.save(sidecar, np.asarray(grid, dtype=np.float64), allow_pickle=False)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path, sidecar
