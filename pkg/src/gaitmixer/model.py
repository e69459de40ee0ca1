"""Full network: spatial mixer -> temporal mixer -> head."""
from __future__ import annotations

import numpy as np

from .config import ModelConfig
from .errors import ConfigError, ShapeError
from .head import init_head_params, pool, project
from .numerics import Tensor, load_checkpoint, no_grad, save_checkpoint
from .spatial import init_spatial_params, spatial_forward, to_joint_major
from .temporal import init_temporal_params, temporal_forward


def init_params(cfg: ModelConfig, rng) -> dict:
    params: dict = {}
    init_spatial_params(cfg, rng, params)
    init_temporal_params(cfg, rng, params)
    init_head_params(cfg, rng, params)
    return params


class GaitMixer:
    """Parameters plus forward pass; also hosts the GaitFormer variant.

    ``forward`` takes normalised windows ``[B, T, J, 2]`` and returns unit
    embeddings ``[B, embed_dim]``. Pass a dict as ``hooks`` to capture the
    intermediate tensors listed by :meth:`hook_names`.
    """

    def __init__(self, cfg: ModelConfig, params: dict | None = None, seed: int = 0):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, np.random.default_rng(seed))
        expected = set(init_param_shapes(cfg))
        got = set(self.params)
        if expected != got:
            missing = sorted(expected - got)[:5]
            extra = sorted(got - expected)[:5]
            raise ConfigError(f"parameter paths do not match {cfg.variant} config "
                              f"(missing {missing}, unexpected {extra})")
        for name, shape in init_param_shapes(cfg).items():
            if self.params[name].shape != shape:
                raise ConfigError(f"{name}: shape {self.params[name].shape} != expected {shape}")

    def hook_names(self) -> list[str]:
        names = [f"spatial.block{i}" for i in range(self.cfg.spatial_blocks)]
        names += ["spatial.output"]
        names += [f"temporal.block{i}" for i in range(self.cfg.temporal_blocks)]
        names += ["head.hidden", "embedding"]
        return names

    def forward(self, x, hooks: dict | None = None) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 4 or x.shape[-1] != 2 or x.shape[-2] != self.cfg.joints:
            raise ShapeError(f"expected [B, T, {self.cfg.joints}, 2] input, got {x.shape}")
        y = spatial_forward(x, self.params, self.cfg, hooks)
        if hooks is not None:
            hooks["spatial.output"] = y
        z = to_joint_major(y)
        xt = temporal_forward(z, self.params, self.cfg, hooks)
        hidden = pool(xt, self.cfg.joints, self.cfg.d_model)
        emb = project(hidden, self.params)
        if hooks is not None:
            hooks["head.hidden"] = hidden
            hooks["embedding"] = emb
        return emb

    __call__ = forward

    def embed(self, windows: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Deterministic no-grad embeddings for a stack of windows."""
        windows = np.asarray(windows, dtype=np.float64)
        out = []
        with no_grad():
            for i in range(0, len(windows), batch_size):
                out.append(self.forward(windows[i:i + batch_size]).data)
        if not out:
            return np.zeros((0, self.cfg.embed_dim))
        return np.concatenate(out, axis=0)

    def parameters(self):
        return [self.params[k] for k in sorted(self.params)]

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def state_arrays(self) -> dict:
        return {f"model.{k}": v.data for k, v in self.params.items()}

    def save(self, path, extra_header: dict | None = None) -> None:
        header = {"kind": "model", "variant": self.cfg.variant, "model": self.cfg.to_dict()}
        header.update(extra_header or {})
        save_checkpoint(path, self.state_arrays(), header)

    @classmethod
    def from_arrays(cls, cfg: ModelConfig, arrays: dict) -> "GaitMixer":
        params = {k[len("model."):]: Tensor(v.copy(), requires_grad=True)
                  for k, v in arrays.items() if k.startswith("model.")}
        return cls(cfg, params)

    @classmethod
    def load(cls, path, cfg: ModelConfig | None = None) -> "GaitMixer":
        header, arrays = load_checkpoint(path)
        stored = ModelConfig.from_dict(header["model"])
        if cfg is not None and cfg != stored:
            raise ConfigError(f"{path}: checkpoint model config {stored} conflicts with {cfg}")
        return cls.from_arrays(stored, arrays)


def init_param_shapes(cfg: ModelConfig) -> dict:
    """Expected ``{path: shape}`` for a config, without allocating anything."""
    p: dict = {}
    init_spatial_params(cfg, None, p)
    init_temporal_params(cfg, None, p)
    init_head_params(cfg, None, p)
    return {k: v.shape for k, v in p.items()}
