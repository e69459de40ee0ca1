"""Adam(W) with a one-cycle schedule, and the training loop."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .data import AugmentPolicy, DatasetManifest, augment, epoch_batches, normalize
from .errors import ConfigError, NumericError
from .metric import LossConfig, mine, triplet_loss
from .model import GaitMixer
from .numerics import load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

REFERENCE_BATCH = (74, 4)


@dataclass(frozen=True)
class ScheduleConfig:
    max_lr: float = 6e-3
    total_steps: int = 1000
    pct_warmup: float = 0.3
    div_start: float = 25.0
    div_final: float = 1e4

    def __post_init__(self):
        if not 0.0 < self.pct_warmup < 1.0:
            raise ConfigError("pct_warmup must lie strictly between 0 and 1")
        if self.total_steps < 1 or self.max_lr <= 0:
            raise ConfigError("total_steps and max_lr must be positive")


def one_cycle_lr(step: int, cfg: ScheduleConfig) -> float:
    """Cosine rise from max_lr/div_start to max_lr, then cosine fall to max_lr/div_final.

    Steps outside ``[0, total_steps]`` are clamped.
    """
    step = min(max(step, 0), cfg.total_steps)
    lo = cfg.max_lr / cfg.div_start
    end = cfg.max_lr / cfg.div_final
    warm = cfg.pct_warmup * cfg.total_steps
    if step <= warm:
        frac = step / warm
        return lo + (cfg.max_lr - lo) * (1.0 - math.cos(math.pi * frac)) / 2.0
    frac = (step - warm) / (cfg.total_steps - warm)
    return end + (cfg.max_lr - end) * (1.0 + math.cos(math.pi * frac)) / 2.0


class Adam:
    """Bias-corrected Adam with decoupled weight decay.

    ``decoupled=False`` switches to classic L2 (``wd * param`` added to the
    gradient) for ablations.
    """

    def __init__(self, params: dict, beta1=0.9, beta2=0.999, eps=1e-8, decoupled=True):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.decoupled = decoupled
        self.step_count = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.skipped = 0

    def step(self, lr: float, weight_decay: float = 0.0) -> bool:
        """Apply one update from the ``.grad`` buffers. Returns False if skipped."""
        grads = {}
        for k, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                self.skipped += 1
                log.warning("non-finite gradient in %s; optimizer step %d skipped",
                            k, self.step_count + 1)
                return False
            grads[k] = g
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for k, p in self.params.items():
            g = grads[k]
            if weight_decay and not self.decoupled:
                g = g + weight_decay * p.data
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            if weight_decay and self.decoupled:
                p.data -= lr * weight_decay * p.data
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return True

    def state_arrays(self) -> dict:
        out = {}
        for k in self.params:
            out[f"optim.m.{k}"] = self.m[k]
            out[f"optim.v.{k}"] = self.v[k]
        return out

    def load_state(self, arrays: dict, step_count: int) -> None:
        for k in self.params:
            self.m[k] = np.array(arrays[f"optim.m.{k}"], dtype=np.float64)
            self.v[k] = np.array(arrays[f"optim.v.{k}"], dtype=np.float64)
        self.step_count = int(step_count)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1000
    p: int = 8
    k: int = 4
    max_lr: float = 6e-3
    # multiplies max_lr; the CLI's "auto" sets (p*k)/(74*4), linear batch scaling
    lr_scale: float = 1.0
    pct_warmup: float = 0.3
    div_start: float = 25.0
    div_final: float = 1e4
    weight_decay: float = 1e-5
    decoupled_weight_decay: bool = True
    margin: float = 0.2
    miner_epsilon: float = 0.1
    frames: int = 60
    width: float = 320.0
    checkpoint_every: int = 0
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)

    def schedule(self) -> ScheduleConfig:
        return ScheduleConfig(self.max_lr * self.lr_scale, self.steps, self.pct_warmup,
                              self.div_start, self.div_final)

    def loss(self) -> LossConfig:
        return LossConfig(self.margin, self.miner_epsilon)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        if isinstance(d.get("augment"), dict):
            d["augment"] = AugmentPolicy.from_dict(d["augment"])
        return cls(**d)


def linear_lr_scale(p: int, k: int) -> float:
    return (p * k) / (REFERENCE_BATCH[0] * REFERENCE_BATCH[1])


class Trainer:
    """Deterministic training loop.

    All randomness is derived from ``seed`` and the step number, so a run
    resumed from a checkpoint replays the uninterrupted trajectory bit for
    bit: model init uses ``(seed, 0)``, epoch ``e``'s batch order uses
    ``(seed, 1, e)`` and step ``s``'s augmentation uses ``(seed, 2, s)``.
    """

    def __init__(self, manifest: DatasetManifest, model_cfg: ModelConfig, train_cfg: TrainConfig,
                 seed: int = 0, records=None, out_dir=None, model: GaitMixer | None = None):
        self.model_cfg = model_cfg
        self.cfg = train_cfg
        self.seed = int(seed)
        if records is None:
            # no split defined: every subject is a training subject
            records = manifest.train_records() if manifest.train_subjects else manifest.records
        self.records = list(records)
        if not self.records:
            raise ConfigError("no training sequences in manifest")
        self.manifest = manifest
        self.labels = [r.subject for r in self.records]
        if train_cfg.p > len(set(self.labels)):
            raise ConfigError(f"batch needs p={train_cfg.p} subjects, manifest has "
                              f"{len(set(self.labels))}")
        if train_cfg.frames != model_cfg.frames:
            raise ConfigError("train.frames must equal model.frames")
        self.sequences = [normalize(manifest.load(r), train_cfg.width) for r in self.records]
        self.model = model or GaitMixer(model_cfg, seed=self.seed)
        self.optim = Adam(self.model.params, decoupled=train_cfg.decoupled_weight_decay)
        self.sched = train_cfg.schedule()
        self.loss_cfg = train_cfg.loss()
        self.step = 0
        self.history: list[dict] = []
        self.empty_batches = 0
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self._epoch_cache: tuple[int, list] | None = None
        n_subj = len(set(self.labels))
        self.steps_per_epoch = -(-n_subj // train_cfg.p)

    # -- batches ------------------------------------------------------------
    def batch_indices(self, step: int) -> list:
        epoch, pos = divmod(step, self.steps_per_epoch)
        if self._epoch_cache is None or self._epoch_cache[0] != epoch:
            rng = np.random.default_rng([self.seed, 1, epoch])
            self._epoch_cache = (epoch, epoch_batches(self.labels, self.cfg.p, self.cfg.k, rng))
        return self._epoch_cache[1][pos]

    def make_batch(self, step: int):
        idx = self.batch_indices(step)
        rng = np.random.default_rng([self.seed, 2, step])
        wins = [augment(self.sequences[i], rng, self.cfg.augment, self.cfg.frames).window
                for i in idx]
        return np.stack(wins), np.array([self.labels[i] for i in idx]), idx

    # -- loop ---------------------------------------------------------------
    def train_step(self) -> dict:
        step = self.step
        x, labels, idx = self.make_batch(step)
        self.model.zero_grad()
        emb = self.model.forward(x)
        triplets = mine(emb, labels, self.loss_cfg)
        if len(triplets) == 0:
            self.empty_batches += 1
        loss = triplet_loss(emb, triplets, self.loss_cfg)
        lval = float(loss.data)
        if not math.isfinite(lval):
            self._dump_bad_batch(step, x, labels, idx)
            raise NumericError(f"non-finite loss at step {step}")
        loss.backward()
        lr = one_cycle_lr(step, self.sched)
        applied = self.optim.step(lr, self.cfg.weight_decay)
        self.step += 1
        rec = {"step": step, "loss": lval, "lr": lr, "triplets": len(triplets),
               "empty_mine_batches": self.empty_batches, "applied": applied}
        self.history.append(rec)
        return rec

    def run(self, steps: int | None = None, log_path=None, callback=None) -> list:
        """Train until ``steps`` total steps (default: the configured budget)."""
        target = self.cfg.steps if steps is None else steps
        fh = open(log_path, "a", encoding="utf-8") if log_path else None
        try:
            while self.step < target:
                rec = self.train_step()
                if fh:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
                    fh.flush()
                if callback:
                    callback(rec)
                every = self.cfg.checkpoint_every
                if every and self.out_dir is not None and self.step % every == 0:
                    self.save(self.out_dir / f"checkpoint_{self.step:06d}.gmx")
        finally:
            if fh:
                fh.close()
        return self.history

    def _dump_bad_batch(self, step, x, labels, idx):
        if self.out_dir is None:
            return
        path = self.out_dir / f"nan_batch_step{step}.npz"
        np.savez(path, windows=x, labels=labels, indices=np.asarray(idx))
        log.error("non-finite loss at step %d; batch written to %s", step, path)

    # -- checkpoints ----------------------------------------------------------
    def header(self) -> dict:
        return {"kind": "training", "variant": self.model_cfg.variant,
                "model": self.model_cfg.to_dict(), "train": self.cfg.to_dict(),
                "seed": self.seed, "step": self.step, "optim_step": self.optim.step_count,
                "empty_mine_batches": self.empty_batches,
                "skipped_steps": self.optim.skipped}

    def save(self, path) -> Path:
        arrays = dict(self.model.state_arrays())
        arrays.update(self.optim.state_arrays())
        save_checkpoint(path, arrays, self.header())
        return Path(path)

    def restore(self, path) -> None:
        header, arrays = load_checkpoint(path)
        stored = ModelConfig.from_dict(header["model"])
        if stored != self.model_cfg:
            raise ConfigError(f"{path}: checkpoint was trained with a different model config "
                              f"({stored.variant}, d_model={stored.d_model})")
        if header.get("kind") != "training":
            raise ConfigError(f"{path}: not a training checkpoint (no optimizer state)")
        if int(header["seed"]) != self.seed:
            raise ConfigError(f"{path}: checkpoint seed {header['seed']} != run seed {self.seed}")
        for k, p in self.model.params.items():
            p.data = np.array(arrays[f"model.{k}"], dtype=np.float64)
        self.optim = Adam(self.model.params, decoupled=self.cfg.decoupled_weight_decay)
        self.optim.load_state(arrays, header["optim_step"])
        self.optim.skipped = int(header.get("skipped_steps", 0))
        self.step = int(header["step"])
        self.empty_batches = int(header.get("empty_mine_batches", 0))


def train(manifest: DatasetManifest, model_cfg: ModelConfig, train_cfg: TrainConfig, seed: int = 0,
          out_dir=None, records=None, resume=None) -> Trainer:
    """Run a full training job; writes ``final.gmx`` and ``train_log.jsonl`` into ``out_dir``."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    tr = Trainer(manifest, model_cfg, train_cfg, seed, records=records, out_dir=out)
    if resume is not None:
        tr.restore(resume)
    tr.run(log_path=(out / "train_log.jsonl") if out is not None else None)
    if out is not None:
        tr.save(out / "final.gmx")
    return tr
