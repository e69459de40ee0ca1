import dataclasses
import math

import numpy as np
import pytest

from gaitmixer import data as D
from gaitmixer.errors import ConfigError, NumericError
from gaitmixer.numerics import Tensor
from gaitmixer.train import (Adam, ScheduleConfig, TrainConfig, Trainer, linear_lr_scale,
                             one_cycle_lr, train)


def test_schedule_examples():
    cfg = ScheduleConfig(6e-3, 1000)
    assert one_cycle_lr(0, cfg) == pytest.approx(2.4e-4, abs=1e-18)
    assert one_cycle_lr(300, cfg) == pytest.approx(6e-3, abs=1e-18)
    assert abs(one_cycle_lr(1000, cfg) - 6e-7) < 1e-12
    assert one_cycle_lr(-5, cfg) == one_cycle_lr(0, cfg)
    assert one_cycle_lr(5000, cfg) == one_cycle_lr(1000, cfg)
    with pytest.raises(ConfigError):
        ScheduleConfig(pct_warmup=1.0)


@pytest.mark.parametrize("total", [10, 333, 2000])
def test_schedule_continuity_bound(total):
    # steepest point of a half-cosine ramp of height H over W steps is pi/2 * H/W
    cfg = ScheduleConfig(6e-3, total)
    lrs = np.array([one_cycle_lr(s, cfg) for s in range(total + 1)])
    warm = 0.3 * total
    bound = max(math.pi / 2 * (6e-3 - 6e-3 / 25) / warm,
                math.pi / 2 * (6e-3 - 6e-7) / (total - warm))
    assert np.max(np.abs(np.diff(lrs))) <= bound * (1 + 1e-9)
    assert lrs.argmax() == round(warm)


def param(values):
    return {"w": Tensor(np.array(values, dtype=np.float64), requires_grad=True)}


def test_adam_zero_grad_no_decay_is_noop():
    p = param([1.0, -2.0])
    opt = Adam(p)
    p["w"].grad = np.zeros(2)
    for _ in range(5):
        opt.step(1e-2, 0.0)
    assert p["w"].data.tolist() == [1.0, -2.0]


def test_adam_constant_gradient_step_approaches_lr():
    p = param([0.0])
    opt = Adam(p)
    prev = 0.0
    for _ in range(2000):
        p["w"].grad = np.array([0.37])
        opt.step(1e-3)
        step = prev - p["w"].data[0]
        prev = p["w"].data[0]
    assert step == pytest.approx(1e-3, rel=1e-6)


def test_weight_decay_zero_matches_pure_adam(rng):
    grads = rng.standard_normal((20, 3))
    out = []
    for decoupled in (True, False):
        p = param([0.5, 0.1, -0.3])
        opt = Adam(p, decoupled=decoupled)
        for g in grads:
            p["w"].grad = g
            opt.step(1e-2, 0.0)
        out.append(p["w"].data.copy())
    assert np.array_equal(*out)


def test_decoupled_decay_formula():
    p = param([2.0])
    opt = Adam(p)
    p["w"].grad = np.array([0.0])
    opt.step(0.1, 0.5)
    assert p["w"].data[0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_non_finite_gradient_skips_step():
    p = param([1.0])
    opt = Adam(p)
    p["w"].grad = np.array([np.nan])
    assert opt.step(0.1) is False
    assert p["w"].data[0] == 1.0 and opt.skipped == 1 and opt.step_count == 0


def small_setup(tiny_cfg, manifest, steps=6, **kw):
    tc = TrainConfig(steps=steps, p=2, k=4, **kw)
    return Trainer(manifest, tiny_cfg, tc, seed=5)


def test_same_seed_same_losses(tiny_cfg, small_manifest):
    a = small_setup(tiny_cfg, small_manifest).run()
    b = small_setup(tiny_cfg, small_manifest).run()
    assert [r["loss"] for r in a] == [r["loss"] for r in b]


def test_resume_replays_uninterrupted_run(tmp_path, tiny_cfg, small_manifest):
    full = small_setup(tiny_cfg, small_manifest, steps=6)
    full.run()
    part = small_setup(tiny_cfg, small_manifest, steps=6)
    part.run(steps=3)
    part.save(tmp_path / "half.gmx")
    resumed = small_setup(tiny_cfg, small_manifest, steps=6)
    resumed.restore(tmp_path / "half.gmx")
    resumed.run()
    assert resumed.step == 6
    for k, v in full.model.params.items():
        assert v.data.tobytes() == resumed.model.params[k].data.tobytes()
    assert [r["loss"] for r in full.history[3:]] == [r["loss"] for r in resumed.history]


def test_restore_rejects_conflicting_config(tmp_path, tiny_cfg, small_manifest):
    tr = small_setup(tiny_cfg, small_manifest, steps=1)
    tr.save(tmp_path / "c.gmx")
    other = Trainer(small_manifest, dataclasses.replace(tiny_cfg, d_model=4), TrainConfig(p=2, k=4))
    with pytest.raises(ConfigError):
        other.restore(tmp_path / "c.gmx")
    tr.model.save(tmp_path / "model_only.gmx")
    with pytest.raises(ConfigError, match="not a training checkpoint"):
        small_setup(tiny_cfg, small_manifest).restore(tmp_path / "model_only.gmx")


def test_too_many_subjects_is_config_error(tiny_cfg, small_manifest):
    with pytest.raises(ConfigError):
        Trainer(small_manifest, tiny_cfg, TrainConfig(p=74, k=4))


def test_nan_loss_aborts_with_dump(tmp_path, tiny_cfg, small_manifest):
    tr = Trainer(small_manifest, tiny_cfg, TrainConfig(steps=2, p=2, k=4), out_dir=tmp_path)
    tr.model.params["head.fc.bias"].data[:] = np.nan
    with pytest.raises(NumericError):
        tr.train_step()
    assert (tmp_path / "nan_batch_step0.npz").exists()


def test_log_records_and_checkpoints(tmp_path, tiny_cfg, small_manifest):
    tc = TrainConfig(steps=4, p=2, k=4, checkpoint_every=2)
    tr = train(small_manifest, tiny_cfg, tc, seed=1, out_dir=tmp_path)
    lines = (tmp_path / "train_log.jsonl").read_text().splitlines()
    assert len(lines) == 4 and '"triplets"' in lines[0] and '"lr"' in lines[0]
    assert (tmp_path / "checkpoint_000002.gmx").exists() and (tmp_path / "final.gmx").exists()
    assert tr.history[-1]["empty_mine_batches"] >= 0


@pytest.mark.slow
def test_smoke_two_subjects_loss_decreases(tiny_cfg):
    m = D.synthesize_gait(2, 4, np.random.default_rng(0))
    tr = Trainer(m, tiny_cfg, TrainConfig(steps=200, p=2, k=4), seed=0)
    hist = tr.run()
    first = np.mean([r["loss"] for r in hist[:10]])
    last = np.mean([r["loss"] for r in hist[-10:]])
    assert last < first


def test_linear_lr_scale():
    assert linear_lr_scale(74, 4) == 1.0
    assert linear_lr_scale(8, 4) == pytest.approx(32 / 296)


def test_train_config_round_trip():
    tc = TrainConfig(steps=7)
    assert TrainConfig.from_dict(tc.to_dict()) == tc
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"epochs": 3})
