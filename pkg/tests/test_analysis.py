import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from gaitmixer import analysis as A
from gaitmixer.errors import ConfigError, DataError
from gaitmixer.model import GaitMixer
from gaitmixer.numerics import Tensor, ops


def test_constant_map_is_all_dc():
    mag = A.fft2_magnitude(np.full((17, 60), 3.0))
    assert mag[17 // 2, 30] == pytest.approx(3.0 * 17 * 60)
    mag[17 // 2, 30] = 0.0
    assert np.max(mag) < 1e-9


@pytest.mark.parametrize("f", [1, 4, 7])
def test_sinusoid_peaks_at_plus_minus_f(f):
    T = 60
    x = np.tile(np.cos(2 * np.pi * f * np.arange(T) / T), (17, 1))
    mag = A.fft2_magnitude(x)
    peaks = sorted(zip(*np.nonzero(mag > 0.5 * mag.max())))
    assert peaks == [(8, 30 - f), (8, 30 + f)]


@given(st.integers(1, 20), st.integers(1, 70), st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_parseval_and_conjugate_symmetry(J, T, seed):
    x = np.random.default_rng(seed).standard_normal((J, T))
    mag = A.fft2_magnitude(x)
    assert np.all(mag >= 0)
    assert abs((mag ** 2).sum() / (J * T) - (x ** 2).sum()) < 1e-9 * max(1.0, (x ** 2).sum())
    F = np.fft.fft2(x)
    assert np.allclose(F[(-np.arange(J)) % J][:, (-np.arange(T)) % T], np.conj(F), atol=1e-10)


def test_log_scale_option():
    x = np.random.default_rng(0).standard_normal((5, 8))
    assert np.allclose(A.fft2_magnitude(x, log_scale=True), np.log1p(A.fft2_magnitude(x)))


def test_high_frequency_fraction_extremes():
    t = np.arange(60)
    slow = np.tile(np.cos(2 * np.pi * 2 * t / 60), (17, 1))
    assert A.high_frequency_fraction(slow) < 1e-20
    checker = (-1.0) ** (np.arange(16)[:, None] + t[None, :])
    assert A.high_frequency_fraction(checker) == pytest.approx(1.0)


def test_channel_selection_by_variance(rng):
    maps = rng.standard_normal((17, 60, 6)) * np.array([1, 5, 2, 9, 0.1, 3])
    assert A.select_channels(maps, 3) == [3, 1, 5]
    spec = A.feature_spectrum(maps, n=2)
    assert spec.channels == [3, 1] and spec.magnitudes.shape == (2, 17, 60)
    with pytest.raises(ConfigError):
        A.feature_spectrum(maps, channels=[6])


def test_cam_linear_toy_matches_hand_product(rng):
    act = rng.standard_normal((4, 6, 3))
    w = rng.standard_normal(3)
    a = Tensor(act, requires_grad=True)
    ops.sum(ops.mul(a, Tensor(w))).backward()
    cam = A.cam_from_gradients(act, a.grad)
    hand = np.maximum((act * w).sum(-1), 0.0)
    assert np.allclose(cam, hand, atol=1e-14)


def test_cam_zero_activation_and_gradient_cell(rng):
    act = rng.standard_normal((3, 5, 4))
    grad = rng.standard_normal((3, 5, 4))
    act[1, 2] = 0.0
    grad[1, 2] = 0.0
    assert A.cam_from_gradients(act, grad)[1, 2] == 0.0


@pytest.fixture(scope="module")
def model():
    from gaitmixer.config import ModelConfig
    cfg = ModelConfig(d_model=8, heads=2, spatial_blocks=1, temporal_blocks=2, kernel_size=7,
                      embed_dim=6)
    return GaitMixer(cfg, seed=4)


def test_grad_cam_shape_and_sign(model, rng):
    x = rng.uniform(0.2, 0.8, (60, 17, 2))
    ref = model.embed(rng.uniform(0.2, 0.8, (1, 60, 17, 2)))[0]
    for layer in (None, "spatial.block0", "temporal.block0"):
        cam = A.grad_cam(model, x, ref, layer)
        assert cam.grid.shape == (17, 60) and np.all(cam.grid >= 0)
    assert all(p.grad is None or not p.grad.any() for p in model.params.values())


def test_grad_cam_unknown_layer_lists_hooks(model, rng):
    with pytest.raises(ConfigError, match="temporal.block1"):
        A.grad_cam(model, rng.uniform(size=(60, 17, 2)), np.ones(6) / np.sqrt(6), "conv5")


def test_grad_cam_with_zero_gradients_is_zero(rng):
    from gaitmixer.config import ModelConfig
    m = GaitMixer(ModelConfig(d_model=8, heads=2, spatial_blocks=1, temporal_blocks=1,
                              kernel_size=7, embed_dim=6), seed=0)
    m.params["head.fc.weight"].data[...] = 0.0  # embedding no longer depends on features
    m.params["head.fc.bias"].data[...] = 1.0
    cam = A.grad_cam(m, rng.uniform(size=(60, 17, 2)), np.ones(6) / np.sqrt(6))
    assert not cam.grid.any()


def test_render_two_by_two(tmp_path):
    grid = np.array([[0.0, 1.0], [0.5, 0.25]])
    png, sidecar = A.render(grid, tmp_path / "g.png", palette="heat", cell=3)
    img = np.asarray(Image.open(png))
    assert img.shape == (6, 6, 3)
    heat = A.PALETTES["heat"]
    assert img[0, 0].tolist() == heat[0].tolist()
    assert img[0, 3].tolist() == heat[-1].tolist()
    assert img[3, 0].tolist() == heat[2].tolist()
    assert img[3, 3].tolist() == heat[1].tolist()
    assert np.all(img[:3, :3] == img[0, 0])
    assert np.array_equal(np.load(sidecar), grid)


def test_render_is_byte_identical(tmp_path, rng):
    grid = rng.standard_normal((17, 60))
    A.render(grid, tmp_path / "a.png")
    A.render(grid, tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    assert (tmp_path / "a.npy").read_bytes() == (tmp_path / "b.npy").read_bytes()
    assert np.load(tmp_path / "a.npy").tobytes() == grid.tobytes()


def test_render_constant_grid_and_bad_path(tmp_path):
    A.render(np.full((2, 2), 7.0), tmp_path / "c.png", palette="gray", cell=1)
    assert not np.asarray(Image.open(tmp_path / "c.png")).any()
    with pytest.raises(DataError):
        A.render(np.ones((2, 2)), tmp_path / "missing" / "x.png")
    with pytest.raises(ConfigError):
        A.colorize(np.ones((2, 2)), "rainbow")
