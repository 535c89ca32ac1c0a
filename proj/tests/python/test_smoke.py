import math

import numpy as np
import pytest

import rwkvir


def test_complexity_of_constant_and_stripes():
    assert rwkvir.complexity(np.full((8, 8, 3), 77.0)) == -1.0
    stripes = np.zeros((8, 8))
    stripes[:, 1::2] = 255
    assert rwkvir.complexity(stripes, levels=2, offsets=[(0, 1)]) == pytest.approx(1.5)
    assert rwkvir.complexity(stripes, levels=2) == pytest.approx(2.25)


def test_psnr_and_ssim():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 256, size=(16, 16, 3)).astype(np.float64)
    assert math.isinf(rwkvir.psnr(a, a))
    assert rwkvir.ssim(a, a) == pytest.approx(1.0)
    b = a.copy()
    b[0, 0, 0] += 1.0
    expected = 10 * math.log10(255.0**2 / (1.0 / a.size))
    assert rwkvir.psnr(a, b) == pytest.approx(expected)
    with pytest.raises(rwkvir.DimensionError):
        rwkvir.psnr(a, a[:8])


def test_biwkv_scan_matches_reference():
    rng = np.random.default_rng(1)
    k = rng.normal(size=(33, 4))
    v = rng.normal(size=(33, 4))
    w = np.linspace(0.3, 1.3, 4)
    u = rng.normal(size=4)
    out = rwkvir.biwkv(k, v, w, u)
    assert out.shape == (33, 4)
    np.testing.assert_allclose(out, rwkvir.biwkv_reference(k, v, w, u), rtol=1e-10, atol=1e-12)
    assert np.all(out <= v.max(axis=0) + 1e-12)
    assert np.all(out >= v.min(axis=0) - 1e-12)


def test_bicubic_and_synth_corpus():
    imgs = rwkvir.synth_corpus(7, 5, 32)
    assert len(imgs) == 5
    assert imgs[0].dtype == np.uint8 and imgs[0].shape == (32, 32, 3)
    again = rwkvir.synth_corpus(7, 5, 32)
    assert all(np.array_equal(x, y) for x, y in zip(imgs, again))
    flat = np.full((10, 12, 3), 40.0)
    up = rwkvir.bicubic_resize(flat, 2, 1)
    assert up.shape == (20, 24, 3)
    np.testing.assert_allclose(up, 40.0, atol=1e-12)


def test_model_and_presets():
    m = rwkvir.build_model("toy", seed=0)
    assert m.parameter_count == 31991
    out = m.restore(np.full((12, 12, 3), 128.0))
    assert out.shape == (24, 24, 3) and out.dtype == np.uint8
    names = [p["name"] for p in rwkvir.benchmark_presets()]
    assert names == ["classic-sr", "light-sr", "denoise"]
    with pytest.raises(rwkvir.ConfigError):
        rwkvir.build_model("no-such-preset")
    with pytest.raises(rwkvir.IoError):
        rwkvir.load_checkpoint("/nonexistent/model.ckpt")


def test_pearson_errors():
    assert rwkvir.pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    with pytest.raises(rwkvir.UndefinedCorrelationError):
        rwkvir.pearson([1, 1, 1], [1, 2, 3])
