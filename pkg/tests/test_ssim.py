import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from skimage.metrics import structural_similarity

from structmia.distortions import salt_pepper
from structmia.errors import ParameterError
from structmia.ssim import SsimParams, gaussian_window, ssim


def naive_ssim(x, y, size=11, sigma=1.5, k1=0.01, k2=0.03, L=1.0):
    """Window-by-window SSIM with explicit loops; independent of the vectorized path."""
    r = size // 2
    g = [[math.exp(-((i - r) ** 2 + (j - r) ** 2) / (2 * sigma**2)) for j in range(size)] for i in range(size)]
    z = sum(sum(row) for row in g)
    g = [[v / z for v in row] for row in g]
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    h, w, ch = x.shape
    per_channel = []
    for c in range(ch):
        vals = []
        for i in range(h - size + 1):
            for j in range(w - size + 1):
                mx = my = sxx = syy = sxy = 0.0
                for a in range(size):
                    for b in range(size):
                        wt = g[a][b]
                        xv, yv = x[i + a, j + b, c], y[i + a, j + b, c]
                        mx += wt * xv
                        my += wt * yv
                        sxx += wt * xv * xv
                        syy += wt * yv * yv
                        sxy += wt * xv * yv
                vx, vy, cov = sxx - mx * mx, syy - my * my, sxy - mx * my
                vals.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
        per_channel.append(sum(vals) / len(vals))
    return sum(per_channel) / len(per_channel)


def test_window_normalized():
    w = gaussian_window()
    assert w.shape == (11, 11)
    assert np.all(w > 0)
    assert abs(w.sum() - 1.0) <= 1e-12


def test_identity(rng):
    x = rng.random((32, 32, 3))
    assert abs(ssim(x, x) - 1.0) <= 1e-9


def test_constant_images_closed_form():
    x = np.full((16, 16, 1), 0.25)
    y = np.full((16, 16, 1), 0.75)
    expected = (2 * 0.25 * 0.75 + 1e-4) / (0.25**2 + 0.75**2 + 1e-4)
    assert expected == pytest.approx(0.60006, abs=1e-5)
    assert ssim(x, y) == pytest.approx(expected, abs=1e-12)


def test_matches_naive_double_loop_on_random_pairs():
    r = np.random.default_rng(2024)
    for _ in range(5):
        x = r.random((32, 32, 3))
        y = np.clip(x + 0.3 * r.normal(size=x.shape), 0, 1) if r.random() < 0.5 else r.random((32, 32, 3))
        assert abs(ssim(x, y) - naive_ssim(x, y)) <= 1e-7


def test_agrees_with_scikit_image(rng):
    x = rng.random((40, 36, 3))
    y = np.clip(x + 0.2 * rng.normal(size=x.shape), 0, 1)
    ref = structural_similarity(x, y, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                data_range=1.0, channel_axis=2)
    assert ssim(x, y) == pytest.approx(ref, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), noise=st.floats(0.0, 2.0))
def test_symmetry_and_bounds(seed, noise):
    r = np.random.default_rng(seed)
    x = r.random((16, 18, 3))
    y = np.clip(x + noise * r.normal(size=x.shape), 0, 1)
    a, b = ssim(x, y), ssim(y, x)
    assert a == b
    assert -1.0 <= a <= 1.0


def test_anticorrelated_is_negative():
    x = np.tile(np.linspace(0, 1, 32), (32, 1))[..., None]
    assert ssim(x, 1.0 - x) < 0


def test_inputs_are_clamped(rng):
    x = rng.random((16, 16, 3))
    assert ssim(x, x + 5.0) == ssim(x, np.ones_like(x))


def test_salt_pepper_strictly_lowers_ssim(small_dataset):
    for s in small_dataset.members + small_dataset.holdout:
        assert ssim(s.image, salt_pepper(s.image, 0.10, 0, s.id)) < ssim(s.image, s.image)


def test_errors(rng):
    with pytest.raises(ParameterError):
        ssim(rng.random((16, 16, 3)), rng.random((16, 17, 3)))
    with pytest.raises(ParameterError):
        ssim(rng.random((10, 10, 1)), rng.random((10, 10, 1)))
    with pytest.raises(ParameterError):
        ssim(rng.random((16, 16, 1)), rng.random((16, 16, 1)), SsimParams(window=17))
