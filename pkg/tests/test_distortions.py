import numpy as np
import pytest

from structmia.distortions import (DEFAULT_SPECS, KINDS, DistortionSpec, brighten, brightness_jitter,
                                   rotate, rotate10ccw, salt_pepper, saturate, saturation_jitter)
from structmia.errors import ParameterError


def test_zero_fraction_is_identity(rng):
    x = rng.random((32, 32, 3))
    assert np.array_equal(salt_pepper(x, 0.0, 0, 1), x)


def test_full_fraction_is_binary(rng):
    y = salt_pepper(rng.random((32, 32, 3)), 1.0, 0, 1)
    assert set(np.unique(y)) <= {0.0, 1.0}
    # every channel of a hit pixel takes the same value
    assert np.all(y.min(axis=2) == y.max(axis=2))


def test_exact_count_on_32x32():
    x = np.full((32, 32, 3), 0.5)
    y = salt_pepper(x, 0.10, 3, 17)
    assert int(np.any(y != 0.5, axis=2).sum()) == 102


def test_salt_pepper_deterministic_per_id(rng):
    x = rng.random((32, 32, 3))
    assert np.array_equal(salt_pepper(x, 0.1, 0, 5), salt_pepper(x, 0.1, 0, 5))
    assert not np.array_equal(salt_pepper(x, 0.1, 0, 5), salt_pepper(x, 0.1, 0, 6))


def test_rotation_leaves_black_corners():
    y = rotate(np.ones((32, 32, 3)), 10.0)
    for r, c in ((0, 0), (0, 31), (31, 0), (31, 31)):
        assert np.all(y[r, c] < 0.5)
    assert np.all(y[16, 16] == 1.0)


def test_four_rotations_are_not_identity(rng):
    x = rng.random((32, 32, 3))
    y = x
    for _ in range(4):
        y = rotate10ccw(y)
    assert not np.allclose(y, x, atol=1e-3)


def test_quarter_turns_compose_to_identity(rng):
    x = rng.random((32, 32, 3))
    y = x
    for _ in range(4):
        y = rotate(y, 90.0)
    assert np.allclose(y, x, atol=1e-9)


def test_rotation_direction_is_counterclockwise():
    x = np.zeros((33, 33, 1))
    x[16, 28] = 1.0  # right of centre
    y = rotate(x, 90.0)
    assert y[4, 16, 0] == pytest.approx(1.0)  # now above centre


def test_disk_interior_preserved():
    yy, xx = np.mgrid[0:32, 0:32]
    d = np.hypot(yy - 15.5, xx - 15.5)
    x = np.repeat((d < 10).astype(float)[..., None], 3, axis=2)
    y = rotate(x, 10.0)
    inner = d < 8
    assert np.max(np.abs(y[inner] - x[inner])) <= 1e-2


def test_saturation_of_pure_red():
    x = np.zeros((16, 16, 3))
    x[..., 0] = 1.0
    y = saturate(x, 0.5)
    assert np.allclose(y[0, 0], [0.6495, 0.1495, 0.1495], atol=1e-12)


def test_saturation_keeps_gray(rng):
    g = np.repeat(rng.random((16, 16, 1)), 3, axis=2)
    assert np.allclose(saturate(g, 1.5), g, atol=1e-12)
    assert np.allclose(saturation_jitter(g, 0.5, 0, 3), g, atol=1e-12)


def test_saturation_needs_rgb():
    with pytest.raises(ParameterError):
        saturate(np.zeros((16, 16, 1)), 0.5)


def test_brightness_gain_and_clip():
    assert np.all(brighten(np.full((16, 16, 3), 0.8), 1.5) == 1.0)
    assert np.allclose(brighten(np.full((16, 16, 3), 0.4), 0.5), 0.2)


def test_black_and_unit_factor_unchanged(rng):
    assert np.all(brightness_jitter(np.zeros((16, 16, 3)), 0.5, 0, 1) == 0)
    x = rng.random((16, 16, 3))
    assert np.allclose(saturate(x, 1.0), x, atol=1e-12)
    assert np.array_equal(brighten(x, 1.0), x)


def test_jitter_signs_cover_both_directions():
    x = np.full((16, 16, 3), 0.4)
    vals = {round(float(brightness_jitter(x, 0.5, 0, i)[0, 0, 0]), 6) for i in range(32)}
    assert vals == {0.2, 0.6}


@pytest.mark.parametrize("kind", KINDS)
def test_spec_apply_deterministic_and_valid(kind, rng):
    x = rng.random((32, 32, 3))
    spec = DistortionSpec(kind, DEFAULT_SPECS[kind], seed=4)
    a, b = spec.apply(x, 9), spec.apply(x, 9)
    assert np.array_equal(a, b)
    assert a.shape == x.shape and a.min() >= 0 and a.max() <= 1
    assert not np.array_equal(a, x)


@pytest.mark.parametrize("kind,mag", [("salt_pepper", 1.5), ("brightness", -0.1), ("blur", 0.1)])
def test_spec_rejects_bad(kind, mag):
    with pytest.raises(ParameterError):
        DistortionSpec(kind, mag)
