import numpy as np
import pytest

from stubs import NullModel
from structmia.analysis import (CurvePoint, decrease_rate_curve, delta_ssim_curve, mean_ssim_curve, peak,
                                ssim_trace)
from structmia.denoiser import OracleDenoiser
from structmia.errors import ParameterError
from structmia.imagecore import gen_shapes_dataset


def test_black_images_have_flat_ssim(schedule):
    black = [np.zeros((16, 16, 3))] * 2
    curve = decrease_rate_curve(black, NullModel(), schedule, t_grid=[0, 50, 100], dt=50)
    assert [p.value for p in curve] == [0.0, 0.0, 0.0]


def test_single_point_oracle_is_monotone(schedule, small_dataset):
    x = small_dataset.members[0].image
    model = OracleDenoiser([x], [0], schedule)
    curve = decrease_rate_curve([x], model, schedule)
    assert all(p.value <= 0 for p in curve)


def test_trace_starts_at_one(schedule, small_dataset):
    model = OracleDenoiser(small_dataset.member_images(), small_dataset.member_labels(), schedule)
    tr = ssim_trace(small_dataset.holdout[0].image, model, schedule, [0, 100, 300])
    assert tr[0] == pytest.approx(1.0)
    assert set(tr) == {0, 100, 300}


def test_identical_sets_give_zero_gap(schedule, small_dataset):
    model = OracleDenoiser(small_dataset.member_images(), small_dataset.member_labels(), schedule)
    imgs = small_dataset.member_images()
    d = delta_ssim_curve(imgs, imgs, model, schedule, t_grid=[0, 100, 200])
    assert all(p.value == 0.0 for p in d)


def test_gap_is_antisymmetric(schedule, small_dataset):
    model = OracleDenoiser(small_dataset.member_images(), small_dataset.member_labels(), schedule)
    m = small_dataset.member_images()
    h = [s.image for s in small_dataset.holdout]
    a = delta_ssim_curve(m, h, model, schedule, t_grid=[50, 100])
    b = delta_ssim_curve(h, m, model, schedule, t_grid=[50, 100])
    assert [p.value for p in a] == [-p.value for p in b]
    assert all(p.value > 0 for p in a)


def test_mean_curve_deterministic(schedule, small_dataset):
    model = OracleDenoiser(small_dataset.member_images(), small_dataset.member_labels(), schedule)
    imgs = small_dataset.member_images()
    assert mean_ssim_curve(imgs, model, schedule, [50, 150]) == mean_ssim_curve(imgs, model, schedule, [50, 150])


def test_peak_prefers_earliest_tie():
    assert peak([CurvePoint(0, 1.0), CurvePoint(50, 2.0), CurvePoint(100, 2.0)]) == CurvePoint(50, 2.0)


def test_errors(schedule):
    with pytest.raises(ParameterError):
        decrease_rate_curve([], NullModel(), schedule)
    with pytest.raises(ParameterError):
        decrease_rate_curve([np.zeros((16, 16, 3))], NullModel(), schedule, t_grid=[980], dt=50)
    with pytest.raises(ParameterError):
        delta_ssim_curve([], [np.zeros((16, 16, 3))], NullModel(), schedule)


@pytest.mark.slow
def test_default_preset_member_decline_rises_then_falls(schedule):
    ds = gen_shapes_dataset(128, 128, 32, 4, seed=0)
    model = OracleDenoiser(ds.member_images(), ds.member_labels(), schedule, 4)
    v = np.array([p.value for p in decrease_rate_curve(ds.member_images(), model, schedule,
                                                       labels=ds.member_labels())])
    assert np.all(v < 0)
    mag = -v
    k = int(np.argmax(mag))
    assert 0 < k < len(mag) - 1
    assert np.all(np.diff(mag[: k + 1]) >= 0) and np.all(np.diff(mag[k:]) <= 0)
