import math

import numpy as np
import pytest

from stubs import ConstantModel, NullModel
from structmia.denoiser import Condition, OracleDenoiser
from structmia.diffusion import (
    Trajectory,
    ddim_invert,
    ddim_invert_step,
    ddim_sample,
    ddim_sample_step,
    q_sample,
    reconstruct,
)
from structmia.errors import ParameterError
from structmia.imagecore import as_image
from structmia.schedule import linear_schedule

# Regression bound for member round trips under the oracle (t_total=100,
# interval=50); measured at ~1e-179 on the default preset.
ORACLE_MEMBER_ROUNDTRIP_BOUND = 1e-12


def test_q_sample_zero_noise(schedule, rng):
    x0 = rng.random((16, 16, 3))
    out = q_sample(x0, 200, np.zeros_like(x0), schedule)
    np.testing.assert_allclose(out, math.sqrt(schedule.ab(200)) * x0, atol=0)


def test_q_sample_closed_form_value():
    s = linear_schedule(2, 0.1, 0.1)  # alpha_bar_2 = 0.81
    out = q_sample(np.zeros((16, 16, 1)), 2, np.ones((16, 16, 1)), s)
    np.testing.assert_allclose(out, 0.4358898943540674, atol=1e-12)


def test_q_sample_limit_and_errors(schedule, rng):
    x0 = rng.random((16, 16, 3))
    eps = rng.normal(size=x0.shape)
    # t=0 excluded; smallest step is within sqrt(1 - ab_1) ~ 1e-2 of x0
    assert np.abs(q_sample(x0, 1, eps, schedule) - x0).max() < 0.06
    with pytest.raises(ParameterError):
        q_sample(x0, 0, eps, schedule)
    with pytest.raises(ParameterError):
        q_sample(x0, 10, eps[:8], schedule)


def test_invert_step_null_model(schedule, rng):
    x = rng.normal(size=(16, 16, 3))
    out = ddim_invert_step(x, 50, 100, NullModel(), schedule)
    np.testing.assert_allclose(out, math.sqrt(schedule.ab(100) / schedule.ab(50)) * x, atol=1e-15)


def test_invert_step_single_point_oracle(schedule, rng):
    x_star = rng.random((16, 16, 3))
    model = OracleDenoiser(x_star[None], [0], schedule)
    x_t = math.sqrt(schedule.ab(30)) * x_star
    out = ddim_invert_step(x_t, 30, 80, model, schedule)
    np.testing.assert_allclose(out, math.sqrt(schedule.ab(80)) * x_star, atol=1e-12)


def test_invert_step_hand_arithmetic():
    s = linear_schedule(4, 0.1, 0.1)  # ab_t = 0.9 ** t
    x = np.arange(16, dtype=float).reshape(4, 4, 1) / 16.0
    c = 0.3
    out = ddim_invert_step(x, 1, 3, ConstantModel(c), s)
    for (i, j), v in np.ndenumerate(x[:, :, 0]):
        pred_x0 = (v - math.sqrt(1 - 0.9) * c) / math.sqrt(0.9)
        expected = math.sqrt(0.729) * pred_x0 + math.sqrt(1 - 0.729) * c
        assert out[i, j, 0] == pytest.approx(expected, abs=1e-14)


def test_step_preconditions(schedule, rng):
    x = rng.random((16, 16, 3))
    with pytest.raises(ParameterError):
        ddim_invert_step(x, 50, 50, NullModel(), schedule)
    with pytest.raises(ParameterError):
        ddim_sample_step(x, 50, 60, NullModel(), schedule)


@pytest.mark.parametrize("t_total,interval,expected", [(100, 50, [0, 50, 100]), (50, 50, [0, 50]),
                                                       (200, 50, [0, 50, 100, 150, 200])])
def test_inversion_grid(schedule, rng, t_total, interval, expected):
    traj = ddim_invert(rng.random((16, 16, 3)), t_total, interval, NullModel(), schedule)
    assert traj.timesteps == expected
    assert traj.n_queries == len(expected) - 1
    assert traj.direction == "forward"


def test_two_hundred_over_fifty_is_four_queries(schedule, rng):
    assert ddim_invert(rng.random((16, 16, 3)), 200, 50, NullModel(), schedule).n_queries == 4


def test_non_divisible_interval(schedule, rng):
    with pytest.raises(ParameterError):
        ddim_invert(rng.random((16, 16, 3)), 100, 30, NullModel(), schedule)


def test_trajectory_ordering_enforced(rng):
    x = rng.random((16, 16, 3))
    with pytest.raises(ParameterError):
        Trajectory(((0, x), (0, x)), "forward")
    with pytest.raises(ParameterError):
        Trajectory(((0, x), (10, x)), "backward")


def test_sample_step_null_model(schedule, rng):
    x = rng.normal(size=(16, 16, 3))
    out = ddim_sample_step(x, 100, 50, NullModel(), schedule)
    np.testing.assert_allclose(out, math.sqrt(schedule.ab(50) / schedule.ab(100)) * x, atol=1e-15)


@pytest.mark.parametrize("t,t_next", [(0, 50), (50, 100), (10, 900)])
def test_sample_inverts_invert_for_state_independent_eps(schedule, rng, t, t_next):
    x = rng.random((16, 16, 3))
    model = ConstantModel(rng.normal(size=(16, 16, 3)))
    fwd = ddim_invert_step(x, t, t_next, model, schedule)
    back = ddim_sample_step(fwd, t_next, t, model, schedule)
    np.testing.assert_allclose(back, x, atol=1e-6)


@pytest.mark.parametrize("interval", [1, 10, 20, 50, 100])
def test_null_model_telescoping(schedule, rng, interval):
    x0 = rng.random((16, 16, 3))
    end = ddim_invert(x0, 100, interval, NullModel(), schedule).endpoint
    np.testing.assert_allclose(end, math.sqrt(schedule.ab(100)) * x0, atol=1e-9)


def test_oracle_member_roundtrip_regression(schedule, small_dataset):
    ds = small_dataset
    model = OracleDenoiser(ds.member_images(), ds.member_labels(), schedule, ds.k_classes)
    for s in ds.members:
        cond = Condition(s.label)
        fwd = ddim_invert(s.image, 100, 50, model, schedule, cond)
        back = ddim_sample(fwd.endpoint, 100, 50, model, schedule, cond)
        assert back.timesteps == [100, 50, 0]
        assert np.abs(back.endpoint - s.image).max() < ORACLE_MEMBER_ROUNDTRIP_BOUND


def test_reconstruct_single_point(schedule, rng):
    x_star = as_image(rng.random((16, 16, 3)))
    model = OracleDenoiser(x_star[None], [0], schedule)
    np.testing.assert_allclose(reconstruct(x_star, 100, 50, model, schedule), x_star, atol=1e-6)


def test_reconstruct_one_step_is_near_identity(schedule, rng):
    x0 = as_image(rng.random((16, 16, 3)))
    out = reconstruct(x0, 50, 50, ConstantModel(0.1), schedule)
    np.testing.assert_allclose(out, x0, atol=1e-9)
    assert out.min() >= 0 and out.max() <= 1


def test_determinism(schedule, small_dataset):
    ds = small_dataset
    model = OracleDenoiser(ds.member_images(), ds.member_labels(), schedule, ds.k_classes)
    x = ds.holdout[0].image
    a = ddim_invert(x, 100, 50, model, schedule, Condition(0), 2.0).endpoint
    b = ddim_invert(x, 100, 50, model, schedule, Condition(0), 2.0).endpoint
    assert np.array_equal(a, b)
