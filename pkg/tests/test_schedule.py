import numpy as np
import pytest

from structmia.errors import ParameterError
from structmia.schedule import linear_schedule


def test_two_step_constant_beta():
    s = linear_schedule(2, 0.1, 0.1)
    assert s.ab(0) == 1.0
    assert s.ab(1) == pytest.approx(0.9, abs=1e-15)
    assert s.ab(2) == pytest.approx(0.81, abs=1e-15)


def test_alpha_bar_matches_product_loop():
    s = linear_schedule(1000, 1e-4, 0.02)
    prod = 1.0
    for t in range(1, 1001):
        beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / 999
        prod *= 1.0 - beta
        assert abs(s.ab(t) - prod) <= 1e-12 * prod
    assert s.ab(1000) == pytest.approx(4.0358e-05, rel=1e-3)


def test_default_invariants():
    s = linear_schedule()
    assert s.t_max == 1000
    assert np.all((s.beta > 0) & (s.beta < 1))
    assert np.all(np.diff(s.beta) >= 0)
    assert s.alpha_bar[0] == 1.0
    assert np.all(np.diff(s.alpha_bar) < 0)
    snr = [s.snr(t) for t in range(1, 1001)]
    assert all(a > b for a, b in zip(snr, snr[1:]))


def test_endpoints_inclusive():
    s = linear_schedule(10, 0.001, 0.01)
    assert s.beta[0] == 0.001 and s.beta[-1] == 0.01


@pytest.mark.parametrize("args", [(1, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)])
def test_bad_parameters(args):
    with pytest.raises(ParameterError):
        linear_schedule(*args)


def test_timestep_out_of_range():
    with pytest.raises(ParameterError):
        linear_schedule(10).ab(11)
