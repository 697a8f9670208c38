"""SSIM evolution along DDIM inversion: decrease rate and member/holdout gap."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .denoiser import UNCONDITIONAL, Condition, EpsilonModel
from .diffusion import ddim_invert
from .errors import ParameterError
from .imagecore import clamp_image
from .schedule import Schedule
from .ssim import ssim

DEFAULT_GRID = tuple(range(0, 801, 50))
DEFAULT_DT = 50


@dataclass(frozen=True)
class CurvePoint:
    t: int
    value: float


def _conditions(n: int, labels) -> list[Condition]:
    if labels is None:
        return [UNCONDITIONAL] * n
    if len(labels) != n:
        raise ParameterError("one label per image required")
    return [Condition(int(c)) for c in labels]


def ssim_trace(x0, model: EpsilonModel, schedule: Schedule, ts, cond: Condition = UNCONDITIONAL,
               gamma: float = 1.0) -> dict[int, float]:
    """SSIM(x0, clamp(x_t)) for each requested t along one inversion trajectory."""
    ts = sorted(set(int(t) for t in ts))
    if ts[0] < 0 or ts[-1] > schedule.t_max:
        raise ParameterError(f"timesteps must lie in [0, {schedule.t_max}]")
    if ts[-1] == 0:
        return {0: ssim(x0, x0)}
    step = reduce(math.gcd, ts)
    traj = ddim_invert(x0, ts[-1], step, model, schedule, cond, gamma)
    return {t: ssim(x0, clamp_image(traj.state(t))) for t in ts}


def mean_ssim_curve(images, model: EpsilonModel, schedule: Schedule, ts, labels=None,
                    gamma: float = 1.0) -> dict[int, float]:
    images = list(images)
    if not images:
        raise ParameterError("need at least one image")
    traces = [ssim_trace(x, model, schedule, ts, c, gamma)
              for x, c in zip(images, _conditions(len(images), labels))]
    return {t: float(np.mean([tr[t] for tr in traces])) for t in traces[0]}


def decrease_rate_curve(images, model: EpsilonModel, schedule: Schedule, t_grid=DEFAULT_GRID,
                        dt: int = DEFAULT_DT, labels=None, gamma: float = 1.0) -> list[CurvePoint]:
    """Finite-difference slope of mean SSIM: (S(t + dt) - S(t)) / dt."""
    if dt < 1:
        raise ParameterError("dt must be >= 1")
    t_grid = [int(t) for t in t_grid]
    if any(t + dt > schedule.t_max for t in t_grid):
        raise ParameterError("every grid point needs t + dt <= t_max")
    curve = mean_ssim_curve(images, model, schedule, set(t_grid) | {t + dt for t in t_grid}, labels, gamma)
    return [CurvePoint(t, (curve[t + dt] - curve[t]) / dt) for t in t_grid]


def delta_ssim_curve(members, holdout, model: EpsilonModel, schedule: Schedule, t_grid=DEFAULT_GRID,
                     member_labels=None, holdout_labels=None, gamma: float = 1.0) -> list[CurvePoint]:
    """Mean member SSIM minus mean holdout SSIM at each grid step."""
    members, holdout = list(members), list(holdout)
    if not members or not holdout:
        raise ParameterError("member and holdout lists must be non-empty")
    m = mean_ssim_curve(members, model, schedule, t_grid, member_labels, gamma)
    h = mean_ssim_curve(holdout, model, schedule, t_grid, holdout_labels, gamma)
    return [CurvePoint(int(t), m[int(t)] - h[int(t)]) for t in t_grid]


def peak(curve: list[CurvePoint]) -> CurvePoint:
    """Point of maximum value (earliest on ties)."""
    return max(curve, key=lambda p: (p.value, -p.t))
