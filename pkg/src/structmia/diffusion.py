"""Forward corruption, deterministic DDIM inversion/sampling and round trips.

Intermediate states are carried unclamped; only :func:`reconstruct` and
callers that hand a state to SSIM or file output clamp back to [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoiser import UNCONDITIONAL, Condition, EpsilonModel, predict_eps
from .errors import ParameterError
from .imagecore import clamp_image
from .schedule import Schedule


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[tuple[int, np.ndarray], ...]
    direction: str  # "forward" | "backward"

    def __post_init__(self):
        ts = self.timesteps
        increasing = all(a < b for a, b in zip(ts, ts[1:]))
        decreasing = all(a > b for a, b in zip(ts, ts[1:]))
        if self.direction == "forward" and not increasing:
            raise ParameterError("forward trajectory timesteps must increase")
        if self.direction == "backward" and not decreasing:
            raise ParameterError("backward trajectory timesteps must decrease")

    @property
    def timesteps(self) -> list[int]:
        return [t for t, _ in self.steps]

    @property
    def endpoint(self) -> np.ndarray:
        return self.steps[-1][1]

    def state(self, t: int) -> np.ndarray:
        for s, x in self.steps:
            if s == t:
                return x
        raise KeyError(t)

    @property
    def n_queries(self) -> int:
        return len(self.steps) - 1


def q_sample(x0: np.ndarray, t: int, eps: np.ndarray, schedule: Schedule) -> np.ndarray:
    """Closed-form forward corruption ``sqrt(ab_t) x0 + sqrt(1 - ab_t) eps``."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.shape:
        raise ParameterError(f"noise shape {eps.shape} != image shape {x0.shape}")
    if not 1 <= t <= schedule.t_max:
        raise ParameterError(f"t must be in [1, {schedule.t_max}], got {t}")
    ab = schedule.ab(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def ddim_move(x_t: np.ndarray, t: int, t_to: int, eps: np.ndarray, schedule: Schedule) -> np.ndarray:
    """Move a state from step ``t`` to ``t_to`` along the predicted-x0 line.

    Shared by inversion (``t_to > t``) and sampling (``t_to < t``).
    """
    ab, ab_to = schedule.ab(t), schedule.ab(t_to)
    x0_hat = (x_t - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)
    return np.sqrt(ab_to) * x0_hat + np.sqrt(1.0 - ab_to) * eps


def ddim_invert_step(x_t, t: int, t_next: int, model: EpsilonModel, schedule: Schedule,
                     cond: Condition = UNCONDITIONAL, gamma: float = 1.0) -> np.ndarray:
    if not 0 <= t < t_next <= schedule.t_max:
        raise ParameterError(f"inversion step needs 0 <= t < t_next <= {schedule.t_max}, got ({t}, {t_next})")
    x_t = np.asarray(x_t, dtype=np.float64)
    eps = predict_eps(model, x_t, t, cond, gamma)
    return ddim_move(x_t, t, t_next, eps, schedule)


def ddim_sample_step(x_t, t: int, t_prev: int, model: EpsilonModel, schedule: Schedule,
                     cond: Condition = UNCONDITIONAL, gamma: float = 1.0) -> np.ndarray:
    if not 0 <= t_prev < t <= schedule.t_max:
        raise ParameterError(f"sampling step needs 0 <= t_prev < t <= {schedule.t_max}, got ({t}, {t_prev})")
    x_t = np.asarray(x_t, dtype=np.float64)
    eps = predict_eps(model, x_t, t, cond, gamma)
    return ddim_move(x_t, t, t_prev, eps, schedule)


def _check_grid(t_total: int, interval: int, schedule: Schedule) -> None:
    if interval < 1 or t_total < 1:
        raise ParameterError(f"t_total and interval must be positive, got ({t_total}, {interval})")
    if t_total % interval:
        raise ParameterError(f"interval {interval} does not divide t_total {t_total}")
    if t_total > schedule.t_max:
        raise ParameterError(f"t_total {t_total} exceeds t_max {schedule.t_max}")


def ddim_invert(x0, t_total: int, interval: int, model: EpsilonModel, schedule: Schedule,
                cond: Condition = UNCONDITIONAL, gamma: float = 1.0) -> Trajectory:
    """Invert ``x0`` through t = 0, interval, 2 interval, ..., t_total."""
    _check_grid(t_total, interval, schedule)
    x = np.asarray(x0, dtype=np.float64)
    steps = [(0, x)]
    for t in range(0, t_total, interval):
        x = ddim_invert_step(x, t, t + interval, model, schedule, cond, gamma)
        steps.append((t + interval, x))
    return Trajectory(tuple(steps), "forward")


def ddim_sample(x_t, t_total: int, interval: int, model: EpsilonModel, schedule: Schedule,
                cond: Condition = UNCONDITIONAL, gamma: float = 1.0) -> Trajectory:
    """Deterministic sampling from ``t_total`` back to 0 on the same grid."""
    _check_grid(t_total, interval, schedule)
    x = np.asarray(x_t, dtype=np.float64)
    steps = [(t_total, x)]
    for t in range(t_total, 0, -interval):
        x = ddim_sample_step(x, t, t - interval, model, schedule, cond, gamma)
        steps.append((t - interval, x))
    return Trajectory(tuple(steps), "backward")


def reconstruct(x0, t_total: int, interval: int, model: EpsilonModel, schedule: Schedule,
                cond: Condition = UNCONDITIONAL, gamma: float = 1.0) -> np.ndarray:
    """Invert to ``t_total`` and sample back to 0; the result is clamped to an image."""
    forward = ddim_invert(x0, t_total, interval, model, schedule, cond, gamma)
    backward = ddim_sample(forward.endpoint, t_total, interval, model, schedule, cond, gamma)
    return clamp_image(backward.endpoint)
