"""Discrete-time variance schedule."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True, eq=False)
class Schedule:
    """Variance schedule indexed by integer timestep.

    ``beta[t - 1]`` holds beta_t for t = 1..t_max and ``alpha_bar[t]`` holds the
    cumulative signal retention for t = 0..t_max, with ``alpha_bar[0] == 1``.
    """

    beta: np.ndarray
    alpha_bar: np.ndarray

    @property
    def t_max(self) -> int:
        return len(self.beta)

    def ab(self, t: int) -> float:
        if not 0 <= t <= self.t_max:
            raise ParameterError(f"timestep {t} outside [0, {self.t_max}]")
        return float(self.alpha_bar[t])

    def snr(self, t: int) -> float:
        a = self.ab(t)
        return a / (1.0 - a)


def linear_schedule(t_max: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> Schedule:
    if t_max < 2:
        raise ParameterError(f"t_max must be >= 2, got {t_max}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ParameterError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, t_max, dtype=np.float64)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - beta)])
    beta.setflags(write=False)
    alpha_bar.setflags(write=False)
    return Schedule(beta=beta, alpha_bar=alpha_bar)
