"""Membership scorers: the structural (SSIM) attack and three pixel-level baselines.

Every scorer returns a real number where higher means more member-like;
distance-based baselines are negated to follow that convention.  Distances are
divided by the number of elements so thresholds transfer across resolutions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoiser import UNCONDITIONAL, Condition, EpsilonModel, predict_eps
from .diffusion import ddim_invert, ddim_invert_step, ddim_sample_step, q_sample, reconstruct
from .errors import ParameterError
from .imagecore import clamp_image, image_rng
from .schedule import Schedule
from .ssim import ssim

ATTACKS = ("structural", "secmi", "pia", "naive_loss")
NAIVE_LOSS_STREAM = 101
PIA_NORM_POWER = 1


@dataclass(frozen=True)
class AttackConfig:
    t_total: int = 100
    interval: int = 50
    gamma: float = 1.0
    tau: float | None = None
    # baselines
    t_eval: int = 100
    naive_draws: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.interval < 1 or self.t_total < 1 or self.t_total % self.interval:
            raise ParameterError(f"interval {self.interval} must divide t_total {self.t_total}")
        if self.t_eval < 1:
            raise ParameterError("t_eval must be >= 1")
        if self.naive_draws < 1:
            raise ParameterError("naive_draws must be >= 1")

    @property
    def n_queries(self) -> int:
        return self.t_total // self.interval


@dataclass(frozen=True)
class AttackRecord:
    id: int
    split: str  # "member" | "holdout"
    attack: str
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ParameterError(f"non-finite score for image {self.id} ({self.attack})")


class IdentityCodec:
    """Pixel space stands in for a learned latent space."""

    def encode(self, x: np.ndarray) -> np.ndarray:
        return x

    def decode(self, z: np.ndarray) -> np.ndarray:
        return z


IDENTITY_CODEC = IdentityCodec()


def structural_score(x0, model: EpsilonModel, schedule: Schedule, cond: Condition = UNCONDITIONAL,
                     cfg: AttackConfig = AttackConfig(), codec=IDENTITY_CODEC) -> float:
    """SSIM between the query and its decoded DDIM-inverted state at ``t_total``."""
    z0 = codec.encode(np.asarray(x0, dtype=np.float64))
    traj = ddim_invert(z0, cfg.t_total, cfg.interval, model, schedule, cond, cfg.gamma)
    return ssim(x0, clamp_image(codec.decode(traj.endpoint)))


def reconstruction_score(x0, model: EpsilonModel, schedule: Schedule, cond: Condition = UNCONDITIONAL,
                         cfg: AttackConfig = AttackConfig()) -> float:
    """SSIM between the query and its invert-then-sample reconstruction."""
    return ssim(x0, reconstruct(x0, cfg.t_total, cfg.interval, model, schedule, cond, cfg.gamma))


def naive_loss_score(x0, model: EpsilonModel, schedule: Schedule, cond: Condition = UNCONDITIONAL,
                     t_eval: int = 100, seed: int = 0, image_id: int = 0, draws: int = 1,
                     gamma: float = 1.0) -> float:
    """Negative mean squared noise-prediction error at ``t_eval``, averaged over draws."""
    if not 1 <= t_eval <= schedule.t_max:
        raise ParameterError(f"t_eval must be in [1, {schedule.t_max}]")
    x0 = np.asarray(x0, dtype=np.float64)
    rng = image_rng(seed, image_id, NAIVE_LOSS_STREAM)
    total = 0.0
    for _ in range(draws):
        eps = rng.standard_normal(x0.shape)
        x_t = q_sample(x0, t_eval, eps, schedule)
        eps_hat = predict_eps(model, x_t, t_eval, cond, gamma)
        total += float(np.sum((eps - eps_hat) ** 2)) / x0.size
    return -total / draws


def pia_score(x0, model: EpsilonModel, schedule: Schedule, cond: Condition = UNCONDITIONAL,
              t_eval: int = 100, gamma: float = 1.0) -> float:
    """Proximal-initialization baseline: the t = 0 prediction is reused as the noise."""
    if not 1 <= t_eval <= schedule.t_max:
        raise ParameterError(f"t_eval must be in [1, {schedule.t_max}]")
    x0 = np.asarray(x0, dtype=np.float64)
    eps0 = predict_eps(model, x0, 0, cond, gamma)
    ab = schedule.ab(t_eval)
    x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps0
    eps_hat = predict_eps(model, x_t, t_eval, cond, gamma)
    resid = np.abs(eps0 - eps_hat) ** PIA_NORM_POWER
    return -float(np.sum(resid)) ** (1.0 / PIA_NORM_POWER) / x0.size


def secmi_score(x0, model: EpsilonModel, schedule: Schedule, cond: Condition = UNCONDITIONAL,
                t_eval: int = 100, interval: int = 50, gamma: float = 1.0) -> float:
    """Step-wise error between a deterministic state and its one-step denoise/re-noise."""
    if interval < 1 or t_eval % interval:
        raise ParameterError(f"interval {interval} must divide t_eval {t_eval}")
    x0 = np.asarray(x0, dtype=np.float64)
    x_t = ddim_invert(x0, t_eval, interval, model, schedule, cond, gamma).endpoint
    t_prev = t_eval - interval
    x_prev = ddim_sample_step(x_t, t_eval, t_prev, model, schedule, cond, gamma)
    x_back = ddim_invert_step(x_prev, t_prev, t_eval, model, schedule, cond, gamma)
    return -float(np.sum((x_back - x_t) ** 2)) / x0.size


def score_image(attack: str, x0, image_id: int, model: EpsilonModel, schedule: Schedule,
                cond: Condition, cfg: AttackConfig) -> float:
    if attack == "structural":
        return structural_score(x0, model, schedule, cond, cfg)
    if attack == "naive_loss":
        return naive_loss_score(x0, model, schedule, cond, cfg.t_eval, cfg.seed, image_id,
                                cfg.naive_draws, cfg.gamma)
    if attack == "pia":
        return pia_score(x0, model, schedule, cond, cfg.t_eval, cfg.gamma)
    if attack == "secmi":
        return secmi_score(x0, model, schedule, cond, cfg.t_eval, cfg.interval, cfg.gamma)
    if attack == "reconstruction":
        return reconstruction_score(x0, model, schedule, cond, cfg)
    raise ParameterError(f"unknown attack {attack!r}")


def classify(score: float, tau: float) -> str:
    return "member" if score > tau else "nonmember"
