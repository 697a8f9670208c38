"""Noise-prediction models: the memorizing posterior-mean oracle and guidance mixing.

Every backend exposes ``predict(x_t, t, cond) -> eps_hat`` with the output shaped
like ``x_t``, plus ``min_query_t``, the smallest timestep it can be evaluated
at.  The trainable convolutional backend lives in :mod:`structmia.network`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import DomainError, ParameterError
from .schedule import Schedule

# Bound on |logit - max logit| before exponentiation.
EXP_CLIP = 700.0


@dataclass(frozen=True)
class Condition:
    """Either unconditional (``label is None``) or a class label."""

    label: int | None = None

    @property
    def is_unconditional(self) -> bool:
        return self.label is None

    def check(self, k_classes: int | None) -> None:
        if self.label is None:
            return
        if k_classes is None or not 0 <= self.label < k_classes:
            raise ParameterError(f"class label {self.label} outside 0..{(k_classes or 0) - 1}")

    def __str__(self) -> str:
        return "unconditional" if self.label is None else f"class({self.label})"


UNCONDITIONAL = Condition()


class EpsilonModel(Protocol):
    k_classes: int | None
    min_query_t: int

    def predict(self, x_t: np.ndarray, t: int, cond: Condition) -> np.ndarray: ...


class OracleDenoiser:
    """Bayes-optimal noise predictor for a model that memorized its training set.

    For the empirical training distribution the posterior mean is a softmax
    weighted average of the training images, with weights proportional to
    ``exp(-||x_t - sqrt(ab_t) x_i||^2 / (2 (1 - ab_t)))``.  Under class
    conditioning only images of that class take part.
    """

    min_query_t = 1

    def __init__(self, images, labels, schedule: Schedule, k_classes: int | None = None):
        images = np.asarray(images, dtype=np.float64)
        if images.ndim != 4 or len(images) == 0:
            raise ParameterError("oracle needs a non-empty stack of HxWxC training images")
        self.shape = images.shape[1:]
        self.train = images.reshape(len(images), -1)
        self.labels = np.asarray(labels, dtype=np.int64)
        if self.labels.shape != (len(images),):
            raise ParameterError("one label per training image required")
        self.schedule = schedule
        self.k_classes = k_classes if k_classes is not None else int(self.labels.max()) + 1
        self._by_class = {
            c: np.flatnonzero(self.labels == c) for c in range(self.k_classes)
        }

    def _subset(self, cond: Condition) -> np.ndarray:
        if cond.is_unconditional:
            return self.train
        cond.check(self.k_classes)
        idx = self._by_class[cond.label]
        if len(idx) == 0:
            raise ParameterError(f"no training images of class {cond.label}")
        return self.train[idx]

    def weights(self, x_t: np.ndarray, t: int, cond: Condition = UNCONDITIONAL) -> np.ndarray:
        """Posterior responsibilities of the (class-restricted) training images."""
        if t < 1:
            raise DomainError("oracle undefined at zero noise (t = 0)")
        x = np.asarray(x_t, dtype=np.float64)
        if x.shape != self.shape:
            raise ParameterError(f"input shape {x.shape} != training shape {self.shape}")
        ab = self.schedule.ab(t)
        train = self._subset(cond)
        d2 = ((x.reshape(1, -1) - np.sqrt(ab) * train) ** 2).sum(axis=1)
        logits = -d2 / (2.0 * (1.0 - ab))
        logits = np.clip(logits - logits.max(), -EXP_CLIP, EXP_CLIP)
        w = np.exp(logits)
        return w / w.sum()

    def posterior_mean(self, x_t: np.ndarray, t: int, cond: Condition = UNCONDITIONAL) -> np.ndarray:
        w = self.weights(x_t, t, cond)
        train = self._subset(cond)
        return (w[:, None] * train).sum(axis=0).reshape(self.shape)

    def predict(self, x_t: np.ndarray, t: int, cond: Condition = UNCONDITIONAL) -> np.ndarray:
        ab = self.schedule.ab(t)
        x0_hat = self.posterior_mean(x_t, t, cond)
        return (np.asarray(x_t, dtype=np.float64) - np.sqrt(ab) * x0_hat) / np.sqrt(1.0 - ab)


def oracle_predict(x_t, t: int, trainset, schedule: Schedule, cond: Condition = UNCONDITIONAL, labels=None):
    """One-shot oracle prediction for ``trainset`` (labels default to class 0)."""
    trainset = np.asarray(trainset, dtype=np.float64)
    if labels is None:
        labels = np.zeros(len(trainset), dtype=np.int64)
    return OracleDenoiser(trainset, labels, schedule).predict(x_t, t, cond)


def guided_predict(model: EpsilonModel, x_t: np.ndarray, t: int, cond: Condition, gamma: float) -> np.ndarray:
    """Classifier-free guidance ``eps_u + gamma (eps_c - eps_u)``.

    Evaluated as ``(1 - gamma) eps_u + gamma eps_c`` so that gamma = 0 and
    gamma = 1 reproduce the two branches bit for bit.
    """
    if cond.is_unconditional:
        raise ParameterError("guidance needs a class condition")
    eps_u = model.predict(x_t, t, UNCONDITIONAL)
    eps_c = model.predict(x_t, t, cond)
    return (1.0 - gamma) * eps_u + gamma * eps_c


def predict_eps(model: EpsilonModel, x_t: np.ndarray, t: int, cond: Condition = UNCONDITIONAL,
                gamma: float = 1.0) -> np.ndarray:
    """Noise prediction as used inside samplers and attacks.

    Queries below the backend's ``min_query_t`` are evaluated at that step
    (the oracle posterior is singular at t = 0).  Class conditions go through
    guidance unless gamma is exactly 1, where guidance equals the conditional
    branch anyway.
    """
    tq = max(t, model.min_query_t)
    if cond.is_unconditional or gamma == 1.0:
        return model.predict(x_t, tq, cond)
    return guided_predict(model, x_t, tq, cond, gamma)
