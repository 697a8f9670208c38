"""Per-image fan-out across a process pool with id-ordered results."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .attacks import AttackConfig, AttackRecord, score_image
from .denoiser import UNCONDITIONAL, Condition, EpsilonModel
from .distortions import DistortionSpec
from .imagecore import Dataset, Sample
from .schedule import Schedule

_JOB = None


def _init_worker(job) -> None:
    global _JOB
    _JOB = job
    try:
        import torch

        torch.set_num_threads(1)
    except ImportError:  # pragma: no cover
        pass


def _call(item):
    return _JOB(item)


def pool_map(job, items, workers: int = 1) -> list:
    """``[job(x) for x in items]``, optionally spread over ``workers`` processes.

    ``job`` is shipped to each worker once; results come back in input order.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [job(x) for x in items]
    workers = min(workers, len(items))
    chunk = max(1, len(items) // (workers * 4))
    ctx = None
    if os.name == "posix":
        import multiprocessing

        ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(workers, mp_context=ctx, initializer=_init_worker, initargs=(job,)) as ex:
        return list(ex.map(_call, items, chunksize=chunk))


@dataclass
class ScoreJob:
    """Scores one sample with one attack; picklable so it can run in workers."""

    attack: str
    model: EpsilonModel
    schedule: Schedule
    cfg: AttackConfig
    use_labels: bool = True
    distortion: DistortionSpec | None = None

    def condition(self, sample: Sample) -> Condition:
        return Condition(sample.label) if self.use_labels else UNCONDITIONAL

    def __call__(self, item: tuple[str, Sample]) -> AttackRecord:
        split, sample = item
        x = sample.image
        if self.distortion is not None:
            x = self.distortion.apply(x, sample.id)
        score = score_image(self.attack, x, sample.id, self.model, self.schedule,
                            self.condition(sample), self.cfg)
        return AttackRecord(sample.id, split, self.attack, float(score))


def labelled_samples(dataset: Dataset) -> list[tuple[str, Sample]]:
    items = [("member", s) for s in dataset.members] + [("holdout", s) for s in dataset.holdout]
    return sorted(items, key=lambda it: it[1].id)


def score_dataset(job: ScoreJob, dataset: Dataset, workers: int = 1) -> list[AttackRecord]:
    return pool_map(job, labelled_samples(dataset), workers)


def split_scores(records: list[AttackRecord]) -> tuple[np.ndarray, np.ndarray]:
    m = np.array([r.score for r in records if r.split == "member"])
    h = np.array([r.score for r in records if r.split == "holdout"])
    return m, h
