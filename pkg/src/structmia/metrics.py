"""ROC sweep and the headline membership-inference numbers.

A record is classified as member iff ``score > tau``; the sweep visits
``tau = +inf``, every distinct score in decreasing order, and ``-inf``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class RocSummary:
    auc: float
    asr: float
    asr_tau: float
    precision: float
    recall: float
    tpr_at_1pct: float
    tpr_at_0p1pct: float
    curve: list[tuple[float, float]] = field(repr=False)
    thresholds: list[float] = field(repr=False)

    def row(self) -> dict:
        return {
            "auc": self.auc,
            "asr": self.asr,
            "asr_tau": self.asr_tau,
            "precision": self.precision,
            "recall": self.recall,
            "tpr_at_1pct_fpr": self.tpr_at_1pct,
            "tpr_at_0p1pct_fpr": self.tpr_at_0p1pct,
        }


SUMMARY_FIELDS = [
    "auc", "asr", "asr_tau", "precision", "recall", "tpr_at_1pct_fpr", "tpr_at_0p1pct_fpr",
]


def _counts_above(sorted_scores: np.ndarray, taus: np.ndarray) -> np.ndarray:
    # number of scores strictly greater than each tau
    return len(sorted_scores) - np.searchsorted(sorted_scores, taus, side="right")


def tpr_at_fpr(fpr: np.ndarray, tpr: np.ndarray, budget: float) -> float:
    """Best TPR among sweep points whose FPR does not exceed ``budget``."""
    ok = fpr <= budget + 1e-15
    return float(tpr[ok].max())


def roc(member_scores, holdout_scores) -> RocSummary:
    m = np.sort(np.asarray(member_scores, dtype=np.float64))
    h = np.sort(np.asarray(holdout_scores, dtype=np.float64))
    if m.size == 0 or h.size == 0:
        raise ParameterError("roc needs non-empty member and holdout score lists")
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(h))):
        raise ParameterError("scores must be finite")
    distinct = np.unique(np.concatenate([m, h]))[::-1]
    taus = np.concatenate([[np.inf], distinct, [-np.inf]])
    tp = _counts_above(m, taus)
    fp = _counts_above(h, taus)
    p, n = m.size, h.size
    tpr = tp / p
    fpr = fp / n
    auc = float(np.trapezoid(tpr, fpr))

    correct = tp + (n - fp)
    best = int(np.argmax(correct))
    predicted = tp[best] + fp[best]
    precision = float(tp[best] / predicted) if predicted else 0.0
    return RocSummary(
        auc=auc,
        asr=float(correct[best] / (p + n)),
        asr_tau=float(taus[best]),
        precision=precision,
        recall=float(tpr[best]),
        tpr_at_1pct=tpr_at_fpr(fpr, tpr, 0.01),
        tpr_at_0p1pct=tpr_at_fpr(fpr, tpr, 0.001),
        curve=list(zip(fpr.tolist(), tpr.tolist())),
        thresholds=taus.tolist(),
    )


def auc_pairwise_oracle(member_scores, holdout_scores) -> float:
    """O(n m) AUC: P(member > holdout) + P(tie) / 2 over all pairs."""
    m = np.asarray(member_scores, dtype=np.float64)
    h = np.asarray(holdout_scores, dtype=np.float64)
    if m.size == 0 or h.size == 0:
        raise ParameterError("need non-empty score lists")
    wins = ties = 0
    for a in m:
        wins += int(np.count_nonzero(a > h))
        ties += int(np.count_nonzero(a == h))
    return (wins + 0.5 * ties) / (m.size * h.size)
