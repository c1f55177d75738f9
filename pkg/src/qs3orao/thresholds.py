"""Ordered thresholds from labeled scores under the all-thresholds hinge penalty.

For threshold ``j`` the penalty is

    F_j(b) = sum_{y_i > j} max(0, c - (f_i - b)) + sum_{y_i <= j} max(0, c - (b - f_i))

with margin ``c`` (1 by default). It is convex and piecewise linear in ``b``
with breakpoints ``f_i - c`` (positives) and ``f_i + c`` (negatives). Each
``b_j`` is solved on its own.

A unit margin is not scale-free: when the scores of adjacent classes are
closer than 2c the flat region of F_j can sit inside a class. Models trained
with admissible step sizes have compressed scores, so training fits
thresholds with ``margin=0`` (see ``TrainConfig.threshold_margin``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ThresholdError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Thresholds:
    b: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=np.float64).ravel()
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @property
    def k(self) -> int:
        return self.b.size + 1

    def is_strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.b) > 0))


def hinge_penalty(b, pos_scores, neg_scores, margin: float = 1.0):
    """``F_j(b)`` for a scalar or array of candidate thresholds."""
    b = np.asarray(b, dtype=np.float64)
    pos = np.maximum(0.0, margin - (np.asarray(pos_scores)[None, :] - b[..., None])).sum(-1)
    neg = np.maximum(0.0, margin - (b[..., None] - np.asarray(neg_scores)[None, :])).sum(-1)
    out = (pos + neg).reshape(b.shape)
    return float(out) if out.ndim == 0 else out


def _argmin_interval(pos_scores: np.ndarray, neg_scores: np.ndarray,
                     margin: float) -> tuple[float, float]:
    """Minimizing interval of F_j by locating where the subgradient changes sign.

    Positive i contributes slope +1 for b > f_i - c; negative i contributes -1
    for b < f_i + c. Slopes are integer counts, so the test is exact.
    """
    rise = np.sort(pos_scores - margin)
    fall = np.sort(neg_scores + margin)
    candidates = np.unique(np.concatenate([rise, fall]))
    # one-sided slopes at each breakpoint
    right = (np.searchsorted(rise, candidates, side="right")
             - (fall.size - np.searchsorted(fall, candidates, side="right")))
    left = (np.searchsorted(rise, candidates, side="left")
            - (fall.size - np.searchsorted(fall, candidates, side="left")))
    optimal = np.flatnonzero((left <= 0) & (right >= 0))
    return float(candidates[optimal[0]]), float(candidates[optimal[-1]])


def fit_thresholds(scores, labels, k: int, margin: float = 1.0) -> Thresholds:
    """Minimize the all-thresholds hinge penalty, one threshold at a time.

    A flat minimizing interval resolves to its midpoint. Midpoints are already
    weakly ordered; exact ties are then separated by a tiny step so the result
    is strictly increasing.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ThresholdError(f"{scores.size} scores but {labels.size} labels")
    if not np.all(np.isfinite(scores)):
        raise ThresholdError("scores must be finite")
    if not margin >= 0:
        raise ThresholdError(f"margin must be >= 0, got {margin}")
    counts = np.bincount(labels.astype(np.int64), minlength=k + 1)[1:k + 1]
    if labels.size == 0 or labels.min() < 1 or labels.max() > k:
        raise ThresholdError(f"labels must lie in 1..{k}")
    empty = [c + 1 for c in range(k) if counts[c] == 0]
    if empty:
        raise ThresholdError(f"classes {empty} have no labeled scores")
    b = np.empty(k - 1)
    for j in range(1, k):
        lo, hi = _argmin_interval(scores[labels > j], scores[labels <= j], margin)
        b[j - 1] = 0.5 * (lo + hi)
    span = float(scores.max() - scores.min())
    eps = 1e-9 * span if span > 0 else 1e-9
    for j in range(1, k - 1):
        if b[j] <= b[j - 1]:
            b[j] = max(b[j - 1] + eps, np.nextafter(b[j - 1], np.inf))
    return Thresholds(b)


def predict_label(score, th: Thresholds):
    """Smallest ``j`` with ``score < b_j``, else ``k``; ``score == b_j`` goes up to ``j + 1``.

    Accepts a scalar or an array of scores.
    """
    if not th.is_strictly_increasing():
        raise ThresholdError(f"thresholds must be strictly increasing, got {th.b}")
    labels = np.searchsorted(th.b, np.asarray(score, dtype=np.float64), side="right") + 1
    return int(labels) if np.ndim(labels) == 0 else labels.astype(np.int64)
