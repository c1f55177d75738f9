"""Pairwise ranking losses and the empirical AUC risks built from them.

Every risk here is a mean of ``loss(f(a), f(b))`` over all pairs of a first
and a second score set. The slot order matters: positives come first in PN and
PU, unlabeled first in NU.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

ENUMERATION_LIMIT = 10_000
_PAIR_CHUNK = 1 << 22


@dataclass(frozen=True)
class PairLoss:
    name: str
    value: Callable
    d_first: Callable
    d_second: Callable


def zero_one_pair(u, v):
    """1/2 (1 - sign(u - v)): 0 for a correct order, 1 for an inversion, 1/2 for a tie."""
    return 0.5 * (1.0 - np.sign(np.subtract(u, v)))


def squared_pair(u, v):
    return (1.0 - np.asarray(u) + np.asarray(v)) ** 2


def squared_d_first(u, v):
    return -2.0 * (1.0 - np.asarray(u) + np.asarray(v))


def squared_d_second(u, v):
    return 2.0 * (1.0 - np.asarray(u) + np.asarray(v))


def _no_derivative(u, v):
    raise TypeError("the zero-one loss has no useful derivative")


ZERO_ONE = PairLoss("zero_one", zero_one_pair, _no_derivative, _no_derivative)
SQUARED = PairLoss("squared", squared_pair, squared_d_first, squared_d_second)
LOSSES = {"zero_one": ZERO_ONE, "squared": SQUARED}


def get_loss(loss) -> PairLoss:
    if isinstance(loss, PairLoss):
        return loss
    try:
        return LOSSES[loss]
    except KeyError:
        raise ValueError(f"unknown loss {loss!r}; expected one of {sorted(LOSSES)}") from None


def _scores(values, name) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} scores are empty")
    return arr


def _inversion_counts_enumerated(first, second):
    inversions = ties = 0
    step = max(1, _PAIR_CHUNK // second.size)
    for start in range(0, first.size, step):
        block = first[start:start + step, None]
        inversions += int(np.count_nonzero(block < second[None, :]))
        ties += int(np.count_nonzero(block == second[None, :]))
    return inversions, ties


def _inversion_counts_sorted(first, second):
    s = np.sort(second)
    left = np.searchsorted(s, first, side="left")
    right = np.searchsorted(s, first, side="right")
    inversions = int((s.size - right).sum())
    ties = int((right - left).sum())
    return inversions, ties


def _use_enumeration(method, first, second) -> bool:
    if method == "auto":
        return first.size <= ENUMERATION_LIMIT and second.size <= ENUMERATION_LIMIT
    if method not in ("enumerate", "rank"):
        raise ValueError(f"unknown method {method!r}")
    return method == "enumerate"


def pair_risk(first, second, loss="zero_one", method: str = "auto", exact: bool = False):
    """Mean of ``loss(a, b)`` over every ``a`` in ``first`` and ``b`` in ``second``.

    ``method`` picks full pair enumeration or the sort-based path; ``"auto"``
    enumerates up to 10^4 scores per side. With ``exact=True`` the zero-one risk
    is returned as a :class:`fractions.Fraction`.
    """
    first = _scores(first, "first-slot")
    second = _scores(second, "second-slot")
    loss = get_loss(loss)
    enumerate_pairs = _use_enumeration(method, first, second)
    if loss is ZERO_ONE:
        counter = _inversion_counts_enumerated if enumerate_pairs else _inversion_counts_sorted
        inversions, ties = counter(first, second)
        risk = Fraction(2 * inversions + ties, 2 * first.size * second.size)
        return risk if exact else float(risk)
    if exact:
        raise ValueError("exact=True is only available for the zero-one loss")
    if loss is SQUARED and not enumerate_pairs:
        # E(1 - u + v)^2 over independent u, v = squared mean gap + both variances
        gap = 1.0 - first.mean() + second.mean()
        return float(gap * gap + first.var() + second.var())
    total = 0.0
    step = max(1, _PAIR_CHUNK // second.size)
    for start in range(0, first.size, step):
        total += float(loss.value(first[start:start + step, None], second[None, :]).sum())
    return total / (first.size * second.size)


def auc_risk_pn(pos_scores, neg_scores, loss="zero_one", **kw):
    """Positive-vs-negative AUC risk; ``1 - risk`` is the AUC under the zero-one loss."""
    return pair_risk(pos_scores, neg_scores, loss, **kw)


def auc_risk_pu(pos_scores, unl_scores, loss="zero_one", **kw):
    """Positive-vs-unlabeled risk, unlabeled scores treated as negatives."""
    return pair_risk(pos_scores, unl_scores, loss, **kw)


def auc_risk_nu(unl_scores, neg_scores, loss="zero_one", **kw):
    """Unlabeled-vs-negative risk, unlabeled scores treated as positives."""
    return pair_risk(unl_scores, neg_scores, loss, **kw)


def check_gamma(gamma) -> None:
    g = np.asarray(gamma, dtype=np.float64)
    if not np.all((g >= 0) & (g <= 1)):
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")


def risk_pnu(pn, pu, nu, gamma):
    """gamma * PN + (1 - gamma) * (PU + NU - 1/2)."""
    check_gamma(gamma)
    for value in (pn, pu, nu):
        if not np.isfinite(float(value)):
            raise ValueError("PN/PU/NU risks must be finite")
    half = Fraction(1, 2) if isinstance(pu, Fraction) else 0.5
    return gamma * pn + (1 - gamma) * (pu + nu - half)


def overall_risk(per_subproblem):
    """Mean risk over the k-1 subproblems."""
    values = list(per_subproblem)
    if not values:
        raise ValueError("need at least one subproblem risk")
    return sum(values) / len(values)


def split_risks(scores_lab, labels, k: int, scores_unl=None, gamma=1.0, loss="zero_one", **kw):
    """PN, PU, NU and PNU risks of every subproblem ``j = 1..k-1`` on one split.

    Returns a list of dicts; PU/NU entries are ``None`` without unlabeled scores.
    """
    scores_lab = np.asarray(scores_lab, dtype=np.float64)
    labels = np.asarray(labels)
    gammas = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (k - 1,))
    out = []
    for j in range(1, k):
        pos = scores_lab[labels > j]
        neg = scores_lab[labels <= j]
        pn = auc_risk_pn(pos, neg, loss, **kw)
        row = {"j": j, "pn": pn, "pu": None, "nu": None, "pnu": pn}
        if scores_unl is not None and np.size(scores_unl):
            pu = auc_risk_pu(pos, scores_unl, loss, **kw)
            nu = auc_risk_nu(scores_unl, neg, loss, **kw)
            row.update(pu=pu, nu=nu, pnu=risk_pnu(pn, pu, nu, float(gammas[j - 1])))
        out.append(row)
    return out
