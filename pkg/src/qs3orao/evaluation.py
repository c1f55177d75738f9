"""Rank-based AUC, ordinal metrics and the unlabeled-pool scaling benchmark."""
from __future__ import annotations

import json
import time
import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.stats import rankdata

from .data import OrdinalDataset, SemiSupervisedSplit
from .model import RankModel, predict_scores
from .thresholds import Thresholds, predict_label

METRICS_SCHEMA_VERSION = 1


def auc_rank_sum(scores, is_positive) -> float:
    """Mann-Whitney AUC with midranks, so ties count 1/2."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    is_positive = np.asarray(is_positive, dtype=bool).ravel()
    n_pos = int(is_positive.sum())
    n_neg = is_positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative score")
    ranks = rankdata(scores, method="average")
    u = ranks[is_positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class Metrics:
    overall_auc: float
    per_subproblem_auc: list
    mae: float
    zero_one_error: float
    train_ns: int = 0
    peak_coeff_bytes: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **extra) -> str:
        payload = {"schema_version": METRICS_SCHEMA_VERSION, **self.to_dict(), **extra}
        return json.dumps(payload, indent=2, sort_keys=True)


def subproblem_aucs(scores, labels, k: int) -> list:
    """AUC of each binary view j = 1..k-1; ``None`` where one side is empty."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    out = []
    for j in range(1, k):
        positive = labels > j
        if positive.all() or not positive.any():
            warnings.warn(f"subproblem {j} has an empty side; its AUC is left out", RuntimeWarning,
                          stacklevel=2)
            out.append(None)
        else:
            out.append(auc_rank_sum(scores, positive))
    return out


def overall_auc(scores, labels, k: int) -> float:
    present = [a for a in subproblem_aucs(scores, labels, k) if a is not None]
    return float(np.mean(present)) if present else float("nan")


def metrics_from_scores(scores, labels, thresholds: Thresholds, k: int, train_ns: int = 0,
                        peak_coeff_bytes: int = 0) -> Metrics:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    per = subproblem_aucs(scores, labels, k)
    present = [a for a in per if a is not None]
    predicted = np.atleast_1d(predict_label(scores, thresholds)) if scores.size else labels
    return Metrics(
        overall_auc=float(np.mean(present)) if present else float("nan"),
        per_subproblem_auc=per,
        mae=float(np.abs(predicted - labels).mean()) if labels.size else float("nan"),
        zero_one_error=float((predicted != labels).mean()) if labels.size else float("nan"),
        train_ns=int(train_ns),
        peak_coeff_bytes=int(peak_coeff_bytes),
    )


def evaluate_model(model: RankModel, ds: OrdinalDataset, train_ns: int = 0) -> Metrics:
    if ds.k != model.k:
        raise ValueError(f"dataset has k={ds.k}, model was trained with k={model.k}")
    scores = predict_scores(model, ds.features)
    return metrics_from_scores(scores, ds.labels, model.thresholds, model.k, train_ns,
                               model.coefficients.nbytes)


def per_iteration_ns(records: list[dict]) -> np.ndarray:
    return np.array([r["iter_ns"] for r in records], dtype=np.int64)


def timing_ratio(iter_ns, i: int, window: int = 50) -> float:
    """Median time of iterations ``2i..2i+window`` over median of ``i..i+window``."""
    iter_ns = np.asarray(iter_ns)
    a = np.median(iter_ns[i - 1:i - 1 + window])
    b = np.median(iter_ns[2 * i - 1:2 * i - 1 + window])
    return float(b / a)


def bench_scaling(labeled: OrdinalDataset, unlabeled_pool: np.ndarray, base_config,
                  unlabeled_sizes, repeats: int = 3, seed: int = 0) -> list[dict]:
    """Training time and coefficient memory against the size of the unlabeled pool.

    Each run draws ``n_u`` unlabeled rows from ``unlabeled_pool`` (with
    replacement when the pool is smaller). Rows keep the raw per-trial times.
    """
    from .trainer import Trainer

    rng = np.random.default_rng(seed)
    unlabeled_pool = np.asarray(unlabeled_pool, dtype=np.float64)
    table = []
    for n_u in unlabeled_sizes:
        times, mem = [], set()
        for r in range(repeats):
            replace_rows = n_u > unlabeled_pool.shape[0]
            rows = rng.choice(unlabeled_pool.shape[0], size=n_u, replace=replace_rows)
            split = SemiSupervisedSplit(labeled, unlabeled_pool[rows], seed)
            cfg = replace(base_config, master_seed=base_config.master_seed + r)
            trainer = Trainer(split, cfg)
            start = time.perf_counter_ns()
            trainer.run()
            times.append(time.perf_counter_ns() - start)
            mem.add(trainer.peak_coeff_bytes)
        table.append({"n_u": int(n_u), "mean_train_ns": int(np.mean(times)),
                      "peak_coeff_bytes": max(mem), "trial_ns": [int(t) for t in times]})
    return table


def write_bench_csv(path, table: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("n_u,mean_train_ns,peak_coeff_bytes\n")
        for row in table:
            fh.write(f"{row['n_u']},{row['mean_train_ns']},{row['peak_coeff_bytes']}\n")
