"""Quadruply stochastic training of the ordinal ranking function.

Each iteration draws a batch per class and one unlabeled batch, regenerates
the iteration's frequency block from its seed, scores the sampled rows with
the current model, and appends one coefficient row while shrinking all
earlier rows by ``1 - eta_i * lambda``.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, asdict
from typing import Callable, Optional

import numpy as np

from .data import SemiSupervisedSplit
from .features import FeatureStream, KernelSpec, evaluate, feature_map, sample_omega_block
from .model import RankModel
from .risk import SQUARED, PairLoss, check_gamma
from .thresholds import fit_thresholds

# distinct entropy word so the data stream never coincides with frequency seeds
_DATA_STREAM = 0x51533344


class ConfigError(ValueError):
    pass


class NumericError(ArithmeticError):
    def __init__(self, iteration: int, message: str):
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}")


def step_size(theta: float, i: int) -> float:
    if i < 1:
        raise ValueError(f"iterations start at 1, got {i}")
    return theta / i


def is_admissible_step_scale(theta_lambda: float, rtol: float = 1e-9) -> bool:
    """theta * lambda in (1, 2) or a positive integer."""
    if 1.0 < theta_lambda < 2.0:
        return True
    nearest = round(theta_lambda)
    return nearest >= 1 and abs(theta_lambda - nearest) <= rtol * max(1.0, nearest)


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1.0
    theta: float = 1.5
    gamma: float | tuple = 1.0
    m: int = 64
    t_max: int = 1000
    batch: int = 16
    master_seed: int = 0
    sigma: float = 1.0
    threshold_margin: float = 0.0

    def validate(self, k: int | None = None) -> None:
        if not self.lam > 0:
            raise ConfigError(f"lambda must be > 0, got {self.lam}")
        if not self.theta > 0:
            raise ConfigError(f"theta must be > 0, got {self.theta}")
        if not is_admissible_step_scale(self.theta * self.lam):
            raise ConfigError(
                f"theta*lambda = {self.theta * self.lam:g} must lie in (1, 2) or be a positive integer; "
                f"e.g. use theta = {1.5 / self.lam:g} for theta*lambda = 1.5")
        for name in ("m", "t_max", "batch"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        if not self.threshold_margin >= 0:
            raise ConfigError(f"threshold_margin must be >= 0, got {self.threshold_margin}")
        if not 0 <= self.master_seed < 1 << 64:
            raise ConfigError(f"master_seed must fit in an unsigned 64-bit integer, got {self.master_seed}")
        try:
            check_gamma(self.gamma)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if k is not None:
            self.gamma_vector(k)

    def gamma_vector(self, k: int) -> np.ndarray:
        g = np.atleast_1d(np.asarray(self.gamma, dtype=np.float64))
        if g.size == 1:
            return np.full(k - 1, float(g[0]))
        if g.size != k - 1:
            raise ConfigError(f"gamma needs 1 or k-1 = {k - 1} values, got {g.size}")
        return g.copy()

    def to_dict(self) -> dict:
        out = asdict(self)
        if isinstance(self.gamma, (tuple, list, np.ndarray)):
            out["gamma"] = [float(v) for v in self.gamma]
        return out


@dataclass(frozen=True, eq=False)
class IterationBatch:
    """Rows drawn in one iteration: ``class_rows[c-1]`` indexes labeled rows of class ``c``.

    Subproblem pools are assembled from these shared class batches.
    """

    class_rows: list
    unlabeled_rows: np.ndarray

    def subproblem(self, j: int):
        """(positive rows, negative rows, unlabeled rows) of subproblem ``j``."""
        pos = np.concatenate(self.class_rows[j:])
        neg = np.concatenate(self.class_rows[:j])
        return pos, neg, self.unlabeled_rows


def class_members(split: SemiSupervisedSplit) -> list[np.ndarray]:
    labels = split.labeled.labels
    return [np.flatnonzero(labels == c) for c in range(1, split.k + 1)]


def sample_iteration_batches(split: SemiSupervisedSplit, batch: int, rng: np.random.Generator,
                             members: list | None = None) -> IterationBatch:
    """One with-replacement batch of ``batch`` rows per class plus one unlabeled batch."""
    members = class_members(split) if members is None else members
    rows = []
    for c, idx in enumerate(members, start=1):
        if idx.size == 0:
            raise ValueError(f"class {c} has no labeled rows")
        rows.append(idx[rng.integers(0, idx.size, size=batch)])
    if split.n_unlabeled:
        unl = rng.integers(0, split.n_unlabeled, size=batch)
    else:
        unl = np.zeros(0, dtype=np.int64)
    return IterationBatch(rows, unl)


def point_coefficients(scores, point_class, priors, gamma, k: int, loss: PairLoss = SQUARED,
                       batch: int | None = None) -> np.ndarray:
    """Weight of each sampled point in the stochastic gradient ``xi = sum_p c_p k(x_p, .)``.

    ``point_class`` is the class (1..k) of each point, 0 for unlabeled. Pairs
    are averaged within each subproblem; a labeled point of class ``c`` counts
    with weight ``prior_c / batch`` inside its pool so the pooled sample stays
    an unbiased draw from the labeled positives/negatives. The 1/(k-1) average
    over subproblems is included.
    """
    scores = np.asarray(scores, dtype=np.float64)
    point_class = np.asarray(point_class)
    priors = np.asarray(priors, dtype=np.float64)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (k - 1,))
    labeled = point_class > 0
    if batch is None:
        batch = int(np.count_nonzero(point_class == 1))
    mass = np.zeros(scores.size)
    mass[labeled] = priors[point_class[labeled] - 1] / batch
    unl = np.flatnonzero(~labeled)
    w_u = np.full(unl.size, 1.0 / unl.size) if unl.size else np.zeros(0)
    coef = np.zeros(scores.size)
    for j in range(1, k):
        pos = np.flatnonzero(point_class > j)
        neg = np.flatnonzero(labeled & (point_class <= j))
        w_p = mass[pos] / mass[pos].sum()
        w_n = mass[neg] / mass[neg].sum()
        g = gamma[j - 1]
        f_p, f_n = scores[pos], scores[neg]
        if g > 0:
            u, v = f_p[:, None], f_n[None, :]
            pair_w = w_p[:, None] * w_n[None, :]
            np.add.at(coef, pos, g * (pair_w * loss.d_first(u, v)).sum(1))
            np.add.at(coef, neg, g * (pair_w * loss.d_second(u, v)).sum(0))
        if g < 1 and unl.size:
            f_u = scores[unl]
            # positive vs unlabeled: unlabeled in the second slot
            u, v = f_p[:, None], f_u[None, :]
            pair_w = w_p[:, None] * w_u[None, :]
            np.add.at(coef, pos, (1 - g) * (pair_w * loss.d_first(u, v)).sum(1))
            np.add.at(coef, unl, (1 - g) * (pair_w * loss.d_second(u, v)).sum(0))
            # unlabeled vs negative: unlabeled in the first slot
            u, v = f_u[:, None], f_n[None, :]
            pair_w = w_u[:, None] * w_n[None, :]
            np.add.at(coef, unl, (1 - g) * (pair_w * loss.d_first(u, v)).sum(1))
            np.add.at(coef, neg, (1 - g) * (pair_w * loss.d_second(u, v)).sum(0))
    return coef / (k - 1)


def gradient_coefficient(scores, feats, point_class, priors, gamma, eta: float, k: int,
                         loss: PairLoss = SQUARED, batch: int | None = None) -> np.ndarray:
    """New coefficient row ``alpha_i = -eta * sum_p c_p phi(x_p)`` (length 2m)."""
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise FloatingPointError("non-finite score among sampled points")
    c = point_coefficients(scores, point_class, priors, gamma, k, loss, batch)
    return -eta * (c @ np.asarray(feats, dtype=np.float64))


def batch_surrogate_risk(scores, point_class, priors, gamma, k: int, loss: PairLoss = SQUARED,
                         batch: int | None = None) -> float:
    """Weighted batch estimate of the mean PNU risk (no regularizer)."""
    scores = np.asarray(scores, dtype=np.float64)
    point_class = np.asarray(point_class)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (k - 1,))
    labeled = point_class > 0
    if batch is None:
        batch = int(np.count_nonzero(point_class == 1))
    mass = np.zeros(scores.size)
    mass[labeled] = np.asarray(priors)[point_class[labeled] - 1] / batch
    f_u = scores[~labeled]
    total = 0.0
    for j in range(1, k):
        pos = point_class > j
        neg = labeled & (point_class <= j)
        w_p = mass[pos] / mass[pos].sum()
        w_n = mass[neg] / mass[neg].sum()
        f_p, f_n = scores[pos], scores[neg]
        pn = float(w_p @ loss.value(f_p[:, None], f_n[None, :]) @ w_n)
        risk = pn
        if f_u.size:
            pu = float((w_p @ loss.value(f_p[:, None], f_u[None, :])).mean())
            nu = float(loss.value(f_u[:, None], f_n[None, :]).mean(0) @ w_n)
            risk = gamma[j - 1] * pn + (1 - gamma[j - 1]) * (pu + nu - 0.5)
        total += risk
    return total / (k - 1)


def decay_coefficients(coefficients: np.ndarray, n_rows: int, eta_lambda: float) -> None:
    """Scale rows ``0..n_rows-1`` in place by ``1 - eta_lambda`` (may be negative or zero)."""
    coefficients[:n_rows] *= 1.0 - eta_lambda


class Trainer:
    """Stateful training loop; ``train`` wraps the common run-to-completion case.

    ``progress_sink`` receives one dict per iteration with keys ``i``, ``eta``,
    ``surrogate_risk``, ``elapsed_ns`` (since the first iteration) and
    ``iter_ns``.
    """

    def __init__(self, split: SemiSupervisedSplit, config: TrainConfig,
                 progress_sink: Optional[Callable[[dict], None]] = None):
        config.validate(split.k)
        missing = split.labeled.missing_classes()
        if missing:
            raise ValueError(f"classes {missing} have no labeled rows")
        self.split = split
        self.config = config
        self.k = split.k
        self.gamma = config.gamma_vector(self.k)
        if split.n_unlabeled == 0 and np.any(self.gamma < 1):
            warnings.warn("unlabeled pool is empty; training on labeled pairs only (gamma = 1)",
                          RuntimeWarning, stacklevel=2)
            self.gamma = np.ones(self.k - 1)
        self.stream = FeatureStream(config.master_seed, config.m, KernelSpec(config.sigma, split.d))
        self.coefficients = np.zeros((config.t_max, 2 * config.m))
        self.t = 0
        self.train_ns = 0
        self.progress_sink = progress_sink
        self._rng = np.random.default_rng([config.master_seed, _DATA_STREAM])
        self._members = class_members(split)
        self._priors = split.labeled.priors
        self._point_class = np.concatenate(
            [np.full(config.batch, c) for c in range(1, self.k + 1)]
            + [np.zeros(config.batch if split.n_unlabeled else 0, dtype=np.int64)])

    @property
    def peak_coeff_bytes(self) -> int:
        return self.coefficients.nbytes

    def sampled_points(self, sample: IterationBatch) -> np.ndarray:
        X_lab = self.split.labeled.features
        parts = [X_lab[rows] for rows in sample.class_rows]
        parts.append(self.split.unlabeled_features[sample.unlabeled_rows])
        return np.vstack(parts)

    def step(self) -> dict:
        if self.t >= self.config.t_max:
            raise RuntimeError(f"already ran t_max = {self.config.t_max} iterations")
        start = time.perf_counter_ns()
        i = self.t + 1
        cfg = self.config
        eta = step_size(cfg.theta, i)
        sample = sample_iteration_batches(self.split, cfg.batch, self._rng, self._members)
        X = self.sampled_points(sample)
        omega = sample_omega_block(self.stream, i)
        # overflow is reported below as NumericError, not as numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            scores = evaluate(self.stream, self.coefficients[:i - 1], X)
            if not np.all(np.isfinite(scores)):
                raise NumericError(i, "model produced a non-finite score (step size too large?)")
            feats = feature_map(omega, X)
            alpha = gradient_coefficient(scores, feats, self._point_class, self._priors, self.gamma,
                                         eta, self.k, batch=cfg.batch)
            if not np.all(np.isfinite(alpha)):
                raise NumericError(i, "non-finite gradient coefficient")
            decay_coefficients(self.coefficients, i - 1, eta * cfg.lam)
            self.coefficients[i - 1] = alpha
            self.t = i
            risk = batch_surrogate_risk(scores, self._point_class, self._priors, self.gamma, self.k,
                                        batch=cfg.batch)
        iter_ns = time.perf_counter_ns() - start
        self.train_ns += iter_ns
        record = {"i": i, "eta": eta, "surrogate_risk": risk, "elapsed_ns": self.train_ns,
                  "iter_ns": iter_ns}
        if self.progress_sink is not None:
            self.progress_sink(record)
        return record

    def run(self, n_steps: int | None = None) -> None:
        n_steps = self.config.t_max - self.t if n_steps is None else n_steps
        for _ in range(n_steps):
            self.step()

    def scores(self, X) -> np.ndarray:
        return evaluate(self.stream, self.coefficients[:self.t], np.asarray(X, dtype=np.float64))

    def model(self) -> RankModel:
        """Snapshot of the current function with thresholds fitted on the labeled scores."""
        lab = self.split.labeled
        scores = self.scores(lab.features)
        if not np.all(np.isfinite(scores)):
            raise NumericError(self.t, "non-finite score on labeled rows")
        th = fit_thresholds(scores, lab.labels, self.k, self.config.threshold_margin)
        return RankModel(self.stream.spec, self.config.master_seed, self.config.m,
                         self.coefficients[:self.t].copy(), th, self.k)


def train(split: SemiSupervisedSplit, config: TrainConfig,
          progress_sink: Optional[Callable[[dict], None]] = None) -> RankModel:
    trainer = Trainer(split, config, progress_sink)
    trainer.run()
    return trainer.model()


def weight_recursion(theta: float, lam: float, t: int) -> np.ndarray:
    """Weights ``a_t^i`` of unit gradients after ``t`` steps, run through the same decay as training."""
    rows = np.zeros((t, 1))
    for i in range(1, t + 1):
        eta = step_size(theta, i)
        decay_coefficients(rows, i - 1, eta * lam)
        rows[i - 1] = -eta
    return rows[:, 0]


def weight_closed_form(theta: float, lam: float, t: int) -> np.ndarray:
    """``a_t^i = -eta_i * prod_{j=i+1..t} (1 - eta_j * lambda)`` evaluated by direct products."""
    j = np.arange(1, t + 1, dtype=np.float64)
    factors = 1.0 - (theta / j) * lam
    # suffix[i-1] = prod_{j > i} factors[j-1]
    suffix = np.ones(t)
    if t > 1:
        suffix[:-1] = np.cumprod(factors[::-1])[::-1][1:]
    return -(theta / j) * suffix
