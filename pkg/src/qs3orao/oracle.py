"""Exact-kernel reference computations used to check the stochastic trainer.

Everything here works with explicit Gram matrices, so it is only meant for
small problems (a few hundred rows). Functions are represented by their
kernel expansion ``h(x) = sum_i w_i k(a_i, x)``.

The objective is

    J(h) = mean_j [gamma_j R_PN + (1 - gamma_j)(R_PU + R_NU - 1/2)] + lambda/2 ||h||^2

with the squared pairwise loss and full empirical means, so its functional
gradient carries ``lambda * h``, matching the ``1 - eta * lambda`` decay.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import SemiSupervisedSplit
from .features import FeatureStream, KernelSpec, feature_map, kernel_matrix, sample_omega_block
from .risk import pair_risk

MAX_EXACT_ROWS = 500


class ConvergenceError(RuntimeError):
    def __init__(self, iterations: int, grad_norm: float):
        self.iterations = iterations
        self.grad_norm = grad_norm
        super().__init__(f"no convergence after {iterations} iterations "
                         f"(last gradient norm {grad_norm:.3e})")


@dataclass(frozen=True, eq=False)
class ExactFunction:
    """``h(x) = sum_i weights[i] * k(anchors[i], x)``."""

    anchors: np.ndarray
    weights: np.ndarray
    spec: KernelSpec

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=np.float64).reshape(-1, self.spec.d)
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if anchors.shape[0] != weights.size:
            raise ValueError(f"{anchors.shape[0]} anchors but {weights.size} weights")
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def zero(cls, anchors, spec: KernelSpec) -> "ExactFunction":
        anchors = np.asarray(anchors, dtype=np.float64)
        return cls(anchors, np.zeros(anchors.shape[0]), spec)

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.weights.size == 0:
            return np.zeros(X.shape[0])
        return kernel_matrix(self.spec, X, self.anchors) @ self.weights

    def inner(self, other: "ExactFunction") -> float:
        """RKHS inner product ``<self, other>``."""
        return float(self.weights @ kernel_matrix(self.spec, self.anchors, other.anchors) @ other.weights)

    def rkhs_norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))


def _all_rows(split: SemiSupervisedSplit) -> np.ndarray:
    return np.vstack([split.labeled.features, split.unlabeled_features])


def _check_sides(split: SemiSupervisedSplit) -> None:
    labels = split.labeled.labels
    for j in range(1, split.k):
        if not np.any(labels > j) or not np.any(labels <= j):
            raise ValueError(f"subproblem {j} has an empty side")


def risk_derivatives(f_lab, labels, f_unl, k: int, gamma) -> np.ndarray:
    """d/d f(x_r) of the mean PNU squared risk for every row (labeled rows first)."""
    f_lab = np.asarray(f_lab, dtype=np.float64)
    f_unl = np.asarray(f_unl, dtype=np.float64)
    labels = np.asarray(labels)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (k - 1,))
    n_lab = f_lab.size
    c = np.zeros(n_lab + f_unl.size)
    c_unl = c[n_lab:]
    for j in range(1, k):
        P = np.flatnonzero(labels > j)
        N = np.flatnonzero(labels <= j)
        if P.size == 0 or N.size == 0:
            raise ValueError(f"subproblem {j} has an empty side")
        g = gamma[j - 1]
        fp, fn = f_lab[P], f_lab[N]
        D = 1.0 - fp[:, None] + fn[None, :]
        c[P] += g * (-2.0 * D).sum(1) / D.size
        c[N] += g * (2.0 * D).sum(0) / D.size
        if g < 1 and f_unl.size:
            D = 1.0 - fp[:, None] + f_unl[None, :]
            c[P] += (1 - g) * (-2.0 * D).sum(1) / D.size
            c_unl += (1 - g) * (2.0 * D).sum(0) / D.size
            D = 1.0 - f_unl[:, None] + fn[None, :]
            c_unl += (1 - g) * (-2.0 * D).sum(1) / D.size
            c[N] += (1 - g) * (2.0 * D).sum(0) / D.size
    return c / (k - 1)


def mean_pnu_risk(f_lab, labels, f_unl, k: int, gamma) -> float:
    """Mean over subproblems of the exact PNU squared risk."""
    labels = np.asarray(labels)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (k - 1,))
    total = 0.0
    for j in range(1, k):
        pos, neg = f_lab[labels > j], f_lab[labels <= j]
        risk = pair_risk(pos, neg, "squared", method="enumerate")
        if gamma[j - 1] < 1 and np.size(f_unl):
            pu = pair_risk(pos, f_unl, "squared", method="enumerate")
            nu = pair_risk(f_unl, neg, "squared", method="enumerate")
            risk = gamma[j - 1] * risk + (1 - gamma[j - 1]) * (pu + nu - 0.5)
        total += risk
    return total / (k - 1)


def exact_objective(h: ExactFunction, split: SemiSupervisedSplit, lam: float, gamma) -> float:
    f_lab = h(split.labeled.features)
    f_unl = h(split.unlabeled_features) if split.n_unlabeled else np.zeros(0)
    risk = mean_pnu_risk(f_lab, split.labeled.labels, f_unl, split.k, gamma)
    return risk + 0.5 * lam * h.inner(h)


def exact_full_gradient(h: ExactFunction, split: SemiSupervisedSplit, lam: float,
                        gamma) -> ExactFunction:
    """Functional gradient of the objective at ``h``, anchored on every data row.

    If ``h`` is itself anchored on exactly those rows, ``lambda * h`` is folded
    into the same weights; otherwise its anchors are appended.
    """
    _check_sides(split)
    rows = _all_rows(split)
    n_lab = split.labeled.n
    f = h(rows)
    weights = risk_derivatives(f[:n_lab], split.labeled.labels, f[n_lab:], split.k, gamma)
    if h.anchors.shape == rows.shape and np.array_equal(h.anchors, rows):
        return ExactFunction(rows, weights + lam * h.weights, h.spec)
    return ExactFunction(np.vstack([rows, h.anchors]),
                         np.concatenate([weights, lam * h.weights]), h.spec)


def batch_solve_exact(split: SemiSupervisedSplit, lam: float, gamma, spec: KernelSpec,
                      iters: int = 5000, step: float = 1.0, tol: float = 1e-6,
                      history: list | None = None) -> ExactFunction:
    """Reference minimizer by full functional gradient descent with Armijo backtracking.

    Stops when the RKHS norm of the gradient falls below ``tol`` times its
    initial value. Objective values are appended to ``history`` if given.
    """
    rows = _all_rows(split)
    if rows.shape[0] > MAX_EXACT_ROWS:
        raise ValueError(f"exact solver is limited to {MAX_EXACT_ROWS} rows, got {rows.shape[0]}")
    _check_sides(split)
    n_lab = split.labeled.n
    labels = split.labeled.labels
    K = kernel_matrix(spec, rows, rows)

    def objective(w):
        f = K @ w
        return mean_pnu_risk(f[:n_lab], labels, f[n_lab:], split.k, gamma) + 0.5 * lam * (w @ f)

    w = np.zeros(rows.shape[0])
    value = objective(w)
    if history is not None:
        history.append(value)
    s = step
    g0 = None
    gnorm = np.inf
    for it in range(1, iters + 1):
        f = K @ w
        g = risk_derivatives(f[:n_lab], labels, f[n_lab:], split.k, gamma) + lam * w
        gnorm_sq = float(g @ K @ g)
        gnorm = np.sqrt(max(gnorm_sq, 0.0))
        if g0 is None:
            g0 = gnorm
        if gnorm <= tol * g0 or gnorm == 0.0:
            return ExactFunction(rows, w, spec)
        while True:
            trial = w - s * g
            trial_value = objective(trial)
            if trial_value <= value - 0.5 * s * gnorm_sq:
                break
            s *= 0.5
            if s < 1e-16:
                raise ConvergenceError(it, gnorm)
        w, value = trial, trial_value
        if history is not None:
            history.append(value)
        s *= 2.0
    raise ConvergenceError(iters, gnorm)


def batch_point_coefficients(scores, point_class, priors, gamma, k: int, batch: int) -> np.ndarray:
    """Plain-loop evaluation of the per-point gradient weights of one sampled batch.

    Independent of the trainer's vectorized version: every pair is visited
    explicitly. Class-c points carry mass ``prior_c / batch`` within each pool.
    """
    scores = [float(s) for s in scores]
    point_class = [int(c) for c in point_class]
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (k - 1,))
    n = len(scores)
    unl = [p for p in range(n) if point_class[p] == 0]
    coef = [0.0] * n
    for j in range(1, k):
        pos = [p for p in range(n) if point_class[p] > j]
        neg = [p for p in range(n) if 0 < point_class[p] <= j]
        mp = {p: priors[point_class[p] - 1] / batch for p in pos}
        mn = {q: priors[point_class[q] - 1] / batch for q in neg}
        sp, sn = sum(mp.values()), sum(mn.values())
        g = float(gamma[j - 1])
        for p in pos:
            for q in neg:
                w = mp[p] / sp * mn[q] / sn
                gap = 1.0 - scores[p] + scores[q]
                coef[p] += g * w * -2.0 * gap
                coef[q] += g * w * 2.0 * gap
        for u in unl:
            for p in pos:
                w = mp[p] / sp / len(unl)
                gap = 1.0 - scores[p] + scores[u]
                coef[p] += (1 - g) * w * -2.0 * gap
                coef[u] += (1 - g) * w * 2.0 * gap
            for q in neg:
                w = mn[q] / sn / len(unl)
                gap = 1.0 - scores[u] + scores[q]
                coef[u] += (1 - g) * w * -2.0 * gap
                coef[q] += (1 - g) * w * 2.0 * gap
    return np.array(coef) / (k - 1)


def mc_unbiasedness_check(frozen_scores, frozen_instances, spec: KernelSpec, m: int, n_seeds: int,
                          point_class, priors, gamma, k: int, probes, batch: int,
                          master_seed: int = 0) -> dict:
    """Average the random-feature gradient over independent frequency blocks.

    For each block the trainer's coefficient row (with eta = 1) is evaluated
    at the probes; the mean is compared with the exact-kernel gradient
    ``sum_p c_p k(x_p, probe)`` whose weights come from the plain-loop oracle.
    """
    from .trainer import gradient_coefficient

    X = np.asarray(frozen_instances, dtype=np.float64)
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    stream = FeatureStream(master_seed, m, spec)
    samples = np.empty((n_seeds, probes.shape[0]))
    for s in range(n_seeds):
        omega = sample_omega_block(stream, s + 1)
        alpha = gradient_coefficient(frozen_scores, feature_map(omega, X), point_class, priors, gamma,
                                     1.0, k, batch=batch)
        samples[s] = -(feature_map(omega, probes) @ alpha)
    c = batch_point_coefficients(frozen_scores, point_class, priors, gamma, k, batch)
    exact = kernel_matrix(spec, probes, X) @ c
    mean = samples.mean(0)
    se = samples.std(0, ddof=1) / np.sqrt(n_seeds) if n_seeds > 1 else np.full(mean.size, np.nan)
    dev = np.abs(mean - exact)
    return {"max_abs_dev": float(dev.max()), "standard_error": se, "deviation": dev,
            "mean": mean, "exact": exact, "max_z": float(np.max(dev / se))}


def probe_grid(X, n: int = 50, seed: int = 0) -> np.ndarray:
    """``n`` seeded uniform points inside the bounding box of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    lo, hi = X.min(0), X.max(0)
    return lo + (hi - lo) * np.random.default_rng(seed).random((n, X.shape[1]))


def convergence_trace(split: SemiSupervisedSplit, config, checkpoints, seeds=range(5),
                      f_star: ExactFunction | None = None, probes=None) -> dict:
    """Mean-squared error of the trained function against the exact minimizer on the probe grid.

    Returns per-seed and seed-averaged errors for each checkpoint, plus the
    least-squares slope of log(error) against log(t).
    """
    from .trainer import Trainer

    checkpoints = sorted(int(c) for c in checkpoints)
    rows = _all_rows(split)
    spec = KernelSpec(config.sigma, split.d)
    gamma = config.gamma_vector(split.k)
    if f_star is None:
        f_star = batch_solve_exact(split, config.lam, gamma, spec)
    probes = probe_grid(rows) if probes is None else np.asarray(probes, dtype=np.float64)
    target = f_star(probes)
    per_seed = np.empty((len(seeds), len(checkpoints)))
    for a, seed in enumerate(seeds):
        trainer = Trainer(split, replace(config, master_seed=int(seed), t_max=checkpoints[-1]))
        for b, t in enumerate(checkpoints):
            trainer.run(t - trainer.t)
            per_seed[a, b] = np.mean((trainer.scores(probes) - target) ** 2)
    mse = per_seed.mean(0)
    slope = float(np.polyfit(np.log(checkpoints), np.log(mse), 1)[0])
    return {"checkpoints": checkpoints, "mse": mse, "per_seed": per_seed, "slope": slope}
