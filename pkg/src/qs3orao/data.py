"""Dataset ingestion, preprocessing, semi-supervised splits and the k-1 binary views."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(Exception):
    """Base class for dataset problems."""


class ParseError(DataError):
    def __init__(self, path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class ValidationError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class OrdinalDataset:
    """Dense feature rows with ordinal labels in ``1..k``.

    Classes absent from ``labels`` get a zero prior; code that needs every
    class represented (splits, training) checks that itself.
    """

    features: np.ndarray
    labels: np.ndarray
    k: int
    priors: np.ndarray = field(init=False)

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise ValidationError(f"features must be a matrix, got shape {X.shape}")
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValidationError(f"need one label per row: {X.shape[0]} rows, labels shape {y.shape}")
        if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValidationError("labels must be integers")
        y = y.astype(np.int64)
        if self.k < 1:
            raise ValidationError(f"class count must be >= 1, got {self.k}")
        if y.size and (y.min() < 1 or y.max() > self.k):
            raise ValidationError(f"labels must lie in 1..{self.k}, found range {y.min()}..{y.max()}")
        counts = np.bincount(y, minlength=self.k + 1)[1:]
        priors = counts / y.size if y.size else np.zeros(self.k)
        for arr in (X, y, priors):
            arr.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "priors", priors)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k + 1)[1:]

    def missing_classes(self) -> list[int]:
        return [c + 1 for c, cnt in enumerate(self.class_counts()) if cnt == 0]

    def subset(self, rows) -> "OrdinalDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return OrdinalDataset(self.features[rows], self.labels[rows], self.k)


def _parse_label(token: str, path, line_no: int) -> int:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(path, line_no, f"label {token!r} is not a number") from None
    if not value.is_integer():
        raise ParseError(path, line_no, f"label {token!r} is not an integer")
    label = int(value)
    if label < 1:
        raise ValidationError(f"{path}:{line_no}: label {label} is not a valid ordinal label (must be >= 1)")
    return label


def _read_lines(path) -> list[tuple[int, str]]:
    text = Path(path).read_text(encoding="utf-8")
    out = []
    for line_no, line in enumerate(io.StringIO(text, newline=None), start=1):
        line = line.strip()
        if line:
            out.append((line_no, line))
    return out


def _load_csv(path):
    rows, labels, width = [], [], None
    for line_no, line in _read_lines(path):
        cells = next(csv.reader([line]))
        if len(cells) < 2:
            raise ParseError(path, line_no, "need at least one feature column and a label column")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(path, line_no, f"expected {width} columns, found {len(cells)}")
        try:
            rows.append([float(c) for c in cells[:-1]])
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
        labels.append(_parse_label(cells[-1].strip(), path, line_no))
    return rows, labels


def _load_libsvm(path):
    entries, labels, max_index = [], [], 0
    for line_no, line in _read_lines(path):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_parse_label(tokens[0], path, line_no))
        row = {}
        for tok in tokens[1:]:
            idx, sep, val = tok.partition(":")
            if not sep:
                raise ParseError(path, line_no, f"expected index:value, got {tok!r}")
            try:
                j, v = int(idx), float(val)
            except ValueError:
                raise ParseError(path, line_no, f"bad sparse entry {tok!r}") from None
            if j < 1:
                raise ParseError(path, line_no, f"feature indices are 1-based, got {j}")
            row[j] = v
            max_index = max(max_index, j)
        entries.append(row)
    rows = np.zeros((len(entries), max_index))
    for r, row in enumerate(entries):
        for j, v in row.items():
            rows[r, j - 1] = v
    return rows, labels


def load_dataset(path, format: str = "csv", k: int | None = None) -> OrdinalDataset:
    """Read a labeled CSV (label in the last column) or LIBSVM file.

    ``k`` defaults to the largest label present.
    """
    if format == "csv":
        rows, labels = _load_csv(path)
    elif format == "libsvm":
        rows, labels = _load_libsvm(path)
    else:
        raise ValueError(f"unknown format {format!r} (expected 'csv' or 'libsvm')")
    if not labels:
        raise ValidationError(f"{path}: no data rows")
    X = np.asarray(rows, dtype=np.float64).reshape(len(labels), -1)
    y = np.asarray(labels, dtype=np.int64)
    return OrdinalDataset(X, y, int(y.max()) if k is None else k)


def load_features(path, format: str = "csv", drop_last: bool = False, d: int | None = None) -> np.ndarray:
    """Unlabeled feature rows. LIBSVM label tokens are ignored; ``d`` pads sparse rows."""
    if format == "libsvm":
        rows, _ = _load_libsvm(path)
        rows = np.asarray(rows, dtype=np.float64)
        if d is not None and rows.shape[1] < d:
            rows = np.hstack([rows, np.zeros((rows.shape[0], d - rows.shape[1]))])
        return rows
    if format != "csv":
        raise ValueError(f"unknown format {format!r} (expected 'csv' or 'libsvm')")
    out, width = [], None
    for line_no, line in _read_lines(path):
        cells = next(csv.reader([line]))
        if drop_last:
            cells = cells[:-1]
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(path, line_no, f"expected {width} columns, found {len(cells)}")
        try:
            out.append([float(c) for c in cells])
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
    return np.asarray(out, dtype=np.float64).reshape(len(out), -1)


def write_csv(path, features: np.ndarray, labels=None) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        for r, row in enumerate(np.asarray(features, dtype=np.float64)):
            cells = [repr(float(v)) for v in row]
            if labels is not None:
                cells.append(str(int(labels[r])))
            fh.write(",".join(cells) + "\n")


def min_max_scale(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    lo = X.min(axis=0) if X.shape[0] else np.zeros(X.shape[1])
    span = (X.max(axis=0) - lo) if X.shape[0] else np.zeros(X.shape[1])
    out = np.zeros_like(X)
    varying = span > 0
    out[:, varying] = (X[:, varying] - lo[varying]) / span[varying]
    return np.clip(out, 0.0, 1.0)


def normalize_min_max(ds: OrdinalDataset) -> OrdinalDataset:
    """Rescale every column affinely onto [0, 1]; constant columns become 0."""
    return OrdinalDataset(min_max_scale(ds.features), ds.labels, ds.k)


def discretize_equal_frequency(targets, k: int) -> np.ndarray:
    """Ordinal labels 1..k from equal-frequency bins of a real target.

    Ranks come from a stable sort, so ties keep their original row order; bin
    sizes differ by at most one.
    """
    targets = np.asarray(targets, dtype=np.float64).ravel()
    n = targets.size
    if k < 2:
        raise ValueError(f"need at least 2 classes, got k={k}")
    if k > n:
        raise ValueError(f"cannot make {k} non-empty bins from {n} targets")
    order = np.argsort(targets, kind="stable")
    labels = np.empty(n, dtype=np.int64)
    labels[order] = np.arange(n) * k // n + 1
    return labels


@dataclass(frozen=True, eq=False)
class SemiSupervisedSplit:
    labeled: OrdinalDataset
    unlabeled_features: np.ndarray
    split_seed: int
    labeled_rows: np.ndarray | None = None
    unlabeled_rows: np.ndarray | None = None

    def __post_init__(self):
        U = np.ascontiguousarray(self.unlabeled_features, dtype=np.float64)
        if U.size == 0:
            U = np.zeros((0, self.labeled.d))
        if U.ndim != 2 or U.shape[1] != self.labeled.d:
            raise ValidationError(
                f"unlabeled rows have shape {U.shape}, labeled rows have dimension {self.labeled.d}")
        U.setflags(write=False)
        object.__setattr__(self, "unlabeled_features", U)

    @property
    def k(self) -> int:
        return self.labeled.k

    @property
    def d(self) -> int:
        return self.labeled.d

    @property
    def n_unlabeled(self) -> int:
        return self.unlabeled_features.shape[0]

    def all_features(self) -> np.ndarray:
        return np.vstack([self.labeled.features, self.unlabeled_features])


_SPLIT_RETRIES = 1000


def make_semi_split(ds: OrdinalDataset, n_labeled: int, seed: int) -> SemiSupervisedSplit:
    """Label ``n_labeled`` random rows and strip the labels of the rest.

    The draw is repeated from the same seeded stream until every class has at
    least one labeled row.
    """
    if n_labeled < ds.k:
        raise ValidationError(
            f"n_labeled={n_labeled} cannot cover all {ds.k} classes with at least one labeled row")
    if n_labeled > ds.n:
        raise ValidationError(f"n_labeled={n_labeled} exceeds dataset size {ds.n}")
    if ds.missing_classes():
        raise ValidationError(f"classes {ds.missing_classes()} have no rows in the dataset")
    rng = np.random.default_rng(seed)
    for _ in range(_SPLIT_RETRIES):
        perm = rng.permutation(ds.n)
        lab = np.sort(perm[:n_labeled])
        if np.unique(ds.labels[lab]).size == ds.k:
            unl = np.sort(perm[n_labeled:])
            return SemiSupervisedSplit(ds.subset(lab), ds.features[unl], seed, lab, unl)
    raise ValidationError(
        f"no labeled sample of size {n_labeled} covering all classes after {_SPLIT_RETRIES} draws")


@dataclass(frozen=True, eq=False)
class SubproblemView:
    """Binary view ``j``: labels <= j are negative, labels > j positive."""

    j: int
    positive_rows: np.ndarray
    negative_rows: np.ndarray
    pi_hat: float


def subproblem_view(split: SemiSupervisedSplit | OrdinalDataset, j: int) -> SubproblemView:
    ds = split.labeled if isinstance(split, SemiSupervisedSplit) else split
    if not 1 <= j <= ds.k - 1:
        raise ValueError(f"subproblem index must be in 1..{ds.k - 1}, got {j}")
    positive = np.flatnonzero(ds.labels > j)
    negative = np.flatnonzero(ds.labels <= j)
    return SubproblemView(j, positive, negative, positive.size / ds.n)


def subproblem_views(split: SemiSupervisedSplit) -> list[SubproblemView]:
    return [subproblem_view(split, j) for j in range(1, split.k)]


def make_ordinal_blobs(n_per_class, k: int = 3, d: int = 1, spacing: float = 2.0,
                       noise: float = 0.3, n_noise_dims: int = 0, seed: int = 0) -> OrdinalDataset:
    """Synthetic ordinal data: class ``c`` centred at ``(c - (k+1)/2) * spacing``
    along the first ``d`` axes, plus ``n_noise_dims`` pure-noise columns.

    With the defaults the class means are -2, 0, +2.
    """
    rng = np.random.default_rng(seed)
    counts = np.broadcast_to(np.asarray(n_per_class), (k,))
    labels = np.repeat(np.arange(1, k + 1), counts)
    centres = (labels - (k + 1) / 2.0) * spacing
    X = centres[:, None] + noise * rng.standard_normal((labels.size, d))
    if n_noise_dims:
        X = np.hstack([X, rng.standard_normal((labels.size, n_noise_dims))])
    perm = rng.permutation(labels.size)
    return OrdinalDataset(X[perm], labels[perm], k)
