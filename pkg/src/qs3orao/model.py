"""Trained ranking model: prediction by regenerating frequency blocks, and its file format.

File layout, all little-endian::

    magic "QS3O" | version u32 | d u32 | k u32 | m u32 | t u64 | sigma f64
    | master_seed u64 | k-1 thresholds f64 | t*2m coefficients f64 (row-major)
    | CRC32 u32 of every preceding byte
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import FeatureStream, KernelSpec, evaluate
from .thresholds import Thresholds, predict_label

MAGIC = b"QS3O"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIQdQ")
_CRC = struct.Struct("<I")


class ModelFileError(Exception):
    pass


class BadMagicError(ModelFileError):
    pass


class VersionError(ModelFileError):
    def __init__(self, found: int, supported: int):
        self.found = found
        self.supported = supported
        super().__init__(f"model file format version {found} is newer than supported version {supported}")


class TruncatedFileError(ModelFileError):
    pass


class ChecksumError(ModelFileError):
    pass


@dataclass(frozen=True, eq=False)
class RankModel:
    """Everything needed to score a row: no frequencies are stored.

    ``coefficients[i-1]`` is the (fully decayed) coefficient row of iteration
    ``i``; block ``i`` is regenerated from ``master_seed``.
    """

    spec: KernelSpec
    master_seed: int
    m: int
    coefficients: np.ndarray
    thresholds: Thresholds
    k: int

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=np.float64, order="C")
        if coef.size == 0:
            coef = coef.reshape(0, 2 * self.m)
        if coef.ndim != 2 or coef.shape[1] != 2 * self.m:
            raise ValueError(f"coefficients must be t x {2 * self.m}, got {coef.shape}")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        if self.thresholds.b.size != self.k - 1:
            raise ValueError(f"expected {self.k - 1} thresholds, got {self.thresholds.b.size}")

    @property
    def t(self) -> int:
        return self.coefficients.shape[0]

    @property
    def stream(self) -> FeatureStream:
        return FeatureStream(self.master_seed, self.m, self.spec)

    def score_bound(self) -> float:
        """Upper bound on |f(x)|: sum of coefficient row norms (each feature map has unit norm)."""
        return float(np.linalg.norm(self.coefficients, axis=1).sum())

    def with_thresholds(self, thresholds: Thresholds) -> "RankModel":
        return RankModel(self.spec, self.master_seed, self.m, self.coefficients, thresholds, self.k)


def predict_scores(model: RankModel, rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 2 and rows.shape[0] == 0:
        return np.zeros(0)
    if rows.ndim != 2 or rows.shape[1] != model.spec.d:
        raise ValueError(f"expected rows of dimension {model.spec.d}, got shape {rows.shape}")
    scores = evaluate(model.stream, model.coefficients, rows)
    if __debug__:
        bound = model.score_bound()
        assert np.all(np.abs(scores) <= bound * (1 + 1e-9) + 1e-12), "score exceeds coefficient-norm bound"
    return scores


def predict_score(model: RankModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.spec.d,):
        raise ValueError(f"expected a row of dimension {model.spec.d}, got shape {x.shape}")
    return float(predict_scores(model, x[None, :])[0])


def predict_labels(model: RankModel, rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.atleast_1d(predict_label(predict_scores(model, rows), model.thresholds))


def model_to_bytes(model: RankModel) -> bytes:
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, model.spec.d, model.k, model.m, model.t,
                          float(model.spec.sigma), int(model.master_seed))
    body = (header
            + np.asarray(model.thresholds.b, dtype="<f8").tobytes()
            + np.asarray(model.coefficients, dtype="<f8").tobytes())
    return body + _CRC.pack(zlib.crc32(body))


def model_from_bytes(raw: bytes) -> RankModel:
    if len(raw) < _HEADER.size:
        if raw[:4] != MAGIC[:len(raw[:4])]:
            raise BadMagicError(f"not a model file (magic {raw[:4]!r})")
        raise TruncatedFileError(f"file has {len(raw)} bytes, header alone needs {_HEADER.size}")
    magic, version, d, k, m, t, sigma, seed = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"not a model file (magic {magic!r}, expected {MAGIC!r})")
    if version > FORMAT_VERSION:
        raise VersionError(version, FORMAT_VERSION)
    if version < 1:
        raise ModelFileError(f"invalid format version {version}")
    n_thresholds = max(k - 1, 0)
    expected = _HEADER.size + 8 * n_thresholds + 8 * t * 2 * m + _CRC.size
    if len(raw) < expected:
        raise TruncatedFileError(f"file has {len(raw)} bytes, expected {expected}")
    if len(raw) > expected:
        raise ModelFileError(f"file has {len(raw) - expected} trailing bytes")
    (stored_crc,) = _CRC.unpack_from(raw, expected - _CRC.size)
    actual_crc = zlib.crc32(raw[:expected - _CRC.size])
    if stored_crc != actual_crc:
        raise ChecksumError(f"CRC32 mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}")
    offset = _HEADER.size
    b = np.frombuffer(raw, dtype="<f8", count=n_thresholds, offset=offset).astype(np.float64)
    offset += 8 * n_thresholds
    coef = np.frombuffer(raw, dtype="<f8", count=t * 2 * m, offset=offset).astype(np.float64)
    return RankModel(KernelSpec(sigma, d), seed, m, coef.reshape(t, 2 * m), Thresholds(b), k)


def save_model(model: RankModel, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> RankModel:
    return model_from_bytes(Path(path).read_bytes())
