"""
Dataset Service - synthetic class manifolds with label-noise outliers

Dataset file format (comma separated text):
    osmcaa-dataset v1 <N> <D_in>
    label,clean_label,feature_0,...,feature_{D_in-1}
Features are written with Python's shortest round-trip float repr, so a
load after save reproduces them bit-exactly.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union
import logging
import math

import numpy as np

from app.config import settings
from app.engine.numerics import Rng, make_rng
from app.errors import (
    DimensionMismatch,
    FormatError,
    InsufficientClasses,
    LabelOutOfRange,
    MeanSeparationFailure,
    NonFiniteInput,
)
from app.schemas.config import SynthConfig
from app.schemas.results import DatasetSummary
from app.storage import atomic_write

logger = logging.getLogger(__name__)

FILE_MAGIC = "osmcaa-dataset"
FILE_VERSION = "v1"


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    clean_labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise DimensionMismatch(f"features must be 2-dimensional, got shape {self.features.shape}")
        for name in ("labels", "clean_labels"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise DimensionMismatch(
                    f"{name} has shape {arr.shape}, expected ({n},)", expected=(n,), actual=arr.shape
                )
            if arr.size and (arr.min() < 0 or arr.max() >= self.n_classes):
                bad = arr[(arr < 0) | (arr >= self.n_classes)][0]
                raise LabelOutOfRange(int(bad), self.n_classes)
        if not np.all(np.isfinite(self.features)):
            raise NonFiniteInput("dataset features")

    @property
    def outlier_mask(self) -> np.ndarray:
        return self.labels != self.clean_labels

    @property
    def n_samples(self) -> int:
        return int(self.features.shape[0])

    @property
    def d_in(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_outliers(self) -> int:
        return int(self.outlier_mask.sum())


def summary(ds: Dataset) -> DatasetSummary:
    return DatasetSummary(
        n_samples=ds.n_samples,
        d_in=ds.d_in,
        n_classes=ds.n_classes,
        n_outliers=ds.n_outliers,
    )


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _place_means(rng: Rng, n_classes: int, dim: int, min_separation_deg: float, max_attempts: int) -> np.ndarray:
    """Unit vectors with pairwise angles of at least min_separation_deg, by rejection"""
    max_cos = math.cos(math.radians(min_separation_deg))
    means: List[np.ndarray] = []
    attempts = 0
    while len(means) < n_classes:
        if attempts >= max_attempts:
            raise MeanSeparationFailure(len(means), n_classes, attempts, min_separation_deg)
        attempts += 1
        candidate = _unit(rng.normal(size=dim))
        if means and np.max(np.stack(means) @ candidate) > max_cos:
            continue
        means.append(candidate)
    return np.stack(means)


def generate(cfg: SynthConfig) -> Dataset:
    """
    Sample a labelled dataset from elongated Gaussian class manifolds

    Each class draws mean + sigma * N(0, I) + sigma * sqrt(e^2 - 1) * t * u
    with t ~ N(0, 1) and u a random unit direction of that class, so the
    variance along u is e^2 sigma^2. Means and directions lie in the first
    signal_dim coordinates; the remaining coordinates carry an extra
    nuisance_spread * N(0, I) shared by every class. Then exactly
    round(rate * N) samples are relabelled to a uniformly random different
    class.

    Args:
        cfg: synthetic dataset configuration

    Returns:
        Dataset in class-blocked order
    """
    rng = make_rng(cfg.seed, "data")
    max_attempts = cfg.max_attempts or settings.MEAN_SEPARATION_MAX_ATTEMPTS
    signal = cfg.effective_signal_dim
    means = np.zeros((cfg.n_classes, cfg.dim))
    means[:, :signal] = _place_means(rng, cfg.n_classes, signal, cfg.min_separation_deg, max_attempts)

    sigma = cfg.cluster_spread
    along = sigma * math.sqrt(cfg.manifold_elongation ** 2 - 1.0)
    n_nuisance = cfg.dim - signal
    blocks = []
    for mean in means:
        direction = np.zeros(cfg.dim)
        direction[:signal] = _unit(rng.normal(size=signal))
        noise = sigma * rng.normal(size=(cfg.per_class, cfg.dim))
        stretch = along * rng.normal(size=cfg.per_class)
        if n_nuisance and cfg.nuisance_spread > 0:
            noise[:, signal:] += cfg.nuisance_spread * rng.normal(size=(cfg.per_class, n_nuisance))
        blocks.append(mean + noise + stretch[:, None] * direction)
    features = np.concatenate(blocks)
    clean = np.repeat(np.arange(cfg.n_classes, dtype=np.int64), cfg.per_class)

    n = features.shape[0]
    n_outliers = int(math.floor(cfg.outlier_rate * n + 0.5))
    labels = clean.copy()
    if n_outliers:
        picked = rng.choice(n, size=n_outliers, replace=False)
        shift = rng.integers(1, cfg.n_classes, size=n_outliers)
        labels[picked] = (clean[picked] + shift) % cfg.n_classes

    ds = Dataset(features=features, labels=labels, clean_labels=clean, n_classes=cfg.n_classes)
    logger.info(
        f"Generated dataset: {ds.n_samples} samples, {ds.d_in} dims, {ds.n_classes} classes, {ds.n_outliers} outliers"
    )
    return ds


def save(ds: Dataset, path: Union[str, Path]) -> None:
    with atomic_write(path) as handle:
        handle.write(f"{FILE_MAGIC} {FILE_VERSION} {ds.n_samples} {ds.d_in}\n")
        for label, clean, row in zip(ds.labels.tolist(), ds.clean_labels.tolist(), ds.features.tolist()):
            handle.write(",".join([str(label), str(clean)] + [repr(v) for v in row]) + "\n")
    logger.info(f"Saved dataset with {ds.n_samples} samples to {path}")


def _parse_header(line: str, path: str) -> Tuple[int, int]:
    parts = line.split()
    if len(parts) != 4 or parts[0] != FILE_MAGIC:
        raise FormatError(f"expected header '{FILE_MAGIC} {FILE_VERSION} <N> <D_in>'", line=1, path=path)
    if parts[1] != FILE_VERSION:
        raise FormatError(f"unsupported dataset version {parts[1]!r}", line=1, path=path)
    try:
        n, d_in = int(parts[2]), int(parts[3])
    except ValueError:
        raise FormatError("header sizes must be integers", line=1, path=path)
    if n < 0 or d_in < 1:
        raise FormatError(f"invalid header sizes N={n} D_in={d_in}", line=1, path=path)
    return n, d_in


def load(path: Union[str, Path]) -> Dataset:
    """
    Read a dataset file

    Raises:
        FormatError: empty file, bad header, blank row, unparsable value or wrong row count
        DimensionMismatch: a row whose feature count differs from the header
    """
    path = str(path)
    with open(path, encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise FormatError("empty dataset file", line=1, path=path)

    n, d_in = _parse_header(lines[0], path)
    rows = lines[1:]
    if len(rows) != n:
        raise FormatError(f"header declares {n} rows, found {len(rows)}", line=len(lines), path=path)

    features = np.empty((n, d_in), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    clean = np.empty(n, dtype=np.int64)
    for row, text in enumerate(rows):
        line_no = row + 2
        if not text.strip():
            raise FormatError("blank line", line=line_no, path=path)
        parts = text.split(",")
        if len(parts) != d_in + 2:
            raise DimensionMismatch(
                f"{path}:{line_no}: row {row} has {len(parts) - 2} features, expected {d_in}",
                expected=(d_in,),
                actual=(len(parts) - 2,),
                row=row,
            )
        try:
            labels[row] = int(parts[0])
            clean[row] = int(parts[1])
            features[row] = [float(v) for v in parts[2:]]
        except ValueError as exc:
            raise FormatError(f"unparsable value ({exc})", line=line_no, path=path)

    n_classes = int(max(labels.max(), clean.max())) + 1 if n else 0
    return Dataset(features=features, labels=labels, clean_labels=clean, n_classes=n_classes)


def _side(ds: Dataset, classes: np.ndarray, rng: Rng) -> Dataset:
    """Samples of the given clean classes, labels re-indexed densely, crossing outliers redrawn"""
    remap = np.full(ds.n_classes, -1, dtype=np.int64)
    remap[classes] = np.arange(classes.size)
    keep = np.flatnonzero(remap[ds.clean_labels] >= 0)

    clean = remap[ds.clean_labels[keep]]
    labels = remap[ds.labels[keep]]
    crossing = labels < 0
    if crossing.any():
        shift = rng.integers(1, classes.size, size=int(crossing.sum()))
        labels[crossing] = (clean[crossing] + shift) % classes.size
    return Dataset(
        features=ds.features[keep],
        labels=labels,
        clean_labels=clean,
        n_classes=int(classes.size),
    )


def split(ds: Dataset, train_class_fraction: float, rng: Rng, ordered: bool = False) -> Tuple[Dataset, Dataset]:
    """
    Partition by ground-truth class into train and test datasets

    Args:
        ds: dataset to split
        train_class_fraction: share of classes on the training side
        rng: stream for the class shuffle and for redrawing crossing labels
        ordered: take the first classes for training instead of a random subset

    Returns:
        (train, test) with disjoint classes, each re-indexed to 0..C_side-1
    """
    n_train = int(math.floor(train_class_fraction * ds.n_classes + 0.5))
    n_test = ds.n_classes - n_train
    if n_train < 2:
        raise InsufficientClasses(n_train, 2, context="train split")
    if n_test < 2:
        raise InsufficientClasses(n_test, 2, context="test split")

    if ordered:
        train_classes = np.arange(n_train)
    else:
        train_classes = np.sort(rng.permutation(ds.n_classes)[:n_train])
    test_classes = np.setdiff1d(np.arange(ds.n_classes), train_classes)

    train = _side(ds, train_classes, rng)
    test = _side(ds, test_classes, rng)
    logger.info(
        f"Split {ds.n_classes} classes into {n_train} train ({train.n_samples} samples, "
        f"{train.n_outliers} outliers) and {n_test} test ({test.n_samples} samples, {test.n_outliers} outliers)"
    )
    return train, test
