"""
Sampler Service - class-balanced c x k mini-batches
"""
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence
import logging
import math

import numpy as np

from app.engine.numerics import Rng
from app.errors import InsufficientClasses
from app.schemas.config import BatchSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetIndex:
    """Per-sample labels plus the sample indices of every class"""
    labels: np.ndarray
    classes: np.ndarray
    class_indices: Dict[int, np.ndarray]

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "DatasetIndex":
        labels = np.asarray(labels, dtype=np.int64)
        classes = np.unique(labels)
        class_indices = {int(c): np.flatnonzero(labels == c) for c in classes}
        return cls(labels=labels, classes=classes, class_indices=class_indices)

    @property
    def n_samples(self) -> int:
        return int(self.labels.size)

    @property
    def n_classes(self) -> int:
        return int(self.classes.size)


@dataclass(frozen=True)
class Batch:
    indices: np.ndarray
    labels: np.ndarray


class BatchSampler:
    """
    Builds c x k batches over a dataset index

    Within an epoch, classes are scheduled in blocks of ceil(C / c) batches:
    each block walks one fresh shuffle of all classes, and the last batch of
    a block is topped up with random classes not already in it. Every class
    therefore appears in every block.
    """

    def __init__(self, index: DatasetIndex, spec: BatchSpec):
        if index.n_classes < spec.c:
            raise InsufficientClasses(index.n_classes, spec.c, context="batch sampler")
        self.index = index
        self.spec = spec
        small = [c for c, idx in index.class_indices.items() if idx.size < spec.k]
        if small:
            logger.warning(
                f"{len(small)} classes have fewer than k={spec.k} samples; they will be drawn with replacement"
            )

    @property
    def batches_per_epoch(self) -> int:
        return math.ceil(self.index.n_samples / self.spec.size)

    @property
    def block_length(self) -> int:
        return math.ceil(self.index.n_classes / self.spec.c)

    def sample_batch(self, rng: Rng, classes: Optional[Sequence[int]] = None) -> Batch:
        """
        One batch of exactly k indices for each of c distinct classes

        Args:
            rng: random stream
            classes: the c classes to use; drawn uniformly when omitted

        Returns:
            Batch with indices grouped by class in the given class order
        """
        spec = self.spec
        if classes is None:
            classes = rng.choice(self.index.classes, size=spec.c, replace=False)
        indices: List[np.ndarray] = []
        labels: List[np.ndarray] = []
        for cls_id in classes:
            members = self.index.class_indices[int(cls_id)]
            replace = members.size < spec.k
            picked = rng.choice(members, size=spec.k, replace=replace)
            indices.append(picked)
            labels.append(np.full(spec.k, int(cls_id), dtype=np.int64))
        return Batch(indices=np.concatenate(indices), labels=np.concatenate(labels))

    def _class_schedule(self, rng: Rng, n_batches: int) -> List[np.ndarray]:
        c = self.spec.c
        all_classes = self.index.classes
        schedule: List[np.ndarray] = []
        while len(schedule) < n_batches:
            order = rng.permutation(all_classes)
            for start in range(0, order.size, c):
                chosen = order[start:start + c]
                if chosen.size < c:
                    rest = np.setdiff1d(all_classes, chosen)
                    extra = rng.choice(rest, size=c - chosen.size, replace=False)
                    chosen = np.concatenate([chosen, extra])
                schedule.append(chosen)
        return schedule[:n_batches]

    def epoch(self, rng: Rng) -> Iterator[Batch]:
        """ceil(N / (c k)) batches with block-wise class coverage"""
        n_batches = self.batches_per_epoch
        for classes in self._class_schedule(rng, n_batches):
            yield self.sample_batch(rng, classes)


def sample_batch(index: DatasetIndex, spec: BatchSpec, rng: Rng) -> Batch:
    return BatchSampler(index, spec).sample_batch(rng)


def epoch_iterator(index: DatasetIndex, spec: BatchSpec, rng: Rng) -> Iterator[Batch]:
    return BatchSampler(index, spec).epoch(rng)
