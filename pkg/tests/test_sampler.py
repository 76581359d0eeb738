"""
Tests for class-balanced batch sampling
"""
import logging
import math

import numpy as np
import pytest

from app.engine.mining import construct_pairs
from app.engine.numerics import make_rng
from app.errors import InsufficientClasses
from app.schemas.config import BatchSpec
from app.services.sampler import BatchSampler, DatasetIndex, epoch_iterator, sample_batch


def make_index(n_classes: int, per_class: int) -> DatasetIndex:
    return DatasetIndex.from_labels(np.repeat(np.arange(n_classes), per_class))


@pytest.mark.parametrize("c, k", [(8, 7), (3, 18), (2, 2)])
def test_batch_shape(c, k):
    """Test a batch holds exactly k samples of each of c distinct classes"""
    index = make_index(10, 20)
    batch = sample_batch(index, BatchSpec(c=c, k=k), make_rng(0))
    assert batch.indices.size == c * k
    classes, counts = np.unique(batch.labels, return_counts=True)
    assert classes.size == c
    assert np.all(counts == k)
    assert np.array_equal(index.labels[batch.indices], batch.labels)


def test_exact_fit_batch_has_no_duplicates():
    """Test c=2, k=2 on a 2 x 2 dataset uses every sample once"""
    batch = sample_batch(make_index(2, 2), BatchSpec(c=2, k=2), make_rng(3))
    assert sorted(batch.indices.tolist()) == [0, 1, 2, 3]


def test_without_replacement_when_class_is_large_enough():
    """Test indices within a class are unique when the class has at least k samples"""
    batch = sample_batch(make_index(5, 9), BatchSpec(c=5, k=9), make_rng(11))
    assert np.unique(batch.indices).size == batch.indices.size


def test_small_class_sampled_with_replacement(caplog):
    """Test undersized classes are drawn with replacement and a warning is logged"""
    labels = np.array([0, 1, 1, 1])
    with caplog.at_level(logging.WARNING):
        sampler = BatchSampler(DatasetIndex.from_labels(labels), BatchSpec(c=2, k=3))
    assert "with replacement" in caplog.text
    batch = sampler.sample_batch(make_rng(0))
    assert np.all(batch.indices[batch.labels == 0] == 0)


def test_insufficient_classes():
    """Test a batch cannot ask for more classes than exist"""
    with pytest.raises(InsufficientClasses) as exc:
        sample_batch(make_index(3, 5), BatchSpec(c=4, k=2), make_rng(0))
    assert exc.value.available == 3
    assert exc.value.required == 4


@pytest.mark.parametrize(
    "n_classes, per_class, c, k, expected",
    [(10, 20, 5, 4, 10), (2, 2, 2, 2, 1), (7, 3, 2, 2, 6)],
)
def test_batches_per_epoch(n_classes, per_class, c, k, expected):
    """Test an epoch yields ceil(N / (c k)) batches"""
    batches = list(epoch_iterator(make_index(n_classes, per_class), BatchSpec(c=c, k=k), make_rng(0)))
    assert len(batches) == expected


def test_epoch_is_deterministic():
    """Test the same seed reproduces the batch sequence"""
    index = make_index(10, 20)
    spec = BatchSpec(c=4, k=5)
    first = [b.indices for b in epoch_iterator(index, spec, make_rng(5, "sampler"))]
    second = [b.indices for b in epoch_iterator(index, spec, make_rng(5, "sampler"))]
    assert all(np.array_equal(a, b) for a, b in zip(first, second))


def test_every_class_appears_in_each_block():
    """Test each aligned block of ceil(C / c) batches covers all classes"""
    index = make_index(10, 20)
    spec = BatchSpec(c=4, k=5)
    sampler = BatchSampler(index, spec)
    batches = list(sampler.epoch(make_rng(9)))
    block = sampler.block_length
    assert block == math.ceil(10 / 4)
    for start in range(0, len(batches) - block + 1, block):
        seen = set(np.concatenate([b.labels for b in batches[start:start + block]]).tolist())
        assert seen == set(range(10))


@pytest.mark.parametrize("c", range(2, 9))
@pytest.mark.parametrize("k", range(2, 9))
def test_pair_count_law(c, k):
    """Test |P| = ck(k-1)/2 and |N| = ck(ck-k)/2 for every emitted batch shape"""
    batch = sample_batch(make_index(8, 8), BatchSpec(c=c, k=k), make_rng(c * 10 + k))
    pairs = construct_pairs(batch.labels)
    assert pairs.n_pos == c * k * (k - 1) // 2
    assert pairs.n_neg == c * k * (c * k - k) // 2
