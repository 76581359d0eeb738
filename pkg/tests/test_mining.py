"""
Tests for pair construction, soft mining scores and class-aware attention
"""
import math

import numpy as np
import pytest

from app.engine.mining import (
    PairSets,
    caa_scores,
    caa_softmax,
    combine_weights,
    construct_pairs,
    mine_batch,
    osm_negative_scores,
    osm_positive_scores,
    pair_caa,
)
from app.engine.numerics import l2_normalize_rows, make_rng
from app.errors import LabelOutOfRange
from app.schemas.config import AblationMode, MiningConfig


def single_pair(distance: float, same_class: bool):
    """Distance matrix and pair set holding one pair (0, 1)"""
    d = np.array([[0.0, distance], [distance, 0.0]])
    return d, construct_pairs([0, 0] if same_class else [0, 1])


def test_construct_pairs_small_case():
    """Test labels (A, A, B, B) route every unordered pair once"""
    pairs = construct_pairs(["A", "A", "B", "B"])
    assert pairs.positives == [(0, 1), (2, 3)]
    assert pairs.negatives == [(0, 2), (0, 3), (1, 2), (1, 3)]


def test_construct_pairs_counts():
    """Test c=8, k=7 gives 168 positives and 1372 negatives"""
    pairs = construct_pairs(np.repeat(np.arange(8), 7))
    assert pairs.n_pos == 168
    assert pairs.n_neg == 1372
    assert pairs.n_pos + pairs.n_neg == 56 * 55 // 2


def test_construct_pairs_single_class():
    """Test identical labels give only positives"""
    pairs = construct_pairs([5, 5, 5])
    assert pairs.n_pos == 3
    assert pairs.n_neg == 0


def test_construct_pairs_needs_two_samples():
    """Test a one-sample batch is rejected"""
    with pytest.raises(ValueError):
        construct_pairs([0])


@pytest.mark.parametrize(
    "distance, expected",
    [(0.0, 1.0), (0.8, math.exp(-1.0)), (2.0, math.exp(-6.25))],
)
def test_osm_positive_examples(distance, expected):
    """Test s+ = exp(-d^2 / sigma^2) with sigma = 0.8"""
    d, pairs = single_pair(distance, same_class=True)
    score = osm_positive_scores(d, pairs, MiningConfig(sigma_osm=0.8))
    assert score[0] == pytest.approx(expected, rel=1e-12)


def test_osm_positive_spot_values():
    """Test the rounded reference values"""
    d, pairs = single_pair(0.8, same_class=True)
    assert osm_positive_scores(d, pairs, MiningConfig())[0] == pytest.approx(0.367879, abs=1e-6)
    d, pairs = single_pair(2.0, same_class=True)
    assert osm_positive_scores(d, pairs, MiningConfig())[0] == pytest.approx(1.930e-3, abs=1e-6)


@pytest.mark.parametrize("distance, expected", [(1.5, 0.0), (0.0, 1.2), (0.7, 0.5)])
def test_osm_negative_examples(distance, expected):
    """Test s- = max(0, alpha - d) with alpha = 1.2"""
    d, pairs = single_pair(distance, same_class=False)
    score = osm_negative_scores(d, pairs, MiningConfig(alpha=1.2))
    assert score[0] == pytest.approx(expected, abs=1e-15)


def test_osm_positive_strictly_decreasing():
    """Test s+ decreases strictly with distance and stays in (0, 1]"""
    distances = np.linspace(0.0, 2.0, 201)
    labels = np.zeros(2)
    scores = []
    for value in distances:
        d = np.array([[0.0, value], [value, 0.0]])
        scores.append(osm_positive_scores(d, construct_pairs(labels), MiningConfig())[0])
    scores = np.array(scores)
    assert scores[0] == 1.0
    assert np.all(np.diff(scores) < 0)
    assert np.all((scores > 0) & (scores <= 1))


def test_caa_single_class():
    """Test one context vector gives attention 1 everywhere"""
    f = l2_normalize_rows(make_rng(0).normal(size=(4, 3)))
    a = caa_scores(f, [0, 0, 0, 0], np.array([[0.2, -0.1, 0.4]]), MiningConfig())
    np.testing.assert_allclose(a, 1.0, rtol=0, atol=0)


def test_caa_symmetric_logits():
    """Test equal logits give attention 0.5"""
    ctx = np.array([[0.3, 0.1], [0.3, 0.1]])
    a = caa_scores([[0.6, 0.8]], [1], ctx, MiningConfig())
    assert a[0] == pytest.approx(0.5, abs=1e-15)


def test_caa_scaled_logits():
    """Test scaled logits (5.556, 0) with the true class first"""
    ctx = np.array([[5.556 * 0.18, 0.0], [0.0, 0.0]])
    a = caa_scores([[1.0, 0.0]], [0], ctx, MiningConfig(sigma_caa=0.18))
    assert a[0] == pytest.approx(0.99615, abs=1e-5)


def test_caa_softmax_rows_and_shift_invariance(rng):
    """Test softmax rows sum to 1 and adding a shared vector to every context leaves them unchanged"""
    f = l2_normalize_rows(rng.normal(size=(10, 6)))
    ctx = rng.normal(size=(5, 6))
    probs = caa_softmax(f, ctx, 0.18)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    shifted = caa_softmax(f, ctx + rng.normal(size=6), 0.18)
    np.testing.assert_allclose(shifted, probs, atol=1e-12)


def test_caa_label_out_of_range():
    """Test a label without a context vector is rejected"""
    with pytest.raises(LabelOutOfRange) as exc:
        caa_scores([[1.0, 0.0]], [2], np.eye(2), MiningConfig())
    assert exc.value.label == 2


def test_pair_caa_examples():
    """Test a_ij = min(a_i, a_j) over enumerated pairs"""
    pairs = construct_pairs([0, 0, 1])
    a_pos, a_neg = pair_caa(np.array([0.2, 0.9, 0.9]), pairs)
    assert a_pos.tolist() == [0.2]
    assert a_neg.tolist() == [0.2, 0.9]

    pairs = construct_pairs([0, 0])
    assert pair_caa(np.array([0.9, 0.4]), pairs)[0].tolist() == [0.4]
    assert pair_caa(np.array([0.7, 0.7]), pairs)[0].tolist() == [0.7]


def test_combine_weights_modes():
    """Test Baseline, OSM and OSM+CAA weighting rules"""
    s_pos = np.array([0.368])
    s_neg = np.array([0.5])
    a_pair = (np.array([0.5]), np.array([0.25]))
    a_img = np.array([0.5, 0.5])

    baseline = combine_weights(s_pos, s_neg, a_pair, a_img, AblationMode.BASELINE)
    assert baseline.w_pos.tolist() == [1.0]
    assert baseline.w_neg.tolist() == [1.0]

    osm = combine_weights(s_pos, s_neg, a_pair, a_img, AblationMode.OSM)
    assert osm.w_neg.tolist() == [0.5]

    full = combine_weights(s_pos, s_neg, a_pair, a_img, AblationMode.OSM_CAA)
    assert full.w_pos[0] == pytest.approx(0.184, abs=1e-12)
    assert full.w_neg[0] == pytest.approx(0.125, abs=1e-12)


def test_weight_bounds_on_random_batches():
    """Test score and weight ranges over many random batches"""
    rng = make_rng(2024, "mining")
    cfg = MiningConfig()
    for _ in range(1000):
        m = int(rng.integers(2, 11))
        labels = rng.integers(0, 3, size=m)
        f = l2_normalize_rows(rng.normal(size=(m, 4)))
        ctx = rng.normal(size=(3, 4))
        pairs, d, w = mine_batch(f, labels, ctx, AblationMode.OSM_CAA, cfg)
        _, _, osm = mine_batch(f, labels, ctx, AblationMode.OSM, cfg)

        assert np.all((w.s_pos > 0) & (w.s_pos <= 1))
        neg_d = d[pairs.neg_i, pairs.neg_j]
        assert np.all(w.s_neg[neg_d >= cfg.alpha] == 0)
        np.testing.assert_allclose(caa_softmax(f, ctx, cfg.sigma_caa).sum(axis=1), 1.0, atol=1e-12)
        assert np.array_equal(w.a_pair_pos, np.minimum(w.a_img[pairs.pos_i], w.a_img[pairs.pos_j]))
        assert np.array_equal(w.a_pair_neg, np.minimum(w.a_img[pairs.neg_i], w.a_img[pairs.neg_j]))
        assert np.array_equal(w.w_pos, w.s_pos * w.a_pair_pos)
        assert np.array_equal(w.w_neg, w.s_neg * w.a_pair_neg)
        assert np.all(w.w_pos <= osm.w_pos)
        assert np.all(w.w_neg <= osm.w_neg)


def test_lowest_attention_image_bounds_its_pairs(rng):
    """Test no pair containing the least-attended image exceeds its score"""
    labels = np.repeat(np.arange(3), 3)
    f = l2_normalize_rows(rng.normal(size=(9, 5)))
    pairs, _, w = mine_batch(f, labels, rng.normal(size=(3, 5)), AblationMode.OSM_CAA, MiningConfig())
    lowest = int(np.argmin(w.a_img))
    for i, j, a in zip(pairs.pos_i, pairs.pos_j, w.a_pair_pos):
        if lowest in (i, j):
            assert a <= w.a_img[lowest]
    for i, j, a in zip(pairs.neg_i, pairs.neg_j, w.a_pair_neg):
        if lowest in (i, j):
            assert a <= w.a_img[lowest]


def test_weight_dump_and_summary(rng):
    """Test the JSON dump layout and summary statistics"""
    c, k = 3, 4
    labels = np.repeat(np.arange(c), k)
    f = l2_normalize_rows(rng.normal(size=(c * k, 5)))
    pairs, _, w = mine_batch(f, labels, rng.normal(size=(c, 5)), AblationMode.BASELINE, MiningConfig())
    dump = w.to_dump(pairs)
    assert set(dump) == {
        "s_pos", "s_neg", "a_img", "a_pair_pos", "a_pair_neg", "w_pos", "w_neg", "positives", "negatives",
    }
    assert len(dump["w_pos"]) == c * k * (k - 1) // 2
    assert len(dump["w_neg"]) == c * k * (c * k - k) // 2
    assert all(value == 1.0 for value in dump["w_pos"] + dump["w_neg"])
    assert all(0.0 < a <= 1.0 for a in dump["a_img"])

    summary = w.summary()
    assert summary["a_img"]["min"] <= summary["a_img"]["mean"] <= summary["a_img"]["max"]


def test_pair_sets_are_disjoint():
    """Test positives and negatives never share a pair and never pair an index with itself"""
    pairs: PairSets = construct_pairs(make_rng(1).integers(0, 4, size=15))
    positives = set(pairs.positives)
    negatives = set(pairs.negatives)
    assert not positives & negatives
    assert all(i < j for i, j in positives | negatives)
    assert len(positives) + len(negatives) == 15 * 14 // 2
