"""
Tests for the contrastive losses and their gradients
"""
import math

import numpy as np
import pytest

from app.engine.loss import (
    aux_classification_loss,
    contrastive_loss,
    total_loss,
    wcl_backward,
    wcl_forward,
)
from app.engine.mining import PairSets, PairWeights, construct_pairs, mine_batch
from app.engine.numerics import finite_diff_grad, l2_normalize_rows, make_rng, pairwise_distances, relative_error
from app.schemas.config import AblationMode, LossConfig, MiningConfig


def make_weights(w_pos, w_neg) -> PairWeights:
    w_pos = np.asarray(w_pos, dtype=float)
    w_neg = np.asarray(w_neg, dtype=float)
    return PairWeights(
        s_pos=w_pos,
        s_neg=w_neg,
        a_img=np.ones(0),
        a_pair_pos=np.ones_like(w_pos),
        a_pair_neg=np.ones_like(w_neg),
        w_pos=w_pos,
        w_neg=w_neg,
    )


def random_batch(seed: int, c: int = 3, k: int = 4, dim: int = 8):
    rng = make_rng(seed, "loss-tests")
    labels = np.repeat(np.arange(c), k)
    f = l2_normalize_rows(rng.normal(size=(c * k, dim)))
    ctx = rng.normal(size=(c, dim))
    return f, labels, ctx


@pytest.mark.parametrize(
    "d, same_class, expected",
    [(0.5, True, 0.25), (1.5, False, 0.0), (0.0, True, 0.0), (0.7, False, 0.25)],
)
def test_contrastive_loss_examples(d, same_class, expected):
    """Test the per-pair contrastive loss"""
    assert contrastive_loss(d, same_class, alpha=1.2) == pytest.approx(expected, abs=1e-15)


def test_wcl_forward_examples():
    """Test one weighted positive and one weighted negative pair"""
    d = np.array([[0.0, 0.5, 0.7], [0.5, 0.0, 9.0], [0.7, 9.0, 0.0]])
    pairs = PairSets(
        pos_i=np.array([0]), pos_j=np.array([1]), neg_i=np.array([0]), neg_j=np.array([2])
    )
    terms = wcl_forward(d, make_weights([1.0], [0.5]), pairs, LossConfig(alpha=1.2, lambda_=0.5))
    assert terms.loss_pos == pytest.approx(0.125, abs=1e-15)
    assert terms.loss_neg == pytest.approx(0.125, abs=1e-15)
    assert terms.loss_total == pytest.approx(0.125, abs=1e-15)


@pytest.mark.parametrize("gamma", [1e-3, 1.0, 1e3])
def test_weight_scale_invariance(gamma):
    """Test scaling all w+ or all w- leaves the matching term unchanged"""
    f, labels, ctx = random_batch(1)
    pairs, d, w = mine_batch(f, labels, ctx, AblationMode.OSM_CAA, MiningConfig())
    cfg = LossConfig()
    base = wcl_forward(d, w, pairs, cfg)
    pos_scaled = wcl_forward(d, w.scaled(pos=gamma), pairs, cfg)
    neg_scaled = wcl_forward(d, w.scaled(neg=gamma), pairs, cfg)
    assert abs(pos_scaled.loss_pos - base.loss_pos) < 1e-12
    assert abs(neg_scaled.loss_neg - base.loss_neg) < 1e-12


def test_lambda_endpoints():
    """Test the mix is affine in lambda with L(P) at 0 and L(N) at 1"""
    f, labels, ctx = random_batch(2)
    pairs, d, w = mine_batch(f, labels, ctx, AblationMode.OSM, MiningConfig())
    at0 = wcl_forward(d, w, pairs, LossConfig(lambda_=0.0))
    at1 = wcl_forward(d, w, pairs, LossConfig(lambda_=1.0))
    mid = wcl_forward(d, w, pairs, LossConfig(lambda_=0.3))
    assert at0.loss_total == at0.loss_pos
    assert at1.loss_total == at1.loss_neg
    assert mid.loss_total == pytest.approx(0.7 * mid.loss_pos + 0.3 * mid.loss_neg, abs=1e-12)


def test_baseline_is_half_mean_of_pair_losses():
    """Test unit weights reduce to half the mean contrastive loss over P and over N"""
    f, labels, ctx = random_batch(3)
    report = total_loss(f, labels, ctx, AblationMode.BASELINE, LossConfig(), MiningConfig())
    d = report.distances
    pairs = report.pairs
    pos = [contrastive_loss(d[i, j], True, 1.2) for i, j in pairs.positives]
    neg = [contrastive_loss(d[i, j], False, 1.2) for i, j in pairs.negatives]
    assert report.loss_pos == pytest.approx(0.5 * np.mean(pos), abs=1e-12)
    assert report.loss_neg == pytest.approx(0.5 * np.mean(neg), abs=1e-12)


def test_degenerate_negative_denominator():
    """Test negatives all beyond the margin zero L(N) and its gradient"""
    f = np.array([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [-1.0, 0.0]])
    labels = np.array([0, 0, 1, 1])
    ctx = np.eye(2)
    report = total_loss(f, labels, ctx, AblationMode.OSM, LossConfig(lambda_=1.0), MiningConfig())
    assert report.loss_neg == 0.0
    assert np.all(report.weights.w_neg == 0.0)
    assert np.all(report.grad_embeddings == 0.0)


def test_backward_zero_at_positive_minimum():
    """Test coincident same-class embeddings have zero gradient"""
    f = np.tile([[0.6, 0.8]], (4, 1))
    pairs = construct_pairs([0, 0, 0, 0])
    weights = make_weights(np.ones(pairs.n_pos), np.ones(0))
    grad = wcl_backward(f, weights, pairs, LossConfig())
    np.testing.assert_allclose(grad, 0.0, atol=1e-15)


def test_backward_zero_with_inactive_hinges():
    """Test negatives beyond the margin contribute no gradient"""
    f = np.array([[1.0, 0.0], [-1.0, 0.0]])
    pairs = construct_pairs([0, 1])
    weights = make_weights(np.ones(0), np.ones(1))
    grad = wcl_backward(f, weights, pairs, LossConfig(alpha=1.2, lambda_=1.0))
    assert np.all(grad == 0.0)


@pytest.mark.parametrize("mode", list(AblationMode))
def test_backward_matches_finite_differences(mode):
    """Test the analytic L(P, N) gradient on a random m=12, D=8 batch"""
    f, labels, ctx = random_batch(4, c=3, k=4, dim=8)
    # off the unit sphere so every coordinate is free
    f = f * make_rng(4, "scale").uniform(0.8, 1.2, size=(12, 1))
    cfg = LossConfig()
    pairs, _, weights = mine_batch(f, labels, ctx, mode, MiningConfig())

    def objective(flat):
        x = flat.reshape(f.shape)
        return wcl_forward(pairwise_distances(x), weights, pairs, cfg).loss_total

    numeric = finite_diff_grad(objective, f.ravel()).reshape(f.shape)
    analytic = wcl_backward(f, weights, pairs, cfg)
    assert relative_error(analytic, numeric) <= 1e-6


def test_aux_loss_single_class():
    """Test the classification loss is zero with one class"""
    aux = aux_classification_loss([[0.6, 0.8], [1.0, 0.0]], [0, 0], [[0.3, 0.2]], 0.18)
    assert aux.loss == 0.0


def test_aux_loss_symmetric_logits():
    """Test the loss is ln 2 when both classes score the same"""
    ctx = np.array([[0.5, 0.5], [0.5, 0.5]])
    aux = aux_classification_loss([[0.6, 0.8], [1.0, 0.0]], [0, 1], ctx, 0.18)
    assert aux.loss == pytest.approx(math.log(2.0), abs=1e-12)


def test_aux_gradients_match_finite_differences():
    """Test aux gradients for context vectors and embeddings on m=8, C=4, D=8"""
    rng = make_rng(5, "aux")
    f = rng.normal(size=(8, 8))
    labels = rng.integers(0, 4, size=8)
    ctx = rng.normal(scale=0.3, size=(4, 8))
    aux = aux_classification_loss(f, labels, ctx, 0.18)

    numeric_ctx = finite_diff_grad(
        lambda flat: aux_classification_loss(f, labels, flat.reshape(ctx.shape), 0.18).loss, ctx.ravel()
    )
    numeric_f = finite_diff_grad(
        lambda flat: aux_classification_loss(flat.reshape(f.shape), labels, ctx, 0.18).loss, f.ravel()
    )
    assert relative_error(aux.grad_context.ravel(), numeric_ctx) <= 1e-6
    assert relative_error(aux.grad_embeddings.ravel(), numeric_f) <= 1e-6


def test_total_loss_aux_activation():
    """Test the auxiliary branch joins the objective only for OSM+CAA unless forced"""
    f, labels, ctx = random_batch(6)
    mining = MiningConfig()
    for mode in (AblationMode.BASELINE, AblationMode.OSM):
        report = total_loss(f, labels, ctx, mode, LossConfig(), mining)
        assert not report.aux_active
        assert report.objective == report.loss_total
        assert np.all(report.grad_context == 0.0)

    full = total_loss(f, labels, ctx, AblationMode.OSM_CAA, LossConfig(aux_weight=0.5), mining)
    assert full.aux_active
    assert full.objective == pytest.approx(full.loss_total + 0.5 * full.loss_aux, abs=1e-12)

    forced = total_loss(f, labels, ctx, AblationMode.BASELINE, LossConfig(aux_always=True), mining)
    assert forced.aux_active
    assert np.any(forced.grad_context != 0.0)


def test_total_loss_report_consistency():
    """Test the mix identity and nonnegativity of every component"""
    for seed in range(10):
        f, labels, ctx = random_batch(100 + seed)
        report = total_loss(f, labels, ctx, AblationMode.OSM_CAA, LossConfig(), MiningConfig())
        assert report.loss_total == pytest.approx(0.5 * report.loss_pos + 0.5 * report.loss_neg, abs=1e-12)
        assert min(report.loss_pos, report.loss_neg, report.loss_aux) >= 0.0
        assert report.is_finite


def test_total_loss_with_fixed_weights():
    """Test passing weights bypasses the mined ones"""
    f, labels, ctx = random_batch(7)
    mined = total_loss(f, labels, ctx, AblationMode.OSM, LossConfig(), MiningConfig())
    fixed = total_loss(
        f, labels, ctx, AblationMode.OSM, LossConfig(), MiningConfig(), weights=mined.weights.scaled(pos=2.0)
    )
    assert np.array_equal(fixed.weights.w_pos, 2.0 * mined.weights.w_pos)
    assert fixed.loss_pos == pytest.approx(mined.loss_pos, abs=1e-12)


def test_raw_caa_inputs_required():
    """Test raw outputs must be supplied when CAA reads them"""
    f, labels, ctx = random_batch(8)
    with pytest.raises(ValueError):
        total_loss(f, labels, ctx, AblationMode.OSM_CAA, LossConfig(), MiningConfig(caa_normalized=False))
