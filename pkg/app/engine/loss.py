"""
Contrastive losses and their analytic gradients

L(P) = 1/2 sum w+ d^2 / sum w+
L(N) = 1/2 sum w- max(0, alpha - d)^2 / sum w-
L(P, N) = (1 - lambda) L(P) + lambda L(N)

P and N are normalized independently. Weights and their sums are held
constant when differentiating. A sum below eps_denom zeroes its term.
The auxiliary branch is softmax cross-entropy over the context vectors,
-log a_i, averaged over the batch.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import log_softmax, softmax

from app.engine.mining import PairSets, PairWeights, check_labels, mine_batch
from app.engine.numerics import pairwise_distances
from app.schemas.config import AblationMode, LossConfig, MiningConfig


@dataclass(frozen=True)
class WclTerms:
    loss_pos: float
    loss_neg: float
    loss_total: float


@dataclass(frozen=True)
class AuxTerms:
    loss: float
    grad_context: np.ndarray
    grad_embeddings: np.ndarray


@dataclass(frozen=True)
class LossReport:
    loss_pos: float
    loss_neg: float
    loss_total: float
    loss_aux: float
    objective: float
    aux_active: bool
    grad_embeddings: np.ndarray
    grad_context: np.ndarray
    # direct gradient w.r.t. raw outputs (non-zero only when CAA reads raw outputs)
    grad_raw: np.ndarray
    pairs: PairSets
    distances: np.ndarray
    weights: PairWeights

    @property
    def is_finite(self) -> bool:
        return bool(np.isfinite([self.loss_pos, self.loss_neg, self.loss_aux, self.objective]).all())


def contrastive_loss(d: float, same_class: bool, alpha: float) -> float:
    """Traditional contrastive loss of one pair"""
    if same_class:
        return float(d * d)
    hinge = max(0.0, alpha - d)
    return float(hinge * hinge)


def _normalizer(weights: np.ndarray, eps: float) -> float:
    total = float(weights.sum())
    return total if total >= eps else 0.0


def wcl_forward(d: np.ndarray, weights: PairWeights, pairs: PairSets, cfg: LossConfig) -> WclTerms:
    dist_pos = d[pairs.pos_i, pairs.pos_j]
    dist_neg = d[pairs.neg_i, pairs.neg_j]

    norm_pos = _normalizer(weights.w_pos, cfg.eps_denom)
    norm_neg = _normalizer(weights.w_neg, cfg.eps_denom)

    loss_pos = 0.0
    if norm_pos:
        loss_pos = 0.5 * float(np.dot(weights.w_pos, dist_pos * dist_pos)) / norm_pos

    loss_neg = 0.0
    if norm_neg:
        hinge = np.maximum(0.0, cfg.alpha - dist_neg)
        loss_neg = 0.5 * float(np.dot(weights.w_neg, hinge * hinge)) / norm_neg

    total = (1.0 - cfg.lambda_) * loss_pos + cfg.lambda_ * loss_neg
    return WclTerms(loss_pos=loss_pos, loss_neg=loss_neg, loss_total=total)


def wcl_backward(
    f: np.ndarray,
    weights: PairWeights,
    pairs: PairSets,
    cfg: LossConfig,
    d: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Gradient of L(P, N) w.r.t. the unit-norm embeddings

    Each pair contributes c_ij (f_i - f_j) to row i and c_ij (f_j - f_i) to
    row j, so the gradient is diag(C 1) f - C f for the symmetric coefficient
    matrix C.
    """
    f = np.asarray(f, dtype=np.float64)
    if d is None:
        d = pairwise_distances(f)
    m = f.shape[0]
    coeff = np.zeros((m, m))

    norm_pos = _normalizer(weights.w_pos, cfg.eps_denom)
    if norm_pos:
        c_pos = (1.0 - cfg.lambda_) * weights.w_pos / norm_pos
        np.add.at(coeff, (pairs.pos_i, pairs.pos_j), c_pos)

    norm_neg = _normalizer(weights.w_neg, cfg.eps_denom)
    if norm_neg:
        dist = d[pairs.neg_i, pairs.neg_j]
        hinge = np.maximum(0.0, cfg.alpha - dist)
        # zero-distance negatives have no defined direction
        active = (hinge > 0.0) & (dist > 0.0)
        c_neg = np.zeros_like(dist)
        c_neg[active] = -cfg.lambda_ * weights.w_neg[active] * hinge[active] / (dist[active] * norm_neg)
        np.add.at(coeff, (pairs.neg_i, pairs.neg_j), c_neg)

    coeff = coeff + coeff.T
    return coeff.sum(axis=1)[:, None] * f - coeff @ f


def aux_classification_loss(f, labels, ctx, sigma_caa: float) -> AuxTerms:
    """Mean -log a_i with gradients for the context vectors and the embeddings"""
    f = np.asarray(f, dtype=np.float64)
    ctx = np.asarray(ctx, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    check_labels(labels, ctx.shape[0])
    m = f.shape[0]

    logits = (f @ ctx.T) / sigma_caa
    rows = np.arange(m)
    loss = -float(np.mean(log_softmax(logits, axis=1)[rows, labels]))

    dlogits = softmax(logits, axis=1)
    dlogits[rows, labels] -= 1.0
    dlogits /= m * sigma_caa
    return AuxTerms(
        loss=max(loss, 0.0),
        grad_context=dlogits.T @ f,
        grad_embeddings=dlogits @ ctx,
    )


def total_loss(
    embeddings: np.ndarray,
    labels,
    ctx: np.ndarray,
    mode: AblationMode,
    loss_cfg: LossConfig,
    mining_cfg: MiningConfig,
    raw: Optional[np.ndarray] = None,
    weights: Optional[PairWeights] = None,
) -> LossReport:
    """
    Mine the batch, evaluate L(P, N) and the auxiliary branch, return gradients

    Args:
        embeddings: unit-norm network outputs
        labels: class ids indexing ctx
        ctx: context vectors
        mode: ablation arm selecting the pair weights
        loss_cfg: loss hyperparameters
        mining_cfg: mining hyperparameters
        raw: pre-normalization outputs, needed when CAA reads raw outputs
        weights: precomputed pair weights to hold fixed instead of mining

    Returns:
        LossReport whose objective is loss_total (+ aux_weight * loss_aux
        when the auxiliary branch is active)
    """
    mode = AblationMode(mode)
    labels = np.asarray(labels, dtype=np.int64)
    if mining_cfg.caa_normalized:
        caa_inputs = embeddings
    else:
        if raw is None:
            raise ValueError("raw outputs are required when caa_normalized is false")
        caa_inputs = raw

    pairs, d, mined = mine_batch(embeddings, labels, ctx, mode, mining_cfg, caa_inputs=caa_inputs)
    if weights is None:
        weights = mined

    wcl = wcl_forward(d, weights, pairs, loss_cfg)
    grad_f = wcl_backward(embeddings, weights, pairs, loss_cfg, d)
    grad_raw = np.zeros_like(caa_inputs if raw is None else raw)

    aux = aux_classification_loss(caa_inputs, labels, ctx, mining_cfg.sigma_caa)
    aux_active = (mode.uses_caa or loss_cfg.aux_always) and loss_cfg.aux_weight > 0.0
    objective = wcl.loss_total
    grad_ctx = np.zeros_like(ctx, dtype=np.float64)
    if aux_active:
        objective += loss_cfg.aux_weight * aux.loss
        grad_ctx = loss_cfg.aux_weight * aux.grad_context
        if mining_cfg.caa_normalized:
            grad_f = grad_f + loss_cfg.aux_weight * aux.grad_embeddings
        else:
            grad_raw = grad_raw + loss_cfg.aux_weight * aux.grad_embeddings

    return LossReport(
        loss_pos=wcl.loss_pos,
        loss_neg=wcl.loss_neg,
        loss_total=wcl.loss_total,
        loss_aux=aux.loss,
        objective=objective,
        aux_active=aux_active,
        grad_embeddings=grad_f,
        grad_context=grad_ctx,
        grad_raw=grad_raw,
        pairs=pairs,
        distances=d,
        weights=weights,
    )
