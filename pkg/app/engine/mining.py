"""
Online pair construction, Online Soft Mining and Class-Aware Attention

Every unordered pair of a c x k batch is built once. Positive pairs get a
Gaussian-of-distance score, negative pairs a margin hinge score, and each
image a softmax compatibility with its own class context vector. Pair
weights are the product of the mining score and the smaller attention of
the two images. Weights are constants for the loss (no gradient flows
through them).
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import softmax

from app.engine.numerics import pairwise_distances
from app.errors import LabelOutOfRange
from app.schemas.config import AblationMode, MiningConfig


@dataclass(frozen=True)
class PairSets:
    """Index arrays of the positive set P and negative set N, i < j, row-major order"""
    pos_i: np.ndarray
    pos_j: np.ndarray
    neg_i: np.ndarray
    neg_j: np.ndarray

    @property
    def n_pos(self) -> int:
        return int(self.pos_i.size)

    @property
    def n_neg(self) -> int:
        return int(self.neg_i.size)

    @property
    def positives(self) -> List[Tuple[int, int]]:
        return list(zip(self.pos_i.tolist(), self.pos_j.tolist()))

    @property
    def negatives(self) -> List[Tuple[int, int]]:
        return list(zip(self.neg_i.tolist(), self.neg_j.tolist()))


@dataclass(frozen=True)
class PairWeights:
    s_pos: np.ndarray
    s_neg: np.ndarray
    a_img: np.ndarray
    a_pair_pos: np.ndarray
    a_pair_neg: np.ndarray
    w_pos: np.ndarray
    w_neg: np.ndarray

    def scaled(self, pos: float = 1.0, neg: float = 1.0) -> "PairWeights":
        """Copy with w+ and w- multiplied by constants"""
        return PairWeights(
            s_pos=self.s_pos,
            s_neg=self.s_neg,
            a_img=self.a_img,
            a_pair_pos=self.a_pair_pos,
            a_pair_neg=self.a_pair_neg,
            w_pos=self.w_pos * pos,
            w_neg=self.w_neg * neg,
        )

    def to_dump(self, pairs: PairSets) -> Dict[str, list]:
        return {
            "s_pos": self.s_pos.tolist(),
            "s_neg": self.s_neg.tolist(),
            "a_img": self.a_img.tolist(),
            "a_pair_pos": self.a_pair_pos.tolist(),
            "a_pair_neg": self.a_pair_neg.tolist(),
            "w_pos": self.w_pos.tolist(),
            "w_neg": self.w_neg.tolist(),
            "positives": [list(p) for p in pairs.positives],
            "negatives": [list(p) for p in pairs.negatives],
        }

    def summary(self) -> Dict[str, Dict[str, float]]:
        def stats(values: np.ndarray) -> Dict[str, float]:
            if values.size == 0:
                return {"min": 0.0, "mean": 0.0, "max": 0.0}
            return {
                "min": float(values.min()),
                "mean": float(values.mean()),
                "max": float(values.max()),
            }

        return {"s_pos": stats(self.s_pos), "s_neg": stats(self.s_neg), "a_img": stats(self.a_img)}


def construct_pairs(labels) -> PairSets:
    """All m(m-1)/2 unordered pairs, routed by label equality"""
    labels = np.asarray(labels)
    m = labels.shape[0]
    if m < 2:
        raise ValueError(f"pair construction needs at least 2 samples, got {m}")
    i, j = np.triu_indices(m, k=1)
    same = labels[i] == labels[j]
    return PairSets(pos_i=i[same], pos_j=j[same], neg_i=i[~same], neg_j=j[~same])


def osm_positive_scores(d: np.ndarray, pairs: PairSets, cfg: MiningConfig) -> np.ndarray:
    """s+ = exp(-d^2 / sigma_osm^2)"""
    dist = d[pairs.pos_i, pairs.pos_j]
    return np.exp(-(dist * dist) / (cfg.sigma_osm ** 2))


def osm_negative_scores(d: np.ndarray, pairs: PairSets, cfg: MiningConfig) -> np.ndarray:
    """s- = max(0, alpha - d); pairs beyond the margin score 0"""
    dist = d[pairs.neg_i, pairs.neg_j]
    return np.maximum(0.0, cfg.alpha - dist)


def check_labels(labels: np.ndarray, n_classes: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        bad = labels[(labels < 0) | (labels >= n_classes)][0]
        raise LabelOutOfRange(int(bad), n_classes)


def caa_softmax(f: np.ndarray, ctx: np.ndarray, sigma_caa: float) -> np.ndarray:
    """Per-image softmax over all class context vectors, logits f.c / sigma_caa"""
    return softmax((f @ ctx.T) / sigma_caa, axis=1)


def caa_scores(f, labels, ctx, cfg: MiningConfig) -> np.ndarray:
    """a_i: softmax probability of the image's own label"""
    labels = np.asarray(labels, dtype=np.int64)
    ctx = np.asarray(ctx, dtype=np.float64)
    check_labels(labels, ctx.shape[0])
    probs = caa_softmax(np.asarray(f, dtype=np.float64), ctx, cfg.sigma_caa)
    return probs[np.arange(labels.size), labels]


def pair_caa(a_img: np.ndarray, pairs: PairSets) -> Tuple[np.ndarray, np.ndarray]:
    """a_ij = min(a_i, a_j) over P and N"""
    a_pos = np.minimum(a_img[pairs.pos_i], a_img[pairs.pos_j])
    a_neg = np.minimum(a_img[pairs.neg_i], a_img[pairs.neg_j])
    return a_pos, a_neg


def combine_weights(
    s_pos: np.ndarray,
    s_neg: np.ndarray,
    a_pair: Tuple[np.ndarray, np.ndarray],
    a_img: np.ndarray,
    mode: AblationMode,
) -> PairWeights:
    """
    Pair weights for one ablation arm

    Baseline: w = 1. OSM: w = s. OSM+CAA: w = s * a_ij.
    """
    a_pos, a_neg = a_pair
    mode = AblationMode(mode)
    if not mode.uses_osm:
        w_pos = np.ones_like(s_pos)
        w_neg = np.ones_like(s_neg)
    elif mode.uses_caa:
        w_pos = s_pos * a_pos
        w_neg = s_neg * a_neg
    else:
        w_pos = s_pos.copy()
        w_neg = s_neg.copy()
    return PairWeights(
        s_pos=s_pos,
        s_neg=s_neg,
        a_img=a_img,
        a_pair_pos=a_pos,
        a_pair_neg=a_neg,
        w_pos=w_pos,
        w_neg=w_neg,
    )


def mine_batch(
    embeddings: np.ndarray,
    labels,
    ctx: np.ndarray,
    mode: AblationMode,
    cfg: MiningConfig,
    caa_inputs: Optional[np.ndarray] = None,
) -> Tuple[PairSets, np.ndarray, PairWeights]:
    """
    Pairs, distances and weights for one batch

    Args:
        embeddings: unit-norm rows used for distances
        labels: class ids indexing ctx
        ctx: C x D context vectors
        mode: ablation arm
        cfg: mining hyperparameters
        caa_inputs: rows fed to CAA; defaults to the embeddings

    Returns:
        (pairs, distance matrix, pair weights)
    """
    labels = np.asarray(labels, dtype=np.int64)
    pairs = construct_pairs(labels)
    d = pairwise_distances(embeddings)
    s_pos = osm_positive_scores(d, pairs, cfg)
    s_neg = osm_negative_scores(d, pairs, cfg)
    f_caa = embeddings if caa_inputs is None else caa_inputs
    a_img = caa_scores(f_caa, labels, ctx, cfg)
    weights = combine_weights(s_pos, s_neg, pair_caa(a_img, pairs), a_img, mode)
    return pairs, d, weights
