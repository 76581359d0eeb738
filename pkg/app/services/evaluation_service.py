"""
Evaluation Service - leave-one-out retrieval metrics

Every sample is a query against all other samples. The gallery is ranked
by ascending Euclidean distance; equal distances keep ascending gallery
index order (stable sort).
"""
from typing import Iterator, List, Optional, Sequence
import logging

import numpy as np

from app.config import settings
from app.engine.model import ForwardCache, ModelParams, forward
from app.engine.numerics import as_matrix
from app.errors import ConfigurationError, DimensionMismatch, NoPositiveInGallery
from app.schemas.config import parse_ks
from app.schemas.results import RetrievalResult
from app.services.dataset_service import Dataset

logger = logging.getLogger(__name__)


def _check_positives(labels: np.ndarray) -> None:
    if labels.size == 0:
        raise ConfigurationError("retrieval evaluation needs at least one query")
    values, first, counts = np.unique(labels, return_index=True, return_counts=True)
    lonely = np.flatnonzero(counts < 2)
    if lonely.size:
        raise NoPositiveInGallery(int(values[lonely[0]]), int(first[lonely[0]]))


def average_precision(matches: np.ndarray) -> np.ndarray:
    """
    AP of each ranked gallery row

    matches[q, r] is true when the item at rank r + 1 shares the query label.
    AP is the mean over positives of (positives at or above its rank) / rank.
    """
    matches = np.atleast_2d(np.asarray(matches, dtype=bool))
    positions = np.arange(1, matches.shape[1] + 1, dtype=np.float64)
    hits = np.cumsum(matches, axis=1)
    return (hits / positions * matches).sum(axis=1) / matches.sum(axis=1)


def evaluate(embeddings, labels: Sequence[int], ks: Sequence[int], chunk_size: Optional[int] = None) -> RetrievalResult:
    """
    Recall@K (= CMC@K) and mAP with every sample as a probe

    Args:
        embeddings: unit-norm rows
        labels: class id per row
        ks: cutoffs to report
        chunk_size: queries ranked at once; settings.EVAL_BATCH_SIZE by default

    Returns:
        RetrievalResult with per-query first-correct ranks
    """
    f = as_matrix(embeddings, "embedding matrix")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (f.shape[0],):
        raise DimensionMismatch(
            f"{labels.size} labels for {f.shape[0]} embeddings", expected=(f.shape[0],), actual=labels.shape
        )
    ks = parse_ks(ks)
    _check_positives(labels)

    n = f.shape[0]
    chunk_size = chunk_size or settings.EVAL_BATCH_SIZE
    sq = np.einsum("ij,ij->i", f, f)
    ranks = np.empty(n, dtype=np.int64)
    aps = np.empty(n, dtype=np.float64)

    for start in range(0, n, chunk_size):
        query = np.arange(start, min(start + chunk_size, n))
        d2 = sq[query, None] + sq[None, :] - 2.0 * (f[query] @ f.T)
        dist = np.sqrt(np.maximum(d2, 0.0))
        # self sorts last and is dropped
        dist[np.arange(query.size), query] = np.inf
        order = np.argsort(dist, axis=1, kind="stable")[:, :-1]
        matches = labels[order] == labels[query, None]

        ranks[query] = np.argmax(matches, axis=1) + 1
        aps[query] = average_precision(matches)

    recall_at = {k: float(np.mean(ranks <= k)) for k in ks}
    result = RetrievalResult(recall_at=recall_at, map_score=float(np.mean(aps)), per_query_ranks=ranks.tolist())
    logger.info(f"Evaluated {n} queries: Recall@{ks[0]}={100.0 * recall_at[ks[0]]:.2f} mAP={100.0 * result.map_score:.2f}")
    return result


def iter_forward(params: ModelParams, features: np.ndarray, batch_size: Optional[int] = None) -> Iterator[ForwardCache]:
    """Forward passes over consecutive row blocks, in dataset order"""
    batch_size = batch_size or settings.EVAL_BATCH_SIZE
    for start in range(0, features.shape[0], batch_size):
        yield forward(params, features[start:start + batch_size])


def _check_width(params: ModelParams, ds: Dataset) -> None:
    dims = params.dims
    if ds.d_in != dims.d_in:
        raise DimensionMismatch(
            f"dataset has D_in={ds.d_in} but the model expects D_in={dims.d_in} "
            f"(model dims: d_in={dims.d_in}, hidden={dims.hidden}, embed_dim={dims.embed_dim}, "
            f"n_classes={dims.n_classes}; dataset: N={ds.n_samples}, D_in={ds.d_in})",
            expected=(dims.d_in,),
            actual=(ds.d_in,),
        )


def embed_dataset(params: ModelParams, ds: Dataset) -> np.ndarray:
    """Unit-norm embeddings for every sample, rows in dataset order"""
    _check_width(params, ds)
    blocks: List[np.ndarray] = [cache.embeddings for cache in iter_forward(params, ds.features)]
    if not blocks:
        return np.empty((0, params.dims.embed_dim))
    return np.concatenate(blocks)


def raw_outputs(params: ModelParams, ds: Dataset) -> np.ndarray:
    """Pre-normalization network outputs, rows in dataset order"""
    _check_width(params, ds)
    return np.concatenate([cache.raw for cache in iter_forward(params, ds.features)])


def evaluate_model(params: ModelParams, ds: Dataset, ks: Sequence[int], labels: str = "clean") -> RetrievalResult:
    """
    Retrieval metrics of params on ds

    labels="clean" scores against the generating classes, so corrupted
    labels on the evaluated side do not count as retrieval errors;
    labels="observed" scores against the labels as stored.
    """
    if labels == "clean":
        truth = ds.clean_labels
    elif labels == "observed":
        truth = ds.labels
    else:
        raise ConfigurationError(f"labels must be 'clean' or 'observed', got {labels!r}")
    return evaluate(embed_dataset(params, ds), truth, ks)
