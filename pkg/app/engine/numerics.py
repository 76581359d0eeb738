"""
Numerical primitives shared by every other module

Random streams use numpy's Philox counter-based bit generator keyed by
(seed, crc32(tag)), so a seed reproduces the same stream on every platform
and sub-tasks (sampler, init, data, ...) get independent streams.
All arithmetic is float64.
"""
import zlib
from typing import Callable, Optional

import numpy as np

from app.config import settings
from app.errors import NonFiniteEvaluation, NonFiniteInput, ZeroNormRow

Rng = np.random.Generator

_UINT64_MASK = (1 << 64) - 1


def make_rng(seed: int, tag: str = "") -> Rng:
    """Philox stream derived deterministically from (seed, tag)"""
    key = [seed & _UINT64_MASK, zlib.crc32(tag.encode("utf-8"))]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def as_matrix(x, what: str = "matrix") -> np.ndarray:
    """Validate a 2-D finite float64 array"""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{what} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(what)
    return arr


def row_norms(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", x, x))


def l2_normalize_rows(x, eps: Optional[float] = None) -> np.ndarray:
    """Scale every row to unit Euclidean norm"""
    arr = as_matrix(x, "embedding matrix")
    eps = settings.NORM_EPS if eps is None else eps
    norms = row_norms(arr)
    bad = np.flatnonzero(norms <= eps)
    if bad.size:
        raise ZeroNormRow(int(bad[0]), float(norms[bad[0]]))
    return arr / norms[:, None]


def normalize_backward(embeddings: np.ndarray, norms: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """
    Pull a gradient w.r.t. unit rows back to the raw rows

    Applies (I - f f^T) / ||raw|| row by row.
    """
    radial = np.einsum("ij,ij->i", embeddings, grad)
    return (grad - embeddings * radial[:, None]) / norms[:, None]


def pairwise_distances(f) -> np.ndarray:
    """Symmetric m x m Euclidean distances with a zero diagonal"""
    arr = as_matrix(f, "embedding matrix")
    if arr.shape[0] < 2:
        raise ValueError(f"pairwise distances need at least 2 rows, got {arr.shape[0]}")
    sq = np.einsum("ij,ij->i", arr, arr)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (arr @ arr.T)
    np.maximum(d2, 0.0, out=d2)
    d = np.sqrt(d2)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def finite_diff_grad(fn: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central differences (fn(x + h e_i) - fn(x - h e_i)) / 2h for every coordinate"""
    base = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        original = base[idx]
        base[idx] = original + h
        f_plus = float(fn(base))
        base[idx] = original - h
        f_minus = float(fn(base))
        base[idx] = original
        if not np.isfinite(f_plus):
            raise NonFiniteEvaluation(idx, f_plus)
        if not np.isfinite(f_minus):
            raise NonFiniteEvaluation(idx, f_minus)
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic, numeric) -> float:
    """max |a - n| scaled by the larger of the two tensors' max magnitudes"""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(n))), 1e-12)
    return float(np.max(np.abs(a - n))) / scale
