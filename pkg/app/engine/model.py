"""
Two-layer embedding network with a bias-free classification head

x -> relu(W1 x + b1) -> W2 h + b2 -> L2 normalize -> f
The head's rows are the class context vectors used by CAA.
"""
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from app.config import settings
from app.engine.numerics import Rng, as_matrix, normalize_backward, row_norms
from app.errors import DimensionMismatch, ZeroNormRow
from app.schemas.config import ModelDims, OptimizerConfig

TENSOR_NAMES = ("w1", "b1", "w2", "b2", "ctx")


@dataclass
class ModelParams:
    w1: np.ndarray   # H x D_in
    b1: np.ndarray   # H
    w2: np.ndarray   # D x H
    b2: np.ndarray   # D
    ctx: np.ndarray  # C x D

    @property
    def dims(self) -> ModelDims:
        return ModelDims(
            d_in=self.w1.shape[1],
            hidden=self.w1.shape[0],
            embed_dim=self.w2.shape[0],
            n_classes=self.ctx.shape[0],
        )

    def tensors(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TENSOR_NAMES}

    @classmethod
    def from_tensors(cls, tensors: Dict[str, np.ndarray]) -> "ModelParams":
        params = cls(**{name: np.asarray(tensors[name], dtype=np.float64) for name in TENSOR_NAMES})
        params.validate()
        return params

    def copy(self) -> "ModelParams":
        return ModelParams(**{name: arr.copy() for name, arr in self.tensors().items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([arr.ravel() for arr in self.tensors().values()])

    def with_flat(self, vector: np.ndarray) -> "ModelParams":
        """Same shapes, values taken from a flat vector laid out like flat()"""
        tensors = {}
        offset = 0
        for name, arr in self.tensors().items():
            tensors[name] = np.asarray(vector[offset:offset + arr.size], dtype=np.float64).reshape(arr.shape)
            offset += arr.size
        return ModelParams(**tensors)

    def validate(self) -> None:
        h, d_in = self.w1.shape
        d = self.w2.shape[0]
        expected = {
            "b1": (h,),
            "w2": (d, h),
            "b2": (d,),
            "ctx": (self.ctx.shape[0], d),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise DimensionMismatch(
                    f"{name} has shape {actual}, expected {shape}", expected=shape, actual=actual
                )
        for name, arr in self.tensors().items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")


def zeros_like(params: ModelParams) -> ModelParams:
    return ModelParams(**{name: np.zeros_like(arr) for name, arr in params.tensors().items()})


@dataclass
class OptimizerState:
    lr: float
    momentum: float
    velocity: ModelParams

    @classmethod
    def create(cls, params: ModelParams, cfg: OptimizerConfig) -> "OptimizerState":
        return cls(lr=cfg.lr, momentum=cfg.momentum, velocity=zeros_like(params))


@dataclass(frozen=True)
class ForwardCache:
    x: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    raw: np.ndarray
    norms: np.ndarray
    embeddings: np.ndarray


def init_params(dims: ModelDims, rng: Rng) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases"""
    def uniform(rows: int, fan_in: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(rows, fan_in))

    return ModelParams(
        w1=uniform(dims.hidden, dims.d_in),
        b1=np.zeros(dims.hidden),
        w2=uniform(dims.embed_dim, dims.hidden),
        b2=np.zeros(dims.embed_dim),
        ctx=uniform(dims.n_classes, dims.embed_dim),
    )


def forward(params: ModelParams, x) -> ForwardCache:
    x = as_matrix(x, "input batch")
    if x.shape[1] != params.w1.shape[1]:
        raise DimensionMismatch(
            f"input width {x.shape[1]} does not match model input {params.w1.shape[1]}",
            expected=(params.w1.shape[1],),
            actual=(x.shape[1],),
        )
    z1 = x @ params.w1.T + params.b1
    h1 = np.maximum(z1, 0.0)
    raw = h1 @ params.w2.T + params.b2
    norms = row_norms(raw)
    bad = np.flatnonzero(norms <= settings.NORM_EPS)
    if bad.size:
        raise ZeroNormRow(int(bad[0]), float(norms[bad[0]]))
    return ForwardCache(x=x, z1=z1, h1=h1, raw=raw, norms=norms, embeddings=raw / norms[:, None])


def backward(
    params: ModelParams,
    cache: ForwardCache,
    grad_embeddings: np.ndarray,
    grad_context: Optional[np.ndarray] = None,
    grad_raw: Optional[np.ndarray] = None,
) -> ModelParams:
    """
    Exact parameter gradients

    grad_embeddings is taken w.r.t. the unit-norm outputs and pulled through
    the normalization; grad_raw (if any) is added after it. The relu
    derivative is 0 at exactly 0.
    """
    d_raw = normalize_backward(cache.embeddings, cache.norms, np.asarray(grad_embeddings, dtype=np.float64))
    if grad_raw is not None:
        d_raw = d_raw + grad_raw

    d_w2 = d_raw.T @ cache.h1
    d_b2 = d_raw.sum(axis=0)
    d_h1 = d_raw @ params.w2
    d_z1 = d_h1 * (cache.z1 > 0.0)
    d_w1 = d_z1.T @ cache.x
    d_b1 = d_z1.sum(axis=0)

    d_ctx = np.zeros_like(params.ctx) if grad_context is None else np.asarray(grad_context, dtype=np.float64)
    return ModelParams(w1=d_w1, b1=d_b1, w2=d_w2, b2=d_b2, ctx=d_ctx)


def sgd_step(
    params: ModelParams, grads: ModelParams, state: OptimizerState
) -> Tuple[ModelParams, OptimizerState]:
    """v <- mu v - lr g ; p <- p + v, per tensor"""
    new_params = {}
    new_velocity = {}
    grad_tensors = grads.tensors()
    velocity = state.velocity.tensors()
    for name, value in params.tensors().items():
        v = state.momentum * velocity[name] - state.lr * grad_tensors[name]
        new_velocity[name] = v
        new_params[name] = value + v
    return (
        ModelParams(**new_params),
        OptimizerState(lr=state.lr, momentum=state.momentum, velocity=ModelParams(**new_velocity)),
    )
