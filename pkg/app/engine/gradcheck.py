"""
Finite-difference verification of the analytic gradients

The analytic backward treats the mining weights as constants, so the
numeric oracle differentiates the objective with the weights frozen at
their values for the unperturbed parameters. Random instances are redrawn
until no relu input and no negative-pair distance sits within a small
margin of a kink, so central differences never straddle one.
"""
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple
import logging

import numpy as np

from app.engine.loss import total_loss
from app.engine.mining import PairWeights
from app.engine.model import ModelParams, backward, forward, init_params
from app.engine.numerics import Rng, finite_diff_grad, make_rng, relative_error
from app.errors import SoftMineRuntimeError
from app.schemas.config import AblationMode, LossConfig, MiningConfig, ModelDims
from app.schemas.results import GradcheckReport, GradcheckRow

logger = logging.getLogger(__name__)

# (c, k) batch shapes with 6 <= c*k <= 16
_BATCH_SHAPES = [(2, 3), (2, 4), (2, 5), (3, 2), (3, 3), (3, 4), (3, 5), (4, 2), (4, 3), (4, 4)]
_MAX_DRAWS = 1000


@dataclass(frozen=True)
class GradcheckInstance:
    params: ModelParams
    x: np.ndarray
    labels: np.ndarray
    mode: AblationMode
    loss_cfg: LossConfig
    mining_cfg: MiningConfig


def _far_from_kinks(instance: GradcheckInstance, margin: float) -> bool:
    cache = forward(instance.params, instance.x)
    if np.min(np.abs(cache.z1)) < margin or np.min(cache.norms) < 0.05:
        return False
    report = total_loss(
        cache.embeddings,
        instance.labels,
        instance.params.ctx,
        instance.mode,
        instance.loss_cfg,
        instance.mining_cfg,
        raw=cache.raw,
    )
    pairs = report.pairs
    neg = report.distances[pairs.neg_i, pairs.neg_j]
    pos = report.distances[pairs.pos_i, pairs.pos_j]
    if neg.size and np.min(np.abs(neg - instance.loss_cfg.alpha)) < margin:
        return False
    return not (pos.size and np.min(pos) < margin)


def random_instance(
    rng: Rng,
    mode: AblationMode,
    d_in: int = 6,
    hidden: int = 10,
    embed_dim: Optional[int] = None,
    n_classes: int = 4,
    margin: float = 1e-3,
) -> GradcheckInstance:
    """Random small network and c x k batch; embed_dim drawn from 4..16 when not given"""
    for _ in range(_MAX_DRAWS):
        dim = int(rng.integers(4, 17)) if embed_dim is None else embed_dim
        dims = ModelDims(d_in=d_in, hidden=hidden, embed_dim=dim, n_classes=n_classes)
        params = init_params(dims, rng)
        params.b1[:] = rng.normal(scale=0.1, size=hidden)
        params.b2[:] = rng.normal(scale=0.1, size=dim)
        params.ctx[:] = rng.normal(scale=0.3, size=params.ctx.shape)

        shapes = [(c, k) for c, k in _BATCH_SHAPES if c <= n_classes]
        c, k = shapes[int(rng.integers(len(shapes)))]
        classes = rng.choice(n_classes, size=c, replace=False)
        labels = rng.permutation(np.repeat(classes, k)).astype(np.int64)
        x = rng.normal(size=(labels.size, d_in))

        instance = GradcheckInstance(
            params=params,
            x=x,
            labels=labels,
            mode=AblationMode(mode),
            loss_cfg=LossConfig(),
            mining_cfg=MiningConfig(),
        )
        if _far_from_kinks(instance, margin):
            return instance
    raise SoftMineRuntimeError(f"could not draw a kink-free instance in {_MAX_DRAWS} attempts")


def frozen_objective(instance: GradcheckInstance, params: ModelParams, weights: PairWeights) -> float:
    """Optimized scalar at params with the pair weights held fixed"""
    cache = forward(params, instance.x)
    report = total_loss(
        cache.embeddings,
        instance.labels,
        params.ctx,
        instance.mode,
        instance.loss_cfg,
        instance.mining_cfg,
        raw=cache.raw,
        weights=weights,
    )
    return report.objective


def analytic_gradient(instance: GradcheckInstance) -> Tuple[ModelParams, PairWeights]:
    cache = forward(instance.params, instance.x)
    report = total_loss(
        cache.embeddings,
        instance.labels,
        instance.params.ctx,
        instance.mode,
        instance.loss_cfg,
        instance.mining_cfg,
        raw=cache.raw,
    )
    grads = backward(instance.params, cache, report.grad_embeddings, report.grad_context, report.grad_raw)
    return grads, report.weights


def tensor_errors(instance: GradcheckInstance, h: float = 1e-5, corrupt: float = 0.0) -> Dict[str, float]:
    """
    Relative error between analytic and central-difference gradients, per tensor

    corrupt scales the analytic gradient by (1 + corrupt); a non-zero value
    is a negative control that must fail.
    """
    grads, weights = analytic_gradient(instance)
    numeric = finite_diff_grad(
        lambda v: frozen_objective(instance, instance.params.with_flat(v), weights),
        instance.params.flat(),
        h,
    )
    numeric_tensors = instance.params.with_flat(numeric).tensors()
    return {
        name: relative_error(analytic * (1.0 + corrupt), numeric_tensors[name])
        for name, analytic in grads.tensors().items()
    }


def check_instance(instance: GradcheckInstance, h: float = 1e-5, corrupt: float = 0.0) -> float:
    """Max relative error over all parameter tensors"""
    return max(tensor_errors(instance, h=h, corrupt=corrupt).values())


def run_gradcheck(
    instances_per_mode: int = 50,
    seed: int = 0,
    h: float = 1e-5,
    tolerance: float = 1e-6,
    corrupt: float = 0.0,
    modes: Optional[Iterable[AblationMode]] = None,
) -> GradcheckReport:
    """Check every mode on seeded random instances; one report row per mode"""
    rows = []
    for mode in modes or list(AblationMode):
        mode = AblationMode(mode)
        rng = make_rng(seed, f"gradcheck:{mode.value}")
        worst = 0.0
        for _ in range(instances_per_mode):
            instance = random_instance(rng, mode)
            worst = max(worst, check_instance(instance, h=h, corrupt=corrupt))
        passed = worst <= tolerance
        logger.info(f"gradcheck {mode.value}: {instances_per_mode} instances, max rel error {worst:.3e}")
        rows.append(GradcheckRow(mode=mode, instances=instances_per_mode, max_rel_error=worst, passed=passed))
    return GradcheckReport(step=h, tolerance=tolerance, rows=rows)
