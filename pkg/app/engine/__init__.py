"""
Numerical engine: pair mining, weighted contrastive loss, the embedding
network and gradient verification
"""
from app.engine.loss import LossReport, total_loss
from app.engine.mining import PairSets, PairWeights, mine_batch
from app.engine.model import ModelParams, OptimizerState, backward, forward, init_params, sgd_step

__all__ = [
    "LossReport",
    "total_loss",
    "PairSets",
    "PairWeights",
    "mine_batch",
    "ModelParams",
    "OptimizerState",
    "backward",
    "forward",
    "init_params",
    "sgd_step",
]
