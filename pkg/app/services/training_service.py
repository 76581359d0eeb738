"""
Training Service - epoch loop, outlier auditing and the three-arm ablation
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence
import logging

import numpy as np

from app.config import settings
from app.engine.loss import LossReport, total_loss
from app.engine.mining import caa_scores
from app.engine.model import ModelParams, OptimizerState, backward, forward, init_params, sgd_step
from app.engine.numerics import make_rng
from app.errors import DimensionMismatch, NonFiniteLoss
from app.schemas.config import AblationMode, MiningConfig, ModelDims, TrainConfig
from app.schemas.results import (
    AblationReport,
    AblationRow,
    AblationRun,
    EpochRecord,
    RetrievalResult,
)
from app.services.dataset_service import Dataset
from app.services.evaluation_service import embed_dataset, evaluate_model, raw_outputs
from app.services.sampler import Batch, BatchSampler, DatasetIndex
from app.storage import MetricsLog, write_json

logger = logging.getLogger(__name__)

_LOSS_FIELDS = ("loss_pos", "loss_neg", "loss_total", "loss_aux", "objective")


@dataclass
class TrainResult:
    params: ModelParams
    opt_state: OptimizerState
    records: List[EpochRecord]
    initial_retrieval: RetrievalResult
    final_retrieval: RetrievalResult
    final_epoch: int
    outlier_caa_gap: float = 0.0


def audit_caa(params: ModelParams, ds: Dataset, cfg: MiningConfig) -> float:
    """
    Mean CAA score of clean samples minus mean CAA score of flagged outliers

    Scores use the dataset's observed labels against the current context
    vectors. Returns 0 when the dataset has no outliers.
    """
    mask = ds.outlier_mask
    if not mask.any():
        logger.warning("Dataset has no flagged outliers; outlier CAA gap defined as 0")
        return 0.0
    inputs = embed_dataset(params, ds) if cfg.caa_normalized else raw_outputs(params, ds)
    scores = caa_scores(inputs, ds.labels, params.ctx, cfg)
    return float(scores[~mask].mean() - scores[mask].mean())


def model_dims(cfg: TrainConfig, ds: Dataset) -> ModelDims:
    return ModelDims(d_in=ds.d_in, hidden=cfg.hidden, embed_dim=cfg.embed_dim, n_classes=ds.n_classes)


class Trainer:
    """
    Mini-batch SGD over c x k batches

    Batches and the initial parameters come from streams keyed only by the
    seed, so changing the mode changes nothing but the pair weights.
    """

    def __init__(self, cfg: TrainConfig, metrics_log: Optional[MetricsLog] = None):
        self.cfg = cfg
        self.metrics_log = metrics_log

    def _epoch_rng(self, epoch: int):
        return make_rng(self.cfg.seed, f"{self.cfg.batch.tag}:{epoch}")

    def _dump_batch(self, epoch: int, batch_no: int, batch: Batch, report: Optional[LossReport]) -> str:
        dump_dir = Path(self.cfg.dump_dir or settings.DUMP_DIR)
        path = dump_dir / f"nonfinite-{self.cfg.mode.value}-seed{self.cfg.seed}-epoch{epoch}-batch{batch_no}.json"
        payload: Dict[str, object] = {
            "epoch": epoch,
            "batch": batch_no,
            "mode": self.cfg.mode.value,
            "indices": batch.indices.tolist(),
            "labels": batch.labels.tolist(),
        }
        if report is not None:
            # json writes NaN/Infinity tokens for non-finite values
            payload["losses"] = {name: getattr(report, name) for name in _LOSS_FIELDS}
            payload["distances"] = report.distances.tolist()
            payload["weights"] = report.weights.to_dump(report.pairs)
        write_json(path, payload)
        return str(path)

    def check_params(self, params: ModelParams, ds_train: Dataset) -> None:
        expected = model_dims(self.cfg, ds_train)
        if params.dims != expected:
            raise DimensionMismatch(
                f"model dims {params.dims.model_dump()} do not match training setup {expected.model_dump()}",
                expected=tuple(expected.model_dump().values()),
                actual=tuple(params.dims.model_dump().values()),
            )

    def train_epoch(
        self, epoch: int, sampler: BatchSampler, ds_train: Dataset, params: ModelParams, opt_state: OptimizerState
    ):
        """One pass over the epoch's batches; returns (params, opt_state, mean losses, batch count)"""
        cfg = self.cfg
        sums = dict.fromkeys(_LOSS_FIELDS, 0.0)
        n_batches = 0
        for batch_no, batch in enumerate(sampler.epoch(self._epoch_rng(epoch))):
            cache = forward(params, ds_train.features[batch.indices])
            if not np.all(np.isfinite(cache.embeddings)):
                dump = self._dump_batch(epoch, batch_no, batch, None)
                logger.error(f"Non-finite embeddings at epoch {epoch} batch {batch_no}, dumped to {dump}")
                raise NonFiniteLoss(epoch, batch_no, dump)

            report = total_loss(
                cache.embeddings, batch.labels, params.ctx, cfg.mode, cfg.loss, cfg.mining, raw=cache.raw
            )
            if not report.is_finite:
                dump = self._dump_batch(epoch, batch_no, batch, report)
                logger.error(f"Non-finite loss at epoch {epoch} batch {batch_no}, dumped to {dump}")
                raise NonFiniteLoss(epoch, batch_no, dump)

            grads = backward(params, cache, report.grad_embeddings, report.grad_context, report.grad_raw)
            params, opt_state = sgd_step(params, grads, opt_state)
            for name in _LOSS_FIELDS:
                sums[name] += getattr(report, name)
            n_batches += 1

        means = {name: value / max(n_batches, 1) for name, value in sums.items()}
        return params, opt_state, means, n_batches

    def train(
        self,
        ds_train: Dataset,
        ds_eval: Dataset,
        params: Optional[ModelParams] = None,
        opt_state: Optional[OptimizerState] = None,
        start_epoch: int = 0,
    ) -> TrainResult:
        """
        Train up to cfg.epochs total epochs

        Args:
            ds_train: training side, labels index the context vectors
            ds_eval: held-out classes used for retrieval evaluation
            params: parameters to resume from; seeded init when omitted
            opt_state: optimizer velocities to resume from
            start_epoch: epochs already completed by params

        Returns:
            TrainResult with one EpochRecord per epoch run
        """
        cfg = self.cfg
        sampler = BatchSampler(DatasetIndex.from_labels(ds_train.labels), cfg.batch)
        if params is None:
            params = init_params(model_dims(cfg, ds_train), make_rng(cfg.seed, "init"))
        else:
            self.check_params(params, ds_train)
        if opt_state is None:
            opt_state = OptimizerState.create(params, cfg.optimizer)

        initial = evaluate_model(params, ds_eval, cfg.ks, cfg.eval_labels)
        logger.info(
            f"Training {cfg.mode.title} seed={cfg.seed} from epoch {start_epoch} to {cfg.epochs}: "
            f"{sampler.batches_per_epoch} batches/epoch, initial Recall@1={100.0 * initial.recall(1):.2f}"
        )
        if start_epoch >= cfg.epochs:
            logger.warning(f"Checkpoint is already at epoch {start_epoch}; nothing to train")

        records: List[EpochRecord] = []
        retrieval = initial
        gap = audit_caa(params, ds_train, cfg.mining)
        for epoch in range(start_epoch + 1, cfg.epochs + 1):
            params, opt_state, means, n_batches = self.train_epoch(epoch, sampler, ds_train, params, opt_state)
            gap = audit_caa(params, ds_train, cfg.mining)

            evaluated = None
            if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
                evaluated = retrieval = evaluate_model(params, ds_eval, cfg.ks, cfg.eval_labels)

            record = EpochRecord(
                epoch=epoch, mode=cfg.mode, n_batches=n_batches, outlier_caa_gap=gap, retrieval=evaluated, **means
            )
            records.append(record)
            if self.metrics_log is not None:
                self.metrics_log.append(record)
            recall = f", Recall@1={100.0 * evaluated.recall(1):.2f}" if evaluated else ""
            logger.info(
                f"Epoch {epoch}/{cfg.epochs} [{cfg.mode.value}] L_P={means['loss_pos']:.5f} "
                f"L_N={means['loss_neg']:.5f} L={means['loss_total']:.5f} aux={means['loss_aux']:.5f} "
                f"gap={gap:.4f}{recall}"
            )

        return TrainResult(
            params=params,
            opt_state=opt_state,
            records=records,
            initial_retrieval=initial,
            final_retrieval=retrieval,
            final_epoch=max(start_epoch, cfg.epochs),
            outlier_caa_gap=gap,
        )


def _mean_row(name: str, results: Sequence[RetrievalResult], gaps: Optional[Sequence[float]] = None) -> AblationRow:
    ks = sorted(results[0].recall_at)
    return AblationRow(
        name=name,
        recall_at={k: float(np.mean([r.recall(k) for r in results])) for k in ks},
        map_score=float(np.mean([r.map_score for r in results])),
        outlier_caa_gap=float(np.mean(gaps)) if gaps else None,
    )


def run_ablation(
    ds_train: Dataset,
    ds_eval: Dataset,
    cfg: TrainConfig,
    modes: Optional[Iterable[AblationMode]] = None,
    seeds: Sequence[int] = (0, 1, 2),
) -> AblationReport:
    """
    Train every mode under every seed and compare final test retrieval

    Within a seed all modes see the same batches and the same initial
    parameters. Differences are reported in Recall@1 percentage points.
    """
    modes = [AblationMode(m) for m in (modes or list(AblationMode))]
    seeds = list(seeds)
    runs: List[AblationRun] = []
    untrained: List[RetrievalResult] = []

    for seed in seeds:
        for position, mode in enumerate(modes):
            run_cfg = cfg.model_copy(update={"mode": mode, "seed": seed})
            result = Trainer(run_cfg).train(ds_train, ds_eval)
            if position == 0:
                untrained.append(result.initial_retrieval)
            runs.append(
                AblationRun(mode=mode, seed=seed, retrieval=result.final_retrieval, outlier_caa_gap=result.outlier_caa_gap)
            )
            logger.info(
                f"Ablation {mode.title} seed={seed}: Recall@1={100.0 * result.final_retrieval.recall(1):.2f} "
                f"gap={result.outlier_caa_gap:.4f}"
            )

    rows = []
    recall1: Dict[AblationMode, float] = {}
    for mode in modes:
        mode_runs = [run for run in runs if run.mode is mode]
        trains_ctx = mode.uses_caa or (cfg.loss.aux_always and cfg.loss.aux_weight > 0)
        gaps = [run.outlier_caa_gap for run in mode_runs] if trains_ctx else None
        row = _mean_row(mode.title, [run.retrieval for run in mode_runs], gaps)
        rows.append(row)
        recall1[mode] = float(np.mean([run.retrieval.recall(1) for run in mode_runs]))

    def diff(mode: AblationMode) -> Optional[float]:
        if mode in recall1 and AblationMode.BASELINE in recall1:
            return 100.0 * (recall1[mode] - recall1[AblationMode.BASELINE])
        return None

    return AblationReport(
        seeds=seeds,
        untrained=_mean_row("Untrained", untrained),
        rows=rows,
        runs=runs,
        osm_minus_baseline=diff(AblationMode.OSM),
        osm_caa_minus_baseline=diff(AblationMode.OSM_CAA),
    )
