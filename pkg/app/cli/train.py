"""
train - fit the embedding network and write a checkpoint plus a metrics log
"""
from argparse import Namespace
import logging

from app.cli.common import eval_side, format_table, load_run_config, require, split_dataset
from app.engine.model import OptimizerState, zeros_like
from app.services import dataset_service
from app.services.sampler import BatchSampler, DatasetIndex
from app.services.training_service import Trainer
from app.storage import Checkpoint, MetricsLog, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)


def register(subparsers, parent) -> None:
    parser = subparsers.add_parser("train", parents=[parent], help="train a model on a dataset file")
    parser.add_argument("--resume", help="checkpoint to continue from; epoch numbering continues")
    parser.set_defaults(handler=cmd_train)


def cmd_train(args: Namespace) -> int:
    cfg = load_run_config(args)
    require(cfg, "train", "dataset", "checkpoint", "log")
    train_cfg = cfg.train_config()

    full = dataset_service.load(cfg.dataset)
    ds_train, ds_test = split_dataset(cfg, full)
    ds_eval = eval_side(cfg, full, ds_test)
    trainer = Trainer(train_cfg)
    # reject an impossible c x k before the log is truncated
    BatchSampler(DatasetIndex.from_labels(ds_train.labels), train_cfg.batch)

    params = opt_state = None
    start_epoch = 0
    if cfg.resume is not None:
        ckpt = load_checkpoint(cfg.resume)
        trainer.check_params(ckpt.params, ds_train)
        params = ckpt.params
        velocity = ckpt.velocity if ckpt.velocity is not None else zeros_like(params)
        opt_state = OptimizerState(lr=cfg.lr, momentum=cfg.momentum, velocity=velocity)
        start_epoch = ckpt.epoch
        logger.info(f"Resuming from {cfg.resume} at epoch {start_epoch}")

    metrics_log = MetricsLog(cfg.log)
    metrics_log.start(resume=cfg.resume is not None)
    trainer.metrics_log = metrics_log
    result = trainer.train(ds_train, ds_eval, params=params, opt_state=opt_state, start_epoch=start_epoch)

    save_checkpoint(
        cfg.checkpoint,
        Checkpoint(
            params=result.params,
            velocity=result.opt_state.velocity,
            epoch=result.final_epoch,
            config=cfg.echo(),
        ),
    )
    print(f"{train_cfg.mode.title} after epoch {result.final_epoch}")
    print(format_table(["metric", "value (%)"], result.final_retrieval.table()))
    return 0
