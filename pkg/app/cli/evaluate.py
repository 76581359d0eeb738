"""
evaluate - retrieval metrics of a checkpoint on the held-out classes
"""
from argparse import Namespace

from app.cli.common import eval_side, format_table, load_run_config, require, split_dataset
from app.services import dataset_service
from app.services.evaluation_service import evaluate_model
from app.storage import load_checkpoint, write_json


def register(subparsers, parent) -> None:
    parser = subparsers.add_parser("evaluate", parents=[parent], help="Recall@K and mAP of a checkpoint")
    parser.set_defaults(handler=cmd_evaluate)


def cmd_evaluate(args: Namespace) -> int:
    cfg = load_run_config(args)
    require(cfg, "evaluate", "dataset", "checkpoint")

    ckpt = load_checkpoint(cfg.checkpoint)
    full = dataset_service.load(cfg.dataset)
    _, ds_test = split_dataset(cfg, full, recorded=ckpt.config)
    result = evaluate_model(ckpt.params, eval_side(cfg, full, ds_test), cfg.ks, cfg.eval_labels)

    print(format_table(["metric", "value (%)"], result.table()))
    if cfg.out is not None:
        write_json(cfg.out, result)
    return 0
