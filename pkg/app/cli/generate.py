"""
generate - write a synthetic dataset file
"""
from argparse import Namespace
import logging

from app.cli.common import format_table, load_run_config, require
from app.services import dataset_service

logger = logging.getLogger(__name__)


def register(subparsers, parent) -> None:
    parser = subparsers.add_parser("generate", parents=[parent], help="generate a synthetic dataset")
    parser.set_defaults(handler=cmd_generate)


def cmd_generate(args: Namespace) -> int:
    cfg = load_run_config(args)
    require(cfg, "generate", "out")
    synth = cfg.synth_config()

    ds = dataset_service.generate(synth)
    dataset_service.save(ds, cfg.out)

    info = dataset_service.summary(ds)
    print(format_table(
        ["samples", "d_in", "classes", "outliers"],
        [[str(info.n_samples), str(info.d_in), str(info.n_classes), str(info.n_outliers)]],
    ))
    return 0
