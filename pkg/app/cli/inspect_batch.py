"""
inspect - dump the mining scores and pair weights of one sampled batch
"""
from argparse import Namespace
import json

from app.cli.common import format_table, load_run_config, require, split_dataset
from app.engine.mining import mine_batch
from app.engine.model import forward
from app.engine.numerics import make_rng
from app.schemas.config import BatchSpec
from app.schemas.results import BatchSummary
from app.services import dataset_service
from app.services.sampler import BatchSampler, DatasetIndex
from app.storage import load_checkpoint, write_json


def register(subparsers, parent) -> None:
    parser = subparsers.add_parser("inspect", parents=[parent], help="pair-weight dump of one training batch")
    parser.set_defaults(handler=cmd_inspect)


def cmd_inspect(args: Namespace) -> int:
    cfg = load_run_config(args)
    require(cfg, "inspect", "dataset", "checkpoint")
    mining = cfg.mining_config()

    ckpt = load_checkpoint(cfg.checkpoint)
    full = dataset_service.load(cfg.dataset)
    ds_train, _ = split_dataset(cfg, full, recorded=ckpt.config)
    sampler = BatchSampler(
        DatasetIndex.from_labels(ds_train.labels), BatchSpec(c=cfg.batch_classes, k=cfg.batch_per_class)
    )
    batch = sampler.sample_batch(make_rng(cfg.seed, "inspect"))

    cache = forward(ckpt.params, ds_train.features[batch.indices])
    caa_inputs = cache.embeddings if mining.caa_normalized else cache.raw
    pairs, _, weights = mine_batch(
        cache.embeddings, batch.labels, ckpt.params.ctx, cfg.mode, mining, caa_inputs=caa_inputs
    )
    stats = BatchSummary(n_pos=pairs.n_pos, n_neg=pairs.n_neg, **weights.summary())
    payload = {
        "mode": cfg.mode.value,
        "indices": batch.indices.tolist(),
        "labels": batch.labels.tolist(),
        "weights": weights.to_dump(pairs),
        "summary": stats.model_dump(),
    }

    rows = [
        [name, f"{values['min']:.6f}", f"{values['mean']:.6f}", f"{values['max']:.6f}"]
        for name, values in (("s+", stats.s_pos), ("s-", stats.s_neg), ("a", stats.a_img))
    ]
    print(f"{cfg.mode.title}: |P|={pairs.n_pos} |N|={pairs.n_neg}")
    print(format_table(["score", "min", "mean", "max"], rows))
    if cfg.out is not None:
        write_json(cfg.out, payload)
    else:
        print(json.dumps(payload, sort_keys=True))
    return 0
