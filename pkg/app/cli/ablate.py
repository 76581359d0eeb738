"""
ablate - Baseline vs OSM vs OSM+CAA under identical seeds
"""
from argparse import Namespace

from app.cli.common import eval_side, format_table, load_run_config, require, split_dataset
from app.schemas.results import AblationReport
from app.services import dataset_service
from app.services.training_service import run_ablation
from app.storage import write_json


def report_table(report: AblationReport) -> str:
    ks = sorted(report.untrained.recall_at)
    headers = ["method"] + [f"R@{k}" for k in ks] + ["mAP", "outlier gap"]
    rows = []
    for row in [report.untrained, *report.rows]:
        gap = "-" if row.outlier_caa_gap is None else f"{row.outlier_caa_gap:.4f}"
        rows.append(
            [row.name] + [f"{100.0 * row.recall_at[k]:.2f}" for k in ks] + [f"{100.0 * row.map_score:.2f}", gap]
        )
    return format_table(headers, rows)


def register(subparsers, parent) -> None:
    parser = subparsers.add_parser("ablate", parents=[parent], help="three-arm ablation over several seeds")
    parser.set_defaults(handler=cmd_ablate)


def cmd_ablate(args: Namespace) -> int:
    cfg = load_run_config(args)
    require(cfg, "ablate", "dataset")
    train_cfg = cfg.train_config()

    full = dataset_service.load(cfg.dataset)
    ds_train, ds_test = split_dataset(cfg, full)
    report = run_ablation(ds_train, eval_side(cfg, full, ds_test), train_cfg, seeds=cfg.ablation_seeds)

    print(report_table(report))
    if report.osm_minus_baseline is not None:
        print(f"OSM - Baseline: {report.osm_minus_baseline:+.2f} pp Recall@1")
    if report.osm_caa_minus_baseline is not None:
        print(f"OSM+CAA - Baseline: {report.osm_caa_minus_baseline:+.2f} pp Recall@1")
    if cfg.out is not None:
        write_json(cfg.out, report)
    return 0
