"""
gradcheck - analytic gradients against central finite differences
"""
from argparse import SUPPRESS, Namespace

from app.cli.common import format_table, load_run_config
from app.engine.gradcheck import run_gradcheck
from app.storage import write_json


def register(subparsers, parent) -> None:
    parser = subparsers.add_parser("gradcheck", parents=[parent], help="verify gradients of every mode")
    # negative control: scale the analytic gradient by (1 + CORRUPT)
    parser.add_argument("--corrupt", type=float, default=0.0, help=SUPPRESS)
    parser.set_defaults(handler=cmd_gradcheck)


def cmd_gradcheck(args: Namespace) -> int:
    cfg = load_run_config(args)
    modes = [cfg.mode] if args.mode else None
    report = run_gradcheck(
        instances_per_mode=cfg.gradcheck_instances,
        seed=cfg.seed,
        h=cfg.gradcheck_step,
        tolerance=cfg.gradcheck_tolerance,
        corrupt=args.corrupt,
        modes=modes,
    )

    rows = [
        [row.mode.title, str(row.instances), f"{row.max_rel_error:.3e}", "PASS" if row.passed else "FAIL"]
        for row in report.rows
    ]
    print(f"h={report.step:g} tolerance={report.tolerance:g}")
    print(format_table(["mode", "instances", "max rel error", "result"], rows))
    if cfg.out is not None:
        write_json(cfg.out, report)
    return 0 if report.passed else 2
