"""
Shared CLI plumbing: flags, config loading and dataset splitting
"""
from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple
import logging

from dotenv import dotenv_values

from app.config import settings
from app.engine.numerics import make_rng
from app.errors import ConfigurationError
from app.schemas.config import AblationMode, RunConfig
from app.services import dataset_service
from app.services.dataset_service import Dataset

logger = logging.getLogger(__name__)

# flags that map one-to-one onto RunConfig keys
FLAG_KEYS = ("seed", "mode", "dataset", "checkpoint", "out", "log", "ks", "resume")
# split keys recorded in a checkpoint and re-applied by evaluate / inspect
SPLIT_KEYS = ("seed", "train_class_fraction", "ordered_split")


def common_parser() -> ArgumentParser:
    """Parent parser with the flags every subcommand accepts"""
    parser = ArgumentParser(add_help=False)
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--seed", help="unsigned 64-bit seed")
    parser.add_argument("--mode", choices=[m.value for m in AblationMode], help="ablation arm")
    parser.add_argument("--dataset", help="dataset file")
    parser.add_argument("--checkpoint", help="checkpoint file")
    parser.add_argument("--out", help="output file")
    parser.add_argument("--log", help="JSON-lines metrics log")
    parser.add_argument("--ks", help="comma list of Recall@K cutoffs, e.g. 1,2,4,8, or a preset: default, reid")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )
    return parser


def _read_config_file(path: str) -> Dict[str, Any]:
    if not Path(path).is_file():
        raise ConfigurationError(f"config file not found: {path}")
    values = dotenv_values(path)
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigurationError(f"{path}: keys without a value: {', '.join(missing)}")
    return dict(values)


def _parse_overrides(items: Sequence[str]) -> Dict[str, str]:
    overrides = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    return overrides


def load_run_config(args: Namespace) -> RunConfig:
    """
    Config file, then --set overrides, then dedicated flags; later sources win

    Raises:
        ConfigurationError: unreadable file or malformed override
        pydantic.ValidationError: unknown key or invalid value, naming the field
    """
    values: Dict[str, Any] = {}
    path = args.config or settings.DEFAULT_CONFIG_PATH
    if path:
        values.update(_read_config_file(path))
    values.update(_parse_overrides(getattr(args, "overrides", [])))
    for key in FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    return RunConfig.model_validate(values)


def require(cfg: RunConfig, command: str, *names: str) -> None:
    missing = [name for name in names if getattr(cfg, name) is None]
    if missing:
        flags = ", ".join(f"--{name}" for name in missing)
        raise ConfigurationError(f"{command} requires {flags}")


def split_dataset(
    cfg: RunConfig, ds: Dataset, recorded: Optional[Dict[str, Any]] = None
) -> Tuple[Dataset, Dataset]:
    """Class split from the config, or from a checkpoint's recorded config when given"""
    settings_used = {key: getattr(cfg, key) for key in SPLIT_KEYS}
    if recorded:
        for key in SPLIT_KEYS:
            if key in recorded and recorded[key] != settings_used[key]:
                logger.info(f"Using split setting {key}={recorded[key]!r} recorded in the checkpoint")
                settings_used[key] = recorded[key]
    rng = make_rng(int(settings_used["seed"]), "split")
    return dataset_service.split(
        ds, float(settings_used["train_class_fraction"]), rng, ordered=bool(settings_used["ordered_split"])
    )


def eval_side(cfg: RunConfig, full: Dataset, test: Dataset) -> Dataset:
    return full if cfg.evaluate_on == "all" else test


def format_table(headers: List[str], rows: List[List[str]]) -> str:
    widths = [max(len(str(cell)) for cell in column) for column in zip(headers, *rows)]
    lines = ["  ".join(str(cell).ljust(width) for cell, width in zip(line, widths)) for line in [headers, *rows]]
    lines.insert(1, "  ".join("-" * width for width in widths))
    return "\n".join(lines)
