"""
Configuration schemas

Every experiment knob lives in one of these models. RunConfig is the flat
key=value surface the CLI reads; the nested configs are what the engine and
services consume.
"""
from enum import Enum
from pathlib import Path
from typing import Any, List, Optional

from pydantic import BaseModel, Field, field_validator

# Recall@K columns of the fine-grained retrieval tables
DEFAULT_KS = [1, 2, 4, 8, 16, 32]
# CMC ranks reported for person re-identification
REID_KS = [1, 5, 20]

KS_PRESETS = {"default": DEFAULT_KS, "reid": REID_KS}


class AblationMode(str, Enum):
    BASELINE = "baseline"
    OSM = "osm"
    OSM_CAA = "osm-caa"

    @property
    def uses_osm(self) -> bool:
        return self is not AblationMode.BASELINE

    @property
    def uses_caa(self) -> bool:
        return self is AblationMode.OSM_CAA

    @property
    def title(self) -> str:
        return {"baseline": "Baseline", "osm": "OSM", "osm-caa": "OSM+CAA"}[self.value]


def parse_ks(value: Any) -> List[int]:
    """Accept "1,2,4", a preset name (default, reid) or an iterable of ints; return sorted unique positive Ks"""
    if isinstance(value, str):
        preset = KS_PRESETS.get(value.strip().lower())
        if preset is not None:
            return list(preset)
        parts = [p.strip() for p in value.split(",") if p.strip()]
        try:
            ks = [int(p) for p in parts]
        except ValueError:
            raise ValueError(f"ks must be a comma list of integers, got {value!r}")
    else:
        ks = [int(k) for k in value]
    if not ks:
        raise ValueError("ks must not be empty")
    if any(k < 1 for k in ks):
        raise ValueError("every K must be >= 1")
    return sorted(set(ks))


def parse_seed_list(value: Any) -> List[int]:
    if isinstance(value, str):
        return [int(p) for p in value.split(",") if p.strip()]
    return [int(v) for v in value]


class SynthConfig(BaseModel):
    """Synthetic dataset with class manifolds and label-noise outliers"""
    n_classes: int = Field(20, ge=2)
    per_class: int = Field(200, ge=2)
    dim: int = Field(32, ge=2)
    cluster_spread: float = Field(0.1, gt=0)
    manifold_elongation: float = Field(4.0, ge=1.0)
    outlier_rate: float = Field(0.2, ge=0.0, lt=1.0)
    min_separation_deg: float = Field(15.0, gt=0.0, lt=90.0)
    seed: int = Field(0, ge=0, lt=2**64)
    # rejection budget for placing class means; settings default when unset
    max_attempts: Optional[int] = Field(None, ge=1)
    # class means and manifold directions span the first signal_dim coordinates
    signal_dim: int = Field(8, ge=2)
    # class-independent Gaussian spread on the remaining coordinates
    nuisance_spread: float = Field(0.25, ge=0.0)

    class Config:
        extra = "forbid"

    @property
    def effective_signal_dim(self) -> int:
        return min(self.signal_dim, self.dim)


class MiningConfig(BaseModel):
    sigma_osm: float = Field(0.8, gt=0)
    alpha: float = Field(1.2, gt=0)
    sigma_caa: float = Field(0.18, gt=0)
    # CAA and the classification branch read the L2-normalized embeddings
    caa_normalized: bool = True

    class Config:
        extra = "forbid"


class LossConfig(BaseModel):
    alpha: float = Field(1.2, gt=0)
    lambda_: float = Field(0.5, ge=0.0, le=1.0, alias="lambda")
    aux_weight: float = Field(1.0, ge=0.0)
    eps_denom: float = Field(1e-8, gt=0)
    aux_always: bool = False

    class Config:
        extra = "forbid"
        populate_by_name = True


class OptimizerConfig(BaseModel):
    lr: float = Field(0.001, gt=0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)

    class Config:
        extra = "forbid"


class ModelDims(BaseModel):
    d_in: int = Field(32, ge=1)
    hidden: int = Field(64, ge=1)
    embed_dim: int = Field(16, ge=1)
    n_classes: int = Field(10, ge=1)

    class Config:
        extra = "forbid"
        frozen = True


class BatchSpec(BaseModel):
    """c classes x k samples per class"""
    c: int = Field(8, ge=2)
    k: int = Field(7, ge=2)
    tag: str = "sampler"

    class Config:
        extra = "forbid"
        frozen = True

    @property
    def size(self) -> int:
        return self.c * self.k


class TrainConfig(BaseModel):
    epochs: int = Field(50, ge=1)
    batch: BatchSpec = BatchSpec()
    mode: AblationMode = AblationMode.OSM_CAA
    loss: LossConfig = LossConfig()
    mining: MiningConfig = MiningConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    hidden: int = Field(64, ge=1)
    embed_dim: int = Field(16, ge=1)
    eval_every: int = Field(10, ge=1)
    ks: List[int] = Field(default_factory=lambda: list(DEFAULT_KS))
    eval_labels: str = Field("clean", pattern="^(clean|observed)$")
    seed: int = Field(0, ge=0, lt=2**64)
    dump_dir: Optional[str] = None

    class Config:
        extra = "forbid"

    @field_validator("ks", mode="before")
    @classmethod
    def _parse_ks(cls, value):
        return parse_ks(value)


class RunConfig(BaseModel):
    """
    Flat experiment configuration read from a key=value file

    Unknown keys are rejected. Paths are only required by the subcommands
    that use them (see app.cli).
    """
    seed: int = Field(0, ge=0, lt=2**64)

    # Synthetic data
    n_classes: int = Field(20, ge=2)
    per_class: int = Field(200, ge=2)
    dim: int = Field(32, ge=2)
    cluster_spread: float = Field(0.1, gt=0)
    manifold_elongation: float = Field(4.0, ge=1.0)
    outlier_rate: float = Field(0.2, ge=0.0, lt=1.0)
    min_separation_deg: float = Field(15.0, gt=0.0, lt=90.0)
    signal_dim: int = Field(8, ge=2)
    nuisance_spread: float = Field(0.25, ge=0.0)

    # Class split
    train_class_fraction: float = Field(0.5, gt=0.0, lt=1.0)
    ordered_split: bool = False
    evaluate_on: str = Field("test", pattern="^(test|all)$")
    # retrieval ground truth: generating classes or the noisy observed labels
    eval_labels: str = Field("clean", pattern="^(clean|observed)$")

    # Training
    epochs: int = Field(50, ge=1)
    batch_classes: int = Field(8, ge=2)
    batch_per_class: int = Field(7, ge=2)
    mode: AblationMode = AblationMode.OSM_CAA
    eval_every: int = Field(10, ge=1)
    hidden: int = Field(64, ge=1)
    embed_dim: int = Field(16, ge=1)

    # Mining and loss
    sigma_osm: float = Field(0.8, gt=0)
    sigma_caa: float = Field(0.18, gt=0)
    alpha: float = Field(1.2, gt=0)
    lambda_: float = Field(0.5, ge=0.0, le=1.0, alias="lambda")
    aux_weight: float = Field(1.0, ge=0.0)
    aux_always: bool = False
    eps_denom: float = Field(1e-8, gt=0)
    caa_normalized: bool = True

    # Optimizer
    lr: float = Field(0.001, gt=0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)

    # Evaluation
    ks: List[int] = Field(default_factory=lambda: list(DEFAULT_KS))

    # Ablation
    ablation_seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])

    # Gradient check
    gradcheck_instances: int = Field(50, ge=1)
    gradcheck_step: float = Field(1e-5, gt=0)
    gradcheck_tolerance: float = Field(1e-6, gt=0)

    # Paths
    dataset: Optional[Path] = None
    checkpoint: Optional[Path] = None
    out: Optional[Path] = None
    log: Optional[Path] = None
    resume: Optional[Path] = None
    dump_dir: Optional[Path] = None

    class Config:
        extra = "forbid"
        populate_by_name = True

    @field_validator("ks", mode="before")
    @classmethod
    def _parse_ks(cls, value):
        return parse_ks(value)

    @field_validator("ablation_seeds", mode="before")
    @classmethod
    def _parse_seeds(cls, value):
        seeds = parse_seed_list(value)
        if not seeds:
            raise ValueError("ablation_seeds must not be empty")
        return seeds

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_classes=self.n_classes,
            per_class=self.per_class,
            dim=self.dim,
            cluster_spread=self.cluster_spread,
            manifold_elongation=self.manifold_elongation,
            outlier_rate=self.outlier_rate,
            min_separation_deg=self.min_separation_deg,
            signal_dim=self.signal_dim,
            nuisance_spread=self.nuisance_spread,
            seed=self.seed,
        )

    def mining_config(self) -> MiningConfig:
        return MiningConfig(
            sigma_osm=self.sigma_osm,
            alpha=self.alpha,
            sigma_caa=self.sigma_caa,
            caa_normalized=self.caa_normalized,
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(
            alpha=self.alpha,
            lambda_=self.lambda_,
            aux_weight=self.aux_weight,
            eps_denom=self.eps_denom,
            aux_always=self.aux_always,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch=BatchSpec(c=self.batch_classes, k=self.batch_per_class),
            mode=self.mode,
            loss=self.loss_config(),
            mining=self.mining_config(),
            optimizer=OptimizerConfig(lr=self.lr, momentum=self.momentum),
            hidden=self.hidden,
            embed_dim=self.embed_dim,
            eval_every=self.eval_every,
            ks=self.ks,
            eval_labels=self.eval_labels,
            seed=self.seed,
            dump_dir=str(self.dump_dir) if self.dump_dir else None,
        )

    def echo(self) -> dict:
        """JSON-ready copy of the configuration without file paths"""
        data = self.model_dump(mode="json", by_alias=True)
        for key in ("dataset", "checkpoint", "out", "log", "resume", "dump_dir"):
            data.pop(key, None)
        return data
