from app.schemas.config import (
    AblationMode,
    BatchSpec,
    LossConfig,
    MiningConfig,
    ModelDims,
    OptimizerConfig,
    RunConfig,
    SynthConfig,
    TrainConfig,
)
from app.schemas.results import (
    AblationReport,
    BatchSummary,
    DatasetSummary,
    EpochRecord,
    GradcheckReport,
    RetrievalResult,
)

__all__ = [
    "AblationMode",
    "BatchSpec",
    "LossConfig",
    "MiningConfig",
    "ModelDims",
    "OptimizerConfig",
    "RunConfig",
    "SynthConfig",
    "TrainConfig",
    "AblationReport",
    "BatchSummary",
    "DatasetSummary",
    "EpochRecord",
    "GradcheckReport",
    "RetrievalResult",
]
