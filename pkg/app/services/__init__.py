from app.services.sampler import BatchSampler, DatasetIndex
from app.services.dataset_service import Dataset
from app.services.training_service import Trainer, TrainResult, audit_caa, run_ablation

__all__ = [
    "BatchSampler",
    "DatasetIndex",
    "Dataset",
    "Trainer",
    "TrainResult",
    "audit_caa",
    "run_ablation",
]
