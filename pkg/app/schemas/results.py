"""
Result schemas - everything that is printed, logged or written as JSON
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from app.schemas.config import AblationMode


class RetrievalResult(BaseModel):
    """Leave-one-out retrieval metrics over an embedded set"""
    recall_at: Dict[int, float]
    map_score: float = Field(..., ge=0.0, le=1.0)
    per_query_ranks: List[int]

    @model_validator(mode="after")
    def _recall_monotone(self):
        values = [self.recall_at[k] for k in sorted(self.recall_at)]
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("recall_at must be nondecreasing in K")
        return self

    def recall(self, k: int) -> float:
        """Fraction of queries whose first correct match ranks within k"""
        if k in self.recall_at:
            return self.recall_at[k]
        hits = sum(1 for rank in self.per_query_ranks if rank <= k)
        return hits / len(self.per_query_ranks)

    def cmc(self, max_rank: int) -> List[float]:
        """CMC curve for ranks 1..max_rank; CMC@K is Recall@K"""
        return [self.recall(k) for k in range(1, max_rank + 1)]

    def table(self) -> List[List[str]]:
        rows = [[f"Recall@{k}", f"{100.0 * v:.2f}"] for k, v in sorted(self.recall_at.items())]
        rows.append(["mAP", f"{100.0 * self.map_score:.2f}"])
        return rows


class EpochRecord(BaseModel):
    epoch: int
    mode: AblationMode
    n_batches: int
    loss_pos: float
    loss_neg: float
    loss_total: float
    loss_aux: float
    objective: float
    outlier_caa_gap: float
    retrieval: Optional[RetrievalResult] = None


class DatasetSummary(BaseModel):
    n_samples: int
    d_in: int
    n_classes: int
    n_outliers: int


class BatchSummary(BaseModel):
    """min/mean/max of the mining scores of one batch"""
    s_pos: Dict[str, float]
    s_neg: Dict[str, float]
    a_img: Dict[str, float]
    n_pos: int
    n_neg: int


class GradcheckRow(BaseModel):
    mode: AblationMode
    instances: int
    max_rel_error: float
    passed: bool


class GradcheckReport(BaseModel):
    step: float
    tolerance: float
    rows: List[GradcheckRow]

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)


class AblationRun(BaseModel):
    mode: AblationMode
    seed: int
    retrieval: RetrievalResult
    outlier_caa_gap: float


class AblationRow(BaseModel):
    """Per-mode means over seeds"""
    name: str
    recall_at: Dict[int, float]
    map_score: float
    outlier_caa_gap: Optional[float] = None


class AblationReport(BaseModel):
    seeds: List[int]
    untrained: AblationRow
    rows: List[AblationRow]
    runs: List[AblationRun]
    osm_minus_baseline: Optional[float] = None
    osm_caa_minus_baseline: Optional[float] = None
