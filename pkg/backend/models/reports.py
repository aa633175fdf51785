from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class TrainingHistory(BaseModel):
    """Per-epoch generator losses in nats/token.

    Wall times are informational: they are excluded from equality and never
    written into checkpoints or reports.
    """

    train_loss: List[float] = Field(default_factory=list)
    val_loss: List[Optional[float]] = Field(default_factory=list)  # None without a validation split
    wall_time: List[float] = Field(default_factory=list, exclude=True)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrainingHistory):
            return NotImplemented
        return self.train_loss == other.train_loss and self.val_loss == other.val_loss

    @property
    def epochs(self) -> int:
        return len(self.train_loss)


class PredictorHistory(BaseModel):
    """Per-epoch RMSE on standardized targets (mean over the 9 columns)."""

    train_rmse: List[float] = Field(default_factory=list)
    test_rmse: List[Optional[float]] = Field(default_factory=list)
    wall_time: List[float] = Field(default_factory=list, exclude=True)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PredictorHistory):
            return NotImplemented
        return self.train_rmse == other.train_rmse and self.test_rmse == other.test_rmse


class TargetMetrics(BaseModel):
    r2: float
    mae: float
    rmse: float


class Histogram(BaseModel):
    edges: List[float]  # len(counts) + 1 bin edges, left-closed bins
    counts: List[int]


class PropertySummary(BaseModel):
    mean: float
    std: float
    min: float
    max: float


class EvalReport(BaseModel):
    n_generated: int
    n_valid: int
    validity: float
    novelty: float
    novelty_among_valid: Optional[float] = None
    uniqueness: Optional[float] = None
    mean_intra_tanimoto: Optional[float] = None
    mean_tanimoto_vs_training: Optional[float] = None
    mw_histogram: Histogram
    ring_histogram: Dict[str, int]  # ring count -> molecules
    group_counts: Dict[str, int]
    property_summaries: Dict[str, PropertySummary] = Field(default_factory=dict)
    config_hash: Optional[str] = None


class CoherenceReport(BaseModel):
    V: int
    d_f: int
    mu: float
    eps: float
    bound: float  # stated form at d_f
    proof_bound: float  # proof-sketch form at d_f
    effective_dim: int  # 32 when rows are tiled SHA digests
    bound_effective: float  # stated form at effective_dim
    passed: bool
    between_variants: bool  # mu lies between the two bound forms
    note: str = ""


class ConditioningReport(BaseModel):
    n: int
    mu: float
    interval: List[float]  # [1 - (n-1) mu, 1 + (n-1) mu]
    lambda_min: float
    lambda_max: float
    eigenvalues_in_interval: bool
    condition_number: Optional[float] = None  # None when lambda_min <= 0
    condition_bound: Optional[float] = None  # None unless (n-1) mu < 1
    bound_holds: Optional[bool] = None


class ResidualReport(BaseModel):
    residual_sq: List[float]  # ||R[i]||^2 per token
    max_residual_sq: float
    B_t: float
    lambda_min_fixed: float
    bound: float  # B_t^2 + (1 - lambda_min)
    vacuous: bool  # lambda_min == 0, e.g. V > d_f
    bound_holds: bool


class TheoryReport(BaseModel):
    V: int
    d: int
    d_t: int
    d_f: int
    mode: str
    coherence: CoherenceReport
    conditioning: List[ConditioningReport]
    rademacher_bound: float
    generalization_bound: float
    combined_bound: float  # with the coherence penalty term
    residual: ResidualReport
    checks: Dict[str, bool]
    all_passed: bool


class RunManifest(BaseModel):
    """Index of a pipeline run: artifact name -> SHA-256 of its bytes."""

    config_hash: str
    seed: int
    stages: List[str]
    artifacts: Dict[str, str]
    counts: Dict[str, int] = Field(default_factory=dict)


class SweepRow(BaseModel):
    """One generator trained and sampled at one grid point."""

    config_id: str
    model: str  # model1 / model2 / model3
    embedding_mode: str
    augment_factor: int
    learning_rate: float
    dropout: float
    batch_size: int
    d_t: int
    n_generated: int
    n_valid: int
    validity: float
    novelty: float
    uniqueness: Optional[float] = None
    n_novel: int  # distinct canonical novel molecules


class SweepPair(BaseModel):
    """Two embedding modes at the same augmentation and hyperparameters."""

    augment_factor: int
    learning_rate: float
    dropout: float
    batch_size: int
    d_t: int
    validity: Dict[str, float]  # model -> validity
    novelty: Dict[str, float]


class SweepReport(BaseModel):
    config_hash: str
    seed: int
    rows: List[SweepRow]
    pairs: List[SweepPair]
    pool_size: int  # distinct novel molecules over every grid point
    pool_by_model: Dict[str, int]
    mw_histogram: Optional[Histogram] = None
    ring_histogram: Dict[str, int] = Field(default_factory=dict)
    group_counts: Dict[str, int] = Field(default_factory=dict)
