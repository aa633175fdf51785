from .configs import (
    BoundInputs,
    GeneratorConfig,
    PredictorConfig,
    RunConfig,
    SweepPlan,
    hyperparameter_grid,
)
from .records import CANDIDATE_COLUMNS, DATASET_COLUMNS, TARGETS, Candidate, MoleculeRecord
from .reports import (
    CoherenceReport,
    ConditioningReport,
    EvalReport,
    Histogram,
    PredictorHistory,
    ResidualReport,
    RunManifest,
    SweepPair,
    SweepReport,
    SweepRow,
    TargetMetrics,
    TheoryReport,
    TrainingHistory,
)
