import math
from itertools import product
from pathlib import Path
from typing import Dict, Iterator, Literal, Optional, Sequence, Tuple, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config.settings import settings
from utils.errors import ConfigError
from utils.file_hash import file_hash_service

EmbeddingModeName = Literal["trainable_only", "random_fixed", "sha_fixed"]

# Sweep values for the generator grid search
LEARNING_RATES = (1e-4, 1e-3, 5e-3, 1e-2)
DROPOUT_RATES = (0.1, 0.3, 0.5, 0.7)
BATCH_SIZES = (16, 32, 64)
TRAINABLE_DIMS = (10, 30, 50, 80, 100)
AUGMENT_FACTORS = (1, 3, 5)

MODEL_NAMES = {"trainable_only": "model1", "random_fixed": "model2", "sha_fixed": "model3"}


class GeneratorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden_size: int = Field(default=256, ge=1)
    layers: int = Field(default=2, ge=1)
    d: int = Field(default=128, ge=1)  # total embedding width
    d_t: int = Field(default=50, ge=0)  # trainable columns
    embedding_mode: EmbeddingModeName = "sha_fixed"
    key_mode: Literal["index", "text"] = "index"
    unit_norm: bool = False
    dropout: float = Field(default=0.3, ge=0.0, lt=1.0)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    batch_size: int = Field(default=32, ge=1)
    epochs: int = Field(default=300, ge=1)
    max_sample_length: int = Field(default=200, ge=1)
    val_fraction: float = Field(default=0.1, ge=0.0, le=0.5)
    augment_factor: int = Field(default=1, ge=1)  # applied to the train split only
    grad_clip: Optional[float] = Field(default_factory=lambda: settings.GRAD_CLIP_NORM, gt=0.0)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)

    @model_validator(mode="after")
    def _check_widths(self):
        if self.d_t > self.d:
            raise ValueError(f"d_t ({self.d_t}) cannot exceed d ({self.d})")
        return self

    @property
    def d_f(self) -> int:
        return 0 if self.embedding_mode == "trainable_only" else self.d - self.d_t

    # Model variants: 1 fully trainable, 2 random-fixed hybrid, 3 SHA-fixed hybrid
    @classmethod
    def model1(cls, **overrides) -> "GeneratorConfig":
        return cls(embedding_mode="trainable_only", **overrides)

    @classmethod
    def model2(cls, **overrides) -> "GeneratorConfig":
        return cls(embedding_mode="random_fixed", **overrides)

    @classmethod
    def model3(cls, **overrides) -> "GeneratorConfig":
        return cls(embedding_mode="sha_fixed", **overrides)


def hyperparameter_grid(
    base: GeneratorConfig,
    learning_rates: Sequence[float] = LEARNING_RATES,
    dropouts: Sequence[float] = DROPOUT_RATES,
    batch_sizes: Sequence[int] = BATCH_SIZES,
    trainable_dims: Sequence[int] = TRAINABLE_DIMS,
) -> Iterator[GeneratorConfig]:
    """Every (learning rate, dropout, batch size, d_t) combination over ``base``."""
    for lr, dropout, batch, d_t in product(learning_rates, dropouts, batch_sizes, trainable_dims):
        if d_t > base.d:
            continue
        yield base.model_copy(
            update={"learning_rate": lr, "dropout": dropout, "batch_size": batch, "d_t": d_t}
        )


class SweepPlan(BaseModel):
    """Axes of the embedding comparison: models x augmentation x hyperparameter grid."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    modes: Tuple[EmbeddingModeName, ...] = ("random_fixed", "sha_fixed")
    augment_factors: Tuple[int, ...] = AUGMENT_FACTORS
    learning_rates: Tuple[float, ...] = LEARNING_RATES
    dropouts: Tuple[float, ...] = DROPOUT_RATES
    batch_sizes: Tuple[int, ...] = BATCH_SIZES
    trainable_dims: Tuple[int, ...] = TRAINABLE_DIMS

    @field_validator("modes", "augment_factors", "learning_rates", "dropouts", "batch_sizes", "trainable_dims")
    @classmethod
    def _non_empty(cls, v: tuple) -> tuple:
        if not v:
            raise ValueError("sweep axes cannot be empty")
        if len(set(v)) != len(v):
            raise ValueError(f"sweep axis has repeated values: {v}")
        return v

    @field_validator("augment_factors")
    @classmethod
    def _known_factors(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        unknown = [f for f in v if f not in AUGMENT_FACTORS]
        if unknown:
            raise ValueError(f"augment factors must be among {AUGMENT_FACTORS}, got {unknown}")
        return v

    def points(self, base: GeneratorConfig) -> Iterator[GeneratorConfig]:
        """Grid points in (augmentation, hyperparameters, mode) order, so paired models are adjacent."""
        for factor in self.augment_factors:
            shaped = base.model_copy(update={"augment_factor": factor})
            for point in hyperparameter_grid(
                shaped, self.learning_rates, self.dropouts, self.batch_sizes, self.trainable_dims
            ):
                for mode in self.modes:
                    yield point.model_copy(update={"embedding_mode": mode})


class PredictorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden: int = Field(default=118, ge=1)
    layers: int = Field(default=3, ge=1)  # message-passing layers
    readout_steps: int = Field(default=3, ge=1)
    outputs: int = Field(default=9, ge=1)
    learning_rate: float = Field(default=1e-4, gt=0.0)
    weight_decay: float = Field(default=1e-3, ge=0.0)
    epochs: int = Field(default=300, ge=1)
    batch_size: int = Field(default=32, ge=1)
    test_fraction: float = Field(default=0.2, ge=0.0, lt=1.0)
    log_h50: bool = True  # train h50(obs) as log10
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)


class BoundInputs(BaseModel):
    """Quantities entering the generalization bound calculators."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(gt=0)
    V: int = Field(gt=0)
    d_t: int = Field(ge=0)
    D: int = Field(gt=0)  # parameter count outside the embedding
    B_t: float = Field(gt=0.0)
    B_theta: float = Field(gt=0.0)
    L_f: float = Field(gt=0.0)
    L_loss: float = Field(gt=0.0)
    delta: float = Field(default=0.05, gt=0.0, lt=1.0)
    eps: float = Field(default=0.01, gt=0.0, lt=1.0)
    d_f: int = Field(default=1, gt=0)


class RunConfig(BaseModel):
    """Flat run configuration, one ``key=value`` per line (dotenv syntax).

    Generator keys are prefixed ``gen_``, predictor keys ``pred_``.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    dataset: str = Field(default_factory=lambda: settings.DATASET_PATH or str(Path(settings.FIXTURES_DIR) / "dataset_16.csv"))
    smiles_file: Optional[str] = None  # training SMILES list; defaults to the dataset's SMILES column
    out_dir: str = Field(default_factory=lambda: settings.RUNS_DIR)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    augment_factor: int = 3  # 1, 3 or 5
    exclude_invalid: bool = False

    gen_hidden_size: int = 256
    gen_layers: int = 2
    gen_d: int = 128
    gen_d_t: int = 50
    gen_mode: EmbeddingModeName = "sha_fixed"
    gen_key_mode: Literal["index", "text"] = "index"
    gen_unit_norm: bool = False
    gen_dropout: float = 0.3
    gen_lr: float = 1e-3
    gen_batch_size: int = 32
    gen_epochs: int = 300
    gen_max_len: int = 200
    gen_val_fraction: float = 0.1

    sample_n: int = Field(default=1000, ge=1)
    sample_temperature: float = Field(default=1.0, gt=0.0)
    sample_greedy: bool = False

    pred_checkpoint: Optional[str] = None  # load instead of training when set
    pred_hidden: int = 118
    pred_layers: int = 3
    pred_readout_steps: int = 3
    pred_lr: float = 1e-4
    pred_weight_decay: float = 1e-3
    pred_epochs: int = 300
    pred_batch_size: int = 32
    pred_test_fraction: float = 0.2
    pred_log_h50: bool = True

    filter_target: str = "D"
    filter_threshold: float = 9.0
    filter_direction: Literal[">", ">=", "<", "<="] = ">"

    fp_radius: int = Field(default=2, ge=0)
    fp_nbits: int = Field(default=2048, gt=0)
    mw_bin_width: float = Field(default=50.0, gt=0.0)

    @field_validator("augment_factor")
    @classmethod
    def _known_factor(cls, v: int) -> int:
        if v not in AUGMENT_FACTORS:
            raise ValueError(f"augment_factor must be one of {AUGMENT_FACTORS}")
        return v

    @field_validator("fp_nbits")
    @classmethod
    def _power_of_two(cls, v: int) -> int:
        if v & (v - 1):
            raise ValueError("fp_nbits must be a power of two")
        return v

    @field_validator("filter_threshold")
    @classmethod
    def _threshold_not_nan(cls, v: float) -> float:
        if math.isnan(v):
            raise ValueError("filter_threshold must not be NaN")
        return v

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            hidden_size=self.gen_hidden_size,
            layers=self.gen_layers,
            d=self.gen_d,
            d_t=self.gen_d_t,
            embedding_mode=self.gen_mode,
            key_mode=self.gen_key_mode,
            unit_norm=self.gen_unit_norm,
            dropout=self.gen_dropout,
            learning_rate=self.gen_lr,
            batch_size=self.gen_batch_size,
            epochs=self.gen_epochs,
            max_sample_length=self.gen_max_len,
            val_fraction=self.gen_val_fraction,
            augment_factor=self.augment_factor,
            seed=self.seed,
        )

    def predictor_config(self) -> PredictorConfig:
        return PredictorConfig(
            hidden=self.pred_hidden,
            layers=self.pred_layers,
            readout_steps=self.pred_readout_steps,
            learning_rate=self.pred_lr,
            weight_decay=self.pred_weight_decay,
            epochs=self.pred_epochs,
            batch_size=self.pred_batch_size,
            test_fraction=self.pred_test_fraction,
            log_h50=self.pred_log_h50,
            seed=self.seed,
        )

    def to_text(self, exclude: Optional[set] = None) -> str:
        """Fully resolved config as sorted ``key=value`` lines."""
        lines = []
        for key, value in sorted(self.model_dump(exclude=exclude).items()):
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        """SHA-256 of the resolved config, output location excluded."""
        return file_hash_service.calculate_content_hash(self.to_text(exclude={"out_dir"}))

    @classmethod
    def from_mapping(cls, values: Dict[str, Optional[str]]) -> "RunConfig":
        cleaned = {k.strip().lower(): v for k, v in values.items() if v is not None and v != ""}
        try:
            return cls(**cleaned)
        except ValidationError as e:
            raise ConfigError(f"Invalid run configuration: {e}") from e

    @classmethod
    def from_file(cls, path: Union[str, Path], **overrides) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        values = dict(dotenv_values(path))
        values.update({k: str(v) for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)
