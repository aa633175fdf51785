import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

# Dataset columns, in Table order. Units: OB(CO2) %, r0 g/cm3, HGAS/HSUB/Q as
# tabulated, D km/s, P GPa, EG as tabulated, h50(obs) cm.
TARGETS: Tuple[str, ...] = ("OB(CO2)", "r0", "HGAS", "HSUB", "Q", "D", "P", "EG", "h50(obs)")
DATASET_COLUMNS: Tuple[str, ...] = ("SMILES", "Category") + TARGETS
# Candidates CSV spells the last target without the suffix
CANDIDATE_COLUMNS: Tuple[str, ...] = ("smiles", "OB(CO2)", "r0", "HGAS", "HSUB", "Q", "D", "P", "EG", "h50")

TARGET_ALIASES: Dict[str, str] = {"h50": "h50(obs)"}


def target_index(name: str) -> Optional[int]:
    name = TARGET_ALIASES.get(name, name)
    return TARGETS.index(name) if name in TARGETS else None


class MoleculeRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    smiles: str = Field(min_length=1)
    category: str = ""
    properties: Dict[str, Optional[float]] = Field(default_factory=dict)  # None = missing
    line: Optional[int] = None  # 1-based line in the source CSV

    @field_validator("properties")
    @classmethod
    def _finite_or_missing(cls, v: Dict[str, Optional[float]]) -> Dict[str, Optional[float]]:
        for key, value in v.items():
            if value is not None and not math.isfinite(value):
                raise ValueError(f"Property {key} is not finite: {value}")
        return v

    @property
    def has_all_targets(self) -> bool:
        return all(self.properties.get(t) is not None for t in TARGETS)

    def property_vector(self) -> np.ndarray:
        """Length-9 vector in TARGETS order; missing entries are NaN."""
        return np.array(
            [np.nan if self.properties.get(t) is None else float(self.properties[t]) for t in TARGETS]
        )


class Candidate(BaseModel):
    smiles: str
    properties: Dict[str, float]  # original units, keyed by TARGETS

    def csv_row(self) -> List:
        return [self.smiles] + [self.properties[t] for t in TARGETS]
