"""
Dataset Service for hemgen.

Reads the energetic-compound CSV into MoleculeRecords and writes the tabular
artifacts (predictions, candidates, sweep comparison) with pandas.
"""

import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from models.records import CANDIDATE_COLUMNS, DATASET_COLUMNS, TARGETS, Candidate, MoleculeRecord
from models.reports import SweepRow
from utils.errors import DatasetNotFound, MissingColumn, UnparseableRow
from utils.logger import get_logger

from .smiles_core import is_valid

logger = get_logger("dataset_service")

# Cells treated as a missing property value
MISSING_MARKERS = frozenset({"", "na", "nan", "n/a", "none", "-"})


def _parse_property(raw: str, column: str, line: int) -> Optional[float]:
    text = raw.strip()
    if text.lower() in MISSING_MARKERS:
        return None
    try:
        value = float(text)
    except ValueError:
        raise UnparseableRow(line, f"column {column!r} has non-numeric value {raw!r}") from None
    if not math.isfinite(value):
        raise UnparseableRow(line, f"column {column!r} is not finite: {raw!r}")
    return value


class DatasetService:
    """Service for dataset ingestion and tabular output."""

    def ingest(self, path: Union[str, Path], exclude_invalid: bool = False) -> List[MoleculeRecord]:
        """Parse a dataset CSV; header order does not matter, extra columns are ignored.

        Rows whose SMILES fail validation are logged with their line numbers
        and kept unless ``exclude_invalid`` is set.
        """
        path = Path(path)
        if not path.exists():
            logger.error(
                f"Dataset not found: {path}",
                extra={"extra_fields": {"error_type": "DatasetNotFound", "path": str(path)}},
            )
            raise DatasetNotFound(f"Dataset not found: {path}")

        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
        frame.columns = [str(c).strip() for c in frame.columns]
        missing = [c for c in DATASET_COLUMNS if c not in frame.columns]
        if missing:
            logger.error(
                f"Dataset {path.name} is missing columns: {', '.join(missing)}",
                extra={"extra_fields": {"error_type": "MissingColumn", "missing": missing}},
            )
            raise MissingColumn(f"Dataset {path} is missing columns: {', '.join(missing)}")

        records: List[MoleculeRecord] = []
        invalid_lines: List[int] = []
        for offset, row in enumerate(frame.itertuples(index=False)):
            line = offset + 2  # 1-based, after the header
            cells = dict(zip(frame.columns, row))
            smiles = cells["SMILES"].strip()
            if not smiles:
                raise UnparseableRow(line, "empty SMILES")
            properties = {t: _parse_property(cells[t], t, line) for t in TARGETS}
            if not is_valid(smiles):
                invalid_lines.append(line)
                if exclude_invalid:
                    continue
            records.append(
                MoleculeRecord(smiles=smiles, category=cells["Category"].strip(), properties=properties, line=line)
            )

        if invalid_lines:
            logger.warning(
                f"{len(invalid_lines)} rows with invalid SMILES "
                f"({'excluded' if exclude_invalid else 'kept'}): lines {invalid_lines}",
                extra={"extra_fields": {"invalid_lines": invalid_lines, "excluded": exclude_invalid}},
            )
        logger.info(
            f"Ingested {len(records)} records from {path.name}",
            extra={"extra_fields": {"records": len(records), "path": str(path)}},
        )
        return records

    @staticmethod
    def write_predictions(path: Union[str, Path], smiles: Sequence[str], predictions: np.ndarray) -> Path:
        """``smiles`` plus one column per target, original units."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(np.asarray(predictions, dtype=np.float64).reshape(len(smiles), len(TARGETS)),
                             columns=list(TARGETS))
        frame.insert(0, "smiles", list(smiles))
        frame.to_csv(path, index=False, lineterminator="\n")
        return path

    @staticmethod
    def read_predictions(path: Union[str, Path]) -> Dict[str, np.ndarray]:
        frame = pd.read_csv(path)
        missing = [c for c in ("smiles",) + TARGETS if c not in frame.columns]
        if missing:
            raise MissingColumn(f"Predictions file {path} is missing columns: {', '.join(missing)}")
        return {
            "smiles": frame["smiles"].fillna("").astype(str).to_numpy(),
            "values": frame[list(TARGETS)].to_numpy(dtype=np.float64),
        }

    @staticmethod
    def write_candidates(path: Union[str, Path], candidates: Sequence[Candidate]) -> Path:
        """Candidates CSV: ``smiles,OB(CO2),r0,HGAS,HSUB,Q,D,P,EG,h50``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame([c.csv_row() for c in candidates], columns=list(CANDIDATE_COLUMNS))
        frame.to_csv(path, index=False, lineterminator="\n")
        return path

    @staticmethod
    def write_sweep_table(path: Union[str, Path], rows: Sequence[SweepRow]) -> Path:
        """One line per grid point, columns in SweepRow field order."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame([r.model_dump() for r in rows], columns=list(SweepRow.model_fields))
        frame.to_csv(path, index=False, lineterminator="\n")
        return path


# Global singleton instance
dataset_service = DatasetService()
