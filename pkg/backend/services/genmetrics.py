"""
Library-level metrics for generated SMILES.

    validity    = #valid / #generated
    novelty     = #(valid and canonical form not in training) / #generated
    uniqueness  = #distinct canonical forms among valid / #valid

Membership is decided on canonical forms, so "OCC" and "CCO" are the same
molecule. Means are accumulated with ``math.fsum`` so results do not depend
on input order.
"""

import math
import operator
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from models.records import TARGETS, Candidate, target_index
from models.reports import EvalReport, Histogram, PropertySummary
from utils.errors import (
    EmptyMetricInput,
    EmptyPairSet,
    InvalidMolecule,
    LengthMismatch,
    NoValidMolecules,
    UnknownTarget,
)
from utils.logger import get_logger
from utils.report_io import write_json

from .smiles_core import GROUP_NAMES, canonical_smiles, descriptors, is_valid, morgan_fingerprint, parse

logger = get_logger("genmetrics")

_DIRECTIONS = {">": operator.gt, ">=": operator.ge, "<": operator.lt, "<=": operator.le}


@lru_cache(maxsize=65536)
def canonical(s: str) -> str:
    """Cached canonical form of a valid SMILES string."""
    return canonical_smiles(s)


def _require(items: Sequence, what: str) -> None:
    if len(items) == 0:
        raise EmptyMetricInput(f"{what} is empty")


def validity(generated: Sequence[str]) -> float:
    _require(generated, "Generated set")
    return sum(1 for s in generated if is_valid(s)) / len(generated)


def _training_set(training: Sequence[str]) -> set:
    _require(training, "Training set")
    return {canonical(s) for s in training if is_valid(s)}


def _novel_count(generated: Sequence[str], known: set) -> Tuple[int, int]:
    valid = [s for s in generated if is_valid(s)]
    return sum(1 for s in valid if canonical(s) not in known), len(valid)


def novelty(generated: Sequence[str], training: Sequence[str]) -> float:
    """Novel valid molecules over ALL generated strings."""
    _require(generated, "Generated set")
    novel, _ = _novel_count(generated, _training_set(training))
    return novel / len(generated)


def novelty_among_valid(generated: Sequence[str], training: Sequence[str]) -> float:
    _require(generated, "Generated set")
    novel, n_valid = _novel_count(generated, _training_set(training))
    if n_valid == 0:
        raise NoValidMolecules("No valid molecules among generated strings")
    return novel / n_valid


def uniqueness(generated: Sequence[str]) -> float:
    valid = [canonical(s) for s in generated if is_valid(s)]
    if not valid:
        raise NoValidMolecules("No valid molecules among generated strings")
    return len(set(valid)) / len(valid)


# --------------------------------------------------------------------------
# similarity
# --------------------------------------------------------------------------


def fingerprint_matrix(molecules: Sequence[str], radius: int = 2, nbits: int = 2048) -> np.ndarray:
    rows = []
    for index, s in enumerate(molecules):
        if not is_valid(s):
            raise InvalidMolecule(index, s)
        rows.append(morgan_fingerprint(parse(s), radius, nbits).bits)
    return np.array(rows, dtype=np.float64).reshape(len(rows), nbits)


def _similarity_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    inter = A @ B.T
    union = A.sum(axis=1)[:, None] + B.sum(axis=1)[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def mean_tanimoto(
    set_a: Sequence[str],
    set_b: Optional[Sequence[str]] = None,
    radius: int = 2,
    nbits: int = 2048,
) -> float:
    """Mean over unordered distinct pairs of ``set_a``, or over ``set_a x set_b``."""
    _require(set_a, "First molecule set")
    A = fingerprint_matrix(set_a, radius, nbits)
    if set_b is None:
        if len(set_a) < 2:
            raise EmptyPairSet("Intra-set similarity needs at least two molecules")
        sims = _similarity_matrix(A, A)
        upper = sims[np.triu_indices(len(set_a), k=1)]
        return math.fsum(upper.tolist()) / upper.size
    _require(set_b, "Second molecule set")
    sims = _similarity_matrix(A, fingerprint_matrix(set_b, radius, nbits))
    return math.fsum(sims.ravel().tolist()) / sims.size


# --------------------------------------------------------------------------
# structure / properties
# --------------------------------------------------------------------------


def structural_profile(
    molecules: Sequence[str], bin_width: float = 50.0
) -> Tuple[Histogram, Dict[str, int], Dict[str, int]]:
    """MW histogram (left-closed bins from 0), ring-count histogram and group totals."""
    _require(molecules, "Molecule set")
    weights, rings = [], {}
    groups = {name: 0 for name in GROUP_NAMES}
    for index, s in enumerate(molecules):
        if not is_valid(s):
            raise InvalidMolecule(index, s)
        desc = descriptors(parse(s))
        weights.append(desc.molecular_weight)
        key = str(desc.ring_count)
        rings[key] = rings.get(key, 0) + 1
        for name, count in desc.group_counts.items():
            groups[name] += count

    n_bins = int(math.floor(max(weights) / bin_width)) + 1
    counts = [0] * n_bins
    for w in weights:
        counts[int(math.floor(w / bin_width))] += 1
    edges = [k * bin_width for k in range(n_bins + 1)]
    ring_hist = {k: rings[k] for k in sorted(rings, key=int)}
    return Histogram(edges=edges, counts=counts), ring_hist, groups


def filter_by_property(
    molecules: Sequence[str],
    predictions: Union[np.ndarray, Sequence[Sequence[float]]],
    target: str,
    threshold: float,
    direction: str = ">",
) -> List[Candidate]:
    """Molecules whose predicted ``target`` passes ``threshold``; all 9 values are kept."""
    col = target_index(target)
    if col is None:
        raise UnknownTarget(f"Unknown target {target!r}; expected one of {', '.join(TARGETS)}")
    if direction not in _DIRECTIONS:
        raise ValueError(f"Direction must be one of {sorted(_DIRECTIONS)}, got {direction!r}")
    if len(molecules) == 0:
        return []
    preds = np.asarray(predictions, dtype=np.float64)
    if preds.ndim != 2 or preds.shape[0] != len(molecules):
        raise LengthMismatch(f"{len(molecules)} molecules but predictions of shape {preds.shape}")
    compare = _DIRECTIONS[direction]
    kept = []
    for s, row in zip(molecules, preds):
        if compare(row[col], threshold):
            kept.append(Candidate(smiles=s, properties={t: float(v) for t, v in zip(TARGETS, row)}))
    return kept


def _summaries(predictions: np.ndarray) -> Dict[str, PropertySummary]:
    out = {}
    for j, name in enumerate(TARGETS):
        col = predictions[:, j]
        col = col[np.isfinite(col)]  # rows the predictor could not featurize are NaN
        if col.size == 0:
            continue
        out[name] = PropertySummary(
            mean=math.fsum(col.tolist()) / col.size,
            std=float(np.std(np.sort(col))),
            min=float(col.min()),
            max=float(col.max()),
        )
    return out


def evaluate_library(
    generated: Sequence[str],
    training: Sequence[str],
    predictions: Optional[np.ndarray] = None,
    radius: int = 2,
    nbits: int = 2048,
    bin_width: float = 50.0,
    config_hash: Optional[str] = None,
) -> EvalReport:
    """Full report for a generated library.

    ``predictions`` (n_valid x 9, original units) are aligned with the valid
    molecules in sorted canonical order.
    """
    _require(generated, "Generated set")
    valid = sorted(s for s in generated if is_valid(s))
    known = _training_set(training)
    novel = sum(1 for s in valid if canonical(s) not in known)
    n = len(generated)

    if valid:
        mw_hist, ring_hist, groups = structural_profile(valid, bin_width)
    else:
        mw_hist, ring_hist, groups = Histogram(edges=[0.0], counts=[]), {}, {g: 0 for g in GROUP_NAMES}

    training_valid = sorted(s for s in training if is_valid(s))
    report = EvalReport(
        n_generated=n,
        n_valid=len(valid),
        validity=len(valid) / n,
        novelty=novel / n,
        novelty_among_valid=novel / len(valid) if valid else None,
        uniqueness=len({canonical(s) for s in valid}) / len(valid) if valid else None,
        mean_intra_tanimoto=mean_tanimoto(valid, radius=radius, nbits=nbits) if len(valid) >= 2 else None,
        mean_tanimoto_vs_training=(
            mean_tanimoto(valid, training_valid, radius, nbits) if valid and training_valid else None
        ),
        mw_histogram=mw_hist,
        ring_histogram=ring_hist,
        group_counts=groups,
        property_summaries=_summaries(np.asarray(predictions)) if predictions is not None and len(valid) else {},
        config_hash=config_hash,
    )
    logger.info(
        f"Evaluated library of {n}: validity={report.validity:.3f} novelty={report.novelty:.3f}",
        extra={"extra_fields": {"n_generated": n, "n_valid": len(valid), "novel": novel}},
    )
    return report


# --------------------------------------------------------------------------
# writers
# --------------------------------------------------------------------------


def report_rows(report: EvalReport) -> List[Tuple[str, str, object]]:
    """Flat (section, key, value) rows; histograms become edge,count rows."""
    rows: List[Tuple[str, str, object]] = []
    scalars = report.model_dump(exclude={"mw_histogram", "ring_histogram", "group_counts", "property_summaries"})
    for key in sorted(scalars):
        rows.append(("metric", key, scalars[key]))
    for edge, count in zip(report.mw_histogram.edges, report.mw_histogram.counts):
        rows.append(("mw_histogram", f"{edge:g}", count))
    for rings, count in report.ring_histogram.items():
        rows.append(("ring_histogram", rings, count))
    for name in sorted(report.group_counts):
        rows.append(("group_counts", name, report.group_counts[name]))
    for target in sorted(report.property_summaries):
        summary = report.property_summaries[target].model_dump()
        for stat in sorted(summary):
            rows.append((f"property:{target}", stat, summary[stat]))
    return rows


def write_report_json(report: EvalReport, path: Union[str, Path]) -> Path:
    return write_json(path, report)


def write_report_csv(report: EvalReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(report_rows(report), columns=["section", "key", "value"])
    frame.to_csv(path, index=False, lineterminator="\n")
    return path
