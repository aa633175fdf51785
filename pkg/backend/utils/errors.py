"""
Exception hierarchy for hemgen.

Every error raised on purpose by the package derives from HemgenError so the
CLI can turn it into a stage-tagged diagnostic. Errors that point at a
specific input carry the position as an attribute.
"""

from typing import Optional


class HemgenError(Exception):
    """Base class for all hemgen errors."""


# --------------------------------------------------------------------------
# smiles_core
# --------------------------------------------------------------------------


class SmilesError(HemgenError):
    """Base class for SMILES tokenization, parsing and graph errors."""


class NonAsciiInput(SmilesError):
    pass


class EmptyInput(SmilesError):
    pass


class SmilesSyntaxError(SmilesError):
    """Malformed SMILES; ``position`` is the 0-based character offset."""

    def __init__(self, message: str, position: Optional[int] = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class UnbalancedParenthesis(SmilesSyntaxError):
    pass


class UnclosedRingBond(SmilesSyntaxError):
    pass


class UnknownAtomSymbol(SmilesSyntaxError):
    pass


class MalformedBracketAtom(SmilesSyntaxError):
    pass


class DanglingBondSymbol(SmilesSyntaxError):
    pass


class InvalidRingClosure(SmilesSyntaxError):
    """Ring closure that would create a self-bond, a duplicate bond or conflicting orders."""


class InvalidGraph(SmilesError):
    pass


class InvalidMolecule(SmilesError):
    def __init__(self, index: int, smiles: str):
        self.index = index
        self.smiles = smiles
        super().__init__(f"Invalid molecule at index {index}: {smiles!r}")


class WidthMismatch(SmilesError):
    pass


# --------------------------------------------------------------------------
# embeddings
# --------------------------------------------------------------------------


class EmbeddingError(HemgenError):
    pass


class EmptyCorpus(EmbeddingError):
    pass


class BadDimensions(EmbeddingError):
    pass


class IndexOutOfVocabulary(EmbeddingError):
    pass


class ShapeMismatch(EmbeddingError):
    pass


# --------------------------------------------------------------------------
# seqmodel
# --------------------------------------------------------------------------


class SeqModelError(HemgenError):
    pass


class NonFiniteActivation(SeqModelError):
    pass


class AllPositionsMasked(SeqModelError):
    pass


class StaleCache(SeqModelError):
    pass


class BadTemperature(SeqModelError):
    pass


class InvalidSmiles(SeqModelError):
    def __init__(self, index: int, smiles: str):
        self.index = index
        self.smiles = smiles
        super().__init__(f"Invalid SMILES at index {index}: {smiles!r}")


class CheckpointError(HemgenError):
    """Unreadable, corrupt or version-mismatched checkpoint file."""


# --------------------------------------------------------------------------
# genmetrics
# --------------------------------------------------------------------------


class MetricsError(HemgenError):
    pass


class EmptyMetricInput(MetricsError):
    pass


class EmptyPairSet(EmptyMetricInput):
    pass


class NoValidMolecules(MetricsError):
    pass


class UnknownTarget(MetricsError):
    pass


class LengthMismatch(MetricsError):
    pass


# --------------------------------------------------------------------------
# gnn_predictor
# --------------------------------------------------------------------------


class PredictorError(HemgenError):
    pass


class UnsupportedElement(PredictorError):
    pass


class EmptyGraph(PredictorError):
    pass


class DegenerateTarget(PredictorError):
    def __init__(self, target: str):
        self.target = target
        super().__init__(f"Target {target!r} has zero variance on the training split")


class ZeroVariance(PredictorError):
    pass


# --------------------------------------------------------------------------
# theory_verifier
# --------------------------------------------------------------------------


class TheoryError(HemgenError):
    pass


class ZeroRow(TheoryError):
    pass


class TooFewRows(TheoryError):
    pass


class BadEpsilon(TheoryError):
    pass


class BatchTooLarge(TheoryError):
    pass


class DegenerateBatch(TheoryError):
    pass


class BadInputs(TheoryError):
    pass


class DimensionMismatch(TheoryError):
    pass


# --------------------------------------------------------------------------
# cli / pipeline
# --------------------------------------------------------------------------


class PipelineError(HemgenError):
    pass


class MissingColumn(PipelineError):
    pass


class UnparseableRow(PipelineError):
    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"Unparseable row at line {line}: {reason}")


class DatasetNotFound(PipelineError):
    pass


class ConfigError(PipelineError):
    pass


class PipelineStageError(PipelineError):
    """Failure inside a named pipeline stage; wraps the original error."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
