"""
Pipeline Orchestrator for hemgen.

Coordinates the services end to end:

    ingest -> augment -> train_generator -> sample -> train_predictor
           -> predict -> evaluate -> filter

The embedding sweep reuses ingest, then trains, samples and scores one
generator per grid point (see ``run_sweep``).

Every stage writes its artifact into the run directory, so any stage can be
re-run from the persisted outputs of the previous ones. Failures are wrapped
in PipelineStageError carrying the stage name.
"""

from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from models.configs import MODEL_NAMES, GeneratorConfig, RunConfig, SweepPlan
from models.records import TARGETS, MoleculeRecord
from models.reports import EvalReport, RunManifest, SweepPair, SweepReport, SweepRow
from utils.errors import HemgenError, LengthMismatch, PipelineStageError, UnsupportedElement, ZeroVariance
from utils.file_hash import file_hash_service
from utils.logger import get_logger
from utils.logging_config import clear_run_id, configure_logging, detach_handler, set_run_id
from utils.report_io import read_lines, write_json, write_lines
from utils.rng import stage_seed

from . import genmetrics, gnn_predictor, seqmodel
from .dataset_service import dataset_service
from .smiles_core import augment_dataset, is_valid

logger = get_logger("pipeline_orchestrator")

STAGES = (
    "ingest",
    "augment",
    "train_generator",
    "sample",
    "train_predictor",
    "predict",
    "evaluate",
    "filter",
)

# Artifact file names inside a run directory
ARTIFACTS = {
    "config": "config.env",
    "augmented": "augmented.smi",
    "generator": "generator.ckpt",
    "generator_history": "generator_history.json",
    "samples": "samples.smi",
    "predictor": "predictor.ckpt",
    "predictor_history": "predictor_history.json",
    "predictor_metrics": "predictor_metrics.json",
    "predictions": "predictions.csv",
    "report": "eval_report.json",
    "report_csv": "eval_report.csv",
    "candidates": "candidates.csv",
    "sweep_table": "sweep_table.csv",
    "sweep_pool": "sweep_pool.smi",
    "sweep_report": "sweep_report.json",
}


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Tag any library failure inside the block with the stage name."""
    try:
        yield
    except PipelineStageError:
        raise
    except (HemgenError, ValueError, OSError) as e:
        logger.error(
            f"Stage {name} failed: {e}",
            extra={"extra_fields": {"error_type": type(e).__name__, "stage": name}},
        )
        raise PipelineStageError(name, e) from e


def novel_molecules(generated: Sequence[str], training: Sequence[str]) -> List[str]:
    """Distinct canonical forms of valid generated molecules absent from training, sorted."""
    known = {genmetrics.canonical(s) for s in training if is_valid(s)}
    return sorted({genmetrics.canonical(s) for s in generated if is_valid(s)} - known)


def predict_supported(
    checkpoint: gnn_predictor.PredictorCheckpoint, smiles: Sequence[str]
) -> Tuple[np.ndarray, int]:
    """Predictions per molecule; molecules with unsupported elements get a NaN row."""
    out = np.full((len(smiles), len(TARGETS)), np.nan)
    unsupported = 0
    for i, s in enumerate(smiles):
        try:
            out[i] = gnn_predictor.predict_properties(checkpoint, [s])[0]
        except UnsupportedElement:
            unsupported += 1
    if unsupported:
        logger.warning(
            f"{unsupported} molecules contain elements the predictor does not featurize",
            extra={"extra_fields": {"unsupported": unsupported}},
        )
    return out, unsupported


class PipelineOrchestrator:
    """Orchestrator for the generate-evaluate-predict-filter pipeline."""

    def __init__(self, config: RunConfig, run_dir: Optional[Path] = None):
        self.config = config
        self.run_dir = Path(run_dir or config.out_dir)
        self.config_hash = config.config_hash
        self.artifacts: Dict[str, str] = {}
        self.counts: Dict[str, int] = {}
        self.completed: List[str] = []

    def path(self, key: str) -> Path:
        return self.run_dir / ARTIFACTS[key]

    def _record(self, key: str) -> None:
        self.artifacts[ARTIFACTS[key]] = file_hash_service.calculate_file_hash(self.path(key))

    # ----------------------------------------------------------------- stages

    def ingest(self) -> Tuple[List[MoleculeRecord], List[str]]:
        with stage("ingest"):
            records = dataset_service.ingest(self.config.dataset, self.config.exclude_invalid)
            if self.config.smiles_file:
                training = read_lines(self.config.smiles_file, skip_blank=True)
            else:
                training = [r.smiles for r in records if is_valid(r.smiles)]
            self.run_dir.mkdir(parents=True, exist_ok=True)
            self.path("config").write_text(self.config.to_text(), encoding="utf-8", newline="\n")
            self._record("config")
        self.counts.update(records=len(records), training_smiles=len(training))
        self.completed.append("ingest")
        return records, training

    def augment(self, training: Sequence[str]) -> List[str]:
        """Writes the augmented corpus; generator training re-augments after its split."""
        with stage("augment"):
            augmented = augment_dataset(training, self.config.augment_factor, stage_seed(self.config.seed, "augment"))
            write_lines(self.path("augmented"), augmented)
            self._record("augmented")
        self.counts["augmented"] = len(augmented)
        self.completed.append("augment")
        return augmented

    def train_generator(
        self, training: Sequence[str], resume: Optional[seqmodel.GeneratorCheckpoint] = None
    ) -> seqmodel.GeneratorCheckpoint:
        with stage("train_generator"):
            checkpoint, history = seqmodel.train(self.config.generator_config(), training, resume=resume)
            checkpoint.save(self.path("generator"))
            write_json(self.path("generator_history"), {"config_hash": self.config_hash, **history.model_dump()})
            self._record("generator")
            self._record("generator_history")
        self.completed.append("train_generator")
        return checkpoint

    def sample(self, checkpoint: seqmodel.GeneratorCheckpoint) -> List[str]:
        with stage("sample"):
            samples = seqmodel.sample(
                checkpoint,
                self.config.sample_n,
                temperature=self.config.sample_temperature,
                seed=stage_seed(self.config.seed, "sample"),
                greedy=self.config.sample_greedy,
            )
            write_lines(self.path("samples"), samples)
            self._record("samples")
        self.counts["samples"] = len(samples)
        self.completed.append("sample")
        return samples

    def train_predictor(self, records: Sequence[MoleculeRecord]) -> gnn_predictor.PredictorCheckpoint:
        with stage("train_predictor"):
            if self.config.pred_checkpoint:
                checkpoint = gnn_predictor.PredictorCheckpoint.load(self.config.pred_checkpoint)
                logger.info(f"Loaded predictor from {self.config.pred_checkpoint}")
            else:
                usable = [r for r in records if is_valid(r.smiles)]
                checkpoint, history = gnn_predictor.train_predictor(self.config.predictor_config(), usable)
                write_json(
                    self.path("predictor_history"), {"config_hash": self.config_hash, **history.model_dump()}
                )
                self._record("predictor_history")
                self._write_predictor_metrics(checkpoint, usable)
            checkpoint.save(self.path("predictor"))
            self._record("predictor")
        self.completed.append("train_predictor")
        return checkpoint

    def _write_predictor_metrics(
        self, checkpoint: gnn_predictor.PredictorCheckpoint, records: Sequence[MoleculeRecord]
    ) -> None:
        complete = gnn_predictor.usable_records(records)
        held_out = [complete[i] for i in checkpoint.test_index]
        if len(held_out) < 2:
            logger.warning(f"No held-out metrics: {len(held_out)} test molecules")
            return
        try:
            metrics = gnn_predictor.evaluate_predictor(checkpoint, held_out)
        except (LengthMismatch, ZeroVariance) as e:
            logger.warning(f"No held-out metrics: {e}")
            return
        payload = {"config_hash": self.config_hash, "test": {k: v.model_dump() for k, v in metrics.items()}}
        write_json(self.path("predictor_metrics"), payload)
        self._record("predictor_metrics")

    def predict(
        self, checkpoint: gnn_predictor.PredictorCheckpoint, samples: Sequence[str], training: Sequence[str]
    ) -> Tuple[List[str], np.ndarray]:
        """Predicts the 9 targets for the novel valid molecules."""
        with stage("predict"):
            novel = novel_molecules(samples, training)
            predictions, _ = predict_supported(checkpoint, novel)
            dataset_service.write_predictions(self.path("predictions"), novel, predictions)
            self._record("predictions")
        self.counts["novel"] = len(novel)
        self.completed.append("predict")
        return novel, predictions

    def evaluate(
        self,
        samples: Sequence[str],
        training: Sequence[str],
        checkpoint: Optional[gnn_predictor.PredictorCheckpoint] = None,
    ) -> EvalReport:
        with stage("evaluate"):
            valid_sorted = sorted(s for s in samples if is_valid(s))
            predictions = None
            if checkpoint is not None and valid_sorted:
                distinct = sorted({genmetrics.canonical(s) for s in valid_sorted})
                values, _ = predict_supported(checkpoint, distinct)
                by_canonical = dict(zip(distinct, values))
                predictions = np.stack([by_canonical[genmetrics.canonical(s)] for s in valid_sorted])
            report = genmetrics.evaluate_library(
                samples,
                training,
                predictions=predictions,
                radius=self.config.fp_radius,
                nbits=self.config.fp_nbits,
                bin_width=self.config.mw_bin_width,
                config_hash=self.config_hash,
            )
            genmetrics.write_report_json(report, self.path("report"))
            genmetrics.write_report_csv(report, self.path("report_csv"))
            self._record("report")
            self._record("report_csv")
        self.completed.append("evaluate")
        return report

    def filter_candidates(self, novel: Sequence[str], predictions: np.ndarray) -> list:
        with stage("filter"):
            keep = np.all(np.isfinite(predictions), axis=1)
            candidates = genmetrics.filter_by_property(
                [s for s, k in zip(novel, keep) if k],
                predictions[keep],
                self.config.filter_target,
                self.config.filter_threshold,
                self.config.filter_direction,
            )
            dataset_service.write_candidates(self.path("candidates"), candidates)
            self._record("candidates")
        self.counts["candidates"] = len(candidates)
        self.completed.append("filter")
        return candidates

    # ------------------------------------------------------------------ sweep

    def sweep(self, training: Sequence[str], plan: SweepPlan) -> SweepReport:
        """Train, sample and score one generator per grid point, pooling the novel molecules."""
        with stage("sweep"):
            base = self.config.generator_config()
            sample_seed = stage_seed(self.config.seed, "sample")
            rows: List[SweepRow] = []
            pooled: Dict[str, set] = {}
            for point in plan.points(base):
                model = MODEL_NAMES[point.embedding_mode]
                checkpoint, _ = seqmodel.train(point, training)
                samples = seqmodel.sample(
                    checkpoint,
                    self.config.sample_n,
                    temperature=self.config.sample_temperature,
                    seed=sample_seed,
                    greedy=self.config.sample_greedy,
                )
                n_valid = sum(1 for s in samples if is_valid(s))
                novel = novel_molecules(samples, training)
                pooled.setdefault(model, set()).update(novel)
                row = SweepRow(
                    config_id=sweep_config_id(point),
                    model=model,
                    embedding_mode=point.embedding_mode,
                    augment_factor=point.augment_factor,
                    learning_rate=point.learning_rate,
                    dropout=point.dropout,
                    batch_size=point.batch_size,
                    d_t=point.d_t,
                    n_generated=len(samples),
                    n_valid=n_valid,
                    validity=genmetrics.validity(samples),
                    novelty=genmetrics.novelty(samples, training),
                    uniqueness=genmetrics.uniqueness(samples) if n_valid else None,
                    n_novel=len(novel),
                )
                rows.append(row)
                logger.info(
                    f"Sweep point {row.config_id}: validity={row.validity:.3f} novelty={row.novelty:.3f}",
                    extra={"extra_fields": row.model_dump()},
                )

            pool = sorted(set().union(*pooled.values()))
            report = SweepReport(
                config_hash=self.config_hash,
                seed=self.config.seed,
                rows=rows,
                pairs=pair_rows(rows),
                pool_size=len(pool),
                pool_by_model={model: len(found) for model, found in sorted(pooled.items())},
            )
            if pool:
                mw_hist, ring_hist, groups = genmetrics.structural_profile(pool, self.config.mw_bin_width)
                report = report.model_copy(
                    update={"mw_histogram": mw_hist, "ring_histogram": ring_hist, "group_counts": groups}
                )
            dataset_service.write_sweep_table(self.path("sweep_table"), rows)
            write_lines(self.path("sweep_pool"), pool)
            write_json(self.path("sweep_report"), report)
            for key in ("sweep_table", "sweep_pool", "sweep_report"):
                self._record(key)
        self.counts.update(sweep_points=len(rows), sweep_pool=len(pool))
        self.completed.append("sweep")
        return report

    # -------------------------------------------------------------- whole run

    def _write_manifest(self) -> RunManifest:
        manifest = RunManifest(
            config_hash=self.config_hash,
            seed=self.config.seed,
            stages=list(self.completed),
            artifacts=dict(sorted(self.artifacts.items())),
            counts=dict(sorted(self.counts.items())),
        )
        write_json(self.run_dir / "manifest.json", manifest)
        return manifest

    def run(self) -> RunManifest:
        handler = configure_logging(self.run_dir)
        set_run_id(self.config_hash[:12])
        try:
            logger.info(
                f"Starting pipeline run in {self.run_dir}",
                extra={"extra_fields": {"config_hash": self.config_hash, "seed": self.config.seed}},
            )
            records, training = self.ingest()
            self.augment(training)
            generator = self.train_generator(training)
            samples = self.sample(generator)
            predictor = self.train_predictor(records)
            novel, predictions = self.predict(predictor, samples, training)
            self.evaluate(samples, training, predictor)
            self.filter_candidates(novel, predictions)

            manifest = self._write_manifest()
            logger.info(
                "Pipeline run complete",
                extra={"extra_fields": {"config_hash": self.config_hash, **manifest.counts}},
            )
            return manifest
        finally:
            clear_run_id()
            detach_handler(handler)

    def run_sweep(self, plan: SweepPlan) -> SweepReport:
        handler = configure_logging(self.run_dir)
        set_run_id(self.config_hash[:12])
        try:
            logger.info(
                f"Starting embedding sweep in {self.run_dir}",
                extra={"extra_fields": {"config_hash": self.config_hash, **plan.model_dump()}},
            )
            _, training = self.ingest()
            report = self.sweep(training, plan)
            self._write_manifest()
            return report
        finally:
            clear_run_id()
            detach_handler(handler)


def sweep_config_id(config: GeneratorConfig) -> str:
    return (
        f"{MODEL_NAMES[config.embedding_mode]}-x{config.augment_factor}-lr{config.learning_rate:g}"
        f"-do{config.dropout:g}-bs{config.batch_size}-dt{config.d_t}"
    )


def pair_rows(rows: Sequence[SweepRow]) -> List[SweepPair]:
    """Groups rows that differ only in embedding mode; singletons are left out."""
    groups: Dict[tuple, List[SweepRow]] = {}
    for row in rows:
        key = (row.augment_factor, row.learning_rate, row.dropout, row.batch_size, row.d_t)
        groups.setdefault(key, []).append(row)
    pairs = []
    for (factor, lr, dropout, batch, d_t), members in groups.items():
        if len(members) < 2:
            continue
        pairs.append(
            SweepPair(
                augment_factor=factor,
                learning_rate=lr,
                dropout=dropout,
                batch_size=batch,
                d_t=d_t,
                validity={r.model: r.validity for r in members},
                novelty={r.model: r.novelty for r in members},
            )
        )
    return pairs


def run_pipeline(config: RunConfig, run_dir: Optional[Path] = None) -> RunManifest:
    return PipelineOrchestrator(config, run_dir).run()


def run_sweep(config: RunConfig, plan: Optional[SweepPlan] = None, run_dir: Optional[Path] = None) -> SweepReport:
    return PipelineOrchestrator(config, run_dir).run_sweep(plan or SweepPlan())
