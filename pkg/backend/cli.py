"""
hemgen command line.

Every subcommand reads and writes the documented file formats (SMILES lists,
dataset CSV, checkpoints, JSON reports) so stages can be chained by hand or
run together with ``hemgen run``. ``hemgen sweep`` compares the embedding
variants over the hyperparameter grid. Failures exit nonzero with a
``[stage] ErrorType: message`` line on stderr.
"""

from pathlib import Path
from typing import List, Optional

import typer
from rich.console import Console

from models.configs import RunConfig, SweepPlan
from models.reports import EvalReport
from services import genmetrics, gnn_predictor, seqmodel, theory_verifier
from services.dataset_service import dataset_service
from services.embeddings import EmbeddingMode
from services.pipeline_orchestrator import PipelineOrchestrator, predict_supported
from services.smiles_core import augment_dataset, is_valid
from utils.errors import HemgenError, PipelineStageError
from utils.logger import get_logger
from utils.report_io import read_json, read_lines, to_json_bytes, write_json, write_lines
from utils.rng import stage_seed

logger = get_logger("cli")
stderr = Console(stderr=True)

app = typer.Typer(
    name="hemgen",
    help="Low-data generative pipeline for energetic molecules.",
    no_args_is_help=True,
    add_completion=False,
)

SeedOption = typer.Option(None, "--seed", help="Root seed; every stage derives its own stream from it.")
ConfigOption = typer.Option(None, "--config", help="Run config file (key=value lines, dotenv syntax).")
OutDirOption = typer.Option(None, "--out-dir", help="Directory for this command's outputs.")


def load_config(config: Optional[Path], seed: Optional[int], out_dir: Optional[Path], **overrides) -> RunConfig:
    """Config file (if any) overlaid with the flags that were actually given."""
    values = {"seed": seed, "out_dir": str(out_dir) if out_dir else None, **overrides}
    values = {k: v for k, v in values.items() if v is not None}
    if config is not None:
        return RunConfig.from_file(config, **values)
    return RunConfig.from_mapping({k: str(v) for k, v in values.items()})


def fail(stage: str, error: HemgenError) -> None:
    if not isinstance(error, PipelineStageError):
        error = PipelineStageError(stage, error)
    stderr.print(str(error), markup=False, highlight=False)
    raise typer.Exit(code=1)


def run_stage(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except HemgenError as e:
        fail(stage, e)
    except (ValueError, OSError) as e:
        fail(stage, PipelineStageError(stage, e))


@app.command()
def augment(
    source: Path = typer.Argument(..., help="SMILES list, one per line."),
    factor: int = typer.Option(3, "--factor", help="Output strings per molecule (original included)."),
    output: Optional[Path] = typer.Option(None, "--output", help="Defaults to OUT_DIR/augmented.smi."),
    seed: Optional[int] = SeedOption,
    config: Optional[Path] = ConfigOption,
    out_dir: Optional[Path] = OutDirOption,
):
    """Write randomized SMILES enumerations of every input molecule."""
    cfg = run_stage("augment", load_config, config, seed, out_dir)
    smiles = run_stage("augment", read_lines, source, skip_blank=True)
    augmented = run_stage("augment", augment_dataset, smiles, factor, stage_seed(cfg.seed, "augment"))
    path = write_lines(output or Path(cfg.out_dir) / "augmented.smi", augmented)
    typer.echo(str(path))


@app.command("train-gen")
def train_gen(
    smiles: Optional[Path] = typer.Option(None, "--smiles", help="Training SMILES list; defaults to the dataset."),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    mode: Optional[EmbeddingMode] = typer.Option(None, "--mode", help="Embedding variant."),
    d_t: Optional[int] = typer.Option(None, "--dt", help="Trainable embedding width."),
    augment_factor: Optional[int] = typer.Option(None, "--augment", help="1, 3 or 5."),
    resume: Optional[Path] = typer.Option(None, "--resume", help="Generator checkpoint to continue training from."),
    seed: Optional[int] = SeedOption,
    config: Optional[Path] = ConfigOption,
    out_dir: Optional[Path] = OutDirOption,
):
    """Train the LSTM generator; writes generator.ckpt and generator_history.json."""
    cfg = run_stage(
        "train_generator", load_config, config, seed, out_dir,
        smiles_file=str(smiles) if smiles else None, gen_epochs=epochs,
        gen_mode=mode.value if mode else None, gen_d_t=d_t, augment_factor=augment_factor,
    )
    previous = run_stage("train_generator", seqmodel.GeneratorCheckpoint.load, resume) if resume else None
    orchestrator = PipelineOrchestrator(cfg)
    try:
        _, training = orchestrator.ingest()
        orchestrator.train_generator(training, resume=previous)
    except HemgenError as e:
        fail("train_generator", e)
    typer.echo(str(orchestrator.path("generator")))


@app.command()
def sample(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Generator checkpoint."),
    n: int = typer.Option(1000, "--n", help="Number of strings to draw."),
    temperature: float = typer.Option(1.0, "--temperature"),
    greedy: bool = typer.Option(False, "--greedy", help="Argmax decoding."),
    output: Optional[Path] = typer.Option(None, "--output", help="Defaults to OUT_DIR/samples.smi."),
    seed: Optional[int] = SeedOption,
    config: Optional[Path] = ConfigOption,
    out_dir: Optional[Path] = OutDirOption,
):
    """Sample N strings (one per line, empty lines allowed) from a generator."""
    cfg = run_stage("sample", load_config, config, seed, out_dir)
    ckpt = run_stage("sample", seqmodel.GeneratorCheckpoint.load, checkpoint)
    samples = run_stage(
        "sample", seqmodel.sample, ckpt, n, temperature=temperature, seed=stage_seed(cfg.seed, "sample"), greedy=greedy
    )
    path = write_lines(output or Path(cfg.out_dir) / "samples.smi", samples)
    typer.echo(str(path))


@app.command()
def evaluate(
    generated: Path = typer.Option(..., "--generated", help="Generated SMILES list."),
    training: Path = typer.Option(..., "--training", help="Training SMILES list."),
    output: Optional[Path] = typer.Option(None, "--output", help="Defaults to OUT_DIR/eval_report.json."),
    seed: Optional[int] = SeedOption,
    config: Optional[Path] = ConfigOption,
    out_dir: Optional[Path] = OutDirOption,
):
    """Validity, novelty, uniqueness, similarity and structure statistics as JSON and CSV."""
    cfg = run_stage("evaluate", load_config, config, seed, out_dir)
    samples = run_stage("evaluate", read_lines, generated)
    train_smiles = run_stage("evaluate", read_lines, training, skip_blank=True)
    report = run_stage(
        "evaluate", genmetrics.evaluate_library, samples, train_smiles,
        radius=cfg.fp_radius, nbits=cfg.fp_nbits, bin_width=cfg.mw_bin_width, config_hash=cfg.config_hash,
    )
    path = output or Path(cfg.out_dir) / "eval_report.json"
    genmetrics.write_report_json(report, path)
    genmetrics.write_report_csv(report, path.with_suffix(".csv"))
    typer.echo(to_json_bytes(report).decode("utf-8"), nl=False)


@app.command("train-pred")
def train_pred(
    dataset: Optional[Path] = typer.Option(None, "--dataset", help="Dataset CSV."),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    seed: Optional[int] = SeedOption,
    config: Optional[Path] = ConfigOption,
    out_dir: Optional[Path] = OutDirOption,
):
    """Train the property predictor; writes predictor.ckpt and its history."""
    cfg = run_stage(
        "train_predictor", load_config, config, seed, out_dir,
        dataset=str(dataset) if dataset else None, pred_epochs=epochs,
    )
    orchestrator = PipelineOrchestrator(cfg)
    try:
        records, _ = orchestrator.ingest()
        orchestrator.train_predictor(records)
    except HemgenError as e:
        fail("train_predictor", e)
    typer.echo(str(orchestrator.path("predictor")))


@app.command()
def predict(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Predictor checkpoint."),
    smiles: Path = typer.Option(..., "--smiles", help="SMILES list to score."),
    output: Optional[Path] = typer.Option(None, "--output", help="Defaults to OUT_DIR/predictions.csv."),
    seed: Optional[int] = SeedOption,
    config: Optional[Path] = ConfigOption,
    out_dir: Optional[Path] = OutDirOption,
):
    """Predict the nine targets (original units) for every valid input molecule."""
    cfg = run_stage("predict", load_config, config, seed, out_dir)
    ckpt = run_stage("predict", gnn_predictor.PredictorCheckpoint.load, checkpoint)
    molecules = [s for s in run_stage("predict", read_lines, smiles, skip_blank=True) if is_valid(s)]
    values, _ = run_stage("predict", predict_supported, ckpt, molecules)
    path = dataset_service.write_predictions(output or Path(cfg.out_dir) / "predictions.csv", molecules, values)
    typer.echo(str(path))


@app.command("filter")
def filter_command(
    predictions: Path = typer.Option(..., "--predictions", help="Predictions CSV."),
    target: Optional[str] = typer.Option(None, "--target", help="Target column, e.g. D."),
    threshold: Optional[float] = typer.Option(None, "--threshold"),
    direction: Optional[str] = typer.Option(None, "--direction", help="One of >, >=, <, <=."),
    output: Optional[Path] = typer.Option(None, "--output", help="Defaults to OUT_DIR/candidates.csv."),
    seed: Optional[int] = SeedOption,
    config: Optional[Path] = ConfigOption,
    out_dir: Optional[Path] = OutDirOption,
):
    """Keep molecules whose predicted target passes the threshold."""
    cfg = run_stage(
        "filter", load_config, config, seed, out_dir,
        filter_target=target, filter_threshold=threshold, filter_direction=direction,
    )
    table = run_stage("filter", dataset_service.read_predictions, predictions)
    candidates = run_stage(
        "filter", genmetrics.filter_by_property, list(table["smiles"]), table["values"],
        cfg.filter_target, cfg.filter_threshold, cfg.filter_direction,
    )
    path = dataset_service.write_candidates(output or Path(cfg.out_dir) / "candidates.csv", candidates)
    typer.echo(str(path))


@app.command("verify-theory")
def verify_theory(
    vocab_size: int = typer.Option(100, "--V", help="Vocabulary size."),
    d: int = typer.Option(128, "--d", help="Total embedding width."),
    d_t: int = typer.Option(10, "--dt", help="Trainable width."),
    mode: EmbeddingMode = typer.Option(EmbeddingMode.SHA_FIXED, "--mode", help="sha_fixed or random_fixed."),
    eps: float = typer.Option(0.01, "--eps", help="Failure probability of the coherence bound."),
    batches: int = typer.Option(32, "--batches", help="Random Gram batches to check."),
    n: int = typer.Option(303, "--n", help="Training set size for the bounds."),
    output: Optional[Path] = typer.Option(None, "--output", help="Defaults to OUT_DIR/theory_report.json."),
    seed: Optional[int] = SeedOption,
    config: Optional[Path] = ConfigOption,
    out_dir: Optional[Path] = OutDirOption,
):
    """Coherence, Gershgorin, bound and residual checks as one JSON report."""
    cfg = run_stage("verify_theory", load_config, config, seed, out_dir)
    report = run_stage(
        "verify_theory", theory_verifier.verify_theory,
        V=vocab_size, d=d, d_t=d_t, mode=mode, eps=eps, n_batches=batches, seed=cfg.seed, n=n,
    )
    write_json(output or Path(cfg.out_dir) / "theory_report.json", report)
    typer.echo(to_json_bytes(report).decode("utf-8"), nl=False)
    if not report.all_passed:
        raise typer.Exit(code=2)


@app.command()
def report(
    source: Path = typer.Argument(..., help="EvalReport JSON."),
    output: Optional[Path] = typer.Option(None, "--output", help="Defaults to INPUT with a .csv suffix."),
):
    """Re-render an EvalReport JSON as the flat section,key,value CSV."""
    payload = run_stage("report", read_json, source)
    parsed = run_stage("report", EvalReport.model_validate, payload)
    path = genmetrics.write_report_csv(parsed, output or source.with_suffix(".csv"))
    typer.echo(str(path))


@app.command()
def sweep(
    smiles: Optional[Path] = typer.Option(None, "--smiles", help="Training SMILES list; defaults to the dataset."),
    models: Optional[List[EmbeddingMode]] = typer.Option(None, "--model", help="Embedding variants to compare."),
    factors: Optional[List[int]] = typer.Option(None, "--augment", help="Augmentation factors (1, 3, 5)."),
    learning_rates: Optional[List[float]] = typer.Option(None, "--lr"),
    dropouts: Optional[List[float]] = typer.Option(None, "--dropout"),
    batch_sizes: Optional[List[int]] = typer.Option(None, "--batch-size"),
    trainable_dims: Optional[List[int]] = typer.Option(None, "--dt", help="Trainable embedding widths."),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    n: Optional[int] = typer.Option(None, "--n", help="Strings sampled per grid point."),
    seed: Optional[int] = SeedOption,
    config: Optional[Path] = ConfigOption,
    out_dir: Optional[Path] = OutDirOption,
):
    """Compare embedding variants over the hyperparameter grid; writes sweep_table.csv and sweep_pool.smi."""
    cfg = run_stage(
        "config", load_config, config, seed, out_dir,
        smiles_file=str(smiles) if smiles else None, gen_epochs=epochs, sample_n=n,
    )
    axes = {
        "modes": tuple(m.value for m in models or ()),
        "augment_factors": tuple(factors or ()),
        "learning_rates": tuple(learning_rates or ()),
        "dropouts": tuple(dropouts or ()),
        "batch_sizes": tuple(batch_sizes or ()),
        "trainable_dims": tuple(trainable_dims or ()),
    }
    plan = run_stage("sweep", SweepPlan, **{k: v for k, v in axes.items() if v})
    orchestrator = PipelineOrchestrator(cfg)
    run_stage("sweep", orchestrator.run_sweep, plan)
    typer.echo(str(orchestrator.path("sweep_table")))


@app.command()
def run(
    seed: Optional[int] = SeedOption,
    config: Optional[Path] = ConfigOption,
    out_dir: Optional[Path] = OutDirOption,
):
    """Run the whole pipeline and write manifest.json next to the artifacts."""
    cfg = run_stage("config", load_config, config, seed, out_dir)
    manifest = run_stage("run", PipelineOrchestrator(cfg).run)
    typer.echo(to_json_bytes(manifest).decode("utf-8"), nl=False)


if __name__ == "__main__":
    app()
