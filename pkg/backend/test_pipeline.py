"""
Tests for dataset ingestion, the pipeline orchestrator and the command line.
"""

import numpy as np
import pandas as pd
import pytest
from typer.testing import CliRunner

from cli import app
from config.settings import settings
from models.configs import PredictorConfig, RunConfig, SweepPlan
from models.records import CANDIDATE_COLUMNS, TARGETS
from models.reports import SweepRow
from services import genmetrics
from services.dataset_service import dataset_service
from services.gnn_predictor import train_predictor
from services.pipeline_orchestrator import (
    ARTIFACTS,
    STAGES,
    PipelineOrchestrator,
    novel_molecules,
    pair_rows,
    predict_supported,
    run_pipeline,
    run_sweep,
    stage,
)
from services.smiles_core import canonical_smiles, is_valid
from utils.errors import DatasetNotFound, MissingColumn, PipelineStageError, UnparseableRow
from utils.logger import get_logger
from utils.report_io import read_json, read_lines, write_lines

logger = get_logger("test_pipeline")

runner = CliRunner()

HEADER = "SMILES,Category,OB(CO2),r0,HGAS,HSUB,Q,D,P,EG,h50(obs)"
ROW = "-21.6,1.80,192.0,130.0,5.80,8.75,34.0,4.2,26"


def _write_csv(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _tiny_config(dataset, out_dir, seed=11):
    return RunConfig(
        dataset=str(dataset),
        out_dir=str(out_dir),
        seed=seed,
        augment_factor=1,
        gen_hidden_size=8,
        gen_layers=1,
        gen_d=12,
        gen_d_t=4,
        gen_dropout=0.0,
        gen_epochs=2,
        gen_batch_size=8,
        gen_max_len=30,
        sample_n=20,
        pred_hidden=4,
        pred_layers=1,
        pred_readout_steps=1,
        pred_epochs=2,
        pred_batch_size=8,
        pred_test_fraction=0.25,
        fp_nbits=1024,
    )


# --------------------------------------------------------------------------
# ingestion
# --------------------------------------------------------------------------


def test_ingest_fixture(records_16):
    assert len(records_16) == 16
    assert all(r.has_all_targets for r in records_16)
    assert records_16[0].line == 2
    assert records_16[0].property_vector().shape == (9,)


def test_ingest_missing_file(tmp_path):
    with pytest.raises(DatasetNotFound):
        dataset_service.ingest(tmp_path / "absent.csv")


def test_ingest_missing_column(tmp_path):
    path = _write_csv(tmp_path / "bad.csv", ["SMILES,Category,D", "CCO,x,8.0"])
    with pytest.raises(MissingColumn) as info:
        dataset_service.ingest(path)
    assert "OB(CO2)" in str(info.value)


def test_ingest_reports_bad_line(tmp_path):
    path = _write_csv(
        tmp_path / "bad.csv",
        [HEADER, f"CCO,alcohol,{ROW}", "CCN,amine,1,2,3,4,5,fast,7,8,9"],
    )
    with pytest.raises(UnparseableRow) as info:
        dataset_service.ingest(path)
    assert info.value.line == 3
    assert "'D'" in str(info.value)


def test_ingest_missing_markers(tmp_path):
    path = _write_csv(tmp_path / "gaps.csv", [HEADER, "CCO,alcohol,NA,1.8,,130,-,8.7,n/a,4.2,26"])
    (record,) = dataset_service.ingest(path)
    assert record.properties["OB(CO2)"] is None
    assert record.properties["HGAS"] is None
    assert record.properties["Q"] is None
    assert record.properties["D"] == 8.7
    assert not record.has_all_targets
    assert np.isnan(record.property_vector()[0])


def test_ingest_keeps_or_drops_invalid_smiles(tmp_path):
    path = _write_csv(tmp_path / "mixed.csv", [HEADER, f"CCO,ok,{ROW}", f"C(,broken,{ROW}", f"CN,ok,{ROW}"])
    assert [r.smiles for r in dataset_service.ingest(path)] == ["CCO", "C(", "CN"]
    kept = dataset_service.ingest(path, exclude_invalid=True)
    assert [(r.smiles, r.line) for r in kept] == [("CCO", 2), ("CN", 4)]


def test_ingest_ignores_column_order_and_extras(tmp_path):
    columns = HEADER.split(",")
    values = ["CCO", "alcohol"] + ROW.split(",")
    order = list(reversed(range(len(columns))))
    path = _write_csv(
        tmp_path / "shuffled.csv",
        [",".join([columns[i] for i in order] + ["Notes"]), ",".join([values[i] for i in order] + ["extra"])],
    )
    (record,) = dataset_service.ingest(path)
    assert record.smiles == "CCO"
    assert record.properties["D"] == 8.75


def test_predictions_round_trip(tmp_path):
    values = np.arange(18, dtype=np.float64).reshape(2, 9)
    path = dataset_service.write_predictions(tmp_path / "p.csv", ["CCO", "CN"], values)
    table = dataset_service.read_predictions(path)
    assert list(table["smiles"]) == ["CCO", "CN"]
    np.testing.assert_array_equal(table["values"], values)
    assert list(pd.read_csv(path).columns) == ["smiles"] + list(TARGETS)


# --------------------------------------------------------------------------
# orchestrator helpers
# --------------------------------------------------------------------------


def test_stage_wraps_library_errors():
    with pytest.raises(PipelineStageError) as info:
        with stage("sample"):
            raise ValueError("boom")
    assert info.value.stage == "sample"
    assert str(info.value) == "[sample] ValueError: boom"


def test_novel_molecules_are_canonical_and_distinct():
    novel = novel_molecules(["OCC", "CCN", "C(", "NCC", "CCC"], ["CCO"])
    assert novel == sorted({canonical_smiles("CCN"), canonical_smiles("CCC")})


def test_unsupported_elements_get_nan_rows(records_16):
    ckpt, _ = train_predictor(PredictorConfig(hidden=4, layers=1, readout_steps=1, epochs=1, seed=2), records_16)
    values, unsupported = predict_supported(ckpt, ["CCO", "[Na+].[Cl-]"])
    assert unsupported == 1
    assert np.all(np.isfinite(values[0]))
    assert np.all(np.isnan(values[1]))


def test_ingest_stage_failure_names_stage(tmp_path):
    orchestrator = PipelineOrchestrator(_tiny_config(tmp_path / "absent.csv", tmp_path / "run"))
    with pytest.raises(PipelineStageError) as info:
        orchestrator.ingest()
    assert info.value.stage == "ingest"
    assert isinstance(info.value.cause, DatasetNotFound)


# --------------------------------------------------------------------------
# full run
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory, dataset_16_path):
    dataset = dataset_16_path
    base = tmp_path_factory.mktemp("runs")
    config = _tiny_config(dataset, base / "unused")
    return config, (base / "a", run_pipeline(config, base / "a")), (base / "b", run_pipeline(config, base / "b"))


def test_run_writes_every_artifact(two_runs):
    config, (run_dir, manifest), _ = two_runs
    assert manifest.stages == list(STAGES)
    assert manifest.config_hash == config.config_hash
    for key in ("config", "augmented", "generator", "samples", "predictor", "predictions", "report", "candidates"):
        assert (run_dir / ARTIFACTS[key]).exists(), key
        assert ARTIFACTS[key] in manifest.artifacts
    assert read_json(run_dir / "manifest.json")["config_hash"] == config.config_hash
    assert len(read_lines(run_dir / ARTIFACTS["samples"])) == 20
    assert list(pd.read_csv(run_dir / ARTIFACTS["candidates"]).columns) == list(CANDIDATE_COLUMNS)
    assert (run_dir / "run.log.jsonl").exists()


def test_run_is_reproducible(two_runs):
    _, (first_dir, first), (second_dir, second) = two_runs
    assert first.artifacts == second.artifacts
    assert first.counts == second.counts
    for key in ("report", "candidates"):
        assert (first_dir / ARTIFACTS[key]).read_bytes() == (second_dir / ARTIFACTS[key]).read_bytes()


TINY_PLAN = SweepPlan(augment_factors=(1,), learning_rates=(1e-3,), dropouts=(0.0,), batch_sizes=(8,), trainable_dims=(4,))


def test_sweep_compares_models_on_a_tiny_grid(tmp_path, dataset_16_path):
    config = _tiny_config(dataset_16_path, tmp_path)
    report = run_sweep(config, TINY_PLAN, tmp_path)

    assert [row.model for row in report.rows] == ["model2", "model3"]
    assert all(row.n_generated == 20 for row in report.rows)
    assert report.rows[0].config_id == "model2-x1-lr0.001-do0-bs8-dt4"
    assert len(report.pairs) == 1
    assert set(report.pairs[0].validity) == {"model2", "model3"}

    table = pd.read_csv(tmp_path / ARTIFACTS["sweep_table"])
    assert list(table.columns) == list(SweepRow.model_fields)
    assert list(table["model"]) == ["model2", "model3"]
    assert table["augment_factor"].tolist() == [1, 1]

    pool = read_lines(tmp_path / ARTIFACTS["sweep_pool"], skip_blank=True)
    assert pool == sorted(set(pool))
    assert len(pool) == report.pool_size
    assert all(canonical_smiles(s) == s for s in pool)
    if pool:
        assert report.mw_histogram is not None
        assert sum(report.mw_histogram.counts) == len(pool)

    manifest = read_json(tmp_path / "manifest.json")
    assert manifest["stages"] == ["ingest", "sweep"]
    assert ARTIFACTS["sweep_report"] in manifest["artifacts"]


def test_sweep_is_reproducible(tmp_path, dataset_16_path):
    first = run_sweep(_tiny_config(dataset_16_path, tmp_path / "a"), TINY_PLAN, tmp_path / "a")
    second = run_sweep(_tiny_config(dataset_16_path, tmp_path / "b"), TINY_PLAN, tmp_path / "b")
    assert first == second
    for key in ("sweep_table", "sweep_pool", "sweep_report"):
        assert (tmp_path / "a" / ARTIFACTS[key]).read_bytes() == (tmp_path / "b" / ARTIFACTS[key]).read_bytes()


def test_pair_rows_leaves_unpaired_points_out():
    def row(model, factor):
        return SweepRow(
            config_id=f"{model}-{factor}", model=model, embedding_mode="sha_fixed", augment_factor=factor,
            learning_rate=1e-3, dropout=0.0, batch_size=8, d_t=4, n_generated=10, n_valid=5,
            validity=0.5, novelty=0.25, n_novel=2,
        )

    pairs = pair_rows([row("model2", 1), row("model3", 1), row("model3", 3)])
    assert len(pairs) == 1
    assert pairs[0].augment_factor == 1
    assert pairs[0].novelty == {"model2": 0.25, "model3": 0.25}


@pytest.mark.slow
@pytest.mark.skipif(not settings.DATASET_PATH, reason="full dataset not configured")
def test_full_dataset_generation_band(tmp_path):
    """Model 3 defaults on the full dataset land in the expected quality band."""
    orchestrator = PipelineOrchestrator(RunConfig(dataset=settings.DATASET_PATH, out_dir=str(tmp_path), seed=1))
    _, training = orchestrator.ingest()
    assert genmetrics.mean_tanimoto(training) == pytest.approx(0.2235, abs=0.03)

    samples = orchestrator.sample(orchestrator.train_generator(training))
    assert len(samples) == 1000
    assert 0.5 <= genmetrics.validity(samples) <= 0.85
    assert genmetrics.novelty(samples, training) >= 0.2
    valid = [s for s in samples if is_valid(s)]
    assert 0.15 <= genmetrics.mean_tanimoto(valid, training) <= 0.30


# --------------------------------------------------------------------------
# command line
# --------------------------------------------------------------------------


def test_cli_augment(tmp_path):
    source = write_lines(tmp_path / "in.smi", ["CCO", "c1ccccc1"])
    result = runner.invoke(app, ["augment", str(source), "--factor", "3", "--seed", "5", "--out-dir", str(tmp_path)])
    assert result.exit_code == 0, result.output
    lines = read_lines(tmp_path / "augmented.smi")
    assert len(lines) == 6
    assert lines[0] == "CCO" and lines[3] == "c1ccccc1"


def test_cli_augment_invalid_molecule(tmp_path):
    source = write_lines(tmp_path / "in.smi", ["CCO", "C("])
    result = runner.invoke(app, ["augment", str(source), "--out-dir", str(tmp_path)])
    assert result.exit_code == 1
    assert "[augment] InvalidMolecule" in result.output


def test_cli_evaluate(tmp_path):
    generated = write_lines(tmp_path / "gen.smi", ["CCO", "OCC", "C(", "CCN", ""])
    training = write_lines(tmp_path / "train.smi", ["CCO"])
    result = runner.invoke(
        app, ["evaluate", "--generated", str(generated), "--training", str(training), "--out-dir", str(tmp_path)]
    )
    assert result.exit_code == 0, result.output
    report = read_json(tmp_path / "eval_report.json")
    assert report["n_generated"] == 5
    assert report["n_valid"] == 3
    assert report["novelty"] == pytest.approx(0.2)
    assert (tmp_path / "eval_report.csv").exists()


def test_cli_evaluate_missing_file(tmp_path):
    result = runner.invoke(
        app, ["evaluate", "--generated", str(tmp_path / "nope.smi"), "--training", str(tmp_path / "nope.smi")]
    )
    assert result.exit_code == 1
    assert "[evaluate]" in result.output


def test_cli_verify_theory(tmp_path):
    result = runner.invoke(
        app, ["verify-theory", "--V", "100", "--d", "128", "--dt", "10", "--batches", "4", "--out-dir", str(tmp_path)]
    )
    assert result.exit_code == 0, result.output
    report = read_json(tmp_path / "theory_report.json")
    assert report["all_passed"] is True
    assert report["d_f"] == 118


def test_cli_filter(tmp_path):
    values = np.ones((3, 9))
    values[:, TARGETS.index("D")] = [8.5, 9.25, 9.37]
    predictions = dataset_service.write_predictions(tmp_path / "p.csv", ["CCO", "CCN", "CCC"], values)
    result = runner.invoke(
        app, ["filter", "--predictions", str(predictions), "--target", "D", "--threshold", "9", "--out-dir", str(tmp_path)]
    )
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(tmp_path / "candidates.csv")
    assert list(frame["smiles"]) == ["CCN", "CCC"]


def test_cli_report_rerenders_csv(tmp_path):
    generated = write_lines(tmp_path / "gen.smi", ["CCO", "CCN"])
    training = write_lines(tmp_path / "train.smi", ["CCO"])
    runner.invoke(app, ["evaluate", "--generated", str(generated), "--training", str(training), "--out-dir", str(tmp_path)])
    (tmp_path / "eval_report.csv").unlink()
    result = runner.invoke(app, ["report", str(tmp_path / "eval_report.json")])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "eval_report.csv").exists()


def test_cli_sweep(tmp_path, dataset_16_path):
    config = tmp_path / "run.env"
    config.write_text(
        "\n".join([
            f"dataset={dataset_16_path}", "gen_hidden_size=8", "gen_layers=1", "gen_d=12", "gen_d_t=4",
            "gen_epochs=2", "gen_max_len=30",
        ]) + "\n",
        encoding="utf-8",
    )
    result = runner.invoke(
        app,
        ["sweep", "--config", str(config), "--augment", "1", "--lr", "0.001", "--dropout", "0",
         "--batch-size", "8", "--dt", "4", "--n", "10", "--seed", "3", "--out-dir", str(tmp_path / "out")],
    )
    assert result.exit_code == 0, result.output
    table = pd.read_csv(tmp_path / "out" / "sweep_table.csv")
    assert list(table["model"]) == ["model2", "model3"]
    assert table["n_generated"].tolist() == [10, 10]


def test_cli_sweep_rejects_unknown_factor(tmp_path):
    result = runner.invoke(app, ["sweep", "--augment", "2", "--out-dir", str(tmp_path)])
    assert result.exit_code == 1
    assert "[sweep]" in result.output


def test_cli_train_gen_missing_resume_checkpoint(tmp_path):
    result = runner.invoke(app, ["train-gen", "--resume", str(tmp_path / "gone.ckpt"), "--out-dir", str(tmp_path)])
    assert result.exit_code == 1
    assert "[train_generator] CheckpointError" in result.output
