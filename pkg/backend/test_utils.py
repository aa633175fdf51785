"""
Tests for seed derivation, the checkpoint container, JSON/line I/O, hashing
and the run configuration.
"""

import numpy as np
import orjson
import pytest

from models.configs import RunConfig
from utils import checkpoint_io
from utils.errors import CheckpointError, ConfigError
from utils.file_hash import file_hash_service
from utils.logger import get_logger
from utils.logging_config import clear_run_id, get_run_id, set_run_id
from utils.report_io import read_json, read_lines, to_json_bytes, write_json, write_lines
from utils.rng import generator_state, permutation, restore_generator, stage_code, stage_rng, stage_seed

logger = get_logger("test_utils")


# --------------------------------------------------------------------------
# rng
# --------------------------------------------------------------------------


def test_stage_streams_are_deterministic_and_distinct():
    assert stage_seed(7, "augment") == stage_seed(7, "augment")
    assert stage_seed(7, "augment") != stage_seed(7, "sample")
    assert stage_seed(7, "augment", 0, 1) != stage_seed(7, "augment", 1, 0)
    assert 0 <= stage_seed(7, "augment") < 2**63
    a = stage_rng(3, "generator.init").standard_normal(5)
    b = stage_rng(3, "generator.init").standard_normal(5)
    assert np.array_equal(a, b)


def test_stage_code_is_stable():
    assert stage_code("augment") == stage_code("augment")
    assert stage_code("augment") != stage_code("Augment")


def test_generator_state_restores_stream():
    rng = stage_rng(1, "shuffle")
    rng.standard_normal(17)
    payload = generator_state(rng)
    restored = restore_generator(orjson.loads(orjson.dumps(payload)))
    np.testing.assert_array_equal(restored.standard_normal(8), rng.standard_normal(8))


def test_permutation_is_plain_ints():
    order = permutation(stage_rng(0, "split"), 10)
    assert sorted(order) == list(range(10))
    assert all(type(i) is int for i in order)


# --------------------------------------------------------------------------
# checkpoint container
# --------------------------------------------------------------------------


def test_container_round_trip_is_byte_stable():
    tensors = {"b": np.arange(6.0).reshape(2, 3), "a": np.array([1.5])}
    blob = checkpoint_io.encode("demo", {"version": 1, "name": "x"}, tensors)
    assert blob == checkpoint_io.encode("demo", {"name": "x", "version": 1}, dict(reversed(tensors.items())))
    assert blob.startswith(checkpoint_io.MAGIC)
    meta, decoded = checkpoint_io.decode(blob, "demo")
    assert meta == {"version": 1, "name": "x"}
    np.testing.assert_array_equal(decoded["b"], tensors["b"])
    assert decoded["b"].dtype == np.float64


@pytest.mark.parametrize(
    "mutate",
    [
        lambda blob: blob[:10],
        lambda blob: b"NOTHEMGN" + blob[8:],
        lambda blob: blob[:-4],
    ],
)
def test_container_rejects_damaged_files(mutate):
    blob = checkpoint_io.encode("demo", {}, {"w": np.ones(4)})
    with pytest.raises(CheckpointError):
        checkpoint_io.decode(mutate(blob), "demo")


def test_container_rejects_wrong_kind(tmp_path):
    path = checkpoint_io.write(tmp_path / "x.ckpt", "demo", {}, {"w": np.ones(2)})
    with pytest.raises(CheckpointError):
        checkpoint_io.read(path, "other")
    with pytest.raises(CheckpointError):
        checkpoint_io.read(tmp_path / "missing.ckpt", "demo")


# --------------------------------------------------------------------------
# report I/O / hashing
# --------------------------------------------------------------------------


def test_json_is_sorted_and_newline_terminated(tmp_path):
    data = to_json_bytes({"b": 1, "a": np.float64(0.5)})
    assert data.endswith(b"\n")
    assert data.index(b'"a"') < data.index(b'"b"')
    path = write_json(tmp_path / "r.json", {"b": 1, "a": [1, 2]})
    assert read_json(path) == {"a": [1, 2], "b": 1}


def test_lines_keep_blanks_unless_asked(tmp_path):
    path = write_lines(tmp_path / "s.smi", ["CCO", "", "CN"])
    assert path.read_bytes() == b"CCO\n\nCN\n"
    assert read_lines(path) == ["CCO", "", "CN"]
    assert read_lines(path, skip_blank=True) == ["CCO", "CN"]


def test_hashes(tmp_path):
    path = tmp_path / "f.txt"
    path.write_bytes(b"abc")
    expected = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert file_hash_service.calculate_file_hash(path) == expected
    assert file_hash_service.calculate_content_hash("abc") == expected
    assert file_hash_service.calculate_file_hash(tmp_path / "none") is None
    a = np.arange(4.0)
    assert file_hash_service.calculate_array_checksum(a) == file_hash_service.calculate_array_checksum(a.copy())
    assert file_hash_service.calculate_array_checksum(a) != file_hash_service.calculate_array_checksum(a.reshape(2, 2))


def test_run_id_scope():
    set_run_id("abc123")
    assert get_run_id() == "abc123"
    clear_run_id()
    assert get_run_id() is None


# --------------------------------------------------------------------------
# run configuration
# --------------------------------------------------------------------------


def test_config_hash_ignores_output_location():
    assert RunConfig(out_dir="a", seed=1).config_hash == RunConfig(out_dir="b", seed=1).config_hash
    assert RunConfig(seed=1).config_hash != RunConfig(seed=2).config_hash


def test_config_text_round_trips(tmp_path):
    config = RunConfig(seed=5, gen_d_t=20, sample_greedy=True, filter_direction="<=")
    path = tmp_path / "config.env"
    path.write_text(config.to_text(), encoding="utf-8")
    assert RunConfig.from_file(path) == config


def test_config_file_with_overrides(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("# tiny run\nseed=3\ngen_epochs=4\nfilter_target=Q\n", encoding="utf-8")
    config = RunConfig.from_file(path, seed=9)
    assert config.seed == 9
    assert config.gen_epochs == 4
    assert config.filter_target == "Q"
    assert config.generator_config().epochs == 4
    assert config.predictor_config().seed == 9


@pytest.mark.parametrize(
    "text",
    ["unknown_key=1\n", "augment_factor=4\n", "fp_nbits=1000\n", "filter_threshold=nan\n", "gen_d=10\ngen_d_t=0\nseed=x\n"],
)
def test_config_errors(tmp_path, text):
    path = tmp_path / "bad.env"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError):
        RunConfig.from_file(path)


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_file(tmp_path / "absent.env")
