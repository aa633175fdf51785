"""
Shared pytest fixtures for the hemgen test modules.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add backend to path
sys.path.insert(0, str(Path(__file__).parent))

from config.settings import settings
from services.dataset_service import dataset_service
from utils.report_io import read_lines

FIXTURES = Path(settings.FIXTURES_DIR)


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def smiles_20():
    """Twenty hand-written energetic molecules, one per line."""
    return read_lines(FIXTURES / "smiles_20.txt", skip_blank=True)


@pytest.fixture(scope="session")
def dataset_16_path() -> Path:
    return FIXTURES / "dataset_16.csv"


@pytest.fixture(scope="session")
def dataset_5_path() -> Path:
    return FIXTURES / "dataset_5.csv"


@pytest.fixture(scope="session")
def records_16(dataset_16_path):
    return dataset_service.ingest(dataset_16_path)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
