from pathlib import Path

import pytest

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def full_sweep_text() -> str:
    return (DATA_DIR / "full_sweep.ini").read_text()


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR
