import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from lppm.fixtures import campus as campus_fixture

DATA_DIR = Path(__file__).resolve().parent / "data"


@pytest.fixture(scope="session")
def campus():
    return campus_fixture()


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def trace_path():
    return DATA_DIR / "synthetic_traces.csv"
