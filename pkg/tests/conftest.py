from pathlib import Path

import numpy as np
import pytest


@pytest.fixture
def data_dir() -> Path:
    return Path(__file__).resolve().parents[1] / "data" / "epidemic"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
