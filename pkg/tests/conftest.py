import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make helpers importable

from kpp.patch_grid import GridSpec


@pytest.fixture
def grid3() -> GridSpec:
    """3x3 grid of 2-pixel patches."""
    return GridSpec(6, 2)


@pytest.fixture
def grid4() -> GridSpec:
    """4x4 grid of 3-pixel patches."""
    return GridSpec(12, 3)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
