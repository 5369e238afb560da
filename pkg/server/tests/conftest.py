import numpy as np
import pytest

from mae_oracle_server import ReconstructionEngine, TINY_TEST, build_model
from mae_oracle_server.checkpoint import save_checkpoint

FIXTURE_SEED = 1234


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """Seeded tiny-architecture checkpoint on disk (224/16 geometry)."""
    path = tmp_path_factory.mktemp("ckpt") / "tiny.pt"
    model = build_model(TINY_TEST, seed=FIXTURE_SEED)
    save_checkpoint(model, str(path))
    return str(path)


@pytest.fixture(scope="session")
def engine(tiny_checkpoint):
    return ReconstructionEngine.from_checkpoint(tiny_checkpoint)


@pytest.fixture(scope="session")
def model():
    return build_model(TINY_TEST, seed=FIXTURE_SEED)


@pytest.fixture
def rng():
    return np.random.default_rng(99)


def golden_image() -> np.ndarray:
    return np.random.default_rng(2718).uniform(0.0, 1.0, (224, 224, 3)).astype(np.float32)


GOLDEN_VISIBLE = list(range(0, 190, 10))  # 19 pinned indices
