import pytest

from noisecurator.data import Dataset, make_gaussian_blobs
from noisecurator.interface import BilevelConfig, NoiseSpec
from noisecurator.noise import inject_noise


@pytest.fixture
def blobs() -> Dataset:
    """Clean, well separated 2-class blobs in 2-D (200 examples)."""
    return make_gaussian_blobs(100, 2, 2, 10.0, seed=0)


@pytest.fixture
def noisy_blobs() -> Dataset:
    """2-class blobs with 30% uniform label noise (400 examples)."""
    clean = make_gaussian_blobs(200, 2, 2, 5.0, seed=1)
    return inject_noise(clean, NoiseSpec(kind="uniform", eta=0.3, seed=1))


@pytest.fixture
def small_config() -> BilevelConfig:
    return BilevelConfig(
        outer_iterations=3, inner_step=0.1, inner_batch_size=32, outer_step=0.1, seed=0
    )
