"""Builders shared by several test modules."""

import numpy as np

from noisecurator.data import Dataset, make_gaussian_blobs, split
from noisecurator.interface import BilevelConfig, NoiseSpec, SplitSpec
from noisecurator.model import ClassifierParams
from noisecurator.noise import clean_counterpart, inject_noise


def random_params(
    rng: np.random.Generator,
    num_classes: int,
    dim: int,
    hidden: int | None = None,
    scale: float = 1.0,
) -> ClassifierParams:
    if hidden is None:
        return ClassifierParams(
            weights=scale * rng.standard_normal((num_classes, dim)),
            biases=scale * rng.standard_normal(num_classes),
        )
    return ClassifierParams(
        weights=scale * rng.standard_normal((num_classes, hidden)),
        biases=scale * rng.standard_normal(num_classes),
        hidden_weights=scale * rng.standard_normal((hidden, dim)),
        hidden_biases=scale * rng.standard_normal(hidden),
    )


def random_dataset(rng: np.random.Generator, n: int, dim: int, num_classes: int) -> Dataset:
    return Dataset(
        ids=tuple(f"r{i}" for i in range(n)),
        labels=rng.integers(0, num_classes, size=n),
        num_classes=num_classes,
        features=rng.standard_normal((n, dim)),
    )


def wrong_params() -> ClassifierParams:
    """Confidently wrong linear classifier for the 2-class 2-D blobs layout."""
    return ClassifierParams(weights=np.array([[-5.0, 5.0], [5.0, -5.0]]), biases=np.zeros(2))


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / scale


def many_class_noisy_split(seed: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    """32 classes in 32-D with 30% uniform noise: (train, validation, clean test)."""
    pool = inject_noise(
        make_gaussian_blobs(50, 32, 32, 5.0, seed=seed),
        NoiseSpec(kind="uniform", eta=0.3, seed=seed),
    )
    train, validation = split(pool, SplitSpec(seed=seed))
    return train, validation, make_gaussian_blobs(20, 32, 32, 5.0, seed=seed + 1)


MANY_CLASS_CONFIG = BilevelConfig(
    outer_iterations=20,
    outer_optimizer="adam",
    outer_step=0.05,
    inner_step=0.1,
    inner_batch_size=16,
    arch="hidden",
    hidden_width=32,
)


def high_dim_instance_noise(seed: int = 0) -> tuple[Dataset, Dataset, Dataset, Dataset]:
    """
    Two classes in 1600-D with noise concentrated near the oracle boundary.

    With far more dimensions than examples a classifier memorizes flipped
    labels within one epoch. Returns (train, validation, gold validation, test).
    """
    clean = make_gaussian_blobs(200, 2, 1600, 10.0, seed=seed)
    pool = inject_noise(
        clean, NoiseSpec(kind="instance_dependent", eta_max=0.5, tau=10.0, seed=seed)
    )
    train, validation = split(pool, SplitSpec(seed=seed))
    test = make_gaussian_blobs(200, 2, 1600, 10.0, seed=seed + 1)
    return train, validation, clean_counterpart(validation, clean), test


HIGH_DIM_CONFIG = BilevelConfig(
    outer_iterations=20,
    outer_optimizer="adam",
    outer_step=0.05,
    inner_step=0.3,
    inner_batch_size=16,
)
