"""Clean subset sampling from learned weights under an expected-size budget."""

import numpy as np
import numpy.typing as npt

from .interface import SampleWeights, SampleWeightsLike, SubsetBudget
from .logger import get_logger

logger = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]


def _as_scores(weights: SampleWeightsLike) -> FloatArray:
    if isinstance(weights, SampleWeights):
        return np.asarray(weights.values, dtype=np.float64)
    values = np.asarray(weights, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError(f"weights must be a vector, got shape {values.shape}")
    if not np.isfinite(values).all():
        raise ValueError("scores must be finite")
    return values


def _as_vector(weights: SampleWeightsLike) -> FloatArray:
    values = _as_scores(weights)
    if values.size and values.min() < 0.0:
        raise ValueError("weights must be finite and non-negative")
    return values


def normalize_weights(weights: SampleWeightsLike, budget: SubsetBudget) -> FloatArray:
    """
    Rescale weights into inclusion probabilities summing to the budget D.

    Starts from w'_i = D * w_i / sum(w) and, while any entry exceeds 1, caps it
    at 1 and spreads the remaining budget proportionally over the uncapped
    entries. Order between entries is preserved.

    Args:
        weights: Non-negative weights
        budget: Expected subset size D

    Returns:
        Vector w' in [0, 1]^N with sum(w') = D whenever at least D weights are positive

    Raises:
        ValueError: If every weight is zero or D exceeds N
    """
    w = _as_vector(weights)
    n = w.size
    target = budget.size
    if target > n:
        raise ValueError(f"budget {target} exceeds the number of examples {n}")
    if w.sum() <= 0.0:
        raise ValueError("cannot normalize: all weights are zero")

    positive = w > 0.0
    n_positive = int(positive.sum())
    if target >= n_positive:
        if target > n_positive:
            logger.warning(
                f"budget {target} exceeds the {n_positive} positive weights; "
                f"expected subset size will be {n_positive}"
            )
        return positive.astype(np.float64)

    out = np.zeros(n)
    capped = np.zeros(n, dtype=np.bool_)
    while True:
        free = positive & ~capped
        remaining = target - int(capped.sum())
        out[free] = w[free] * (remaining / w[free].sum())
        over = free & (out > 1.0)
        if not over.any():
            break
        capped |= over
        out[capped] = 1.0
    return np.clip(out, 0.0, 1.0)


def bernoulli_draw(probabilities: FloatArray, seed: int) -> list[int]:
    """Indices i with I_i = 1 for independent I_i ~ Bernoulli(p_i)."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("inclusion probabilities must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    return [int(i) for i in np.flatnonzero(rng.random(p.size) < p)]


def sample_subset(
    weights: SampleWeightsLike, budget: SubsetBudget | None, seed: int
) -> list[int]:
    """
    Draw a clean subset with expected size D.

    With `budget=None` the weights are taken as inclusion probabilities as-is.
    """
    values = _as_vector(weights)
    probabilities = values if budget is None else normalize_weights(values, budget)
    indices = bernoulli_draw(probabilities, seed)
    logger.info(
        f"Sampled {len(indices)} of {values.size} examples "
        f"(expected {probabilities.sum():.1f}, seed={seed})"
    )
    return indices


def top_k(weights: SampleWeightsLike, k: int) -> list[int]:
    """The k highest-weighted indices, ties going to the smaller index."""
    values = _as_scores(weights)
    if not 0 <= k <= values.size:
        raise ValueError(f"k must be in [0, {values.size}], got {k}")
    return [int(i) for i in np.argsort(-values, kind="stable")[:k]]


def bottom_k(weights: SampleWeightsLike, k: int) -> list[int]:
    """The k lowest-weighted indices, ties going to the smaller index."""
    values = _as_scores(weights)
    if not 0 <= k <= values.size:
        raise ValueError(f"k must be in [0, {values.size}], got {k}")
    return [int(i) for i in np.argsort(values, kind="stable")[:k]]
