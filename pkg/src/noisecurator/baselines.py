"""Single-network denoisers used as comparison points for the learned weights."""

import numpy as np
import numpy.typing as npt

from .data import Dataset
from .interface import BilevelConfig, FilterReport, LossSpec
from .logger import get_logger
from .losses import per_sample_losses
from .model import ClassifierParams, forward, init_params, predict_proba
from .sampling import top_k
from .training import train_classifier

logger = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]

CE = LossSpec(kind="ce")


def _check_keep(train: Dataset, keep: int) -> None:
    if not 0 <= keep <= len(train):
        raise ValueError(f"keep must be in [0, {len(train)}], got {keep}")


def _init(train: Dataset, config: BilevelConfig) -> ClassifierParams:
    assert train.feature_dim is not None
    return init_params(
        config.arch, train.num_classes, train.feature_dim, config.hidden_width, config.seed
    )


def _report(method: str, scores: FloatArray, keep: int) -> FilterReport:
    kept = sorted(top_k(scores, keep))
    logger.info(f"{method} filter kept {len(kept)}/{scores.size} examples")
    return FilterReport(method=method, kept=kept, scores=[float(s) for s in scores])


def confidence_filter(
    train: Dataset, config: BilevelConfig, keep: int, epochs: int = 5
) -> FilterReport:
    """
    Keep the examples with the highest mean probability of their own label.

    The classifier is trained with cross-entropy for `epochs` epochs and the
    probability of the given label is recorded after every epoch.
    """
    _check_keep(train, keep)
    if epochs < 1:
        raise ValueError(f"epochs must be positive, got {epochs}")
    train = train.without_clean_flags()
    X, labels = train.X, train.labels
    rows = np.arange(len(train))
    confidence = np.zeros(len(train))

    def record(epoch: int, params: ClassifierParams) -> None:
        nonlocal confidence
        if epoch > 0:
            confidence = confidence + predict_proba(params, X)[rows, labels]

    train_classifier(
        train,
        CE,
        _init(train, config),
        epochs=epochs,
        step_size=config.inner_step,
        batch_size=config.inner_batch_size,
        optimizer=config.inner_optimizer,
        rng=config.seed,
        on_epoch=record,
    )
    return _report("confidence", confidence / epochs, keep)


def small_loss_filter(
    train: Dataset, config: BilevelConfig, keep: int, warmup_epochs: int = 1
) -> FilterReport:
    """Keep the `keep` examples with the smallest cross-entropy after warm-up training.

    Scores are negated losses, so higher still means "more likely clean".
    """
    _check_keep(train, keep)
    train = train.without_clean_flags()
    result = train_classifier(
        train,
        CE,
        _init(train, config),
        epochs=warmup_epochs,
        step_size=config.inner_step,
        batch_size=config.inner_batch_size,
        optimizer=config.inner_optimizer,
        rng=config.seed,
    )
    logits, _ = forward(result.params, train.X)
    losses = per_sample_losses(logits, train.labels, CE)
    return _report("small-loss", -losses, keep)
