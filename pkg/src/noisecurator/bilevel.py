"""Sample reweighting by bilevel optimization with a robust outer objective.

Inner problem: weighted cross-entropy training of the classifier on the
training split. Outer problem: the robust loss of the trained classifier on a
(noisy) validation split, minimised over the sample weights. The hypergradient
is obtained by differentiating through the final inner update only:

    theta_T = theta_prev - (alpha / B) * sum_{i in B} w_i * grad ce_i(theta_prev)
    dL/dw_i = -(alpha / B) * < grad L_robust(theta_T; val), grad ce_i(theta_prev) >

Every training example receives this gradient each outer iteration (per-sample
gradients at theta_prev are computed for the full training split).
"""

import json
from collections.abc import Callable, Sequence

import numpy as np
import numpy.typing as npt

from .data import Dataset
from .errors import DatasetError
from .evaluation import weight_histogram
from .interface import BilevelConfig, BilevelTrace, LossSpec, SampleWeights, TraceRecord
from .logger import get_logger
from .losses import dataset_loss, dataset_loss_gradient, per_sample_gradient_dot
from .model import ClassifierParams, init_params
from .optim import Adam, Optimizer, make_optimizer
from .training import TrainResult, train_classifier

logger = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]
IterationCallback = Callable[[int, SampleWeights], None]

HISTOGRAM_BINS = 20
INNER_LOSS = LossSpec(kind="ce")


def _inner_optimizer(config: BilevelConfig) -> Optimizer:
    return make_optimizer(
        config.inner_optimizer,
        config.inner_step,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
    )


def _check_compatible(train: Dataset, validation: Dataset) -> None:
    if not train.is_vector or not validation.is_vector:
        raise ValueError("bilevel reweighting needs vector-mode datasets; featurize first")
    if train.num_classes != validation.num_classes:
        raise ValueError(
            f"train has K={train.num_classes}, validation has K={validation.num_classes}"
        )
    if train.feature_dim != validation.feature_dim:
        raise ValueError(
            f"train has d={train.feature_dim}, validation has d={validation.feature_dim}"
        )


def inner_train(
    weights: SampleWeights,
    train: Dataset,
    init: ClassifierParams,
    config: BilevelConfig,
    *,
    rng: np.random.Generator | int | None = None,
    optimizer: Optimizer | None = None,
) -> TrainResult:
    """
    Weighted cross-entropy training for `inner_epochs_per_outer` epochs.

    Returns:
        TrainResult whose `params` is theta_T and `prev_params` is theta_prev,
        the parameters right before the final update
    """
    if len(weights) != len(train):
        raise ValueError(f"{len(weights)} weights for {len(train)} training examples")
    return train_classifier(
        train,
        INNER_LOSS,
        init,
        epochs=config.inner_epochs_per_outer,
        step_size=config.inner_step,
        batch_size=config.inner_batch_size,
        optimizer=optimizer or _inner_optimizer(config),
        weights=np.asarray(weights.values),
        rng=config.seed if rng is None else rng,
    )


def meta_gradient(
    theta_t: ClassifierParams,
    theta_prev: ClassifierParams,
    validation: Dataset,
    train: Dataset,
    config: BilevelConfig,
    *,
    last_batch_size: int | None = None,
) -> FloatArray:
    """
    One-step truncated hypergradient of the outer loss with respect to every weight.

    g_i = -(alpha / B) * <grad_theta L_outer(theta_T; validation), grad_theta ce_i(theta_prev)>

    alpha is the configured inner step (for adam this ignores the per-coordinate
    preconditioning) and B the size of the final inner mini-batch.
    """
    _check_compatible(train, validation)
    if theta_t.size != theta_prev.size or theta_t.feature_dim != train.feature_dim:
        raise ValueError("parameter shapes do not match each other or the datasets")
    batch = last_batch_size or min(config.inner_batch_size, len(train))

    outer_gradient = dataset_loss_gradient(theta_t, validation, config.outer_loss)
    alignment = per_sample_gradient_dot(
        theta_prev, train.X, train.labels, INNER_LOSS, outer_gradient
    )
    return np.asarray(-(config.inner_step / batch) * alignment)


def outer_step(weights: SampleWeights, g: FloatArray, step: float) -> SampleWeights:
    """w <- clamp(w - step * g, 0, 1)."""
    if g.shape != weights.values.shape:
        raise ValueError(f"gradient shape {g.shape} does not match weights {weights.values.shape}")
    return SampleWeights(np.clip(weights.values - step * g, 0.0, 1.0), weights.iteration + 1)


def run_bilevel(
    train: Dataset,
    validation: Dataset,
    config: BilevelConfig,
    *,
    on_iteration: IterationCallback | None = None,
) -> tuple[SampleWeights, BilevelTrace]:
    """
    Learn per-sample weights for `train` from the robust loss on `validation`.

    Weights start at 0.5. Each outer iteration runs weighted inner training,
    computes the hypergradient and updates the weights (projected onto [0, 1]).
    Clean flags are dropped before optimization begins, so the result cannot
    depend on them.

    Args:
        train: Vector-mode training split
        validation: Vector-mode validation split (same K and d)
        config: Loop hyperparameters
        on_iteration: Optional callback(t, weights) after each outer step

    Returns:
        (final weights, trace with one record per outer iteration)
    """
    _check_compatible(train, validation)
    train = train.without_clean_flags()
    validation = validation.without_clean_flags()
    n = len(train)
    assert train.feature_dim is not None

    rng = np.random.default_rng(config.seed)
    init = init_params(
        config.arch, train.num_classes, train.feature_dim, config.hidden_width, config.seed
    )
    weights = SampleWeights.constant(n, 0.5)
    trace = BilevelTrace()
    inner_opt = _inner_optimizer(config)
    outer_opt = (
        Adam(config.outer_step, config.adam_beta1, config.adam_beta2, config.adam_eps)
        if config.outer_optimizer == "adam"
        else None
    )
    start = init

    logger.info(
        f"Bilevel reweighting: N={n}, M={len(validation)}, T={config.outer_iterations}, "
        f"outer={config.outer_loss.kind}/{config.outer_optimizer} step={config.outer_step}, "
        f"inner={config.inner_optimizer} step={config.inner_step} "
        f"batch={config.inner_batch_size} epochs={config.inner_epochs_per_outer}"
    )
    for t in range(config.outer_iterations):
        if not config.warm_start_inner:
            inner_opt = _inner_optimizer(config)
        result = inner_train(weights, train, start, config, rng=rng, optimizer=inner_opt)
        g = meta_gradient(
            result.params,
            result.prev_params,
            validation,
            train,
            config,
            last_batch_size=result.last_batch_size,
        )
        outer_loss = dataset_loss(result.params, validation, config.outer_loss)

        if outer_opt is None:
            weights = outer_step(weights, g, config.outer_step)
        else:
            values = np.clip(outer_opt.step(np.asarray(weights.values), g), 0.0, 1.0)
            weights = SampleWeights(values, weights.iteration + 1)

        values = weights.values
        trace.records.append(
            TraceRecord(
                iteration=t + 1,
                outer_loss=outer_loss,
                inner_loss=result.final_loss,
                mean_weight=float(values.mean()),
                min_weight=float(values.min()),
                max_weight=float(values.max()),
                mean_meta_gradient=float(g.mean()),
                outer_step_size=config.outer_step,
                histogram=weight_histogram(values, HISTOGRAM_BINS),
            )
        )
        logger.info(
            f"outer iteration {t + 1}/{config.outer_iterations}: "
            f"{config.outer_loss.kind}={outer_loss:.5f} inner_ce={result.final_loss:.5f} "
            f"weights mean={values.mean():.4f} min={values.min():.4f} max={values.max():.4f}"
        )
        if on_iteration is not None:
            on_iteration(t + 1, weights)
        start = result.params if config.warm_start_inner else init

    return weights, trace


def one_level_baseline(
    train: Dataset,
    config: BilevelConfig,
    *,
    epochs: int | None = None,
    init: ClassifierParams | None = None,
) -> ClassifierParams:
    """
    Train the classifier directly on the outer (robust) loss, without weights.

    Defaults to the same number of epochs the bilevel loop spends on inner
    training (outer_iterations * inner_epochs_per_outer).
    """
    if not train.is_vector:
        raise ValueError("one-level training needs a vector-mode dataset")
    assert train.feature_dim is not None
    start = init or init_params(
        config.arch, train.num_classes, train.feature_dim, config.hidden_width, config.seed
    )
    total_epochs = (
        config.outer_iterations * config.inner_epochs_per_outer if epochs is None else epochs
    )
    result = train_classifier(
        train.without_clean_flags(),
        config.outer_loss,
        start,
        epochs=total_epochs,
        step_size=config.inner_step,
        batch_size=config.inner_batch_size,
        optimizer=_inner_optimizer(config),
        rng=config.seed,
    )
    logger.info(
        f"One-level {config.outer_loss.kind} training: {total_epochs} epochs, "
        f"final loss={result.final_loss:.5f}"
    )
    return result.params


def weights_to_jsonl(ids: Sequence[str], weights: SampleWeights) -> str:
    """One {"id": ..., "weight": ...} object per line, in dataset order."""
    if len(ids) != len(weights):
        raise ValueError(f"{len(ids)} ids for {len(weights)} weights")
    return "".join(
        json.dumps({"id": example_id, "weight": float(w)}) + "\n"
        for example_id, w in zip(ids, weights.values, strict=True)
    )


def weights_from_jsonl(text: str, dataset: Dataset | None = None) -> SampleWeights:
    """
    Parse a weights file; with `dataset`, reorder the weights to its example order.

    Raises:
        DatasetError: Malformed line, or ids that do not match the dataset
    """
    ids: list[str] = []
    values: list[float] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            ids.append(str(record["id"]))
            values.append(float(record["weight"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"malformed weight record: {e}", line=line_no) from None
    if dataset is None:
        return SampleWeights(np.asarray(values))
    position = dict(zip(ids, values, strict=True))
    missing = [example_id for example_id in dataset.ids if example_id not in position]
    if missing or len(position) != len(dataset):
        raise DatasetError(
            f"weights cover {len(position)} ids, dataset has {len(dataset)} "
            f"({len(missing)} dataset ids without a weight)"
        )
    return SampleWeights(np.asarray([position[example_id] for example_id in dataset.ids]))
