"""Mini-batch training of the classifier on a (optionally weighted) loss."""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .data import Dataset
from .errors import TrainingError
from .interface import LossKind, LossSpec, OptimizerKind
from .logger import get_logger
from .losses import as_loss_spec, loss_gradient
from .model import ClassifierParams
from .optim import Optimizer, make_optimizer

logger = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]
EpochCallback = Callable[[int, ClassifierParams], None]


@dataclass
class TrainResult:
    """Final parameters plus what the one-step hypergradient needs about the last update."""

    params: ClassifierParams
    prev_params: ClassifierParams
    last_batch_size: int
    step_size: float
    final_loss: float
    steps: int
    optimizer: Optimizer


def train_classifier(
    dataset: Dataset,
    loss: LossSpec | LossKind,
    init: ClassifierParams,
    *,
    epochs: int,
    step_size: float,
    batch_size: int,
    optimizer: OptimizerKind | Optimizer = "sgd",
    weights: FloatArray | None = None,
    rng: np.random.Generator | int = 0,
    on_epoch: EpochCallback | None = None,
) -> TrainResult:
    """
    Minimise (1/|B|) sum_{i in B} w_i loss_i over shuffled mini-batches B.

    Args:
        dataset: Vector-mode training data
        loss: Loss to minimise
        init: Starting parameters (never modified)
        epochs: Number of passes over the data; 0 returns `init`
        step_size: Optimizer step size
        batch_size: Mini-batch size (the last batch of an epoch may be smaller)
        optimizer: "sgd", "adam", or an existing optimizer whose state is kept
        weights: Per-example weights aligned with `dataset`; 1 when omitted
        rng: Generator or seed for the per-epoch shuffles
        on_epoch: Called as on_epoch(epoch, params) after init (epoch 0) and
            after each completed epoch

    Returns:
        TrainResult with the final parameters and those from just before the last update

    Raises:
        TrainingError: If a batch loss or the parameters become non-finite
    """
    spec = as_loss_spec(loss)
    X, labels = dataset.X, dataset.labels
    n = labels.size
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if weights is not None and weights.shape != (n,):
        raise ValueError(f"weights have length {weights.size}, dataset has {n} examples")
    if batch_size < 1:
        raise ValueError(f"batch_size must be positive, got {batch_size}")

    opt = make_optimizer(optimizer, step_size) if isinstance(optimizer, str) else optimizer
    generator = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    params = init
    prev = init
    flat = init.flatten()
    last_batch = 0
    steps = 0
    epoch_loss = float("nan")
    if on_epoch is not None:
        on_epoch(0, params)

    for epoch in range(1, epochs + 1):
        order = generator.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            batch_weights = None if weights is None else weights[batch]
            gradient, values = loss_gradient(params, X[batch], labels[batch], spec, batch_weights)
            batch_loss = float(
                (values if batch_weights is None else batch_weights * values).mean()
            )
            if not np.isfinite(batch_loss):
                raise TrainingError("non-finite training loss", step=steps)
            new_flat = opt.step(flat, gradient.flatten())
            if not np.isfinite(new_flat).all():
                raise TrainingError("non-finite parameters after update", step=steps)
            prev, flat = params, new_flat
            params = params.unflatten(flat)
            total += batch_loss * batch.size
            last_batch = batch.size
            steps += 1
        epoch_loss = total / n
        logger.debug(f"epoch {epoch}/{epochs}: {spec.kind} loss={epoch_loss:.6f}")
        if on_epoch is not None:
            on_epoch(epoch, params)

    return TrainResult(
        params=params,
        prev_params=prev,
        last_batch_size=last_batch,
        step_size=opt.step_size,
        final_loss=epoch_loss,
        steps=steps,
        optimizer=opt,
    )
