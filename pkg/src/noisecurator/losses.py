"""Cross-entropy and the symmetric noise-robust losses (RCE, MAE).

For a prediction f and target y:

- ce:  -log f_y
- rce: -sum_k f_k log q(k|x) with q one-hot and log 0 := A, i.e. -A * (1 - f_y)
- mae: sum_k |f_k - q(k|x)| = 2 * (1 - f_y)

rce and mae satisfy sum_j loss(f, j) = C for every f, with C = -(K-1)A and
C = 2(K-1) respectively.
"""

import numpy as np
import numpy.typing as npt
from scipy.special import log_softmax, softmax

from .data import Dataset
from .interface import LossKind, LossSpec, SampleWeightsLike
from .model import ClassifierParams, Prediction, backward, forward, one_hot, per_sample_dot

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]


def as_loss_spec(loss: LossSpec | LossKind) -> LossSpec:
    return loss if isinstance(loss, LossSpec) else LossSpec(kind=loss)


def symmetric_constant(spec: LossSpec, num_classes: int) -> float:
    """The constant C with sum over all K targets of loss(f, j) = C."""
    if spec.kind == "rce":
        return -(num_classes - 1) * spec.a
    if spec.kind == "mae":
        return 2.0 * (num_classes - 1)
    raise ValueError("cross-entropy has no symmetric-sum constant")


def _off_target_mass(probabilities: FloatArray, y: int) -> float:
    # sum_{k != y} f_k avoids the cancellation in 1 - f_y when f_y is close to 1
    return float(probabilities.sum() - probabilities[y])


def ce_loss(prediction: Prediction, y: int) -> float:
    return float(-log_softmax(prediction.logits)[y])


def rce_loss(prediction: Prediction, y: int, spec: LossSpec | None = None) -> float:
    spec = spec or LossSpec(kind="rce")
    if spec.kind != "rce":
        raise ValueError(f"rce_loss needs an rce spec, got {spec.kind}")
    return -spec.a * _off_target_mass(prediction.probabilities, y)


def mae_loss(prediction: Prediction, y: int) -> float:
    target = np.zeros_like(prediction.probabilities)
    target[y] = 1.0
    return float(np.abs(prediction.probabilities - target).sum())


def per_sample_losses(logits: FloatArray, labels: IntArray, loss: LossSpec) -> FloatArray:
    """Vectorised loss values, one per row of `logits`."""
    rows = np.arange(labels.size)
    if loss.kind == "ce":
        return np.asarray(-log_softmax(logits, axis=1)[rows, labels])
    probabilities = softmax(logits, axis=1)
    off_target = probabilities.sum(axis=1) - probabilities[rows, labels]
    if loss.kind == "rce":
        return np.asarray(-loss.a * off_target)
    return np.asarray(2.0 * off_target)


def logit_gradients(logits: FloatArray, labels: IntArray, loss: LossSpec) -> FloatArray:
    """dloss_i/dz_i for every row.

    ce gives f - e_y; since df_y/dz = f_y (e_y - f), rce gives A f_y (e_y - f)
    and mae gives -2 f_y (e_y - f).
    """
    probabilities = softmax(logits, axis=1)
    targets = one_hot(labels, logits.shape[1])
    if loss.kind == "ce":
        return np.asarray(probabilities - targets)
    f_y = probabilities[np.arange(labels.size), labels][:, None]
    scale = loss.a if loss.kind == "rce" else -2.0
    return np.asarray(scale * f_y * (targets - probabilities))


def _weight_vector(weights: SampleWeightsLike | None, n: int) -> FloatArray | None:
    if weights is None:
        return None
    values = np.asarray(getattr(weights, "values", weights), dtype=np.float64)
    if values.shape != (n,):
        raise ValueError(f"weights have length {values.size}, dataset has {n} examples")
    return values


def dataset_loss(
    params: ClassifierParams,
    dataset: Dataset,
    loss: LossSpec | LossKind,
    weights: SampleWeightsLike | None = None,
) -> float:
    """(1/N) sum_i w_i loss(f(x_i), y_i), with w_i = 1 when no weights are given."""
    spec = as_loss_spec(loss)
    w = _weight_vector(weights, len(dataset))
    if len(dataset) == 0:
        raise ValueError("cannot compute a loss over an empty dataset")
    logits, _ = forward(params, dataset.X)
    values = per_sample_losses(logits, dataset.labels, spec)
    if w is not None:
        values = w * values
    return float(values.mean())


def loss_gradient(
    params: ClassifierParams,
    X: FloatArray,
    labels: IntArray,
    loss: LossSpec,
    weights: FloatArray | None = None,
    denominator: int | None = None,
) -> tuple[ClassifierParams, FloatArray]:
    """
    Gradient of (1/denominator) sum_i w_i loss_i with respect to all parameters.

    Returns:
        (gradient, per-sample unweighted loss values)
    """
    logits, hidden = forward(params, X)
    values = per_sample_losses(logits, labels, loss)
    dlogits = logit_gradients(logits, labels, loss)
    if weights is not None:
        dlogits = dlogits * weights[:, None]
    dlogits = dlogits / float(denominator or labels.size)
    return backward(params, X, hidden, dlogits), values


def dataset_loss_gradient(
    params: ClassifierParams,
    dataset: Dataset,
    loss: LossSpec | LossKind,
    weights: SampleWeightsLike | None = None,
) -> ClassifierParams:
    """Analytic gradient of `dataset_loss`."""
    spec = as_loss_spec(loss)
    w = _weight_vector(weights, len(dataset))
    gradient, _ = loss_gradient(params, dataset.X, dataset.labels, spec, w)
    return gradient


def robust_loss_gradient(
    params: ClassifierParams, dataset: Dataset, spec: LossSpec
) -> ClassifierParams:
    """Gradient of the mean robust (rce/mae) loss over the dataset."""
    if not spec.is_robust:
        raise ValueError("robust_loss_gradient needs an rce or mae spec")
    return dataset_loss_gradient(params, dataset, spec)


def per_sample_gradient_dot(
    params: ClassifierParams,
    X: FloatArray,
    labels: IntArray,
    loss: LossSpec | LossKind,
    direction: ClassifierParams,
) -> FloatArray:
    """<grad_theta loss_i(theta), direction> for every example, without an N x P matrix."""
    spec = as_loss_spec(loss)
    logits, hidden = forward(params, X)
    return per_sample_dot(params, X, hidden, logit_gradients(logits, labels, spec), direction)
