"""Featurization and a softmax classifier with analytic gradients.

Two architectures share one parameter container:

- linear: z = W x + b
- hidden: z = W tanh(V x + c) + b

Gradients are derived by hand from the logit-level gradient dL/dz, so any loss
that can express dL/dz (see `losses.logit_gradients`) can be trained or probed.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy.special import softmax
from sklearn.feature_extraction.text import HashingVectorizer

from .data import Dataset
from .errors import DatasetError
from .interface import Architecture, FeatureSpec
from .logger import get_logger

logger = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

PARAMS_DTYPE = "<f8"
TOKEN_PATTERN = r"(?u)\b\w+\b"


def featurize(dataset: Dataset, spec: FeatureSpec) -> Dataset:
    """
    Map a dataset to dense vectors.

    identity keeps vector data as-is (its width must equal `spec.dim`).
    hashed-ngram hashes word n-grams (orders 1..ngram_order) into `spec.dim`
    buckets with alternating signs and L2-normalises each row.

    Raises:
        DatasetError: identity on text, hashed-ngram on vectors, or a width mismatch
    """
    if spec.mode == "identity":
        if dataset.features is None:
            raise DatasetError("identity featurization cannot be applied to text examples")
        if dataset.feature_dim != spec.dim:
            raise DatasetError(
                f"identity featurization expects d={spec.dim}, dataset has d={dataset.feature_dim}"
            )
        return dataset

    if dataset.texts is None:
        raise DatasetError("hashed-ngram featurization requires text examples")
    vectorizer = HashingVectorizer(
        n_features=spec.dim,
        ngram_range=(1, spec.ngram_order),
        alternate_sign=True,
        norm="l2",
        token_pattern=TOKEN_PATTERN,
    )
    matrix = vectorizer.transform(dataset.texts).toarray().astype(np.float64)
    logger.info(
        f"Featurized {len(dataset)} texts into {spec.dim} hashed buckets "
        f"(n-grams up to {spec.ngram_order})"
    )
    return dataset.with_features(matrix)


@dataclass(frozen=True, eq=False)
class ClassifierParams:
    """Classifier parameters; `hidden_*` are set only for the hidden architecture.

    `weights` is K x d for linear and K x h for hidden; `hidden_weights` is h x d.
    """

    weights: FloatArray
    biases: FloatArray
    hidden_weights: FloatArray | None = None
    hidden_biases: FloatArray | None = None

    def __post_init__(self) -> None:
        if (self.hidden_weights is None) != (self.hidden_biases is None):
            raise ValueError("hidden_weights and hidden_biases must be given together")
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ValueError(
                f"inconsistent output layer shapes {self.weights.shape} / {self.biases.shape}"
            )
        if self.hidden_weights is not None and self.hidden_biases is not None:
            if self.hidden_weights.shape[0] != self.weights.shape[1]:
                raise ValueError("hidden layer width does not match output layer")
            if self.hidden_biases.shape != (self.hidden_weights.shape[0],):
                raise ValueError("hidden bias shape does not match hidden layer")
        if not all(np.isfinite(a).all() for a in self.arrays()):
            raise ValueError("classifier parameters must be finite")

    @property
    def arch(self) -> Architecture:
        return "linear" if self.hidden_weights is None else "hidden"

    @property
    def num_classes(self) -> int:
        return int(self.weights.shape[0])

    @property
    def feature_dim(self) -> int:
        source = self.weights if self.hidden_weights is None else self.hidden_weights
        return int(source.shape[1])

    @property
    def hidden_width(self) -> int | None:
        return None if self.hidden_weights is None else int(self.hidden_weights.shape[0])

    def arrays(self) -> tuple[FloatArray, ...]:
        if self.hidden_weights is None or self.hidden_biases is None:
            return (self.weights, self.biases)
        return (self.weights, self.biases, self.hidden_weights, self.hidden_biases)

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())

    def flatten(self) -> FloatArray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def unflatten(self, flat: FloatArray) -> "ClassifierParams":
        """Build parameters with this layout from a flat vector."""
        if flat.shape != (self.size,):
            raise ValueError(f"expected flat vector of length {self.size}, got {flat.shape}")
        parts = []
        offset = 0
        for a in self.arrays():
            parts.append(np.array(flat[offset : offset + a.size]).reshape(a.shape))
            offset += a.size
        return ClassifierParams(*parts)

    def zeros_like(self) -> "ClassifierParams":
        return self.unflatten(np.zeros(self.size))


@dataclass(frozen=True)
class Prediction:
    """Logits z and softmax probabilities f for one example."""

    logits: FloatArray
    probabilities: FloatArray


def init_params(
    arch: Architecture, num_classes: int, feature_dim: int, hidden_width: int = 16, seed: int = 0
) -> ClassifierParams:
    """Weights ~ U(-0.01, 0.01), biases 0."""
    rng = np.random.default_rng(seed)
    if arch == "linear":
        return ClassifierParams(
            weights=rng.uniform(-0.01, 0.01, size=(num_classes, feature_dim)),
            biases=np.zeros(num_classes),
        )
    hidden_weights = rng.uniform(-0.01, 0.01, size=(hidden_width, feature_dim))
    return ClassifierParams(
        weights=rng.uniform(-0.01, 0.01, size=(num_classes, hidden_width)),
        biases=np.zeros(num_classes),
        hidden_weights=hidden_weights,
        hidden_biases=np.zeros(hidden_width),
    )


def forward(params: ClassifierParams, X: FloatArray) -> tuple[FloatArray, FloatArray | None]:
    """Return (logits N x K, hidden activations N x h or None)."""
    if X.ndim != 2 or X.shape[1] != params.feature_dim:
        raise ValueError(f"expected inputs of width {params.feature_dim}, got shape {X.shape}")
    if params.hidden_weights is None or params.hidden_biases is None:
        return X @ params.weights.T + params.biases, None
    hidden = np.tanh(X @ params.hidden_weights.T + params.hidden_biases)
    return hidden @ params.weights.T + params.biases, hidden


def predict_proba(params: ClassifierParams, X: FloatArray) -> FloatArray:
    logits, _ = forward(params, X)
    return np.asarray(softmax(logits, axis=1), dtype=np.float64)


def predict(params: ClassifierParams, x: FloatArray) -> Prediction:
    """
    Softmax prediction for a single feature vector.

    Raises:
        ValueError: If x has the wrong length or non-finite entries
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.feature_dim,):
        raise ValueError(f"expected a vector of length {params.feature_dim}, got {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("input features must be finite")
    logits, _ = forward(params, x[None, :])
    return Prediction(logits=logits[0], probabilities=np.asarray(softmax(logits[0])))


def backward(
    params: ClassifierParams, X: FloatArray, hidden: FloatArray | None, dlogits: FloatArray
) -> ClassifierParams:
    """Sum over rows of dL_i/dtheta given per-row logit gradients dL_i/dz_i."""
    if hidden is None:
        return ClassifierParams(weights=dlogits.T @ X, biases=dlogits.sum(axis=0))
    dhidden = (dlogits @ params.weights) * (1.0 - hidden * hidden)
    return ClassifierParams(
        weights=dlogits.T @ hidden,
        biases=dlogits.sum(axis=0),
        hidden_weights=dhidden.T @ X,
        hidden_biases=dhidden.sum(axis=0),
    )


def per_sample_dot(
    params: ClassifierParams,
    X: FloatArray,
    hidden: FloatArray | None,
    dlogits: FloatArray,
    direction: ClassifierParams,
) -> FloatArray:
    """<dL_i/dtheta, direction> for every row i, without forming per-sample gradients."""
    if hidden is None:
        return ((dlogits @ direction.weights) * X).sum(axis=1) + dlogits @ direction.biases
    assert direction.hidden_weights is not None and direction.hidden_biases is not None
    dhidden = (dlogits @ params.weights) * (1.0 - hidden * hidden)
    return (
        ((dlogits @ direction.weights) * hidden).sum(axis=1)
        + dlogits @ direction.biases
        + ((dhidden @ direction.hidden_weights) * X).sum(axis=1)
        + dhidden @ direction.hidden_biases
    )


def one_hot(labels: IntArray, num_classes: int) -> FloatArray:
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def per_sample_ce_gradient(params: ClassifierParams, x: FloatArray, y: int) -> ClassifierParams:
    """Exact gradient of -log f_y(x; theta); the logit gradient is f - one_hot(y)."""
    X = np.asarray(x, dtype=np.float64)[None, :]
    logits, hidden = forward(params, X)
    dlogits = softmax(logits, axis=1) - one_hot(np.array([y]), params.num_classes)
    return backward(params, X, hidden, dlogits)


def predict_labels(params: ClassifierParams, X: FloatArray) -> IntArray:
    # argmax returns the first maximum, i.e. ties go to the smaller class index
    return np.asarray(np.argmax(predict_proba(params, X), axis=1), dtype=np.int64)


def evaluate_accuracy(params: ClassifierParams, dataset: Dataset) -> float:
    """Fraction of examples whose arg-max class equals the label."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate accuracy on an empty dataset")
    return float(np.mean(predict_labels(params, dataset.X) == dataset.labels))


def params_to_bytes(params: ClassifierParams) -> tuple[bytes, dict[str, Any]]:
    """Flat little-endian float64 payload plus a JSON-able layout description."""
    meta: dict[str, Any] = {
        "arch": params.arch,
        "num_classes": params.num_classes,
        "feature_dim": params.feature_dim,
        "hidden_width": params.hidden_width,
        "dtype": PARAMS_DTYPE,
        "shapes": [list(a.shape) for a in params.arrays()],
    }
    return params.flatten().astype(PARAMS_DTYPE).tobytes(), meta


def params_from_bytes(payload: bytes, meta: dict[str, Any]) -> ClassifierParams:
    flat = np.frombuffer(payload, dtype=PARAMS_DTYPE).astype(np.float64)
    shapes = [tuple(s) for s in meta["shapes"]]
    expected = sum(int(np.prod(s)) for s in shapes)
    if flat.size != expected:
        raise ValueError(f"parameter payload has {flat.size} values, layout needs {expected}")
    parts = []
    offset = 0
    for shape in shapes:
        count = int(np.prod(shape))
        parts.append(flat[offset : offset + count].reshape(shape))
        offset += count
    return ClassifierParams(*parts)


def sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def save_params(params: ClassifierParams, path: str | Path) -> None:
    path = Path(path)
    payload, meta = params_to_bytes(params)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    logger.info(f"Saved {params.arch} classifier parameters to {path}")


def load_params(path: str | Path) -> ClassifierParams:
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
    return params_from_bytes(path.read_bytes(), meta)
