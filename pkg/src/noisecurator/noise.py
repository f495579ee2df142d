"""Label-corruption models and the noise-tolerance oracle for robust losses."""

from collections.abc import Sequence
from dataclasses import replace

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel
from sklearn.linear_model import LogisticRegression

from .data import Dataset
from .errors import DatasetError
from .interface import LossKind, LossSpec, NoiseKind, NoiseSpec
from .logger import get_logger
from .losses import as_loss_spec, per_sample_losses, symmetric_constant
from .model import ClassifierParams, forward

logger = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
Margins = tuple[FloatArray, IntArray]


def _uniform_flips(
    labels: IntArray, num_classes: int, eta: float, rng: np.random.Generator
) -> IntArray:
    if eta > 0.0 and num_classes < 2:
        raise ValueError("uniform label noise needs at least two classes")
    flip = rng.random(labels.size) < eta
    shift = rng.integers(1, max(num_classes, 2), size=labels.size)
    return np.where(flip, (labels + shift) % num_classes, labels)


def _class_dependent(labels: IntArray, matrix: FloatArray, rng: np.random.Generator) -> IntArray:
    cumulative = np.cumsum(matrix, axis=1)
    u = rng.random(labels.size)
    drawn = (u[:, None] >= cumulative[labels]).sum(axis=1)
    return np.minimum(drawn, matrix.shape[0] - 1).astype(np.int64)


def oracle_margins(dataset: Dataset, seed: int) -> Margins:
    """
    Distance of every example to a linear separator fit on its labels.

    Returns:
        (margin >= 0, runner-up class). Examples on the wrong side of the
        separator get margin 0.
    """
    if dataset.num_classes < 2:
        raise ValueError("instance-dependent noise needs at least two classes")
    X, labels = dataset.X, dataset.labels
    oracle = LogisticRegression(max_iter=1000, random_state=seed).fit(X, labels)
    coef = np.asarray(oracle.coef_, dtype=np.float64)
    intercept = np.asarray(oracle.intercept_, dtype=np.float64)
    if coef.shape[0] == 1:
        # binary: sklearn keeps a single hyperplane for class 1
        weights = np.vstack([np.zeros_like(coef[0]), coef[0]])
        biases = np.array([0.0, intercept[0]])
    else:
        weights, biases = coef, intercept

    rows = np.arange(labels.size)
    scores = X @ weights.T + biases
    masked = scores.copy()
    masked[rows, labels] = -np.inf
    runner_up = np.argmax(masked, axis=1).astype(np.int64)
    gap = scores[rows, labels] - scores[rows, runner_up]
    distance = np.linalg.norm(weights[labels] - weights[runner_up], axis=1)
    margins = np.maximum(gap, 0.0) / np.maximum(distance, 1e-12)
    return margins, runner_up


def _noisy_labels(dataset: Dataset, spec: NoiseSpec, margins: Margins | None = None) -> IntArray:
    rng = np.random.default_rng(spec.seed)
    labels = dataset.labels
    k = dataset.num_classes

    if spec.kind == "uniform":
        noisy = _uniform_flips(labels, k, spec.eta, rng)
    elif spec.kind == "class_dependent":
        assert spec.matrix is not None
        matrix = np.asarray(spec.matrix, dtype=np.float64)
        if matrix.shape != (k, k):
            raise DatasetError(f"noise matrix is {matrix.shape[0]}x{matrix.shape[1]}, K={k}")
        noisy = _class_dependent(labels, matrix, rng)
    else:
        if not dataset.is_vector:
            raise DatasetError("instance-dependent noise needs vector features")
        distance, runner_up = margins or oracle_margins(dataset, spec.seed)
        rate = spec.eta_max * np.exp(-distance / spec.tau)
        noisy = np.where(rng.random(labels.size) < rate, runner_up, labels)
    return np.asarray(noisy, dtype=np.int64)


def inject_noise(dataset: Dataset, spec: NoiseSpec) -> Dataset:
    """
    Corrupt labels according to `spec`; deterministic given `spec.seed`.

    uniform: each label moves to one of the other K-1 classes with probability eta.
    class_dependent: the new label is drawn from row y of the transition matrix.
    instance_dependent: each label moves to its runner-up class (by oracle score)
    with probability eta_max * exp(-margin / tau).

    Clean flags become (new label == original label), and-ed with any flags the
    dataset already carries.

    Raises:
        DatasetError: matrix size does not match K, or instance noise on text data
    """
    noisy = _noisy_labels(dataset, spec)
    unchanged = noisy == dataset.labels
    clean = unchanged if dataset.clean is None else unchanged & dataset.clean
    logger.info(
        f"Injected {spec.kind} noise: {int((~unchanged).sum())}/{len(dataset)} "
        f"labels flipped (seed={spec.seed})"
    )
    return dataset.with_labels(noisy, clean)


def flip_fraction(original: Dataset, noisy: Dataset) -> float:
    """Fraction of positions whose label differs between two aligned datasets."""
    if len(original) != len(noisy):
        raise ValueError(f"datasets differ in length: {len(original)} vs {len(noisy)}")
    if len(original) == 0:
        return 0.0
    return float(np.mean(original.labels != noisy.labels))


def clean_counterpart(subset: Dataset, original: Dataset) -> Dataset:
    """
    Restore the pre-noise labels of `subset` from `original`, matched by id.

    Used to build a gold (clean-label) validation set from a corrupted split.

    Raises:
        DatasetError: an id of `subset` is missing from `original`
    """
    index = original.index_of()
    missing = [i for i in subset.ids if i not in index]
    if missing:
        raise DatasetError(f"{len(missing)} ids have no clean counterpart, e.g. {missing[0]!r}")
    rows = np.array([index[i] for i in subset.ids], dtype=np.int64)
    labels, clean = original.labels[rows], np.ones(len(subset), dtype=bool)
    return replace(subset, labels=labels, clean=clean, provenance=original.provenance)


class ToleranceReport(BaseModel):
    """Clean vs noise-averaged losses over a parameter grid."""

    loss: LossKind
    noise_model: NoiseKind
    eta: float
    draws: int
    clean_losses: list[float]
    noisy_losses: list[float]
    expected_slope: float | None
    expected_intercept: float | None
    fitted_slope: float
    fitted_intercept: float
    slope_error: float | None
    max_deviation: float | None
    tolerance: float | None
    argmin_clean: int
    argmin_noisy: int
    argmin_preserved: bool

    @property
    def identity_holds(self) -> bool:
        if self.max_deviation is None or self.tolerance is None:
            return False
        return self.max_deviation < self.tolerance


def _label_counts(clean: Dataset, spec: NoiseSpec, draws: int) -> FloatArray:
    """counts[i, j] = number of draws in which example i carries label j."""
    counts = np.zeros((len(clean), clean.num_classes))
    rows = np.arange(len(clean))
    margins = oracle_margins(clean, spec.seed) if spec.kind == "instance_dependent" else None
    for d in range(draws):
        draw_spec = spec.model_copy(update={"seed": spec.seed + d})
        np.add.at(counts, (rows, _noisy_labels(clean, draw_spec, margins)), 1.0)
    return counts


def _loss_table(
    params: ClassifierParams, X: FloatArray, num_classes: int, loss: LossSpec
) -> FloatArray:
    """table[i, j] = loss(f(x_i), j)."""
    logits, _ = forward(params, X)
    targets = [np.full(X.shape[0], j, dtype=np.int64) for j in range(num_classes)]
    return np.stack([per_sample_losses(logits, t, loss) for t in targets], axis=1)


def tolerance_oracle(
    params_grid: Sequence[ClassifierParams],
    clean: Dataset,
    spec: NoiseSpec,
    loss: LossSpec | LossKind,
    draws: int = 200,
    tolerance_factor: float = 0.02,
) -> ToleranceReport:
    """
    Compare the clean loss with the loss averaged over `draws` noisy relabellings.

    Every grid point is evaluated on the same noisy label sets (draw d uses seed
    spec.seed + d). For uniform noise and a robust loss with constant C the
    expected noisy loss is ((K-1-K*eta)/(K-1)) * clean + eta*C/(K-1); the report
    carries the largest deviation from that line and the tolerance
    `tolerance_factor * C`. For cross-entropy only the slope of a least-squares
    fit is compared. Other noise models report argmin preservation only.
    """
    if not params_grid:
        raise ValueError("params_grid is empty")
    if draws < 1:
        raise ValueError(f"draws must be positive, got {draws}")
    spec_loss = as_loss_spec(loss)
    k = clean.num_classes
    if spec.kind == "uniform" and k > 1 and spec.eta >= (k - 1) / k:
        raise ValueError(f"uniform noise rate {spec.eta} is not below (K-1)/K for K={k}")

    counts = _label_counts(clean, spec, draws)
    X, labels = clean.X, clean.labels
    rows = np.arange(len(clean))
    clean_losses = []
    noisy_losses = []
    for params in params_grid:
        table = _loss_table(params, X, k, spec_loss)
        clean_losses.append(float(table[rows, labels].mean()))
        noisy_losses.append(float((counts * table).sum() / (draws * len(clean))))

    clean_arr = np.asarray(clean_losses)
    noisy_arr = np.asarray(noisy_losses)
    if np.ptp(clean_arr) > 0.0:
        slope, intercept = np.polyfit(clean_arr, noisy_arr, 1)
        fitted_slope, fitted_intercept = float(slope), float(intercept)
    else:
        fitted_slope, fitted_intercept = 0.0, float(noisy_arr.mean())

    expected_slope: float | None = None
    expected_intercept: float | None = None
    slope_error: float | None = None
    max_deviation: float | None = None
    tolerance: float | None = None
    if spec.kind == "uniform" and k > 1:
        expected_slope = (k - 1 - k * spec.eta) / (k - 1)
        slope_error = abs(fitted_slope - expected_slope)
        if spec_loss.is_robust:
            constant = symmetric_constant(spec_loss, k)
            expected_intercept = spec.eta * constant / (k - 1)
            predicted = expected_slope * clean_arr + expected_intercept
            max_deviation = float(np.abs(noisy_arr - predicted).max())
            tolerance = tolerance_factor * constant

    argmin_clean = int(np.argmin(clean_arr))
    argmin_noisy = int(np.argmin(noisy_arr))
    report = ToleranceReport(
        loss=spec_loss.kind,
        noise_model=spec.kind,
        eta=spec.eta,
        draws=draws,
        clean_losses=clean_losses,
        noisy_losses=noisy_losses,
        expected_slope=expected_slope,
        expected_intercept=expected_intercept,
        fitted_slope=fitted_slope,
        fitted_intercept=fitted_intercept,
        slope_error=slope_error,
        max_deviation=max_deviation,
        tolerance=tolerance,
        argmin_clean=argmin_clean,
        argmin_noisy=argmin_noisy,
        argmin_preserved=argmin_clean == argmin_noisy,
    )
    logger.info(
        f"Tolerance oracle ({spec_loss.kind}, {spec.kind} eta={spec.eta}, {draws} draws): "
        f"fitted slope={fitted_slope:.4f}, max deviation={max_deviation}, "
        f"argmin preserved={report.argmin_preserved}"
    )
    return report
