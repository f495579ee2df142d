"""Metrics and diagnostics: weight separation, loss surfaces, loss curves, diversity.

This is the only module allowed to read the clean flags of a dataset.
"""

from collections.abc import Sequence

import numpy as np
import numpy.typing as npt
from nltk.translate.bleu_score import SmoothingFunction, sentence_bleu
from pydantic import BaseModel
from sklearn.metrics import roc_auc_score

from .baselines import confidence_filter, small_loss_filter
from .data import Dataset
from .errors import DatasetError
from .interface import (
    BilevelConfig,
    DirectionScale,
    LossKind,
    LossSpec,
    SampleWeightsLike,
    SubsetBudget,
)
from .logger import get_logger
from .losses import as_loss_spec, dataset_loss, per_sample_losses
from .model import ClassifierParams, evaluate_accuracy, forward, init_params
from .sampling import bottom_k, sample_subset, top_k
from .training import train_classifier

logger = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]

BLEU_WEIGHTS = (0.25, 0.25, 0.25, 0.25)
BLEU_SMOOTHING = SmoothingFunction(epsilon=1e-9).method1


def _scores(values: SampleWeightsLike) -> FloatArray:
    return np.asarray(getattr(values, "values", values), dtype=np.float64)


def separation_auroc(
    scores: SampleWeightsLike, clean_flags: Sequence[bool] | npt.NDArray[np.bool_]
) -> float:
    """Probability that a random clean example outscores a random noisy one (ties count 0.5)."""
    values = _scores(scores)
    flags = np.asarray(clean_flags, dtype=np.bool_)
    if values.shape != flags.shape:
        raise ValueError(f"{values.size} scores for {flags.size} flags")
    if flags.all() or not flags.any():
        raise ValueError("AUROC needs both clean and noisy examples")
    return float(roc_auc_score(flags, values))


def weight_histogram(weights: SampleWeightsLike, bins: int = 20) -> list[int]:
    """
    Counts over `bins` equal-width bins on [0, 1].

    A value on an inner boundary goes to the lower bin; 0.0 goes to the first
    bin and 1.0 to the last.
    """
    if bins < 2:
        raise ValueError(f"bins must be at least 2, got {bins}")
    values = _scores(weights)
    # rounding absorbs representation error such as 0.15 * 20 = 3.0000000000000004
    index = np.ceil(np.round(values * bins, 9)).astype(np.int64) - 1
    index = np.clip(index, 0, bins - 1)
    return [int(c) for c in np.bincount(index, minlength=bins)]


class SurfaceProbe(BaseModel):
    """Losses on the plane center + alpha * u + beta * v."""

    arch: str
    directions: DirectionScale = "unit"
    center: list[float]
    u: list[float]
    v: list[float]
    alphas: list[float]
    betas: list[float]
    losses: dict[str, list[list[float]]]

    def grid(self, kind: str) -> FloatArray:
        return np.asarray(self.losses[kind], dtype=np.float64)

    def argmin(self, kind: str) -> tuple[int, int]:
        """Grid offset (in cells) of the smallest loss from the center."""
        grid = self.grid(kind)
        i, j = np.unravel_index(int(np.argmin(grid)), grid.shape)
        middle = (len(self.alphas) - 1) // 2
        return int(i) - middle, int(j) - middle


def _unit_direction(rng: np.random.Generator, size: int) -> FloatArray:
    direction = rng.standard_normal(size)
    return direction / np.linalg.norm(direction)


def loss_surface(
    center: ClassifierParams,
    dataset: Dataset,
    kinds: Sequence[LossSpec | LossKind] = ("ce", "rce"),
    *,
    steps: int = 10,
    extent: float = 1.0,
    seed: int = 0,
    directions: DirectionScale = "unit",
) -> SurfaceProbe:
    """
    Evaluate dataset losses on a (2*steps+1)^2 grid around `center`.

    Grid coordinates are k/steps * extent for k in [-steps, steps], so the
    middle point is exactly the center. Directions are Gaussian draws
    normalised to unit length over all parameters, or to the norm of
    `center` with directions="center" so the grid spans perturbations as
    large as the classifier itself.
    """
    if steps < 1:
        raise ValueError(f"steps must be positive, got {steps}")
    if not 0.0 < extent <= 1.0:
        raise ValueError(f"extent must be in (0, 1], got {extent}")
    rng = np.random.default_rng(seed)
    flat = center.flatten()
    scale = float(np.linalg.norm(flat)) if directions == "center" else 1.0
    if scale == 0.0:
        raise ValueError("center-scaled directions need a non-zero center")
    u = scale * _unit_direction(rng, flat.size)
    v = scale * _unit_direction(rng, flat.size)
    axis = np.arange(-steps, steps + 1) / steps * extent
    specs = [as_loss_spec(kind) for kind in kinds]

    surfaces = {spec.kind: np.zeros((axis.size, axis.size)) for spec in specs}
    for i, alpha in enumerate(axis):
        for j, beta in enumerate(axis):
            params = center.unflatten(flat + alpha * u + beta * v)
            for spec in specs:
                surfaces[spec.kind][i, j] = dataset_loss(params, dataset, spec)

    logger.info(
        f"Loss surface: {axis.size}x{axis.size} grid, extent={extent}, "
        f"directions={directions}, "
        f"losses={[spec.kind for spec in specs]}"
    )
    return SurfaceProbe(
        arch=center.arch,
        directions=directions,
        center=flat.tolist(),
        u=u.tolist(),
        v=v.tolist(),
        alphas=axis.tolist(),
        betas=axis.tolist(),
        losses={kind: grid.tolist() for kind, grid in surfaces.items()},
    )


def flat_fraction(probe: SurfaceProbe, kind: str, threshold: float = 1e-3) -> float:
    """Fraction of grid cells whose finite-difference surface gradient norm is below threshold."""
    grid = probe.grid(kind)
    d_alpha, d_beta = np.gradient(grid, probe.alphas, probe.betas)
    return float(np.mean(np.hypot(d_alpha, d_beta) < threshold))


class CurvePoint(BaseModel):
    epoch: int
    ce: float
    rce: float


def cross_loss_curves(
    train: Dataset,
    config: BilevelConfig,
    train_loss: LossSpec | LossKind,
    *,
    epochs: int = 20,
    init: ClassifierParams | None = None,
) -> list[CurvePoint]:
    """
    Train with one loss and track both CE and RCE on the training set.

    Record 0 holds the losses at the initial parameters.
    """
    train = train.without_clean_flags()
    assert train.feature_dim is not None
    rce = config.outer_loss if config.outer_loss.kind == "rce" else LossSpec(kind="rce")
    spec = as_loss_spec(train_loss)
    if spec.kind == "rce" and isinstance(train_loss, str):
        spec = rce
    start = init or init_params(
        config.arch, train.num_classes, train.feature_dim, config.hidden_width, config.seed
    )
    curve: list[CurvePoint] = []

    def record(epoch: int, params: ClassifierParams) -> None:
        curve.append(
            CurvePoint(
                epoch=epoch,
                ce=dataset_loss(params, train, "ce"),
                rce=dataset_loss(params, train, rce),
            )
        )

    train_classifier(
        train,
        spec,
        start,
        epochs=epochs,
        step_size=config.inner_step,
        batch_size=config.inner_batch_size,
        optimizer=config.inner_optimizer,
        rng=config.seed,
        on_epoch=record,
    )
    logger.info(
        f"Cross-loss curve ({spec.kind} training, {epochs} epochs): "
        f"CE {curve[0].ce:.4f} -> {curve[-1].ce:.4f}, "
        f"RCE {curve[0].rce:.4f} -> {curve[-1].rce:.4f}"
    )
    return curve


def self_bleu4(texts: Sequence[str], sample: int = 1000, seed: int = 0) -> float:
    """
    Mean BLEU-4 of sampled hypotheses against every other text in the corpus.

    Tokens are whitespace-separated; n-gram weights are uniform over orders
    1-4 with the standard brevity penalty; zero n-gram matches are smoothed by
    adding 1e-9. Lower values mean a more diverse corpus.
    """
    if len(texts) < 2:
        raise ValueError("self-BLEU needs at least two texts")
    if sample < 1:
        raise ValueError(f"sample must be positive, got {sample}")
    tokens = [text.split() for text in texts]
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(texts), size=min(sample, len(texts)), replace=False))

    scores = []
    for i in chosen:
        references = [tokens[j] for j in range(len(tokens)) if j != i]
        scores.append(
            sentence_bleu(
                references,
                tokens[i],
                weights=BLEU_WEIGHTS,
                smoothing_function=BLEU_SMOOTHING,
            )
        )
    return float(np.mean(scores))


def overlap_coefficient(a: FloatArray, b: FloatArray, bins: int = 20) -> float:
    """Shared mass of two normalised histograms over a common range (1 = identical)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("overlap needs two non-empty samples")
    low = float(min(a.min(), b.min()))
    high = float(max(a.max(), b.max()))
    if high <= low:
        return 1.0
    hist_a, _ = np.histogram(a, bins=bins, range=(low, high))
    hist_b, _ = np.histogram(b, bins=bins, range=(low, high))
    return float(np.minimum(hist_a / a.size, hist_b / b.size).sum())


class LossHistograms(BaseModel):
    edges: list[float]
    clean_counts: list[int]
    noisy_counts: list[int]
    overlap: float


def loss_histograms(
    train: Dataset, config: BilevelConfig, warmup_epochs: int = 1, bins: int = 20
) -> LossHistograms:
    """Per-sample CE losses of clean vs mislabelled examples after warm-up training."""
    if train.clean is None:
        raise DatasetError("loss histograms need clean flags")
    clean = train.clean
    if clean.all() or not clean.any():
        raise ValueError("loss histograms need both clean and noisy examples")
    stripped = train.without_clean_flags()
    assert stripped.feature_dim is not None
    result = train_classifier(
        stripped,
        "ce",
        init_params(
            config.arch, train.num_classes, stripped.feature_dim, config.hidden_width, config.seed
        ),
        epochs=warmup_epochs,
        step_size=config.inner_step,
        batch_size=config.inner_batch_size,
        optimizer=config.inner_optimizer,
        rng=config.seed,
    )
    logits, _ = forward(result.params, stripped.X)
    losses = per_sample_losses(logits, stripped.labels, LossSpec(kind="ce"))
    edges = np.histogram_bin_edges(losses, bins=bins)
    clean_counts, _ = np.histogram(losses[clean], bins=edges)
    noisy_counts, _ = np.histogram(losses[~clean], bins=edges)
    overlap = overlap_coefficient(losses[clean], losses[~clean], bins)
    logger.info(f"Clean/noisy CE-loss overlap after {warmup_epochs} epochs: {overlap:.3f}")
    return LossHistograms(
        edges=edges.tolist(),
        clean_counts=clean_counts.tolist(),
        noisy_counts=noisy_counts.tolist(),
        overlap=overlap,
    )


class DiversityReport(BaseModel):
    k: int
    top: float
    bottom: float


def subset_diversity(
    dataset: Dataset, weights: SampleWeightsLike, k: int, sample: int = 1000, seed: int = 0
) -> DiversityReport:
    """Self-BLEU4 of the k highest- and k lowest-weighted texts."""
    if dataset.texts is None:
        raise DatasetError("subset diversity needs raw texts")
    texts = dataset.texts
    top = self_bleu4([texts[i] for i in top_k(weights, k)], sample, seed)
    bottom = self_bleu4([texts[i] for i in bottom_k(weights, k)], sample, seed)
    logger.info(f"Self-BLEU4 of top-{k}: {top:.4f}, bottom-{k}: {bottom:.4f}")
    return DiversityReport(k=k, top=top, bottom=bottom)


def downstream_accuracy(
    train: Dataset,
    test: Dataset,
    config: BilevelConfig,
    *,
    epochs: int = 20,
    weights: SampleWeightsLike | None = None,
) -> float:
    """Test accuracy of a classifier trained with (weighted) CE on `train`."""
    stripped = train.without_clean_flags()
    assert stripped.feature_dim is not None
    result = train_classifier(
        stripped,
        "ce",
        init_params(
            config.arch, train.num_classes, stripped.feature_dim, config.hidden_width, config.seed
        ),
        epochs=epochs,
        step_size=config.inner_step,
        batch_size=config.inner_batch_size,
        optimizer=config.inner_optimizer,
        weights=None if weights is None else _scores(weights),
        rng=config.seed,
    )
    return evaluate_accuracy(result.params, test)


class DenoiserComparison(BaseModel):
    """Downstream test accuracy per training subset, plus separation AUROC per score."""

    budget: int
    accuracies: dict[str, float]
    subset_sizes: dict[str, int]
    aurocs: dict[str, float]


def compare_denoisers(
    train: Dataset,
    test: Dataset,
    weights: SampleWeightsLike,
    config: BilevelConfig,
    *,
    budget: int | None = None,
    epochs: int = 20,
    baseline_epochs: int = 5,
    seed: int = 0,
) -> DenoiserComparison:
    """
    Train a fresh classifier on each candidate subset and score it on `test`.

    Candidates: the full noisy set, the full set with weighted CE, a subset
    sampled from the weights, the top-weighted subset, both baseline filters,
    and the truly clean subset when clean flags are available. The budget
    defaults to the number of clean examples.
    """
    has_flags = train.clean is not None
    if budget is None:
        if not has_flags:
            raise ValueError("budget is required when the training set has no clean flags")
        budget = int(train.clean_indices().size)
    subsets: dict[str, list[int]] = {
        "bilevel_sampled": sample_subset(weights, SubsetBudget(size=budget), seed),
        "bilevel_top": top_k(weights, budget),
    }
    confidence = confidence_filter(train, config, budget, epochs=baseline_epochs)
    small_loss = small_loss_filter(train, config, budget)
    subsets["confidence"] = confidence.kept
    subsets["small_loss"] = small_loss.kept
    if has_flags:
        subsets["clean"] = [int(i) for i in train.clean_indices()]

    accuracies = {
        "noisy_full": downstream_accuracy(train, test, config, epochs=epochs),
        "weighted_full": downstream_accuracy(train, test, config, epochs=epochs, weights=weights),
    }
    sizes = {"noisy_full": len(train), "weighted_full": len(train)}
    for name, indices in subsets.items():
        sizes[name] = len(indices)
        if not indices:
            logger.warning(f"subset '{name}' is empty; skipping its downstream run")
            continue
        accuracies[name] = downstream_accuracy(train.subset(indices), test, config, epochs=epochs)

    aurocs: dict[str, float] = {}
    if has_flags and train.clean is not None and 0 < train.clean.sum() < len(train):
        aurocs = {
            "bilevel": separation_auroc(weights, train.clean),
            "confidence": separation_auroc(confidence.ranking(), train.clean),
            "small_loss": separation_auroc(small_loss.ranking(), train.clean),
        }
    for name, accuracy in accuracies.items():
        logger.info(f"downstream accuracy [{name}, n={sizes[name]}]: {accuracy:.4f}")
    return DenoiserComparison(
        budget=budget, accuracies=accuracies, subset_sizes=sizes, aurocs=aurocs
    )
