import numpy as np
import pytest
from helpers import (
    HIGH_DIM_CONFIG,
    MANY_CLASS_CONFIG,
    high_dim_instance_noise,
    many_class_noisy_split,
    wrong_params,
)

from noisecurator.baselines import confidence_filter, small_loss_filter
from noisecurator.bilevel import one_level_baseline, run_bilevel
from noisecurator.data import Dataset, make_gaussian_blobs, split
from noisecurator.errors import DatasetError
from noisecurator.evaluation import (
    compare_denoisers,
    cross_loss_curves,
    downstream_accuracy,
    flat_fraction,
    loss_histograms,
    loss_surface,
    overlap_coefficient,
    self_bleu4,
    separation_auroc,
    subset_diversity,
    weight_histogram,
)
from noisecurator.interface import BilevelConfig, LossSpec, SplitSpec
from noisecurator.losses import dataset_loss
from noisecurator.model import ClassifierParams, init_params

CONFIG = BilevelConfig(inner_batch_size=32)


def test_auroc_examples() -> None:
    flags = np.array([True, False, True, False])
    assert separation_auroc(np.array([0.9, 0.8, 0.3, 0.1]), flags) == pytest.approx(0.75)
    assert separation_auroc(np.array([1.0, 0.0, 1.0, 0.0]), flags) == 1.0
    assert separation_auroc(np.array([0.5, 0.5]), np.array([True, False])) == 0.5


def test_auroc_is_invariant_under_monotone_maps() -> None:
    rng = np.random.default_rng(0)
    scores = rng.uniform(size=200)
    flags = rng.uniform(size=200) < scores
    assert separation_auroc(np.exp(3 * scores) - 7, flags) == pytest.approx(
        separation_auroc(scores, flags)
    )


def test_auroc_needs_both_classes() -> None:
    with pytest.raises(ValueError):
        separation_auroc(np.array([0.1, 0.2]), np.array([True, True]))
    with pytest.raises(ValueError):
        separation_auroc(np.array([0.1, 0.2]), np.array([True]))


def test_weight_histogram_bins() -> None:
    assert weight_histogram(np.full(8, 0.5))[9] == 8
    counts = weight_histogram(np.array([0.0, 0.05, 0.15, 1.0]))
    assert counts[0] == 2
    assert counts[2] == 1
    assert counts[19] == 1
    assert sum(weight_histogram(np.random.default_rng(1).uniform(size=333))) == 333
    with pytest.raises(ValueError):
        weight_histogram(np.zeros(2), bins=1)


def test_surface_center_is_exact(blobs: Dataset) -> None:
    center = init_params("linear", 2, 2, seed=3)
    surface = loss_surface(center, blobs, steps=4, extent=0.5, seed=1)
    assert surface.grid("ce").shape == (9, 9)
    assert surface.alphas[4] == 0.0
    assert surface.grid("ce")[4, 4] == dataset_loss(center, blobs, "ce")
    assert surface.grid("rce")[4, 4] == dataset_loss(center, blobs, "rce")
    assert np.linalg.norm(surface.u) == pytest.approx(1.0)
    assert np.linalg.norm(surface.v) == pytest.approx(1.0)


def test_center_scaled_directions_match_the_center_norm(blobs: Dataset) -> None:
    center = init_params("linear", 2, 2, seed=3)
    surface = loss_surface(center, blobs, steps=2, seed=1, directions="center")
    assert surface.directions == "center"
    norm = np.linalg.norm(center.flatten())
    assert np.linalg.norm(surface.u) == pytest.approx(norm)
    assert np.linalg.norm(surface.v) == pytest.approx(norm)
    assert surface.grid("ce")[2, 2] == dataset_loss(center, blobs, "ce")
    zero = ClassifierParams(weights=np.zeros((2, 2)), biases=np.zeros(2))
    with pytest.raises(ValueError, match="non-zero"):
        loss_surface(zero, blobs, directions="center")


def test_surface_arguments() -> None:
    dataset = make_gaussian_blobs(2, 2, 2, 1.0, seed=0)
    with pytest.raises(ValueError):
        loss_surface(wrong_params(), dataset, steps=0)
    with pytest.raises(ValueError):
        loss_surface(wrong_params(), dataset, extent=1.5)


def test_rce_surface_is_flat_around_a_wrong_classifier(blobs: Dataset) -> None:
    surface = loss_surface(wrong_params(), blobs, steps=5)
    assert flat_fraction(surface, "rce") > 0.9
    assert flat_fraction(surface, "ce") < 0.1


def test_rce_minimum_sits_at_a_ce_trained_classifier() -> None:
    blobs = make_gaussian_blobs(400, 4, 2, 30.0, seed=0)
    config = BilevelConfig(outer_loss=LossSpec(kind="ce"), inner_batch_size=32)
    center = one_level_baseline(blobs, config, epochs=20)
    assert center.hidden_weights is None
    surface = loss_surface(center, blobs, steps=5, seed=0, directions="center")
    i, j = surface.argmin("rce")
    assert abs(i) <= 1 and abs(j) <= 1
    assert flat_fraction(surface, "rce") > flat_fraction(surface, "ce")
    assert flat_fraction(surface, "ce") == 0.0


def test_curve_starts_at_init_losses(blobs: Dataset) -> None:
    init = init_params("linear", 2, 2, seed=2)
    curve = cross_loss_curves(blobs, CONFIG, "ce", epochs=3, init=init)
    assert [point.epoch for point in curve] == [0, 1, 2, 3]
    assert curve[0].ce == dataset_loss(init, blobs, "ce")
    assert curve[0].rce == dataset_loss(init, blobs, "rce")
    assert curve[-1].ce < curve[0].ce


def test_rce_barely_moves_from_a_wrong_classifier(blobs: Dataset) -> None:
    ce_curve = cross_loss_curves(blobs, CONFIG, "ce", epochs=10, init=wrong_params())
    rce_curve = cross_loss_curves(blobs, CONFIG, "rce", epochs=10, init=wrong_params())
    ce_drop = (ce_curve[0].ce - ce_curve[-1].ce) / ce_curve[0].ce
    rce_drop = (rce_curve[0].rce - rce_curve[-1].rce) / rce_curve[0].rce
    assert ce_drop > 0.9
    assert rce_drop < 0.5 * ce_drop


def test_rce_training_barely_moves_rce_from_a_small_init() -> None:
    train, _, _ = many_class_noisy_split()
    ce_curve = cross_loss_curves(train, MANY_CLASS_CONFIG, "ce", epochs=20)
    rce_curve = cross_loss_curves(train, MANY_CLASS_CONFIG, "rce", epochs=20)
    assert ce_curve[0].rce == rce_curve[0].rce
    ce_drop = ce_curve[0].rce - ce_curve[-1].rce
    rce_drop = rce_curve[0].rce - rce_curve[-1].rce
    assert ce_drop > 0.7
    assert rce_drop < 0.2
    assert rce_drop < 0.5 * ce_drop


def test_self_bleu_extremes() -> None:
    assert self_bleu4(["a b c d", "a b c d", "a b c d"]) == pytest.approx(1.0)
    assert self_bleu4(["a b c d", "e f g h"]) < 1e-6


def test_self_bleu_hand_value() -> None:
    corpus = ["a b c d e", "a b c d f", "u v w x y"]
    # 0.8 * 0.75 * (2/3) * 0.5 = 0.2 for the two overlapping texts, 0 for the third
    assert self_bleu4(corpus) == pytest.approx(2 * 0.2**0.25 / 3, abs=1e-6)


def test_self_bleu_permutation_invariance() -> None:
    corpus = ["the cat sat", "the cat ran off", "a dog sat down", "the dog ran"]
    assert self_bleu4(corpus) == pytest.approx(self_bleu4(corpus[::-1]))


def test_self_bleu_needs_two_texts() -> None:
    with pytest.raises(ValueError):
        self_bleu4(["alone"])


def test_overlap_coefficient() -> None:
    a = np.array([0.0, 0.1, 0.2])
    assert overlap_coefficient(a, a) == pytest.approx(1.0)
    assert overlap_coefficient(np.array([0.0, 0.1]), np.array([0.9, 1.0])) == 0.0
    assert overlap_coefficient(np.ones(3), np.ones(2)) == 1.0
    with pytest.raises(ValueError):
        overlap_coefficient(np.array([]), a)


def test_loss_histograms(noisy_blobs: Dataset) -> None:
    assert noisy_blobs.clean is not None
    histograms = loss_histograms(noisy_blobs, CONFIG)
    assert sum(histograms.clean_counts) == int(noisy_blobs.clean.sum())
    assert sum(histograms.noisy_counts) == int((~noisy_blobs.clean).sum())
    assert len(histograms.edges) == 21
    assert 0.0 <= histograms.overlap < 1.0
    with pytest.raises(DatasetError):
        loss_histograms(noisy_blobs.without_clean_flags(), CONFIG)


def test_instance_noise_hides_from_small_loss_but_not_from_reweighting() -> None:
    train, validation, _, _ = high_dim_instance_noise()
    assert train.clean is not None
    keep = int(train.clean.sum())
    histograms = loss_histograms(train, HIGH_DIM_CONFIG)
    assert histograms.overlap > 0.5

    small_loss = separation_auroc(
        small_loss_filter(train, HIGH_DIM_CONFIG, keep).ranking(), train.clean
    )
    confidence = separation_auroc(
        confidence_filter(train, HIGH_DIM_CONFIG, keep, epochs=5).ranking(), train.clean
    )
    weights, _ = run_bilevel(train, validation, HIGH_DIM_CONFIG)
    bilevel = separation_auroc(weights, train.clean)
    assert small_loss < 0.65
    assert bilevel >= small_loss + 0.15
    assert confidence < bilevel


@pytest.mark.parametrize("gold", [False, True])
def test_reweighted_subset_beats_noisy_training_and_filters(gold: bool) -> None:
    train, validation, gold_validation, test = high_dim_instance_noise()
    config = HIGH_DIM_CONFIG
    if gold:
        validation = gold_validation
        config = config.model_copy(update={"outer_loss": LossSpec(kind="ce")})
    weights, _ = run_bilevel(train, validation, config)
    result = compare_denoisers(train, test, weights, config, epochs=20, baseline_epochs=5)
    accuracies = result.accuracies
    assert accuracies["bilevel_top"] >= accuracies["noisy_full"] + 0.05
    assert accuracies["bilevel_top"] >= accuracies["small_loss"]
    assert accuracies["bilevel_top"] >= accuracies["confidence"]
    if gold:
        assert accuracies["bilevel_top"] >= accuracies["clean"] - 0.02


def test_subset_diversity() -> None:
    texts = ("x y z w",) * 3 + ("a b c d", "e f g h", "i j k l")
    dataset = Dataset(
        ids=tuple(f"t{i}" for i in range(6)),
        labels=np.zeros(6, dtype=np.int64),
        num_classes=2,
        texts=texts,
    )
    report = subset_diversity(dataset, np.array([0.1, 0.2, 0.0, 0.9, 0.8, 0.7]), k=3)
    assert report.top < 1e-6
    assert report.bottom == pytest.approx(1.0)
    with pytest.raises(DatasetError):
        subset_diversity(make_gaussian_blobs(3, 2, 2, 1.0, seed=0), np.ones(6), k=2)


def test_downstream_accuracy(blobs: Dataset) -> None:
    train, test = split(blobs, SplitSpec(seed=0))
    assert downstream_accuracy(train, test, CONFIG) >= 0.99


def test_compare_denoisers_with_oracle_weights(noisy_blobs: Dataset) -> None:
    train, _ = split(noisy_blobs, SplitSpec(seed=0))
    test = make_gaussian_blobs(100, 2, 2, 5.0, seed=7)
    assert train.clean is not None
    weights = train.clean.astype(np.float64)
    result = compare_denoisers(train, test, weights, CONFIG, epochs=10, baseline_epochs=2)
    assert result.budget == int(train.clean.sum())
    assert set(result.accuracies) == {
        "noisy_full",
        "weighted_full",
        "bilevel_sampled",
        "bilevel_top",
        "confidence",
        "small_loss",
        "clean",
    }
    assert result.subset_sizes["bilevel_sampled"] == result.budget
    assert result.subset_sizes["bilevel_top"] == result.budget
    assert result.aurocs["bilevel"] == 1.0
    assert result.accuracies["clean"] >= 0.95
    assert result.accuracies["bilevel_sampled"] == result.accuracies["clean"]


def test_compare_denoisers_needs_a_budget_without_flags(noisy_blobs: Dataset) -> None:
    stripped = noisy_blobs.without_clean_flags()
    with pytest.raises(ValueError, match="budget"):
        compare_denoisers(stripped, stripped, np.ones(len(stripped)), CONFIG)
