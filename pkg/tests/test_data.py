import json
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest
from sklearn.linear_model import Perceptron

from noisecurator.data import (
    Dataset,
    _class_means,
    load_dataset,
    make_gaussian_blobs,
    save_dataset,
    split,
)
from noisecurator.errors import DatasetError
from noisecurator.interface import SplitSpec


def _write_jsonl(path: Path, records: list[dict[str, object]]) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def test_load_three_line_jsonl(tmp_path: Path) -> None:
    path = _write_jsonl(
        tmp_path / "d.jsonl",
        [
            {"id": "a", "label": 0, "features": [0.0, 1.0]},
            {"id": "b", "label": 1, "features": [1.0, 0.0]},
            {"id": "c", "label": 1, "features": [2.0, 2.0]},
        ],
    )
    dataset = load_dataset(path)
    assert len(dataset) == 3
    assert dataset.num_classes == 2
    assert dataset.feature_dim == 2
    assert dataset.ids == ("a", "b", "c")
    assert dataset.clean is None


def test_label_out_of_range_names_line(tmp_path: Path) -> None:
    path = _write_jsonl(tmp_path / "d.jsonl", [{"id": "a", "label": 5, "features": [0.0]}])
    with pytest.raises(DatasetError, match="line 1: label out of range") as info:
        load_dataset(path, num_classes=2)
    assert info.value.line == 1


def test_empty_file(tmp_path: Path) -> None:
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(DatasetError, match="empty dataset"):
        load_dataset(path)


def test_malformed_record_reports_line(tmp_path: Path) -> None:
    path = tmp_path / "d.jsonl"
    path.write_text(
        '{"id": "a", "label": 0, "features": [1.0]}\n{"id": "b", "label": 0}\n', encoding="utf-8"
    )
    with pytest.raises(DatasetError) as info:
        load_dataset(path)
    assert info.value.line == 2


def test_inconsistent_feature_length(tmp_path: Path) -> None:
    path = _write_jsonl(
        tmp_path / "d.jsonl",
        [
            {"id": "a", "label": 0, "features": [0.0, 1.0]},
            {"id": "b", "label": 1, "features": [1.0]},
        ],
    )
    with pytest.raises(DatasetError, match="line 2: inconsistent feature length"):
        load_dataset(path)


def test_text_records(tmp_path: Path) -> None:
    path = _write_jsonl(
        tmp_path / "t.jsonl",
        [{"id": "a", "label": 0, "text": "good movie"}, {"id": "b", "label": 1, "text": "bad"}],
    )
    dataset = load_dataset(path, mode="text")
    assert dataset.texts == ("good movie", "bad")
    assert not dataset.is_vector
    with pytest.raises(DatasetError, match="featurize"):
        _ = dataset.X


def test_csv_records(tmp_path: Path) -> None:
    path = tmp_path / "d.csv"
    path.write_text("a,0,0.5,1.5\nb,1,2.0,3.0\n", encoding="utf-8")
    dataset = load_dataset(path)
    np.testing.assert_array_equal(dataset.X, [[0.5, 1.5], [2.0, 3.0]])
    np.testing.assert_array_equal(dataset.labels, [0, 1])


def test_duplicate_ids_rejected() -> None:
    with pytest.raises(DatasetError, match="not unique"):
        Dataset(ids=("a", "a"), labels=np.array([0, 1]), num_classes=2, features=np.zeros((2, 1)))


def test_jsonl_round_trip(tmp_path: Path) -> None:
    dataset = make_gaussian_blobs(5, 3, 4, 2.0, seed=3)
    dataset = dataset.with_labels(dataset.labels, np.array([True, False] * 7 + [True]))
    path = tmp_path / "out" / "blobs.jsonl"
    save_dataset(dataset, path)
    loaded = load_dataset(path, num_classes=3)
    assert loaded.ids == dataset.ids
    np.testing.assert_array_equal(loaded.labels, dataset.labels)
    np.testing.assert_array_equal(loaded.X, dataset.X)
    assert loaded.clean is not None and dataset.clean is not None
    np.testing.assert_array_equal(loaded.clean, dataset.clean)


def test_blobs_are_linearly_separable() -> None:
    dataset = make_gaussian_blobs(100, 2, 2, 10.0, seed=0)
    assert len(dataset) == 200
    oracle = Perceptron(max_iter=1000, tol=None, random_state=0).fit(dataset.X, dataset.labels)
    assert oracle.score(dataset.X, dataset.labels) == 1.0


def test_blobs_are_all_clean_and_deterministic() -> None:
    first = make_gaussian_blobs(50, 3, 5, 4.0, seed=7)
    second = make_gaussian_blobs(50, 3, 5, 4.0, seed=7)
    assert first.clean is not None and first.clean.all()
    assert first.provenance == "synthetic"
    assert first.ids == second.ids
    assert first.X.tobytes() == second.X.tobytes()
    assert first.labels.tobytes() == second.labels.tobytes()


def test_singleton_blobs() -> None:
    dataset = make_gaussian_blobs(1, 1, 1, 1.0, seed=0)
    assert len(dataset) == 1
    assert dataset.num_classes == 1


@pytest.mark.parametrize(("num_classes", "dim"), [(2, 2), (3, 5), (4, 2)])
def test_class_means_are_separated_and_centred(num_classes: int, dim: int) -> None:
    means = _class_means(num_classes, dim, 3.0)
    for a, b in combinations(range(num_classes), 2):
        assert np.linalg.norm(means[a] - means[b]) >= 3.0 - 1e-9
    np.testing.assert_allclose(means.mean(axis=0), 0.0, atol=1e-12)


def test_blobs_reject_bad_arguments() -> None:
    with pytest.raises(ValueError):
        make_gaussian_blobs(0, 2, 2, 1.0, seed=0)
    with pytest.raises(ValueError):
        make_gaussian_blobs(1, 2, 2, 0.0, seed=0)


@pytest.mark.parametrize(
    ("n", "fraction", "expected"), [(100, 0.8, (80, 20)), (2, 0.5, (1, 1)), (5, 0.5, (3, 2))]
)
def test_split_sizes(n: int, fraction: float, expected: tuple[int, int]) -> None:
    dataset = make_gaussian_blobs(n, 1, 1, 1.0, seed=0)
    train, validation = split(dataset, SplitSpec(train_fraction=fraction, seed=0))
    assert (len(train), len(validation)) == expected


def test_split_of_singleton_fails() -> None:
    dataset = make_gaussian_blobs(1, 1, 1, 1.0, seed=0)
    with pytest.raises(DatasetError):
        split(dataset, SplitSpec(train_fraction=0.5))


def test_split_is_a_partition() -> None:
    dataset = make_gaussian_blobs(30, 2, 2, 3.0, seed=0)
    train, validation = split(dataset, SplitSpec(seed=4))
    assert set(train.ids) | set(validation.ids) == set(dataset.ids)
    assert not set(train.ids) & set(validation.ids)
    again, _ = split(dataset, SplitSpec(seed=4))
    assert again.ids == train.ids


def test_clean_indices() -> None:
    dataset = make_gaussian_blobs(2, 2, 1, 1.0, seed=0)
    flagged = dataset.with_labels(dataset.labels, np.array([True, False, False, True]))
    np.testing.assert_array_equal(flagged.clean_indices(), [0, 3])
    with pytest.raises(DatasetError):
        dataset.without_clean_flags().clean_indices()
