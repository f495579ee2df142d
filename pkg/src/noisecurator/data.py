"""Dataset container, ingestion from JSONL/CSV, synthetic blobs, and splitting."""

import csv
import math
from collections.abc import Sequence
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal

import numpy as np
import numpy.typing as npt
from pydantic import ValidationError

from .errors import DatasetError
from .interface import ExampleRecord, SplitSpec
from .logger import get_logger

logger = get_logger(__name__)

Provenance = Literal["ingested", "synthetic", "noise-injected"]
FeatureMode = Literal["auto", "vector", "text"]
FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]


def _frozen(array: npt.NDArray[np.generic]) -> npt.NDArray[np.generic]:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable collection of labelled examples.

    Exactly one of `features` (N x d) or `texts` is set. `clean` holds the
    ground-truth noise flags and may only be read by evaluation code.
    """

    ids: tuple[str, ...]
    labels: IntArray
    num_classes: int
    features: FloatArray | None = None
    texts: tuple[str, ...] | None = None
    clean: BoolArray | None = None
    provenance: Provenance = "ingested"

    def __post_init__(self) -> None:
        n = len(self.ids)
        if self.num_classes < 1:
            raise DatasetError(f"num_classes must be positive, got {self.num_classes}")
        if (self.features is None) == (self.texts is None):
            raise DatasetError("dataset needs exactly one of features or texts")
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (n,):
            raise DatasetError(f"expected {n} labels, got shape {labels.shape}")
        if n and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DatasetError(f"label out of range for K={self.num_classes}")
        if len(set(self.ids)) != n:
            raise DatasetError("example ids are not unique")
        object.__setattr__(self, "labels", _frozen(labels.copy()))

        if self.features is not None:
            features = np.asarray(self.features, dtype=np.float64)
            if features.ndim != 2 or features.shape[0] != n:
                raise DatasetError(f"features must have shape ({n}, d), got {features.shape}")
            if features.shape[1] < 1:
                raise DatasetError("feature dimension must be positive")
            object.__setattr__(self, "features", _frozen(features.copy()))
        elif self.texts is not None and len(self.texts) != n:
            raise DatasetError(f"expected {n} texts, got {len(self.texts)}")

        if self.clean is not None:
            clean = np.asarray(self.clean, dtype=np.bool_)
            if clean.shape != (n,):
                raise DatasetError(f"expected {n} clean flags, got shape {clean.shape}")
            object.__setattr__(self, "clean", _frozen(clean.copy()))

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def is_vector(self) -> bool:
        return self.features is not None

    @property
    def feature_dim(self) -> int | None:
        return None if self.features is None else int(self.features.shape[1])

    @property
    def X(self) -> FloatArray:
        """Feature matrix; text datasets must be featurized first."""
        if self.features is None:
            raise DatasetError("dataset holds raw text; featurize it first")
        return self.features

    def subset(self, indices: Sequence[int] | IntArray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            ids=tuple(self.ids[i] for i in idx),
            labels=self.labels[idx],
            num_classes=self.num_classes,
            features=None if self.features is None else self.features[idx],
            texts=None if self.texts is None else tuple(self.texts[i] for i in idx),
            clean=None if self.clean is None else self.clean[idx],
            provenance=self.provenance,
        )

    def with_labels(self, labels: IntArray, clean: BoolArray) -> "Dataset":
        return replace(self, labels=labels, clean=clean, provenance="noise-injected")

    def with_features(self, features: FloatArray) -> "Dataset":
        return replace(self, features=features, texts=None)

    def without_clean_flags(self) -> "Dataset":
        return replace(self, clean=None)

    def index_of(self) -> dict[str, int]:
        return {example_id: i for i, example_id in enumerate(self.ids)}

    def clean_indices(self) -> IntArray:
        """Indices whose label is uncorrupted. Evaluation code only."""
        if self.clean is None:
            raise DatasetError("dataset carries no clean flags")
        return np.flatnonzero(self.clean).astype(np.int64)


def _parse_jsonl(path: Path) -> list[ExampleRecord]:
    records = []
    with path.open(encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(ExampleRecord.model_validate_json(line))
            except ValidationError as e:
                problems = "; ".join(
                    f"{'.'.join(str(p) for p in err['loc']) or 'record'}: {err['msg']}"
                    for err in e.errors()
                )
                raise DatasetError(f"malformed record ({problems})", line=line_no) from e
    return records


def _parse_csv(path: Path) -> list[ExampleRecord]:
    records = []
    with path.open(newline="", encoding="utf-8") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            if len(row) < 3:
                raise DatasetError("expected id,label,f0,...", line=line_no)
            try:
                records.append(
                    ExampleRecord(
                        id=row[0], label=int(row[1]), features=[float(v) for v in row[2:]]
                    )
                )
            except (ValueError, ValidationError) as e:
                raise DatasetError(f"malformed record ({e})", line=line_no) from e
    return records


def load_dataset(
    path: str | Path, num_classes: int | None = None, mode: FeatureMode = "auto"
) -> Dataset:
    """
    Load a dataset from JSONL (canonical) or header-less CSV.

    Args:
        path: File to read; a `.csv` suffix selects the CSV reader
        num_classes: Declared K. If None, inferred as max label + 1
        mode: Expected payload ("vector" or "text"); "auto" accepts either kind
            as long as all records agree

    Returns:
        Dataset in file order

    Raises:
        DatasetError: On malformed records (with line number), labels out of range,
            inconsistent feature lengths, mixed payloads, or an empty file
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    records = _parse_csv(path) if path.suffix.lower() == ".csv" else _parse_jsonl(path)
    if not records:
        raise DatasetError(f"empty dataset: {path}")

    is_text = records[0].text is not None
    if mode != "auto" and is_text != (mode == "text"):
        raise DatasetError(f"expected {mode} records", line=1)

    k = num_classes if num_classes is not None else max(r.label for r in records) + 1
    dim = None if is_text else len(records[0].features or [])
    for line_no, record in enumerate(records, start=1):
        if record.label >= k:
            raise DatasetError(f"label out of range: {record.label} >= K={k}", line=line_no)
        if (record.text is not None) != is_text:
            raise DatasetError("mixed text and vector records", line=line_no)
        if not is_text and len(record.features or []) != dim:
            raise DatasetError(
                f"inconsistent feature length {len(record.features or [])}, expected {dim}",
                line=line_no,
            )

    flags = [r.clean for r in records]
    clean = None
    if any(flag is not None for flag in flags):
        # Missing flags on some lines are read as "unknown" = not verified clean.
        clean = np.array([bool(flag) for flag in flags], dtype=np.bool_)

    dataset = Dataset(
        ids=tuple(r.id for r in records),
        labels=np.array([r.label for r in records], dtype=np.int64),
        num_classes=k,
        features=None if is_text else np.array([r.features for r in records], dtype=np.float64),
        texts=tuple(r.text or "" for r in records) if is_text else None,
        clean=clean,
        provenance="ingested",
    )
    logger.info(
        f"Loaded {len(dataset)} examples from {path} "
        f"(K={k}, {'text' if is_text else f'd={dim}'})"
    )
    return dataset


def dataset_to_jsonl(dataset: Dataset) -> str:
    lines = []
    for i, example_id in enumerate(dataset.ids):
        record = ExampleRecord(
            id=example_id,
            label=int(dataset.labels[i]),
            features=None if dataset.features is None else dataset.features[i].tolist(),
            text=None if dataset.texts is None else dataset.texts[i],
            clean=None if dataset.clean is None else bool(dataset.clean[i]),
        )
        lines.append(record.model_dump_json(exclude_none=True))
    return "\n".join(lines) + "\n"


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write JSONL, or header-less CSV when the path ends in .csv (vector data only)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".csv":
        if dataset.features is None:
            raise DatasetError("CSV output requires vector features")
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            for i, example_id in enumerate(dataset.ids):
                writer.writerow(
                    [example_id, int(dataset.labels[i]), *map(repr, dataset.features[i].tolist())]
                )
    else:
        path.write_text(dataset_to_jsonl(dataset), encoding="utf-8")
    logger.info(f"Saved {len(dataset)} examples to {path}")


def _class_means(num_classes: int, dim: int, separation: float) -> FloatArray:
    if num_classes <= dim:
        # Scaled simplex corners: every pair sits exactly `separation` apart.
        means = np.eye(num_classes, dim) * (separation / math.sqrt(2.0))
    else:
        means = np.zeros((num_classes, dim))
        means[:, 0] = np.arange(num_classes) * separation
    return means - means.mean(axis=0)


def make_gaussian_blobs(
    n_per_class: int,
    num_classes: int,
    dim: int,
    separation: float,
    seed: int,
    id_prefix: str = "blob",
) -> Dataset:
    """
    Generate K isotropic unit-variance Gaussian clusters.

    Class means are pairwise at least `separation` apart and centred on the
    origin. Every example is flagged clean; output is a pure function of the
    arguments.
    """
    if n_per_class < 1 or num_classes < 1 or dim < 1:
        raise ValueError("n_per_class, num_classes and dim must all be >= 1")
    if separation <= 0:
        raise ValueError(f"separation must be positive, got {separation}")

    rng = np.random.default_rng(seed)
    means = _class_means(num_classes, dim, separation)
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), n_per_class)
    features = means[labels] + rng.standard_normal((labels.size, dim))
    order = rng.permutation(labels.size)
    n = labels.size
    width = len(str(n - 1))
    return Dataset(
        ids=tuple(f"{id_prefix}-{i:0{width}d}" for i in range(n)),
        labels=labels[order],
        num_classes=num_classes,
        features=features[order],
        clean=np.ones(n, dtype=np.bool_),
        provenance="synthetic",
    )


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """
    Shuffle and partition into disjoint (train, validation) datasets.

    The training side receives round(train_fraction * N) examples (halves round up).

    Raises:
        DatasetError: If the dataset is empty or either side would be empty
    """
    n = len(dataset)
    if n == 0:
        raise DatasetError("cannot split an empty dataset")
    n_train = math.floor(spec.train_fraction * n + 0.5)
    if n_train <= 0 or n_train >= n:
        raise DatasetError(
            f"split of {n} examples at fraction {spec.train_fraction} leaves a side empty"
        )
    order = np.random.default_rng(spec.seed).permutation(n)
    train, validation = dataset.subset(order[:n_train]), dataset.subset(order[n_train:])
    logger.info(f"Split {n} examples -> train={len(train)}, validation={len(validation)}")
    return train, validation
