import hashlib
import json
from pathlib import Path
from typing import Any

import pytest

from noisecurator import pipeline
from noisecurator.bilevel import run_bilevel
from noisecurator.config import RunConfig, config_hash, parse_config
from noisecurator.data import Dataset, make_gaussian_blobs, save_dataset
from noisecurator.errors import ArtifactExistsError, StageError
from noisecurator.interface import NoiseSpec
from noisecurator.noise import inject_noise
from noisecurator.pipeline import planned_artifacts, run_pipeline
from noisecurator.report import load_report
from noisecurator.storage import LocalArtifactStore

SMALL_RUN = {
    "blobs_per_class": 40,
    "test_per_class": 20,
    "outer_iterations": 2,
    "inner_batch_size": 16,
    "eval_epochs": 3,
    "baseline_epochs": 1,
    "surface_steps": 2,
    "curve_epochs": 2,
}


def _config(output_dir: Path, **values: Any) -> RunConfig:
    return parse_config(overrides={"output_dir": str(output_dir), **SMALL_RUN, **values})


def test_dry_run_writes_nothing(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    config = _config(tmp_path / "out")
    assert run_pipeline(config, dry_run=True) is None
    out = capsys.readouterr().out
    assert f"config hash: {config_hash(config)}" in out
    assert all(name in out for name in planned_artifacts(config))
    assert not (tmp_path / "out").exists()


def test_blobs_run_writes_every_artifact(tmp_path: Path) -> None:
    config = _config(tmp_path)
    report = run_pipeline(config)
    assert report is not None
    assert len(report.trace) == 2
    assert sum(report.weight_histogram) == 64
    assert 0.0 <= report.accuracies["subset"] <= 1.0
    assert "bilevel" in report.auroc
    assert report.noisy_fraction is not None and 0.0 < report.noisy_fraction < 1.0
    assert report.comparison is not None
    assert report.surface is not None
    assert set(report.flat_fractions) == {"ce", "rce"}
    assert set(report.cross_loss_curves) == {"ce", "rce"}
    assert report.diversity is None

    for name in planned_artifacts(config):
        assert (tmp_path / name).is_file()
    digest = config_hash(config)
    manifest = json.loads((tmp_path / f"manifest-{digest}.json").read_text())
    assert manifest["config_hash"] == digest
    for name, sha in manifest["artifacts"].items():
        assert hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() == sha
    saved = load_report((tmp_path / f"report-{digest}.json").read_text())
    assert saved.config_hash == digest
    trace = json.loads((tmp_path / f"trace-{digest}.json").read_text())
    assert [record["iteration"] for record in trace] == [1, 2]


def test_rerun_needs_force(tmp_path: Path) -> None:
    config = _config(tmp_path, run_surface=False, run_curves=False, compare_baselines=False)
    first = run_pipeline(config)
    with pytest.raises(ArtifactExistsError):
        run_pipeline(config)
    again = run_pipeline(config, force=True)
    assert first is not None and again is not None
    assert again.accuracies == first.accuracies


def test_reruns_are_reproducible(tmp_path: Path) -> None:
    options = {"run_surface": False, "run_curves": False, "compare_baselines": False}
    run_pipeline(_config(tmp_path / "a", **options))
    run_pipeline(_config(tmp_path / "b", **options))
    digest = config_hash(_config(tmp_path / "a", **options))
    for stem in ("weights-", "subset-", "params-"):
        for path in (tmp_path / "a").glob(f"{stem}{digest}*"):
            assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()


def test_explicit_store(tmp_path: Path) -> None:
    config = _config(tmp_path / "unused", run_surface=False, run_curves=False)
    run_pipeline(config, store=LocalArtifactStore(tmp_path / "store"))
    assert (tmp_path / "store" / f"weights-{config_hash(config)}.jsonl").is_file()
    assert not (tmp_path / "unused").exists()


def test_train_file_without_test_file_fails_in_load(tmp_path: Path) -> None:
    train_path = tmp_path / "train.jsonl"
    save_dataset(make_gaussian_blobs(10, 2, 2, 5.0, seed=0), train_path)
    config = _config(tmp_path / "out", train_path=str(train_path))
    with pytest.raises(StageError) as info:
        run_pipeline(config)
    assert info.value.stage == "load"


def _write_texts(path: Path, count: int, seed: int) -> None:
    positive = ["good", "great", "fine", "lovely", "superb"]
    negative = ["bad", "awful", "poor", "dull", "boring"]
    with path.open("w", encoding="utf-8") as f:
        for i in range(count):
            label = i % 2
            words = positive if label == 0 else negative
            text = f"{words[i % 5]} {words[(i + seed) % 5]} film number {i}"
            f.write(json.dumps({"id": f"s{seed}-{i}", "label": label, "text": text}) + "\n")


def test_text_run_reports_diversity(tmp_path: Path) -> None:
    _write_texts(tmp_path / "train.jsonl", 60, seed=1)
    _write_texts(tmp_path / "test.jsonl", 20, seed=2)
    config = _config(
        tmp_path / "out",
        train_path=str(tmp_path / "train.jsonl"),
        test_path=str(tmp_path / "test.jsonl"),
        feature_mode="hashed-ngram",
        feature_dim=32,
        ngram_order=2,
        run_surface=False,
        run_curves=False,
        self_bleu_sample=10,
    )
    report = run_pipeline(config)
    assert report is not None
    assert report.diversity is not None
    assert 0.0 <= report.diversity.top <= 1.0
    assert 0.0 <= report.diversity.bottom <= 1.0


def _record_validation(monkeypatch: pytest.MonkeyPatch) -> list[Dataset]:
    seen: list[Dataset] = []

    def recording(train: Dataset, validation: Dataset, *args: Any, **kwargs: Any) -> Any:
        seen.append(validation)
        return run_bilevel(train, validation, *args, **kwargs)

    monkeypatch.setattr(pipeline, "run_bilevel", recording)
    return seen


def _record_noise_seeds(monkeypatch: pytest.MonkeyPatch) -> list[int]:
    seeds: list[int] = []

    def recording(dataset: Dataset, spec: NoiseSpec) -> Dataset:
        seeds.append(spec.seed)
        return inject_noise(dataset, spec)

    monkeypatch.setattr(pipeline, "inject_noise", recording)
    return seeds


FAST = {"run_surface": False, "run_curves": False, "compare_baselines": False}


def test_gold_validation_keeps_clean_split_labels(
    tmp_path: Path, monkeypatch: pytest.MonkeyPatch, capsys: pytest.CaptureFixture[str]
) -> None:
    seen = _record_validation(monkeypatch)
    config = _config(tmp_path, val_noise=False, seed=3, **FAST)
    run_pipeline(config)
    (validation,) = seen
    assert validation.clean is not None and validation.clean.all()
    clean = make_gaussian_blobs(40, 2, 2, 5.0, seed=3)
    index = clean.index_of()
    assert [int(clean.labels[index[i]]) for i in validation.ids] == validation.labels.tolist()

    run_pipeline(config, dry_run=True)
    assert "(gold validation)" in capsys.readouterr().out
    assert config_hash(config) != config_hash(_config(tmp_path, seed=3, **FAST))


def test_validation_file_noise_uses_its_own_seed(
    tmp_path: Path, monkeypatch: pytest.MonkeyPatch
) -> None:
    val_path = tmp_path / "val.jsonl"
    save_dataset(make_gaussian_blobs(10, 2, 2, 5.0, seed=9, id_prefix="val"), val_path)
    seeds = _record_noise_seeds(monkeypatch)
    run_pipeline(_config(tmp_path / "noisy", val_path=str(val_path), seed=4, **FAST))
    assert seeds == [4, 5]

    seeds.clear()
    seen = _record_validation(monkeypatch)
    run_pipeline(
        _config(tmp_path / "gold", val_path=str(val_path), seed=4, val_noise=False, **FAST)
    )
    assert seeds == [4]
    (validation,) = seen
    original = make_gaussian_blobs(10, 2, 2, 5.0, seed=9, id_prefix="val")
    assert validation.labels.tolist() == original.labels.tolist()
