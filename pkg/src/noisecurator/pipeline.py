"""End-to-end run: data -> noise -> split -> reweight -> subset -> train -> evaluate -> report."""

import hashlib
import json
import time
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .bilevel import run_bilevel, weights_to_jsonl
from .config import RunConfig, config_hash
from .data import Dataset, load_dataset, make_gaussian_blobs, split
from .errors import ArtifactExistsError, StageError
from .evaluation import (
    compare_denoisers,
    cross_loss_curves,
    flat_fraction,
    loss_histograms,
    loss_surface,
    separation_auroc,
    subset_diversity,
    weight_histogram,
)
from .interface import SubsetBudget
from .logger import get_logger
from .model import evaluate_accuracy, featurize, init_params, params_to_bytes
from .noise import clean_counterpart, inject_noise
from .report import ArtifactRef, RunReport, emit_report
from .sampling import sample_subset
from .storage import ArtifactStore, open_store
from .training import train_classifier

logger = get_logger(__name__)

ARTIFACTS = (
    ("weights", ".jsonl"),
    ("trace", ".json"),
    ("subset", ".txt"),
    ("params", ".bin"),
    ("params", ".json"),
    ("metrics", ".json"),
    ("report", ".json"),
    ("manifest", ".json"),
)


def artifact_name(stem: str, digest: str, suffix: str) -> str:
    return f"{stem}-{digest}{suffix}"


def planned_artifacts(config: RunConfig) -> list[str]:
    digest = config_hash(config)
    return [artifact_name(stem, digest, suffix) for stem, suffix in ARTIFACTS]


def describe_plan(config: RunConfig) -> str:
    """Human-readable stage plan printed by --dry-run."""
    digest = config_hash(config)
    data = config.train_path or (
        f"gaussian blobs ({config.blobs_classes} classes x {config.blobs_per_class}, "
        f"d={config.blobs_dim}, separation={config.blobs_separation})"
    )
    lines = [
        f"config hash: {digest}",
        f"output: {config.output_dir}",
        f"1. load         {data}",
        f"2. featurize    {config.feature_mode}",
        f"3. noise        {config.noise_model}"
        + ("" if config.noise_model == "none" else f" (eta={config.noise_eta})"),
        f"4. split        {config.val_path or f'train_fraction={config.train_fraction}'}"
        + ("" if config.val_noise else " (gold validation)"),
        f"5. reweight     T={config.outer_iterations}, outer={config.outer_loss}/"
        f"{config.outer_optimizer} step={config.outer_step}",
        f"6. sample       budget={config.budget or 'sum of weights'}",
        f"7. train        CE, {config.eval_epochs} epochs on the sampled subset",
        "8. evaluate     accuracy, AUROC"
        + (", baselines" if config.compare_baselines else "")
        + (", loss surface" if config.run_surface else "")
        + (", loss curves" if config.run_curves else ""),
        "9. report",
        "artifacts:",
        *(f"  {name}" for name in planned_artifacts(config)),
    ]
    return "\n".join(lines) + "\n"


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Log a pipeline stage and wrap any failure in StageError."""
    logger.info(f"Stage '{name}' started")
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logger.error(f"Stage '{name}' failed: {e}")
        raise StageError(name, e) from e
    logger.info(f"Stage '{name}' finished in {time.perf_counter() - start:.2f}s")


@dataclass
class ArtifactWriter:
    """Writes hash-named artifacts and remembers their SHA-256 for the manifest."""

    store: ArtifactStore
    digest: str
    refs: list[ArtifactRef] = field(default_factory=list)

    def write(self, stem: str, suffix: str, data: bytes, content_type: str) -> str:
        name = artifact_name(stem, self.digest, suffix)
        self.store.write_bytes(name, data, content_type)
        self.refs.append(
            ArtifactRef(
                name=name,
                location=self.store.location(name),
                sha256=hashlib.sha256(data).hexdigest(),
            )
        )
        logger.info(f"Wrote {self.store.location(name)}")
        return name


def _json_bytes(payload: object) -> bytes:
    return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")


def _load_pool(config: RunConfig) -> Dataset:
    if config.train_path:
        return load_dataset(config.train_path, num_classes=config.num_classes)
    return make_gaussian_blobs(
        config.blobs_per_class,
        config.blobs_classes,
        config.blobs_dim,
        config.blobs_separation,
        config.seed,
    )


def _load_test(config: RunConfig, pool: Dataset) -> Dataset:
    if config.test_path:
        return load_dataset(config.test_path, num_classes=pool.num_classes)
    if config.train_path:
        raise ValueError("test_path is required when train_path is given")
    return make_gaussian_blobs(
        config.test_per_class,
        config.blobs_classes,
        config.blobs_dim,
        config.blobs_separation,
        config.seed + 1,
        id_prefix="test",
    )


def run_pipeline(
    config: RunConfig,
    *,
    force: bool = False,
    dry_run: bool = False,
    store: ArtifactStore | None = None,
) -> RunReport | None:
    """
    Run every stage and write hash-named artifacts plus a manifest.

    Args:
        config: Resolved run configuration
        force: Overwrite artifacts left by an earlier run with the same config
        dry_run: Only print the stage plan to stdout
        store: Artifact store; defaults to one opened on `config.output_dir`

    Returns:
        The run report, or None for a dry run

    Raises:
        ArtifactExistsError: If artifacts exist and `force` is not set
        StageError: Naming the stage that failed
    """
    if dry_run:
        print(describe_plan(config), end="")
        return None

    start_time = time.perf_counter()
    digest = config_hash(config)
    store = store or open_store(config.output_dir)
    existing = [name for name in planned_artifacts(config) if store.exists(name)]
    if existing and not force:
        raise ArtifactExistsError(
            f"{len(existing)} artifacts already exist (e.g. {store.location(existing[0])}); "
            "pass --force to overwrite"
        )
    writer = ArtifactWriter(store, digest)
    bilevel_config = config.bilevel_config()
    report = RunReport(config=config.model_dump(mode="json"), config_hash=digest)
    logger.info(f"Starting pipeline run {digest} -> {config.output_dir}")

    with threadpool_limits(limits=config.threads):
        with stage("load"):
            pool = _load_pool(config)
            test = _load_test(config, pool)
            validation_input = (
                load_dataset(config.val_path, num_classes=pool.num_classes)
                if config.val_path
                else None
            )
            texts = dict(zip(pool.ids, pool.texts, strict=True)) if pool.texts else None

        with stage("featurize"):
            spec = config.feature_spec(pool.feature_dim)
            pool = featurize(pool, spec)
            test = featurize(test, spec)
            if validation_input is not None:
                validation_input = featurize(validation_input, spec)

        with stage("noise"):
            noise = config.noise_spec()
            clean_pool = pool
            if noise is not None:
                pool = inject_noise(pool, noise)
                if validation_input is not None and config.val_noise:
                    val_noise = noise.model_copy(update={"seed": noise.seed + 1})
                    validation_input = inject_noise(validation_input, val_noise)

        with stage("split"):
            if validation_input is None:
                train, validation = split(pool, config.split_spec())
                if not config.val_noise:
                    validation = clean_counterpart(validation, clean_pool)
            else:
                train, validation = pool, validation_input

        with stage("reweight"):
            weights, trace = run_bilevel(train, validation, bilevel_config)
            report.trace = trace.records
            report.weight_histogram = weight_histogram(weights)
            writer.write(
                "weights",
                ".jsonl",
                weights_to_jsonl(train.ids, weights).encode("utf-8"),
                "application/x-ndjson",
            )
            records = [record.model_dump(mode="json") for record in trace.records]
            writer.write("trace", ".json", _json_bytes(records), "application/json")

        with stage("sample"):
            budget = config.budget or max(1, int(round(float(weights.values.sum()))))
            budget = min(budget, len(train))
            subset = sample_subset(weights, SubsetBudget(size=budget), config.seed)
            if not subset:
                raise ValueError("sampled subset is empty")
            ids_text = "".join(f"{train.ids[i]}\n" for i in subset)
            writer.write("subset", ".txt", ids_text.encode("utf-8"), "text/plain")
            report.subset_sizes = {"budget": budget, "sampled": len(subset)}

        with stage("train"):
            assert train.feature_dim is not None
            subset_data = train.subset(subset).without_clean_flags()
            result = train_classifier(
                subset_data,
                "ce",
                init_params(
                    config.arch,
                    train.num_classes,
                    train.feature_dim,
                    config.hidden_width,
                    config.seed,
                ),
                epochs=config.eval_epochs,
                step_size=config.inner_step,
                batch_size=config.inner_batch_size,
                optimizer=config.inner_optimizer,
                rng=config.seed,
            )
            payload, meta = params_to_bytes(result.params)
            writer.write("params", ".bin", payload, "application/octet-stream")
            writer.write("params", ".json", _json_bytes(meta), "application/json")

        with stage("evaluate"):
            report.accuracies["subset"] = evaluate_accuracy(result.params, test)
            if train.clean is not None and 0 < train.clean.sum() < len(train):
                report.noisy_fraction = float(1.0 - train.clean.mean())
                report.auroc["bilevel"] = separation_auroc(weights, train.clean)
                report.loss_histograms = loss_histograms(train, bilevel_config)
                if config.compare_baselines:
                    comparison = compare_denoisers(
                        train,
                        test,
                        weights,
                        bilevel_config,
                        epochs=config.eval_epochs,
                        baseline_epochs=config.baseline_epochs,
                        seed=config.seed,
                    )
                    report.comparison = comparison
                    report.accuracies.update(comparison.accuracies)
                    report.auroc.update(comparison.aurocs)
            if config.run_surface:
                report.surface = loss_surface(
                    result.params,
                    test,
                    ("ce", bilevel_config.outer_loss),
                    steps=config.surface_steps,
                    seed=config.seed,
                    directions=config.surface_directions,
                )
                report.flat_fractions = {
                    kind: flat_fraction(report.surface, kind) for kind in report.surface.losses
                }
            if config.run_curves:
                report.cross_loss_curves = {
                    kind: cross_loss_curves(
                        train, bilevel_config, kind, epochs=config.curve_epochs
                    )
                    for kind in ("ce", "rce")
                }
            if texts is not None:
                k = min(len(subset), len(train) // 2)
                if k >= 2:
                    with_texts = Dataset(
                        ids=train.ids,
                        labels=train.labels,
                        num_classes=train.num_classes,
                        texts=tuple(texts[example_id] for example_id in train.ids),
                    )
                    report.diversity = subset_diversity(
                        with_texts, weights, k, config.self_bleu_sample, config.seed
                    )
            metrics = {
                "accuracies": report.accuracies,
                "auroc": report.auroc,
                "subset_sizes": report.subset_sizes,
            }
            writer.write("metrics", ".json", _json_bytes(metrics), "application/json")

        with stage("report"):
            report.artifacts = list(writer.refs)
            writer.write("report", ".json", emit_report(report).encode("utf-8"), "application/json")
            manifest = {
                "config_hash": digest,
                "artifacts": {ref.name: ref.sha256 for ref in writer.refs},
            }
            writer.write("manifest", ".json", _json_bytes(manifest), "application/json")

    processing_time = time.perf_counter() - start_time
    logger.info(
        f"PIPELINE_SUMMARY: "
        f"config_hash={digest}, "
        f"train={len(train)}, "
        f"validation={len(validation)}, "
        f"subset={len(subset)}, "
        f"test_accuracy={report.accuracies['subset']:.4f}, "
        f"auroc={report.auroc.get('bilevel', float('nan')):.4f}, "
        f"mean_weight={float(np.mean(weights.values)):.4f}, "
        f"processing_time={processing_time:.2f}s"
    )
    return report

