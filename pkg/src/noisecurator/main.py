"""Command-line entry point for noise curation."""

import argparse
import hashlib
import json
import sys
import types
import typing
from pathlib import Path
from typing import Any

from threadpoolctl import threadpool_limits

from .baselines import confidence_filter, small_loss_filter
from .bilevel import run_bilevel, weights_from_jsonl, weights_to_jsonl
from .config import RunConfig, config_hash, parse_config
from .data import Dataset, load_dataset, make_gaussian_blobs, save_dataset
from .evaluation import flat_fraction, loss_surface, separation_auroc
from .interface import NoiseKind, SampleWeights, SubsetBudget
from .logger import get_logger, set_verbosity
from .losses import as_loss_spec
from .model import evaluate_accuracy, featurize, init_params, load_params, save_params
from .noise import inject_noise
from .pipeline import run_pipeline
from .report import emit_report, load_report, report_schema
from .sampling import sample_subset
from .training import train_classifier

logger = get_logger(__name__)

NOISE_MODELS: dict[str, NoiseKind] = {
    "uniform": "uniform",
    "class": "class_dependent",
    "class_dependent": "class_dependent",
    "instance": "instance_dependent",
    "instance_dependent": "instance_dependent",
}
# Flags that subcommands define themselves or take from the global options.
RESERVED_FIELDS = {"threads"}


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in {"1", "true", "yes", "on"}:
        return True
    if lowered in {"0", "false", "no", "off"}:
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _is_bool(annotation: Any) -> bool:
    if annotation is bool:
        return True
    if isinstance(annotation, types.UnionType) or typing.get_origin(annotation) is typing.Union:
        return bool in typing.get_args(annotation)
    return False


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    """Expose every RunConfig field as --field-name; values are validated by RunConfig."""
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    group = parser.add_argument_group("configuration overrides")
    for name, info in RunConfig.model_fields.items():
        if name in RESERVED_FIELDS:
            continue
        default = "required" if info.is_required() else f"default: {info.default}"
        group.add_argument(
            f"--{name.replace('_', '-')}",
            dest=name,
            type=_parse_bool if _is_bool(info.annotation) else str,
            default=None,
            help=f"{info.description or name} ({default})",
        )


def resolve_config(args: argparse.Namespace, output_dir: str = ".") -> RunConfig:
    overrides = {name: getattr(args, name, None) for name in RunConfig.model_fields}
    overrides["threads"] = args.threads
    if args.command != "pipeline" and overrides.get("output_dir") is None:
        overrides["output_dir"] = output_dir
    return parse_config(args.config, overrides)


def command_config(args: argparse.Namespace, **values: Any) -> RunConfig:
    """RunConfig for the stand-alone commands; an unset --seed falls back to NOISECURATOR_SEED."""
    return parse_config(None, {"output_dir": ".", "seed": args.seed, **values})


def stamp(path: Path, command: str, config: RunConfig) -> Path:
    """Write `<path>.meta.json` naming the config hash and seed `path` was produced under."""
    digest = config_hash(config)
    meta = {
        "command": command,
        "config_hash": digest,
        "seed": config.seed,
        "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
    }
    meta_path = path.with_name(f"{path.name}.meta.json")
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path} (config hash {digest})")
    return meta_path


def _load_vectors(path: Path, config: RunConfig, num_classes: int | None = None) -> Dataset:
    dataset = load_dataset(path, num_classes=num_classes or config.num_classes)
    return featurize(dataset, config.feature_spec(dataset.feature_dim))


def _write_ids(path: Path, ids: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{example_id}\n" for example_id in ids), encoding="utf-8")
    logger.info(f"Wrote {len(ids)} ids to {path}")


def _read_ids(path: Path) -> list[str]:
    return [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def cmd_gen_blobs(args: argparse.Namespace) -> int:
    config = command_config(
        args,
        blobs_per_class=args.n_per_class,
        blobs_classes=args.classes,
        blobs_dim=args.dim,
        blobs_separation=args.separation,
    )
    dataset = make_gaussian_blobs(
        config.blobs_per_class,
        config.blobs_classes,
        config.blobs_dim,
        config.blobs_separation,
        config.seed,
    )
    save_dataset(dataset, args.out)
    stamp(args.out, "gen-blobs", config)
    return 0


def cmd_inject_noise(args: argparse.Namespace) -> int:
    config = command_config(
        args,
        num_classes=args.num_classes,
        noise_model=NOISE_MODELS[args.model],
        noise_eta=args.eta,
        noise_matrix=args.matrix,
        noise_eta_max=args.eta_max,
        noise_tau=args.tau,
    )
    spec = config.noise_spec()
    assert spec is not None
    dataset = load_dataset(args.input, num_classes=config.num_classes)
    save_dataset(inject_noise(dataset, spec), args.out)
    stamp(args.out, "inject-noise", config)
    return 0


def cmd_reweight(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    train = _load_vectors(args.train, config)
    validation = _load_vectors(args.val, config, train.num_classes)
    weights, trace = run_bilevel(train, validation, config.bilevel_config())
    args.out_weights.parent.mkdir(parents=True, exist_ok=True)
    args.out_weights.write_text(weights_to_jsonl(train.ids, weights), encoding="utf-8")
    if args.out_trace:
        args.out_trace.parent.mkdir(parents=True, exist_ok=True)
        args.out_trace.write_text(
            json.dumps([r.model_dump(mode="json") for r in trace.records], indent=2) + "\n",
            encoding="utf-8",
        )
        stamp(args.out_trace, "reweight", config)
    logger.info(f"Wrote {len(weights)} weights to {args.out_weights}")
    stamp(args.out_weights, "reweight", config)
    return 0


def _weights_file(path: Path) -> tuple[list[str], SampleWeights]:
    text = path.read_text(encoding="utf-8")
    ids = [json.loads(line)["id"] for line in text.splitlines() if line.strip()]
    return ids, weights_from_jsonl(text)


def cmd_sample_subset(args: argparse.Namespace) -> int:
    ids, weights = _weights_file(args.weights)
    config = command_config(args, budget=args.budget)
    budget = SubsetBudget(size=config.budget) if config.budget else None
    chosen = sample_subset(weights, budget, config.seed)
    _write_ids(args.out, [ids[i] for i in chosen])
    stamp(args.out, "sample-subset", config)
    return 0


def cmd_filter(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    train = _load_vectors(args.train, config)
    bilevel_config = config.bilevel_config()
    if args.method == "confidence":
        report = confidence_filter(train, bilevel_config, args.keep, epochs=config.baseline_epochs)
    else:
        report = small_loss_filter(train, bilevel_config, args.keep)
    _write_ids(args.out, [train.ids[i] for i in report.kept])
    stamp(args.out, "filter", config)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    train = _load_vectors(args.train, config)
    weights = None
    if args.weights:
        weights = weights_from_jsonl(args.weights.read_text(encoding="utf-8"), train)
    if args.subset:
        position = train.index_of()
        keep = [position[example_id] for example_id in _read_ids(args.subset)]
        train = train.subset(keep)
        if weights is not None:
            weights = SampleWeights(weights.values[keep])
    assert train.feature_dim is not None
    loss = as_loss_spec(args.loss)
    if loss.kind == "rce":
        loss = loss.model_copy(update={"a": config.rce_a})
    result = train_classifier(
        train.without_clean_flags(),
        loss,
        init_params(
            config.arch, train.num_classes, train.feature_dim, config.hidden_width, config.seed
        ),
        epochs=args.epochs or config.eval_epochs,
        step_size=config.inner_step,
        batch_size=config.inner_batch_size,
        optimizer=config.inner_optimizer,
        weights=None if weights is None else weights.values,
        rng=config.seed,
    )
    save_params(result.params, args.out)
    stamp(args.out, "train", config)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    params = load_params(args.params)
    dataset = _load_vectors(args.data, config, params.num_classes)
    metrics: dict[str, Any] = {
        "examples": len(dataset),
        "accuracy": evaluate_accuracy(params, dataset),
    }
    if args.weights and dataset.clean is not None:
        weights = weights_from_jsonl(args.weights.read_text(encoding="utf-8"), dataset)
        metrics["auroc"] = separation_auroc(weights, dataset.clean)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def cmd_surface(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    params = load_params(args.params)
    dataset = _load_vectors(args.data, config, params.num_classes)
    kinds = [as_loss_spec(kind) for kind in args.losses.split(",")]
    kinds = [
        spec.model_copy(update={"a": config.rce_a}) if spec.kind == "rce" else spec
        for spec in kinds
    ]
    probe = loss_surface(
        params,
        dataset,
        kinds,
        steps=args.steps,
        extent=args.extent,
        seed=config.seed,
        directions=config.surface_directions,
    )
    for kind in probe.losses:
        logger.info(f"{kind}: flat-cell fraction {flat_fraction(probe, kind):.3f}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(probe.model_dump_json(indent=2) + "\n", encoding="utf-8")
    stamp(args.out, "surface", config)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    if args.print_schema:
        print(report_schema(), end="")
        return 0
    if not args.input:
        raise ValueError("report needs --in or --print-schema")
    text = emit_report(load_report(args.input.read_text(encoding="utf-8")))
    if args.out:
        args.out.write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    run_pipeline(config, force=args.force, dry_run=args.dry_run)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisecurator",
        description="Learn per-sample weights for noisily labelled data and sample clean subsets",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("--threads", type=int, help="cap BLAS/OpenMP threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-blobs", help="generate Gaussian blobs")
    p.add_argument("--n-per-class", type=int, default=500)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--separation", type=float, default=5.0)
    p.add_argument("--seed", type=int, help="default: NOISECURATOR_SEED or 0")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen_blobs)

    p = sub.add_parser("inject-noise", help="corrupt labels of a dataset")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--model", choices=sorted(NOISE_MODELS), default="uniform")
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--matrix", help="row-stochastic matrix, e.g. '0.8,0.2;0.3,0.7'")
    p.add_argument("--eta-max", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--num-classes", type=int)
    p.add_argument("--seed", type=int, help="default: NOISECURATOR_SEED or 0")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_inject_noise)

    p = sub.add_parser("reweight", help="learn sample weights by bilevel optimization")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--val", type=Path, required=True)
    p.add_argument("--out-weights", type=Path, required=True)
    p.add_argument("--out-trace", type=Path)
    add_config_flags(p)
    p.set_defaults(func=cmd_reweight)

    p = sub.add_parser("sample-subset", help="draw a clean subset from weights")
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--budget", type=int, help="expected subset size D")
    p.add_argument("--seed", type=int, help="default: NOISECURATOR_SEED or 0")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_sample_subset)

    p = sub.add_parser("filter", help="baseline denoisers")
    p.add_argument("--method", choices=["confidence", "small-loss"], required=True)
    p.add_argument("--keep", type=int, required=True)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    add_config_flags(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("train", help="train the classifier")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--loss", choices=["ce", "rce", "mae"], default="ce")
    p.add_argument("--weights", type=Path, help="per-example weights (JSONL)")
    p.add_argument("--subset", type=Path, help="ids file restricting the training set")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", type=Path, required=True)
    add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="accuracy (and weight AUROC) on a dataset")
    p.add_argument("--params", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--weights", type=Path)
    add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("surface", help="loss surface around trained parameters")
    p.add_argument("--params", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--losses", default="ce,rce")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--extent", type=float, default=1.0)
    p.add_argument("--out", type=Path, required=True)
    add_config_flags(p)
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("report", help="validate and re-emit a run report")
    p.add_argument("--in", dest="input", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--print-schema", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--force", action="store_true", help="overwrite existing artifacts")
    p.add_argument("--dry-run", action="store_true", help="print the stage plan and exit")
    add_config_flags(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    set_verbosity(args.verbose)
    try:
        with threadpool_limits(limits=args.threads):
            status: int = args.func(args)
        return status
    except Exception as e:
        logger.error(f"noisecurator {args.command} failed: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
