"""Experiment runner CLI.

Subcommands: ``gen-data``, ``train``, ``evaluate``, ``compare``, ``plot``.
Runs are driven by a JSON config file validated against a strict schema
(unknown keys rejected); ``--dotted.path value`` flags override individual
config fields. Exit codes: 0 success, 2 config/schema violation, 3 strategy
infeasibility, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .data import SplitSpec, generate_blobs, load_dataset, save_dataset, stratified_split
from .exceptions import ConfigError, InfeasibleStrategyError, SuperConError
from .metrics import evaluate_predictions
from .networks import load_checkpoint
from .plots import confusion_svg, curves_svg, scatter_svg
from .report import write_run_manifest, write_run_report
from .training import STRATEGIES, TrainConfig, predict_proba, run_strategy

log = logging.getLogger("supercon")

TRANSFORM_NAMES = ["horizontal_flip", "grayscale", "color_distortion", "gaussian_blur", "gaussian_noise"]

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "strategy": {"enum": list(STRATEGIES)},
        "seed": {"type": "integer", "minimum": 0},
        "batch_size": {"type": "integer", "minimum": 2},
        "stage1_epochs": {"type": ["integer", "null"], "minimum": 1},
        "stage2_epochs": {"type": "integer", "minimum": 1},
        "stage1_lr": {"type": "number", "exclusiveMinimum": 0},
        "stage2_lr": {"type": "number", "exclusiveMinimum": 0},
        "stage2_augment": {"type": "boolean"},
        "rus_phase1_epochs": {"type": ["integer", "null"], "minimum": 1},
        "supcon": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "temperature": {"type": "number", "exclusiveMinimum": 0},
                "denominator_variant": {"enum": ["all_non_anchor", "negatives_only"]},
                "anchor_reduction": {"enum": ["mean", "sum"]},
            },
        },
        "focal": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "gamma": {"type": "number", "minimum": 0},
                "minority_class_id": {"type": ["integer", "null"], "minimum": 0},
                "alpha_enabled": {"type": "boolean"},
            },
        },
        "augment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "transforms": {"type": "array", "items": {"enum": TRANSFORM_NAMES}},
                "probabilities": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0, "maximum": 1}},
                "jitter_strength": {"type": "number", "minimum": 0},
                "blur_radius": {"type": "integer", "minimum": 1},
                "blur_sigma": {"type": "number", "exclusiveMinimum": 0},
                "noise_sigma": {"type": "number", "minimum": 0},
                "scale_jitter": {"type": "number", "minimum": 0},
            },
        },
        "architecture": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "conv_channels": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "conv_kernel": {"type": "integer", "minimum": 1},
                "conv_stride": {"type": "integer", "minimum": 1},
                "conv_padding": {"type": "integer", "minimum": 0},
                "conv_dense": {"type": "integer", "minimum": 1},
                "projection_dim": {"type": "integer", "minimum": 1},
                "projection_hidden": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "path": {"type": "string"},
                "generate": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["counts"],
                    "properties": {
                        "counts": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2},
                        "dims": {"type": "integer", "minimum": 1},
                        "separation": {"type": "number", "exclusiveMinimum": 0},
                        "spread": {"type": "number", "exclusiveMinimum": 0},
                        "seed": {"type": "integer", "minimum": 0},
                        "shifted_minority_extra": {"type": "integer", "minimum": 0},
                    },
                },
                "train_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "split_seed": {"type": "integer", "minimum": 0},
            },
        },
        "output_dir": {"type": "string"},
    },
}


class CliError(Exception):
    def __init__(self, message: str, exit_code: int = 1):
        super().__init__(message)
        self.exit_code = exit_code


def _emit_error(err: Exception, exit_code: int, json_errors: bool) -> int:
    if json_errors:
        envelope = {"error": {"type": type(err).__name__, "message": str(err), "exit_code": exit_code}}
        print(json.dumps(envelope), file=sys.stderr)
    else:
        print(f"error: {err}", file=sys.stderr)
    return exit_code


def load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    config_path = Path(path)
    if not config_path.exists():
        raise CliError(f"config file not found: {path}", exit_code=2)
    try:
        payload = json.loads(config_path.read_text())
    except json.JSONDecodeError as err:
        raise CliError(f"config file {path} is not valid JSON: {err}", exit_code=2) from err
    if not isinstance(payload, dict):
        raise CliError(f"config file {path} must hold a JSON object", exit_code=2)
    return payload


def parse_overrides(tokens: list[str]) -> dict:
    """Parse ``--dotted.path value`` (or ``--dotted.path=value``) override flags.

    A trailing ``-off``/``-on`` sets ``<path>_enabled`` false/true, e.g.
    ``--focal.alpha-off``. Values are parsed as JSON literals when possible.
    """
    overrides: dict[str, object] = {}
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--"):
            raise CliError(f"unexpected argument {token!r}", exit_code=2)
        key = token[2:]
        if key.endswith("-off") or key.endswith("-on"):
            overrides[key.rsplit("-", 1)[0] + "_enabled"] = key.endswith("-on")
            i += 1
            continue
        if "=" in key:
            key, raw = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise CliError(f"override {token} is missing a value", exit_code=2)
            raw = tokens[i + 1]
            i += 2
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        overrides[key] = value
    return overrides


def apply_override(payload: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = payload
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise CliError(f"cannot override {dotted}: {part} is not an object", exit_code=2)
        node = child
    node[parts[-1]] = value


def validate_config(payload: dict) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(payload), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise CliError(f"config violates schema at {path}: {err.message}", exit_code=2)


def resolve_seed(payload: dict, cli_seed: int | None) -> int:
    if cli_seed is not None:
        return cli_seed
    if "seed" in payload:
        return int(payload["seed"])
    env = os.environ.get("SUPERCON_SEED")
    if env is not None:
        return int(env)
    return 0


def _resolve_dataset(payload: dict, data_flag: str | None):
    data_cfg = dict(payload.get("data", {}))
    if data_flag:
        data_cfg["path"] = data_flag
    if "path" in data_cfg and "generate" in data_cfg:
        raise CliError("config data section must give either 'path' or 'generate', not both", exit_code=2)
    if "path" in data_cfg:
        dataset = load_dataset(data_cfg["path"])
    elif "generate" in data_cfg:
        g = data_cfg["generate"]
        dataset = generate_blobs(
            g["counts"],
            dims=g.get("dims", 2),
            class_separation=g.get("separation", 3.0),
            cluster_spread=g.get("spread", 1.0),
            seed=g.get("seed", 0),
            shifted_minority_extra=g.get("shifted_minority_extra", 0),
        )
    else:
        raise CliError("no dataset: give data.path or data.generate in the config, or --data", exit_code=2)
    spec = SplitSpec(
        train_fraction=data_cfg.get("train_fraction", 0.8),
        seed=data_cfg.get("split_seed", 0),
    )
    return stratified_split(dataset, spec)


def _train_payload(payload: dict) -> dict:
    train_keys = (
        "strategy",
        "batch_size",
        "stage1_epochs",
        "stage2_epochs",
        "stage1_lr",
        "stage2_lr",
        "supcon",
        "focal",
        "augment",
        "architecture",
        "seed",
        "stage2_augment",
        "rus_phase1_epochs",
    )
    return {k: payload[k] for k in train_keys if k in payload}


def execute_run(payload: dict, run_dir: Path, config_path: str | None) -> dict:
    """Run one (config, strategy, seed) training cell and write its artifacts."""
    config = TrainConfig.from_dict(_train_payload(payload))
    train, test = _resolve_dataset(payload, None)
    report = run_strategy(config, train, test)

    run_dir.mkdir(parents=True, exist_ok=True)
    write_run_report(report, run_dir)
    for name, blob in report.checkpoints.items():
        (run_dir / f"checkpoint_{name}.sckp").write_bytes(blob)
    write_run_manifest(run_dir, config_path, payload, [config.seed], __version__)
    return {
        "strategy": report.strategy,
        "seed": report.seed,
        "macro_f1": report.metrics.macro_f1,
        "auc": report.metrics.auc,
        "run_dir": str(run_dir),
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    counts = [int(c) for c in args.counts.split(",")]
    dataset = generate_blobs(
        counts,
        dims=args.dims,
        class_separation=args.separation,
        cluster_spread=args.spread,
        seed=args.seed if args.seed is not None else 0,
        shifted_minority_extra=args.shifted_extra,
    )
    save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} samples to {args.out}")
    print(f"class counts: {dataset.class_counts}")
    print(f"imbalance ratio: {dataset.imbalance_ratio:g}")
    return 0


def cmd_train(args, extra: list[str]) -> int:
    payload = load_config_file(args.config)
    overrides = parse_overrides(extra)
    if args.strategy:
        overrides["strategy"] = args.strategy
    for dotted, value in overrides.items():
        apply_override(payload, dotted, value)
    payload["seed"] = resolve_seed(payload, args.seed)
    validate_config(payload)
    if "strategy" not in payload:
        raise CliError("no strategy given (config 'strategy' or --strategy)", exit_code=2)
    if args.data:
        payload.setdefault("data", {})
        payload["data"] = {
            k: v for k, v in payload["data"].items() if k in ("train_fraction", "split_seed")
        }
        payload["data"]["path"] = args.data

    out_root = Path(args.out) if args.out else Path(payload.get("output_dir", "runs"))
    run_dir = out_root if args.out else out_root / f"{payload['strategy'].lower()}_seed{payload['seed']}"
    summary = execute_run(payload, run_dir, args.config)
    print(f"run complete: strategy={summary['strategy']} seed={summary['seed']}")
    print(f"macro_f1={summary['macro_f1']:.6f} auc={summary['auc']:.6f}")
    print(f"artifacts in {summary['run_dir']}")
    return 0


def cmd_evaluate(args) -> int:
    stack = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    if args.split != "all":
        spec = SplitSpec(train_fraction=args.train_fraction, seed=args.split_seed)
        train, test = stratified_split(dataset, spec)
        dataset = train if args.split == "train" else test
    counts = np.bincount(dataset.labels, minlength=dataset.n_classes)
    minority = int(np.argmin(counts)) if args.minority_class is None else args.minority_class
    probs = predict_proba(stack, dataset.samples)
    report = evaluate_predictions(
        dataset.labels, probs.argmax(axis=1), probs[:, minority], dataset.n_classes, minority
    )
    payload = {"minority_class_id": minority, "n_samples": len(dataset), "metrics": report.to_dict()}
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _compare_cell(payload: dict, strategy: str, seed: int, run_dir: str, config_path: str | None) -> dict:
    cell_payload = dict(payload)
    cell_payload["strategy"] = strategy
    cell_payload["seed"] = seed
    try:
        summary = execute_run(cell_payload, Path(run_dir), config_path)
        return {**summary, "status": "ok"}
    except SuperConError as err:
        return {
            "strategy": strategy,
            "seed": seed,
            "macro_f1": None,
            "auc": None,
            "run_dir": run_dir,
            "status": f"failed: {type(err).__name__}: {err}",
        }


def _compare_cell_star(cell_args) -> dict:
    return _compare_cell(*cell_args)


_EXPECTED_ORDER = ("SuperCon", "SuperConCE", "FocalLoss", "Vanilla")


def cmd_compare(args, extra: list[str]) -> int:
    payload = load_config_file(args.config)
    for dotted, value in parse_overrides(extra).items():
        apply_override(payload, dotted, value)
    payload.setdefault("seed", resolve_seed(payload, None))
    validate_config(payload)

    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    unknown = [s for s in strategies if s not in STRATEGIES]
    if not strategies or unknown:
        raise CliError(f"invalid strategy list {args.strategies!r} (unknown: {unknown})", exit_code=2)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not seeds:
        raise CliError("at least one seed is required", exit_code=2)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = [
        (payload, strategy, seed, str(out_dir / f"{strategy.lower()}_seed{seed}"), args.config)
        for strategy in strategies
        for seed in seeds
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_compare_cell_star, cells))
    else:
        results = [_compare_cell_star(cell) for cell in cells]

    by_key = {(r["strategy"], r["seed"]): r for r in results}
    means: dict[str, dict] = {}
    table_path = out_dir / "comparison.csv"
    with table_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "seed", "macro_f1", "auc", "status"])
        for strategy in strategies:
            for seed in seeds:
                row = by_key[(strategy, seed)]
                writer.writerow(
                    [
                        strategy,
                        str(seed),
                        "" if row["macro_f1"] is None else repr(row["macro_f1"]),
                        "" if row["auc"] is None else repr(row["auc"]),
                        row["status"],
                    ]
                )
        for strategy in strategies:
            ok = [by_key[(strategy, seed)] for seed in seeds if by_key[(strategy, seed)]["macro_f1"] is not None]
            if ok:
                mean_f1 = float(np.mean([r["macro_f1"] for r in ok]))
                mean_auc = float(np.mean([r["auc"] for r in ok]))
                means[strategy] = {"macro_f1": mean_f1, "auc": mean_auc}
                writer.writerow([strategy, "mean", repr(mean_f1), repr(mean_auc), f"ok ({len(ok)}/{len(seeds)} runs)"])
            else:
                writer.writerow([strategy, "mean", "", "", "failed (0 runs)"])

    ranked = [s for s in _EXPECTED_ORDER if s in means]
    for better, worse in zip(ranked, ranked[1:]):
        if means[better]["macro_f1"] < means[worse]["macro_f1"]:
            log.warning(
                "expected macro-F1 ordering violated: %s (%.4f) < %s (%.4f)",
                better, means[better]["macro_f1"], worse, means[worse]["macro_f1"],
            )

    failed = [r for r in results if r["status"] != "ok"]
    print(f"wrote {table_path} ({len(results)} runs, {len(failed)} failed)")
    for strategy in strategies:
        if strategy in means:
            print(f"{strategy}: macro_f1={means[strategy]['macro_f1']:.4f} auc={means[strategy]['auc']:.4f}")
    return 0


def cmd_plot(args) -> int:
    run_dir = Path(args.run_dir)
    out_dir = Path(args.out) if args.out else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    emitted = 0

    confusion_path = run_dir / "confusion.csv"
    if confusion_path.exists():
        with confusion_path.open() as fh:
            rows = list(csv.reader(fh))
        counts = np.array([[int(v) for v in row[1:]] for row in rows[1:]])
        (out_dir / "confusion.svg").write_text(confusion_svg(counts))
        emitted += 1
    else:
        log.warning("skipping confusion plot: %s missing", confusion_path)

    curves_path = run_dir / "curves.csv"
    if curves_path.exists():
        with curves_path.open() as fh:
            rows = [(int(r["epoch"]), r["stage"], float(r["loss"])) for r in csv.DictReader(fh)]
        if rows:
            (out_dir / "curves.svg").write_text(curves_svg(rows))
            emitted += 1
        else:
            log.warning("skipping curves plot: %s has no rows", curves_path)
    else:
        log.warning("skipping curves plot: %s missing", curves_path)

    embeddings_path = run_dir / "embeddings.csv"
    if embeddings_path.exists():
        with embeddings_path.open() as fh:
            rows = list(csv.DictReader(fh))
        points = np.array([[float(r["proj_0"]), float(r["proj_1"])] for r in rows])
        labels = np.array([int(r["label"]) for r in rows])
        (out_dir / "scatter.svg").write_text(scatter_svg(points, labels))
        emitted += 1
    else:
        log.warning("skipping scatter plot: %s missing", embeddings_path)

    if emitted == 0:
        raise CliError(f"no plottable artifacts found in {run_dir}")
    print(f"emitted {emitted} plot(s) to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="supercon", description=__doc__)
    parser.add_argument("--json-errors", action="store_true", help="emit errors as JSON on stderr")
    parser.add_argument("--version", action="version", version=f"supercon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic imbalanced dataset")
    gen.add_argument("--counts", required=True, help="comma-separated per-class sample counts")
    gen.add_argument("--dims", type=int, default=2)
    gen.add_argument("--separation", type=float, default=3.0)
    gen.add_argument("--spread", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--shifted-extra", type=int, default=0, help="extra minority samples from a shifted center")
    gen.add_argument("--out", required=True, help="output dataset directory")

    train = sub.add_parser("train", help="run one training strategy end to end")
    train.add_argument("-c", "--config", required=True, help="JSON config file")
    train.add_argument("--strategy", choices=STRATEGIES, default=None)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--data", default=None, help="dataset directory (overrides config data.path)")
    train.add_argument("--out", default=None, help="run directory (default: <output_dir>/<strategy>_seed<seed>)")

    evaluate = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--data", required=True)
    evaluate.add_argument("--split", choices=["train", "test", "all"], default="test")
    evaluate.add_argument("--train-fraction", type=float, default=0.8)
    evaluate.add_argument("--split-seed", type=int, default=0)
    evaluate.add_argument("--minority-class", type=int, default=None)
    evaluate.add_argument("--out", default=None, help="also write the metrics JSON here")

    compare = sub.add_parser("compare", help="run a strategies x seeds grid and tabulate results")
    compare.add_argument("-c", "--config", required=True)
    compare.add_argument("--strategies", required=True, help="comma-separated strategy names")
    compare.add_argument("--seeds", required=True, help="comma-separated seeds")
    compare.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    compare.add_argument("--out", required=True, help="output directory for runs and comparison.csv")

    plot = sub.add_parser("plot", help="emit SVG plots for a finished run directory")
    plot.add_argument("run_dir")
    plot.add_argument("--out", default=None, help="plot output directory (default: the run directory)")

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    json_errors = args.json_errors
    try:
        if args.command == "gen-data":
            _reject_extra(extra)
            return cmd_gen_data(args)
        if args.command == "train":
            return cmd_train(args, extra)
        if args.command == "evaluate":
            _reject_extra(extra)
            return cmd_evaluate(args)
        if args.command == "compare":
            return cmd_compare(args, extra)
        if args.command == "plot":
            _reject_extra(extra)
            return cmd_plot(args)
        raise CliError(f"unknown command {args.command!r}", exit_code=2)
    except CliError as err:
        return _emit_error(err, err.exit_code, json_errors)
    except InfeasibleStrategyError as err:
        return _emit_error(err, 3, json_errors)
    except ConfigError as err:
        return _emit_error(err, 2, json_errors)
    except (SuperConError, ValueError, OSError) as err:
        return _emit_error(err, 1, json_errors)


def _reject_extra(extra: list[str]) -> None:
    if extra:
        raise CliError(f"unrecognised arguments: {' '.join(extra)}", exit_code=2)


if __name__ == "__main__":
    sys.exit(main())
