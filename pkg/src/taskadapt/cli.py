"""Experiment runner: data generation, training, ablations and sweeps.

All commands consume a JSON experiment config. Runs are keyed by a hash of
the resolved config, so repeated invocations with identical settings reuse
the cached results, and identical configs always produce byte-identical
output files. Exit codes: 0 success, 1 config error, 2 runtime abort.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .datasets import (DomainDataset, ShiftSpec, generate_gaussian_blobs,
                       generate_task_shift_moons, load_dataset, save_dataset)
from .evaluation import compute_prf, format_percent, roc_auc, roc_points
from .networks import save_checkpoint
from .trainer import TrainConfig, TrainingAborted, fit, predict

OUTPUT_ROOT_ENV = "TASKADAPT_OUTPUT_ROOT"

VARIANTS = ("full", "cls_only", "cls_task", "cls_feat")
# ablation table rows in the conventional order: supervised-only first,
# then each adaptation term alone, then both
ABLATION_ORDER = ("cls_only", "cls_task", "cls_feat", "full")

GENERATORS = {"moons": generate_task_shift_moons, "blobs": generate_gaussian_blobs}


class ConfigError(ValueError):
    """The experiment config is malformed or inconsistent."""


@dataclass(frozen=True)
class DatasetBlock:
    """Either a synthetic generator spec or paths to three CSV splits."""

    kind: str
    spec: ShiftSpec | None = None
    seed: int = 0
    paths: dict | None = None

    def to_json_dict(self) -> dict:
        if self.kind == "csv":
            return {"kind": "csv", "paths": dict(self.paths)}
        d = {"kind": self.kind, "seed": self.seed,
             "spec": {"rotation_deg": self.spec.rotation_deg,
                      "positive_mode_shift": list(self.spec.positive_mode_shift),
                      "noise_std": self.spec.noise_std,
                      "n_source": self.spec.n_source,
                      "n_target": self.spec.n_target,
                      "positive_fraction_target": self.spec.positive_fraction_target}}
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "DatasetBlock":
        kind = d.get("kind")
        if kind == "csv":
            paths = d.get("paths") or {}
            needed = {"source", "target_train", "target_validation"}
            if set(paths) != needed:
                raise ConfigError(f"csv dataset block needs paths {sorted(needed)}")
            return cls(kind="csv", paths=dict(paths))
        if kind not in GENERATORS:
            raise ConfigError(f"unknown dataset kind {kind!r}")
        try:
            spec = ShiftSpec(**d.get("spec", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad shift spec: {exc}") from None
        return cls(kind=kind, spec=spec, seed=int(d.get("seed", 0)))


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetBlock
    train: TrainConfig = field(default_factory=TrainConfig)
    variant: str = "full"
    seeds: tuple = tuple(range(10))
    output_dir: str = "runs"
    dump_roc: bool = False

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if len(self.seeds) == 0:
            raise ConfigError("seeds must be nonempty")

    def effective_train(self) -> TrainConfig:
        """The train block with the loss weights the variant mandates."""
        return _force_variant(self.train, self.variant)

    def to_json_dict(self) -> dict:
        return {"dataset": self.dataset.to_json_dict(),
                "train": self.train.to_json_dict(),
                "variant": self.variant, "seeds": list(self.seeds),
                "output_dir": self.output_dir, "dump_roc": self.dump_roc}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ExperimentConfig":
        if "dataset" not in d:
            raise ConfigError("config needs a dataset block")
        dataset = DatasetBlock.from_json_dict(d["dataset"])
        try:
            train = TrainConfig.from_json_dict(d.get("train", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad train block: {exc}") from None
        return cls(dataset=dataset, train=train,
                   variant=d.get("variant", "full"),
                   seeds=tuple(d.get("seeds", range(10))),
                   output_dir=d.get("output_dir", "runs"),
                   dump_roc=bool(d.get("dump_roc", False)))


def _force_variant(train: TrainConfig, variant: str) -> TrainConfig:
    """Pin the loss weights implied by the ablation variant."""
    if variant == "cls_only":
        return replace(train, lambda_=0.0, mu=0.0)
    if variant == "cls_task":
        return replace(train, lambda_=0.0)
    if variant == "cls_feat":
        return replace(train, mu=0.0)
    return train


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return ExperimentConfig.from_json_dict(raw)


def config_hash(config: ExperimentConfig) -> str:
    """Hash of everything that determines run results (not their location).

    The variant is hashed through the weights it forces, so an explicit
    lambda=mu=0 run and a cls_only run share one cache entry.
    """
    semantic = config.to_json_dict()
    semantic.pop("output_dir")
    semantic.pop("variant")
    semantic["train"] = config.effective_train().to_json_dict()
    blob = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def output_root(config: ExperimentConfig) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    out = Path(config.output_dir)
    if root and not out.is_absolute():
        return Path(root) / out
    return out


def materialize_dataset(block: DatasetBlock) -> DomainDataset:
    if block.kind == "csv":
        try:
            return load_dataset(block.paths["source"], block.paths["target_train"],
                                block.paths["target_validation"])
        except FileNotFoundError as exc:
            raise ConfigError(f"dataset file missing: {exc}") from None
    return GENERATORS[block.kind](block.spec, block.seed)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


@dataclass
class RunSummary:
    """Per-seed metrics plus their aggregate mean and standard deviation."""

    run_dir: Path
    config_hash: str
    per_seed: dict
    mean: dict
    std: dict
    cached: bool = False


_AGG_METRICS = ("precision", "recall", "f1", "accuracy", "auc")


def run_train(config: ExperimentConfig) -> RunSummary:
    """Train once per seed; write logs, metrics, checkpoints and an aggregate."""
    digest = config_hash(config)
    run_dir = output_root(config) / f"run_{digest}"
    agg_path = run_dir / "aggregate.json"
    if agg_path.exists():
        agg = json.loads(agg_path.read_text())
        if agg.get("config_hash") == digest:
            return RunSummary(run_dir, digest, agg["per_seed"], agg["mean"],
                              agg["std"], cached=True)

    data = materialize_dataset(config.dataset)
    run_dir.mkdir(parents=True, exist_ok=True)
    train = config.effective_train()
    per_seed = {}
    for seed in config.seeds:
        seed_dir = run_dir / f"seed_{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        cfg = replace(train, seed=seed)
        result = fit(cfg, data, log_path=seed_dir / "log.csv")
        labels, probs = predict(result.params, data.validation_x)
        report = compute_validation_report(labels, probs, data.validation_y)
        save_checkpoint(seed_dir / "checkpoint.json", result.params, result.adaptor)
        if config.dump_roc:
            pts = roc_points(probs[:, 1], data.validation_y)
            lines = ["fpr,tpr,threshold"]
            lines += [f"{fpr!r},{tpr!r},{thr!r}" for fpr, tpr, thr in pts]
            _atomic_write(seed_dir / "roc.csv", "\n".join(lines) + "\n")
        _atomic_write(seed_dir / "metrics.json", _json_text(report))
        records = result.log.records
        per_seed[str(seed)] = {
            "metrics": f"seed_{seed}/metrics.json",
            "log": f"seed_{seed}/log.csv",
            "checkpoint": f"seed_{seed}/checkpoint.json",
            "values": report,
            "mmd_epoch1": records[0].mmd if records else None,
            "mmd_final": records[-1].mmd if records else None,
        }

    mean, std = {}, {}
    for key in _AGG_METRICS:
        vals = [per_seed[str(s)]["values"][key] for s in config.seeds]
        if any(v is None for v in vals):
            mean[key] = std[key] = None
        else:
            mean[key] = float(np.mean(vals))
            std[key] = float(np.std(vals))
    config_doc = config.to_json_dict()
    config_doc.pop("output_dir")  # aggregate content must not depend on location
    aggregate = {"config_hash": digest, "config": config_doc,
                 "seeds": list(config.seeds), "per_seed": per_seed,
                 "mean": mean, "std": std}
    _atomic_write(agg_path, _json_text(aggregate))
    return RunSummary(run_dir, digest, per_seed, mean, std)


def compute_validation_report(labels, probs, val_y) -> dict:
    report = compute_prf(labels, val_y, positive_class=1)
    try:
        report.auc = roc_auc(probs[:, 1], val_y)
    except ValueError:
        report.auc = None
    return report.to_json_dict()


def run_ablation(config: ExperimentConfig):
    """All four variants over the config's seeds; returns ordered result rows."""
    rows = []
    for variant in ABLATION_ORDER:
        summary = run_train(replace(config, variant=variant))
        rows.append((variant, summary))
    return rows


def _ablation_tables(rows):
    header = ["variant", "precision", "recall", "f1", "accuracy"]
    csv_lines = [",".join(header)]
    text_lines = [f"{'variant':<10}" + "".join(f"{h:>11}" for h in header[1:])]
    for variant, summary in rows:
        cells = [format_percent(summary.mean[k]) for k in ("precision", "recall",
                                                           "f1", "accuracy")]
        csv_lines.append(",".join([variant] + cells))
        text_lines.append(f"{variant:<10}" + "".join(f"{c:>11}" for c in cells))
    return "\n".join(csv_lines) + "\n", "\n".join(text_lines) + "\n"


SWEEPABLE = ("lambda,mu", "m", "sigma")


def run_sweep(config: ExperimentConfig, param: str, values):
    """Grid of mean F1 over one swept parameter (or the lambda/mu plane)."""
    if param not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {param!r}; choose one of {SWEEPABLE}")
    cells = {}
    if param == "lambda,mu":
        grid = [float(v) for v in values]
        for lam in grid:
            for mu in grid:
                train = replace(config.train, lambda_=lam, mu=mu)
                cells[(lam, mu)] = _sweep_cell(replace(config, train=train, variant="full"))
        return {"param": param, "values": grid, "cells": cells}
    if param == "m":
        points = [int(v) for v in values]
    else:
        points = [str(v) for v in values]
    for v in points:
        if param == "m":
            train = replace(config.train, m=v, batch_per_domain=v * config.train.n_classes)
        else:
            train = replace(config.train, sigma=v)
        cells[v] = _sweep_cell(replace(config, train=train))
    return {"param": param, "values": points, "cells": cells}


def _sweep_cell(config: ExperimentConfig):
    try:
        return run_train(config).mean["f1"]
    except (TrainingAborted, ValueError) as exc:
        sys.stderr.write(f"sweep cell failed: {exc}\n")
        return None


def _sweep_csv(result) -> str:
    if result["param"] == "lambda,mu":
        grid = result["values"]
        lines = ["lambda\\mu," + ",".join(repr(m) for m in grid)]
        for lam in grid:
            cells = [result["cells"][(lam, mu)] for mu in grid]
            lines.append(",".join([repr(lam)] + ["" if c is None else repr(c)
                                                 for c in cells]))
        return "\n".join(lines) + "\n"
    lines = [f"{result['param']},mean_f1"]
    for v in result["values"]:
        c = result["cells"][v]
        lines.append(f"{v}," + ("" if c is None else repr(c)))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands

def cmd_generate(args) -> int:
    config = load_config(args.config)
    if config.dataset.kind == "csv":
        raise ConfigError("generate needs a generator dataset block, not csv paths")
    data = materialize_dataset(config.dataset)
    out = output_root(config)
    try:
        files = save_dataset(out, data)
    except OSError as exc:
        raise ConfigError(f"cannot write dataset to {out}: {exc}") from None
    print(f"wrote {', '.join(files.values())} and provenance.json to {out}")
    return 0


def _parse_seed_spec(text: str):
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError(f"no seeds in spec {text!r}")
    return tuple(seeds)


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.seeds:
        config = replace(config, seeds=_parse_seed_spec(args.seeds))
    summary = run_train(config)
    state = "cached" if summary.cached else "written"
    print(f"run {summary.config_hash} {state} at {summary.run_dir}")
    for key in ("precision", "recall", "f1", "accuracy"):
        if summary.mean[key] is not None:
            print(f"  mean {key}: {format_percent(summary.mean[key])} "
                  f"(std {format_percent(summary.std[key])})")
    return 0


def cmd_ablate(args) -> int:
    config = load_config(args.config)
    rows = run_ablation(config)
    csv_text, table_text = _ablation_tables(rows)
    out = output_root(config)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "ablation.csv", csv_text)
    _atomic_write(out / "ablation.txt", table_text)
    print(table_text, end="")
    print(f"tables written to {out / 'ablation.csv'}")
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep needs at least one value")
    result = run_sweep(config, args.param, values)
    out = output_root(config)
    out.mkdir(parents=True, exist_ok=True)
    name = "sweep_" + result["param"].replace(",", "_") + ".csv"
    _atomic_write(out / name, _sweep_csv(result))
    print(f"sweep results written to {out / name}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskadapt",
        description="Train and evaluate joint feature and task-semantic adaptation "
                    "on two-domain benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write dataset CSVs from a generator config")
    p_gen.add_argument("--config", required=True)
    p_gen.set_defaults(fn=cmd_generate)

    p_train = sub.add_parser("train", help="train once per seed and aggregate metrics")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seeds", help="override config seeds, e.g. 0..9 or 1,2,5")
    p_train.set_defaults(fn=cmd_train)

    p_abl = sub.add_parser("ablate", help="run all four loss-term variants")
    p_abl.add_argument("--config", required=True)
    p_abl.set_defaults(fn=cmd_ablate)

    p_sweep = sub.add_parser("sweep", help="grid over lambda,mu or m or sigma")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True, choices=list(SWEEPABLE))
    p_sweep.add_argument("--values", required=True)
    p_sweep.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.fn(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 1
    except (TrainingAborted, RuntimeError, OSError, ValueError) as exc:
        sys.stderr.write(f"runtime error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
