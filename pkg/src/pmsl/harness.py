"""Experiment orchestration: configs, fold campaigns, the hyperparameter grid and manifests.

A campaign plays out a log from a model, splits it by variant into folds and,
per fold, trains a sequence model on Tr, simulates |Tr| + |Te| traces and
scores them. Every random stream is derived from the master seed, the fold
index and a phase tag, so numbers do not depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import lstm
from .log import EventLog, build_prefix_dataset, write_log
from .metrics import CSV_COLUMNS, MetricError, evaluate
from .models import PREFIX_LENGTHS, Model, builtin_model, enumerate_variants, playout_log
from .nets import EnumerationConfig
from .simulator import SimConfig, default_max_len, simulate_log
from .splitter import FOLD_ORDERS, FoldPlan, lovocv_folds, make_folds, split_log
from .trees import parse_tree

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

STANDARD_FOLD_COUNTS = (2, 3, 4, 5, 6, 8, 10, 15, 20)
PROFILE_NAMES = ("accuracy_based", "post_hoc", "explicit", "grid")
RESULT_COLUMNS = CSV_COLUMNS + ("fold_scheme", "n_test_variants", "epochs")
TIMING_COLUMNS = ("fold_id", "split_s", "train_s", "simulate_s", "metrics_s")
GRID_COLUMNS = (
    "cell", "bidirectional", "num_layers", "hidden_size", "l1", "l2", "dropout",
    "seed", "epochs", "best_epoch", "val_loss", "val_acc",
)
AGGREGATE_ID = "mean±sd"
DEFAULT_PREFIX_LEN = 6


class ConfigError(ValueError):
    pass


def derive_seed(master: int, index: int, tag: str) -> int:
    """Stable 32-bit seed for (master seed, fold or cell index, phase tag)."""
    ss = np.random.SeedSequence([int(master), int(index), zlib.crc32(tag.encode())])
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class FoldSpec:
    kind: str  # "lovocv", "kfold" or "subsample"
    count: int = 0

    @classmethod
    def parse(cls, value: Any) -> FoldSpec:
        if isinstance(value, FoldSpec):
            return value
        if isinstance(value, int) and not isinstance(value, bool):
            return cls("kfold", value)
        text = str(value).strip().lower()
        if text == "lovocv":
            return cls("lovocv")
        if text.isdigit():
            return cls("kfold", int(text))
        if text.startswith("subsample"):
            _, _, m = text.partition(":")
            if m.isdigit() and int(m) >= 1:
                return cls("subsample", int(m))
        raise ConfigError(f"fold spec must be 'lovocv', an integer k or 'subsample:<m>', got {value!r}")

    def __str__(self) -> str:
        if self.kind == "lovocv":
            return "lovocv"
        if self.kind == "kfold":
            return str(self.count)
        return f"subsample:{self.count}"

    def check(self, n_variants: int) -> None:
        if self.kind == "kfold" and not 2 <= self.count <= n_variants:
            raise ConfigError(f"{self.count} folds is illegal for {n_variants} variants")
        if self.kind == "subsample" and self.count > n_variants:
            raise ConfigError(f"cannot subsample {self.count} of {n_variants} LOVOCV folds")
        if n_variants < 2:
            raise ConfigError("variant-level splitting needs at least two variants")


@dataclass(frozen=True)
class ExperimentConfig:
    model: int | str = 1
    seed: int = 0
    log_size_multiplier: int = 100
    folds: FoldSpec = FoldSpec("lovocv")
    fold_order: str = "sorted"
    profile: str = "accuracy_based"
    hyperparams: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    prefix_len: int | None = None
    workers: int = 1
    out_dir: str = "runs/default"
    save_artifacts: bool = True
    marking_visit_cap: int = 3

    def __post_init__(self) -> None:
        object.__setattr__(self, "folds", FoldSpec.parse(self.folds))
        if self.profile not in PROFILE_NAMES:
            raise ConfigError(f"profile must be one of {PROFILE_NAMES}")
        if self.fold_order not in FOLD_ORDERS:
            raise ConfigError(f"fold_order must be one of {FOLD_ORDERS}")
        if self.log_size_multiplier < 1 or self.workers < 1:
            raise ConfigError("log_size_multiplier and workers must be positive")
        if self.prefix_len is not None and self.prefix_len < 1:
            raise ConfigError("prefix_len must be positive")
        keys = set(self.hyperparams)
        bad = (keys - set(lstm.HyperParams.__dataclass_fields__)) | (keys & {"prefix_len", "seed"})
        if bad:
            raise ConfigError(f"unknown or reserved hyperparameter keys: {sorted(bad)}")
        try:
            lstm.grid(1, **self.grid)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # -- (de)serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["folds"] = str(self.folds)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_toml(cls, path: str | Path, **overrides) -> ExperimentConfig:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def replace(self, **changes) -> ExperimentConfig:
        return ExperimentConfig.from_dict({**self.to_dict(), **changes})

    # -- resolution ----------------------------------------------------------------

    @property
    def enumeration(self) -> EnumerationConfig:
        return EnumerationConfig(marking_visit_cap=self.marking_visit_cap)

    def load_model(self) -> Model:
        if isinstance(self.model, int) or str(self.model).isdigit():
            return builtin_model(int(self.model))
        return parse_tree(Path(self.model).read_text())

    @property
    def model_name(self) -> str:
        if isinstance(self.model, int) or str(self.model).isdigit():
            return f"model{int(self.model)}"
        return Path(str(self.model)).stem

    def resolved_prefix_len(self) -> int:
        if self.prefix_len is not None:
            return self.prefix_len
        if isinstance(self.model, int) or str(self.model).isdigit():
            return PREFIX_LENGTHS.get(int(self.model), DEFAULT_PREFIX_LEN)
        return DEFAULT_PREFIX_LEN

    def hyperparams_for(self, seed: int) -> lstm.HyperParams:
        prefix_len = self.resolved_prefix_len()
        if self.profile in ("accuracy_based", "post_hoc"):
            return lstm.PROFILES[self.profile](prefix_len, seed, **self.hyperparams)
        if self.profile == "explicit":
            return lstm.HyperParams(prefix_len=prefix_len, seed=seed, **self.hyperparams)
        raise ConfigError("the grid profile has no single hyperparameter set; use run_grid")


# -- data preparation ----------------------------------------------------------------------


def build_log(cfg: ExperimentConfig) -> EventLog:
    model = cfg.load_model()
    n_variants = len(enumerate_variants(model, cfg.enumeration))
    return playout_log(
        model, cfg.log_size_multiplier * n_variants, cfg.enumeration, seed=derive_seed(cfg.seed, 0, "playout")
    )


def build_plan(cfg: ExperimentConfig, log: EventLog) -> FoldPlan:
    variants = sorted(log.variants)
    cfg.folds.check(len(variants))
    if cfg.folds.kind == "kfold":
        return make_folds(variants, cfg.folds.count, derive_seed(cfg.seed, 0, "folds"), cfg.fold_order)
    plan = lovocv_folds(variants)
    if cfg.folds.kind == "subsample":
        rng = np.random.default_rng(derive_seed(cfg.seed, 0, "subsample"))
        keep = sorted(rng.choice(len(plan.folds), size=cfg.folds.count, replace=False).tolist())
        plan = FoldPlan(tuple(plan.folds[i] for i in keep))
    return plan


# -- per-fold work ---------------------------------------------------------------------


@dataclass(frozen=True)
class FoldJob:
    index: int
    log: EventLog
    test_variants: tuple
    hp: lstm.HyperParams
    prefix_seed: int
    simulate_seed: int
    artifact_dir: str | None


@dataclass
class FoldOutcome:
    index: int
    metrics: dict | None = None
    epochs: int = 0
    timings: dict = field(default_factory=dict)
    error: str | None = None


def run_fold(job: FoldJob) -> FoldOutcome:
    out = FoldOutcome(job.index)
    try:
        t0 = time.perf_counter()
        split = split_log(job.log, job.test_variants)
        tr, te = split.training_log, split.test_log
        vocab = job.log.vocabulary
        train_ds, val_ds = build_prefix_dataset(tr, job.hp.prefix_len, job.prefix_seed, vocab=vocab)
        t1 = time.perf_counter()
        model = lstm.init_model(job.hp, vocab.size, vocab.n_targets, vocab.labels)
        history = lstm.train(model, train_ds, val_ds)
        t2 = time.perf_counter()
        sim = simulate_log(model, vocab, SimConfig(len(tr) + len(te), default_max_len(tr), job.simulate_seed))
        t3 = time.perf_counter()
        report = evaluate(tr, te, sim)
        t4 = time.perf_counter()
        out.metrics = asdict(report)
        out.epochs = len(history)
        out.timings = {"split_s": t1 - t0, "train_s": t2 - t1, "simulate_s": t3 - t2, "metrics_s": t4 - t3}
        if job.artifact_dir:
            d = Path(job.artifact_dir)
            d.mkdir(parents=True, exist_ok=True)
            lstm.save_model(model, d / "model.bin")
            lstm.write_history(history, d / "history.csv")
            write_log(sim, d / "sim.jsonl")
    except (MetricError, lstm.TrainingDiverged, ValueError, FloatingPointError) as exc:
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def _map(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


# -- campaign --------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def aggregate(rows: list[dict], columns: tuple[str, ...]) -> dict[str, str]:
    """Mean and sample standard deviation per numeric column, formatted ``mean±sd``."""
    out = {}
    for c in columns:
        vals = [float(r[c]) for r in rows]
        mean = statistics.fmean(vals)
        sd = statistics.stdev(vals) if len(vals) > 1 else math.nan
        out[c] = f"{_fmt(mean)}±{_fmt(sd)}"
    return out


METRIC_FIELDS = ("F", "P", "G", "F_A", "P_A", "G_A")
_REPORT_KEYS = ("f_pmsl", "p_pmsl", "g_pmsl", "f_a_pmsl", "p_a_pmsl", "g_a_pmsl")


def results_csv(cfg: ExperimentConfig, outcomes: list[FoldOutcome], plan: FoldPlan) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    rows = []
    for o in outcomes:
        if o.metrics is None:
            continue
        m = o.metrics
        row = {
            "model": cfg.model_name, "fold_id": str(o.index), "hp_profile": cfg.profile, "seed": str(cfg.seed),
            **{f: _fmt(m[k]) for f, k in zip(METRIC_FIELDS, _REPORT_KEYS)},
            "size_tr": str(m["size_tr"]), "size_te": str(m["size_te"]), "size_sim": str(m["size_sim"]),
            "rescaled": str(int(m["rescaled"])), "fold_scheme": str(cfg.folds),
            "n_test_variants": str(len(plan.folds[o.index])), "epochs": str(o.epochs),
        }
        rows.append(row)
        writer.writerow([row[c] for c in RESULT_COLUMNS])
    if rows:
        numeric = METRIC_FIELDS + ("size_tr", "size_te", "size_sim", "n_test_variants", "epochs")
        agg = aggregate(rows, numeric)
        agg.update({
            "model": cfg.model_name, "fold_id": AGGREGATE_ID, "hp_profile": cfg.profile, "seed": str(cfg.seed),
            "rescaled": "", "fold_scheme": str(cfg.folds),
        })
        writer.writerow([agg[c] for c in RESULT_COLUMNS])
    return buf.getvalue()


@dataclass
class CampaignResult:
    out_dir: Path
    results_path: Path
    manifest_path: Path
    outcomes: list[FoldOutcome]

    @property
    def failures(self) -> list[FoldOutcome]:
        return [o for o in self.outcomes if o.error is not None]

    def rows(self) -> list[dict[str, str]]:
        return read_results(self.results_path)


def read_results(path: str | Path, include_aggregate: bool = False) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows if include_aggregate else [r for r in rows if r["fold_id"] != AGGREGATE_ID]


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def run_campaign(cfg: ExperimentConfig, results_name: str = "results.csv") -> CampaignResult:
    """Run every fold of ``cfg`` and write results, timings and the manifest to ``cfg.out_dir``."""
    if cfg.profile == "grid":
        raise ConfigError("use run_grid for the grid profile")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = build_log(cfg)
    plan = build_plan(cfg, log)
    seeds = [
        {phase: derive_seed(cfg.seed, i, phase) for phase in ("prefix", "train", "simulate")}
        for i in range(len(plan))
    ]
    jobs = [
        FoldJob(
            i, log, plan.folds[i], cfg.hyperparams_for(s["train"]), s["prefix"], s["simulate"],
            str(out_dir / "folds" / str(i)) if cfg.save_artifacts else None,
        )
        for i, s in enumerate(seeds)
    ]
    manifest = {
        "config": cfg.to_dict(),
        "log": {"traces": len(log), "variants": len(log.variants), "seed": derive_seed(cfg.seed, 0, "playout")},
        "fold_plan": json.loads(plan.to_json()),
        "fold_seeds": seeds,
        "hyperparams": [asdict(j.hp) for j in jobs],
        "artifacts": {
            "results": results_name,
            "timings": "timings.csv",
            "folds": [str(Path("folds") / str(i)) for i in range(len(plan))] if cfg.save_artifacts else [],
        },
    }
    manifest_path = out_dir / "manifest.json"
    _write_json(manifest_path, manifest)
    logger.info("campaign %s: %d folds, %d traces", cfg.model_name, len(plan), len(log))

    outcomes = sorted(_map(run_fold, jobs, cfg.workers), key=lambda o: o.index)

    results_path = out_dir / results_name
    results_path.write_text(results_csv(cfg, outcomes, plan))
    timing_buf = io.StringIO()
    tw = csv.writer(timing_buf, lineterminator="\n")
    tw.writerow(TIMING_COLUMNS)
    for o in outcomes:
        if o.timings:
            tw.writerow([o.index] + [f"{o.timings[c]:.3f}" for c in TIMING_COLUMNS[1:]])
    (out_dir / "timings.csv").write_text(timing_buf.getvalue())
    manifest["timings"] = {str(o.index): o.timings for o in outcomes}
    manifest["failures"] = {str(o.index): o.error for o in outcomes if o.error}
    _write_json(manifest_path, manifest)
    for o in outcomes:
        if o.error:
            logger.error("fold %d failed: %s", o.index, o.error)
    return CampaignResult(out_dir, results_path, manifest_path, outcomes)


def config_from_manifest(path: str | Path, **overrides) -> ExperimentConfig:
    data = json.loads(Path(path).read_text())
    return ExperimentConfig.from_dict({**data["config"], **{k: v for k, v in overrides.items() if v is not None}})


# -- grid ------------------------------------------------------------------------------


@dataclass(frozen=True)
class GridJob:
    index: int
    hp: lstm.HyperParams
    log: EventLog
    prefix_seed: int


def _run_cell(job: GridJob) -> dict[str, str]:
    vocab = job.log.vocabulary
    train_ds, val_ds = build_prefix_dataset(job.log, job.hp.prefix_len, job.prefix_seed, vocab=vocab)
    model = lstm.init_model(job.hp, vocab.size, vocab.n_targets, vocab.labels)
    history = lstm.train(model, train_ds, val_ds)
    val_loss, val_acc = lstm.evaluate(model, val_ds)
    hp = job.hp
    return {
        "cell": str(job.index), "bidirectional": str(int(hp.bidirectional)), "num_layers": str(hp.num_layers),
        "hidden_size": str(hp.hidden_size), "l1": _fmt(hp.l1), "l2": _fmt(hp.l2), "dropout": _fmt(hp.dropout),
        "seed": str(hp.seed), "epochs": str(len(history)), "best_epoch": str(history.best_epoch),
        "val_loss": _fmt(val_loss), "val_acc": _fmt(val_acc),
    }


def run_grid(cfg: ExperimentConfig) -> Path:
    """Train one model per (filtered) grid cell on the full log; write ``grid.csv``."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = build_log(cfg)
    cells = lstm.grid(cfg.resolved_prefix_len(), 0, **cfg.grid)
    prefix_seed = derive_seed(cfg.seed, 0, "prefix")
    jobs = [
        GridJob(i, hp.replace(seed=derive_seed(cfg.seed, i, "train"), **cfg.hyperparams), log, prefix_seed)
        for i, hp in enumerate(cells)
    ]
    _write_json(out_dir / "manifest.json", {
        "config": cfg.to_dict(), "cells": [asdict(j.hp) for j in jobs], "prefix_seed": prefix_seed,
    })
    rows = _map(_run_cell, jobs, cfg.workers)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GRID_COLUMNS)
    for r in rows:
        writer.writerow([r[c] for c in GRID_COLUMNS])
    path = out_dir / "grid.csv"
    path.write_text(buf.getvalue())
    return path
