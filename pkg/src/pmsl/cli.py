"""Command-line entry point ``pmsl``."""

from __future__ import annotations

import csv
import io
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import harness, inductive, lstm
from .harness import tomllib
from .log import Vocabulary, build_prefix_dataset, read_log, write_log
from .metrics import CSV_COLUMNS, MetricError, evaluate
from .models import BUILTIN_IDS, PREFIX_LENGTHS, Model, builtin_model, builtin_tree, enumerate_variants, model_stats, playout_log
from .nets import EnumerationConfig, WorkflowNet
from .simulator import SimConfig, default_max_len, simulate_log
from .splitter import FOLD_ORDERS, lovocv_folds, make_folds, split_log
from .trees import format_tree, parse_tree
from .treegen import GenSettings, ModelFilter, NoModelFound, select_model


def _load_model(source: str) -> Model:
    if source.isdigit():
        try:
            return builtin_model(int(source))
        except ValueError as exc:
            raise click.BadParameter(str(exc)) from None
    path = Path(source)
    if not path.exists():
        raise click.BadParameter(f"{source} is neither a built-in id nor an existing file")
    text = path.read_text()
    if path.suffix == ".json":
        return WorkflowNet.from_json(text)
    return parse_tree(text)


def _enum(visit_cap: int) -> EnumerationConfig:
    return EnumerationConfig(marking_visit_cap=visit_cap)


visit_cap_option = click.option("--visit-cap", default=3, show_default=True, help="Marking visit cap / loop bound.")


@click.group()
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def main(verbose: int) -> None:
    """Process-model play-out, sequence-model simulation and metric campaigns."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# -- models ---------------------------------------------------------------------------


@main.group()
def models() -> None:
    """Built-in process models."""


@models.command("list")
@visit_cap_option
def models_list(visit_cap: int) -> None:
    click.echo("id\tvariants\tactivities\tmin_len\tmax_len\tprefix_len")
    for mid in BUILTIN_IDS:
        s = model_stats(builtin_model(mid), _enum(visit_cap))
        click.echo(f"{mid}\t{s['variants']}\t{s['activities']}\t{s['min_len']}\t{s['max_len']}\t{PREFIX_LENGTHS[mid]}")


@models.command("export")
@click.option("--model", "model_id", type=int, required=True)
@click.option("--format", "fmt", type=click.Choice(["json", "dot", "ptree"]), default="json", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Defaults to stdout.")
def models_export(model_id: int, fmt: str, out: str | None) -> None:
    if model_id not in BUILTIN_IDS:
        raise click.BadParameter(f"built-in models are numbered 1..6, got {model_id}")
    if fmt == "ptree":
        tree = builtin_tree(model_id)
        if tree is None:
            raise click.ClickException(f"model {model_id} is not block-structured; export it as json or dot")
        text = format_tree(tree) + "\n"
    else:
        net = builtin_model(model_id)
        text = net.to_json() + "\n" if fmt == "json" else net.to_dot()
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


# -- play-out / generation ---------------------------------------------------------------


@main.command()
@click.option("--model", "source", required=True, help="Built-in id, .ptree file or workflow-net .json file.")
@click.option("--n", "n_traces", type=int, default=None, help="Number of traces (default: multiplier x variants).")
@click.option("--multiplier", type=int, default=100, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--variants-csv", type=click.Path(dir_okay=False), default=None, help="Also write the variant table.")
@visit_cap_option
def playout(source: str, n_traces: int | None, multiplier: int, seed: int, out: str, variants_csv: str | None,
            visit_cap: int) -> None:
    """Play out a model into a JSONL event log."""
    model = _load_model(source)
    cfg = _enum(visit_cap)
    if n_traces is None:
        n_traces = multiplier * len(enumerate_variants(model, cfg))
    log = playout_log(model, n_traces, cfg, seed)
    write_log(log, out)
    if variants_csv:
        Path(variants_csv).write_text(log.variants.to_csv())
    click.echo(f"wrote {len(log)} traces ({len(log.variants)} variants) to {out}")


@main.command("gen-trees")
@click.option("--p-and", type=float, required=True)
@click.option("--p-xor", type=float, required=True)
@click.option("--p-silent", type=float, default=0.0, show_default=True)
@click.option("--min-activities", type=int, default=10, show_default=True)
@click.option("--max-activities", type=int, default=25, show_default=True)
@click.option("--min-variants", type=int, default=80, show_default=True)
@click.option("--max-variants", type=int, default=160, show_default=True)
@click.option("--candidates", type=int, default=5000, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def gen_trees(p_and: float, p_xor: float, p_silent: float, min_activities: int, max_activities: int,
              min_variants: int, max_variants: int, candidates: int, seed: int, workers: int, out: str) -> None:
    """Generate random trees and keep the one closest to the requested operator mix."""
    try:
        settings = GenSettings(
            round(1.0 - p_and - p_xor, 12), p_and, p_xor, p_silent, (min_activities, max_activities), seed
        )
        filt = ModelFilter((min_variants, max_variants))
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None
    try:
        sel = select_model(settings, filt, candidates, seed, workers)
    except NoModelFound as exc:
        raise click.ClickException(str(exc)) from None
    Path(out).write_text(format_tree(sel.tree) + "\n")
    sidecar = Path(out).with_suffix(".json")
    sidecar.write_text(json.dumps({"settings": {"p_seq": settings.p_seq, "p_and": p_and, "p_xor": p_xor,
                                                "p_silent": p_silent, "seed": seed}, **sel.sidecar()}, indent=2) + "\n")
    click.echo(f"selected candidate {sel.stats.index}: {sel.stats.variants} variants -> {out}, {sidecar}")


# -- split / train / simulate / metrics --------------------------------------------------


@main.command()
@click.option("--log", "log_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--folds", default="lovocv", show_default=True, help="'lovocv' or a fold count k.")
@click.option("--order", type=click.Choice(FOLD_ORDERS), default="sorted", show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
def split(log_path: str, folds: str, order: str, seed: int, out_dir: str) -> None:
    """Write a fold plan plus Tr/Te logs per fold."""
    log = read_log(log_path, allow_empty=False)
    try:
        plan = lovocv_folds(log.variants) if folds == "lovocv" else make_folds(log.variants, int(folds), seed, order)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    (d / "fold_plan.json").write_text(plan.to_json() + "\n")
    for i, test in enumerate(plan.folds):
        s = split_log(log, test)
        fd = d / f"fold_{i}"
        fd.mkdir(exist_ok=True)
        write_log(s.training_log, fd / "tr.jsonl")
        write_log(s.test_log, fd / "te.jsonl")
    click.echo(f"{len(plan)} folds written to {out_dir}")


@main.command()
@click.option("--log", "log_path", type=click.Path(exists=True, dir_okay=False), required=True, help="Training log.")
@click.option("--vocab-log", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Log whose activities define the vocabulary (default: the training log).")
@click.option("--profile", type=click.Choice(["accuracy_based", "post_hoc"]), default="accuracy_based",
              show_default=True)
@click.option("--prefix-len", type=int, required=True)
@click.option("--max-epochs", type=int, default=None)
@click.option("--hidden-size", type=int, default=None)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Checkpoint path.")
@click.option("--history", type=click.Path(dir_okay=False), default=None, help="Training history CSV.")
@click.option("--restore-best/--no-restore-best", default=True, show_default=True,
              help="Restore the best-validation-accuracy weights after training.")
def train(log_path: str, vocab_log: str | None, profile: str, prefix_len: int, max_epochs: int | None,
          hidden_size: int | None, seed: int, out: str, history: str | None, restore_best: bool) -> None:
    """Train a next-activity model on a log (80/20 prefix split)."""
    log = read_log(log_path, allow_empty=False)
    vocab = read_log(vocab_log).vocabulary if vocab_log else log.vocabulary
    overrides = {k: v for k, v in (("max_epochs", max_epochs), ("hidden_size", hidden_size)) if v is not None}
    hp = lstm.PROFILES[profile](prefix_len, seed, restore_best=restore_best, **overrides)
    train_ds, val_ds = build_prefix_dataset(log, prefix_len, seed, vocab=vocab)
    model = lstm.init_model(hp, vocab.size, vocab.n_targets, vocab.labels)
    hist = lstm.train(model, train_ds, val_ds)
    lstm.save_model(model, out)
    if history:
        lstm.write_history(hist, history)
    click.echo(f"trained {len(hist)} epochs, best val acc {max(hist.val_acc):.4f} -> {out}")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--n", "n_traces", type=int, required=True)
@click.option("--max-len", type=int, default=None, help="Default: twice the longest trace of --train-log.")
@click.option("--train-log", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def simulate(model_path: str, n_traces: int, max_len: int | None, train_log: str | None, seed: int, out: str) -> None:
    """Sample a simulated log from a trained checkpoint."""
    model = lstm.load_model(model_path)
    if max_len is None:
        if train_log is None:
            raise click.UsageError("give --max-len or --train-log")
        max_len = default_max_len(read_log(train_log, allow_empty=False))
    vocab = Vocabulary(tuple(model.labels))
    sim = simulate_log(model, vocab, SimConfig(n_traces, max_len, seed))
    write_log(sim, out)
    click.echo(f"wrote {len(sim)} simulated traces to {out}")


@main.command()
@click.option("--tr", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--te", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--sim", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--allow-rescale", is_flag=True)
@click.option("--model-name", default="-", show_default=True)
@click.option("--fold-id", default="0", show_default=True)
@click.option("--hp-profile", default="-", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def metrics(tr: str, te: str, sim: str, allow_rescale: bool, model_name: str, fold_id: str, hp_profile: str,
            seed: int) -> None:
    """Score a simulated log against a Tr/Te split; prints one CSV row with header."""
    try:
        rep = evaluate(read_log(tr), read_log(te), read_log(sim), allow_rescale)
    except MetricError as exc:
        raise click.ClickException(str(exc)) from None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerow(rep.csv_row(model_name, fold_id, hp_profile, seed))
    click.echo(buf.getvalue(), nl=False)


# -- inductive baseline --------------------------------------------------------------------


@main.group()
def im() -> None:
    """Inductive-miner baseline."""


@im.command("discover")
@click.option("--log", "log_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def im_discover(log_path: str, out: str | None) -> None:
    tree = inductive.discover(read_log(log_path, allow_empty=False))
    text = format_tree(tree) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


@im.command("baseline")
@click.option("--model", "source", required=True)
@click.option("--folds", default="lovocv", show_default=True)
@click.option("--order", type=click.Choice(FOLD_ORDERS), default="sorted", show_default=True)
@click.option("--multiplier", type=int, default=100, show_default=True)
@click.option("--playout-size", type=int, default=None, help="Sim size (default |Tr|+|Te|; otherwise rescaled).")
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@visit_cap_option
def im_baseline(source: str, folds: str, order: str, multiplier: int, playout_size: int | None, seed: int, out: str,
                visit_cap: int) -> None:
    """Discover on each fold's Tr, play out, and score."""
    model = _load_model(source)
    cfg = _enum(visit_cap)
    log = playout_log(model, multiplier * len(enumerate_variants(model, cfg)), cfg, harness.derive_seed(seed, 0, "playout"))
    try:
        plan = lovocv_folds(log.variants) if folds == "lovocv" else make_folds(
            log.variants, int(folds), harness.derive_seed(seed, 0, "folds"), order)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None
    rows = inductive.baseline_run(log, plan, cfg, seed, playout_size)
    name = f"model{source}" if source.isdigit() else Path(source).stem
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS + ("tree",))
    for i, (tree, rep) in enumerate(rows):
        w.writerow(rep.csv_row(name, i, "inductive", seed) + [format_tree(tree)])
    Path(out).write_text(buf.getvalue())
    means = np.mean([[r.f_pmsl, r.p_pmsl, r.g_pmsl, r.f_a_pmsl, r.p_a_pmsl, r.g_a_pmsl] for _, r in rows], axis=0)
    click.echo("mean F={:.3f} P={:.3f} G={:.3f} F_A={:.3f} P_A={:.3f} G_A={:.3f}".format(*means))


# -- campaigns ---------------------------------------------------------------------------------


def _campaign_config(config: str | None, manifest: str | None, seed: int | None, overrides: dict
                     ) -> harness.ExperimentConfig:
    if manifest:
        return harness.config_from_manifest(manifest, seed=seed, **overrides)
    try:
        if config:
            cfg = harness.ExperimentConfig.from_toml(config, seed=seed, **overrides)
            if seed is None and "seed" not in tomllib.loads(Path(config).read_text()):
                raise click.UsageError("set seed in the config file or pass --seed")
            return cfg
        if seed is None:
            raise click.UsageError("--seed is required (or rerun from --manifest)")
        return harness.ExperimentConfig.from_dict({"seed": seed, **{k: v for k, v in overrides.items() if v is not None}})
    except (harness.ConfigError, TypeError) as exc:
        raise click.UsageError(str(exc)) from None


campaign_options = [
    click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None, help="TOML config."),
    click.option("--manifest", type=click.Path(exists=True, dir_okay=False), default=None,
                 help="Rerun the configuration recorded in a manifest."),
    click.option("--seed", type=int, default=None, help="Master seed (required without --manifest)."),
    click.option("--model", default=None, help="Built-in id or .ptree file."),
    click.option("--folds", default=None, help="'lovocv', k, or 'subsample:<m>'."),
    click.option("--fold-order", type=click.Choice(FOLD_ORDERS), default=None),
    click.option("--multiplier", "log_size_multiplier", type=int, default=None),
    click.option("--prefix-len", type=int, default=None),
    click.option("--workers", type=int, default=None),
    click.option("--out-dir", type=click.Path(file_okay=False), default=None),
]


def _with_campaign_options(fn):
    for opt in reversed(campaign_options):
        fn = opt(fn)
    return fn


def _model_override(model: str | None) -> int | str | None:
    if model is None:
        return None
    return int(model) if model.isdigit() else model


@main.command()
@_with_campaign_options
@click.option("--profile", type=click.Choice(["accuracy_based", "post_hoc", "explicit"]), default=None)
@click.option("--max-epochs", type=int, default=None, help="Override the training epoch cap.")
def run(config, manifest, seed, model, folds, fold_order, log_size_multiplier, prefix_len, workers, out_dir, profile,
        max_epochs) -> None:
    """Run a fold campaign."""
    overrides = dict(model=_model_override(model), folds=folds, fold_order=fold_order,
                     log_size_multiplier=log_size_multiplier, prefix_len=prefix_len, workers=workers,
                     out_dir=out_dir, profile=profile)
    cfg = _campaign_config(config, manifest, seed, overrides)
    if max_epochs is not None:
        cfg = cfg.replace(hyperparams={**cfg.hyperparams, "max_epochs": max_epochs})
    try:
        result = harness.run_campaign(cfg)
    except harness.ConfigError as exc:
        raise click.UsageError(str(exc)) from None
    click.echo(f"results: {result.results_path}")
    if result.failures:
        for o in result.failures:
            click.echo(f"fold {o.index} failed: {o.error}", err=True)
        sys.exit(1)


@main.command()
@_with_campaign_options
@click.option("--hidden-size", "hidden_sizes", type=int, multiple=True, help="Restrict the hidden-size axis.")
@click.option("--num-layers", "num_layers", type=int, multiple=True)
@click.option("--max-epochs", type=int, default=None)
def grid(config, manifest, seed, model, folds, fold_order, log_size_multiplier, prefix_len, workers, out_dir,
         hidden_sizes, num_layers, max_epochs) -> None:
    """Train one model per hyperparameter grid cell on the full log."""
    overrides = dict(model=_model_override(model), log_size_multiplier=log_size_multiplier, prefix_len=prefix_len,
                     workers=workers, out_dir=out_dir, profile="grid")
    cfg = _campaign_config(config, manifest, seed, overrides)
    filters = dict(cfg.grid)
    if hidden_sizes:
        filters["hidden_size"] = list(hidden_sizes)
    if num_layers:
        filters["num_layers"] = list(num_layers)
    hyper = dict(cfg.hyperparams)
    if max_epochs is not None:
        hyper["max_epochs"] = max_epochs
    cfg = cfg.replace(grid=filters, hyperparams=hyper)
    path = harness.run_grid(cfg)
    click.echo(f"grid: {path}")


@main.command()
@click.argument("results", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
def report(results: tuple[str, ...], out_dir: str) -> None:
    """Plot metric families against held-out variants per fold."""
    from .report import SchemaError, emit_report

    try:
        paths = emit_report(list(results), out_dir)
    except SchemaError as exc:
        raise click.ClickException(str(exc)) from None
    for p in paths:
        click.echo(str(p))


if __name__ == "__main__":
    main()
