"""Command-line front door: dataset generation, runs, sweeps, reports.

Exit codes are a stable scripting contract: 0 on success, 1 on runtime
failure, 2 on usage or config errors.  Every run directory is keyed by the
config fingerprint and seed, and receives a fully-resolved config echo, so
each artifact is reproducible from (config file, seed) alone.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click

from . import __version__
from .errors import ConfigError
from .report import aggregate, load_summaries, write_aggregate_csv, write_plots
from .runconfig import experiment_config, load_config, synth_config, write_config_echo
from .synthdata import TRANSFER_STYLES, generate, generate_transfer
from .trainer import (
    MODES,
    config_fingerprint,
    load_dataset,
    run_experiment,
    run_gap_sweep,
    write_metrics_csv,
    write_summary_json,
)


def _guarded(fn):
    """Map package errors onto the exit-code contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(2)
        except (OSError, ValueError, RuntimeError, LookupError) as err:
            click.echo(f"error: {type(err).__name__}: {err}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.version_option(version=__version__, prog_name="mvc")
def cli():
    """Contrastive multi-view experiments on synthetic turntable videos."""


@cli.command("gen-data")
@click.option("--config", "config_path", required=True, type=click.Path(), help="Run config JSON.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Dataset directory.")
@click.option(
    "--transfer",
    "style",
    type=click.Choice(TRANSFER_STYLES),
    default=None,
    help="Render a restyled transfer copy instead of the base dataset.",
)
@click.option(
    "--strength",
    type=float,
    default=0.5,
    show_default=True,
    help="Restyle strength in [0, 1]; only used with --transfer.",
)
@_guarded
def cmd_gen_data(config_path, out_dir, style, strength):
    """Render the synthetic dataset described by the config's data section."""
    resolved = load_config(config_path)
    cfg = synth_config(resolved)
    out = Path(out_dir)
    if style is None:
        manifest = generate(cfg, out)
    else:
        manifest = generate_transfer(cfg, style, out, strength=strength)
    write_config_echo(resolved, out / "config.json")
    videos = len({r.video_id for r in manifest.records})
    click.echo(f"{videos} videos, {len(manifest.records)} frames -> {manifest.root}")


def _run_root(resolved) -> Path:
    return Path(resolved["report"]["out_dir"])


@cli.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(), help="Run config JSON.")
@click.option("--mode", required=True, type=click.Choice(MODES))
@click.option(
    "--seed",
    type=int,
    default=None,
    envvar="MVC_SEED",
    help="Overrides the config seed; MVC_SEED does the same.",
)
@_guarded
def cmd_run(config_path, mode, seed):
    """One experiment: pretrain plus linear eval, or the supervised baseline."""
    resolved = load_config(config_path)
    config = experiment_config(resolved, mode, seed=seed)
    run_dir = _run_root(resolved) / config_fingerprint(config)[:12] / f"seed{config.seed}"
    report = run_experiment(config, run_dir=run_dir)
    write_metrics_csv([report], run_dir / "metrics.csv")
    write_summary_json(report, run_dir / "summary.json")
    write_config_echo(resolved, run_dir / "config.json")
    click.echo(f"run {report.run_id}: test accuracy {report.test_accuracy:.4f} -> {run_dir}")


@cli.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path(), help="Run config JSON.")
@click.option("--gap-mode", required=True, type=click.Choice(("fixed", "range")))
@click.option(
    "--fps",
    required=True,
    type=click.Choice(("1", "3")),
    help="Frame rate the sweep grid is built for; must match the dataset.",
)
@click.option("--seed", type=int, default=None, envvar="MVC_SEED")
@click.option(
    "--jobs",
    type=int,
    default=1,
    show_default=True,
    help="Worker processes; results are identical to the sequential order.",
)
@_guarded
def cmd_sweep(config_path, gap_mode, fps, seed, jobs):
    """A transform-pairing run per grid gap; per-run failures are recorded."""
    resolved = load_config(config_path)
    config = experiment_config(resolved, "simclr_transform", seed=seed)
    manifest = load_dataset(config)
    if manifest.fps != float(fps):
        raise ConfigError(f"--fps {fps} does not match the dataset ({manifest.fps:g} fps)")
    root = (
        _run_root(resolved)
        / f"sweep_{config_fingerprint(config)[:12]}"
        / f"{gap_mode}_seed{config.seed}"
    )
    reports = run_gap_sweep(config, gap_mode, run_root=root, manifest=manifest, jobs=jobs)
    write_metrics_csv(reports, root / "metrics.csv")
    for rep in reports:
        write_summary_json(rep, root / f"gap_{rep.gap:g}" / "summary.json")
    write_config_echo(resolved, root / "config.json")
    failed = [r for r in reports if r.error is not None]
    for r in failed:
        click.echo(f"gap {r.gap:g} failed: {r.error}", err=True)
    click.echo(f"{len(reports) - len(failed)}/{len(reports)} gaps finished -> {root}")
    if len(failed) == len(reports):
        sys.exit(1)


@cli.command("report")
@click.option(
    "--runs",
    "run_dirs",
    multiple=True,
    required=True,
    type=click.Path(),
    help="Run directories to aggregate; summaries are found recursively.",
)
@click.option("--out", "out_dir", type=click.Path(), default="report", show_default=True)
@click.option("--plot", is_flag=True, default=False, help="Also write SVG charts.")
@_guarded
def cmd_report(run_dirs, out_dir, plot):
    """Aggregate run summaries into a mean/std table per (mode, gap)."""
    docs, problems = load_summaries(run_dirs)
    rows, skipped = aggregate(docs)
    for note in problems + skipped:
        click.echo(f"skipped: {note}", err=True)
    if not rows:
        raise ConfigError("no usable run summaries under the given directories")
    out = Path(out_dir)
    write_aggregate_csv(rows, out / "aggregate.csv")
    written = [out / "aggregate.csv"]
    if plot:
        written.extend(write_plots(rows, out))
    for path in written:
        click.echo(str(path))


main = cli
