"""
Command-line entry point of the compliance lab.

Wires configuration loading, logging and the pipeline stages: data
collection, training, evaluation, the architecture comparison and the
simulated experiments. Every command accepts `--config`, `--seed` and `--out`
and exits with status 1 on any hard error.
"""
import sys
import logging
import functools

import click
from rich.logging import RichHandler

from constants import DEFAULT_CONFIG_FILE
from compliance_core.config import load_config, dump_config
from compliance_core.errors import LabError
from compliance_core.io_utils import ensure_project_dirs
from compliance_core import pipeline


def setup_logging(verbose):
    """Route the root logger through rich."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=False, show_path=False)],
        force=True,
    )


def common_options(func):
    """Add the shared options and turn them into (cfg, paths)."""

    @click.option("--config", "config_path", type=click.Path(dir_okay=False),
                  help="TOML config file (defaults to lab.toml when present).")
    @click.option("--seed", type=int, default=None, help="Seed overriding every seed in the config.")
    @click.option("--out", type=click.Path(file_okay=False), default=None,
                  help="Directory for the dataset, checkpoint and results.")
    @click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
    @functools.wraps(func)
    def wrapper(config_path, seed, out, verbose, **kwargs):
        setup_logging(verbose)
        try:
            if config_path is None and DEFAULT_CONFIG_FILE.exists():
                config_path = DEFAULT_CONFIG_FILE
            cfg = load_config(config_path, seed)
            ensure_project_dirs()
            paths = pipeline.artifact_paths(cfg, out)
            paths.output_dir.mkdir(parents=True, exist_ok=True)
            return func(cfg, paths, **kwargs)
        except (LabError, ValueError, OSError) as e:
            logging.exception("%s failed: %s", func.__name__.replace("_", "-"), e)
            sys.exit(1)

    return wrapper


@click.group()
def cli():
    """Model-less compliant motion control lab on a simulated tendon robot."""


@cli.command()
@common_options
@click.option("--duration", type=float, default=None, help="Seconds to record (overrides the config).")
def collect(cfg, paths, duration):
    """Explore cable space and record an unloaded dataset."""
    if duration is not None:
        cfg = cfg.model_copy(update={"duration": duration})
    df = pipeline.run_collect(cfg, paths)
    click.echo(f"{len(df)} records -> {paths.dataset}")


@cli.command()
@common_options
@click.option("--epochs", type=int, default=None, help="Training epochs (overrides the config).")
@click.option("--model-kind", type=click.Choice(["lstm", "cnn"]), default=None)
def train(cfg, paths, epochs, model_kind):
    """Train a tension predictor and write its checkpoint."""
    update = {}
    if epochs is not None:
        update["epochs"] = epochs
    if model_kind is not None:
        update["model_kind"] = model_kind
    if update:
        cfg = cfg.model_copy(update={"train": cfg.train.model_copy(update=update)})
    predictor = pipeline.run_train(cfg, paths)
    click.echo(f"val mean error {predictor.history[-1]['val_error']:.4f} N -> {paths.checkpoint}")


@cli.command(name="eval")
@common_options
def eval_(cfg, paths):
    """Evaluate a checkpoint on the train and validation splits."""
    report = pipeline.run_eval(cfg, paths)
    click.echo(f"train {report['train_error']:.4f} N, val {report['val_error']:.4f} N, "
               f"lambda {report['lambda']:.4f} N")


@cli.command()
@common_options
@click.option("--epochs", type=int, default=None, help="Epochs per cell (overrides the config).")
@click.option("--workers", type=int, default=None, help="Parallel cells.")
def compare(cfg, paths, epochs, workers):
    """Train the LSTM/CNN size x window grid over several seeds."""
    update = {}
    if epochs is not None:
        update["epochs"] = epochs
    if workers is not None:
        update["workers"] = workers
    if update:
        cfg = cfg.model_copy(update={"compare": cfg.compare.model_copy(update=update)})
    grid, _ = pipeline.run_compare(cfg, paths)
    click.echo(grid.to_string(index=False))


@cli.command()
@common_options
@click.option("--trials", type=int, default=None, help="Number of impulses.")
def impulse(cfg, paths, trials):
    """Wall-contact impulse responses of the compliant tip."""
    if trials is not None:
        cfg = cfg.model_copy(update={"impulse": cfg.impulse.model_copy(update={"trials": trials})})
    report = pipeline.run_impulse(cfg, paths)
    click.echo(f"{report['passed']}/{report['trials']} impulses passed")
    if not report["all_passed"]:
        logging.warning("Not every impulse met the response criteria")


@cli.command()
@common_options
@click.option("--cycles", type=int, default=None, help="Insert/retract cycles.")
@click.option("--no-controller", is_flag=True, help="Hold position in the main run as well.")
def insert(cfg, paths, cycles, no_controller):
    """Curved-tube insertion with the exceedance histogram and ablation."""
    update = {}
    if cycles is not None:
        update["cycles"] = cycles
    if no_controller:
        update["controller_enabled"] = False
    if update:
        cfg = cfg.model_copy(update={"insert": cfg.insert.model_copy(update=update)})
    report = pipeline.run_insert(cfg, paths)
    click.echo(f"peak contact {report['controller']['peak_contact_force']:.2f} N "
               f"(controller off {report['ablation']['peak_contact_force']:.2f} N)")


@cli.command()
@common_options
def calibrate(cfg, paths):
    """Fit the tip coupling constant from simulated coin-weight trials."""
    summary = pipeline.run_calibrate(cfg, paths)
    click.echo(f"alpha = 1/{summary['inverse_alpha']:.3f}, residual {summary['residual_N']:.4f} N")


@cli.command(name="rate-statics")
@common_options
def rate_statics(cfg, paths):
    """Triangle-wave tension sweeps at several cable speeds."""
    df = pipeline.run_rate_statics(cfg, paths)
    click.echo(f"{len(df)} rows -> {paths.output(pipeline.RATE_STATICS_FILE)}")


@cli.command(name="print-config")
@common_options
def print_config(cfg, paths):
    """Print the fully-resolved configuration as TOML."""
    click.echo(dump_config(cfg), nl=False)


if __name__ == "__main__":
    cli()
