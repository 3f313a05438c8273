"""Command line: ``coarse2fine {synth,benchmark,active,eval}``.

Exit status is 0 on success, 2 for configuration errors, 3 for invalid
input data and 4 for file-system errors.
"""
import json
import sys

import click

from . import experiments
from .config import load_config, to_dict
from .errors import RefineError, StorageError
from .fileio import load_dataset, load_params


def _common(fn):
    fn = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                      help="JSON experiment configuration.")(fn)
    fn = click.option("--seed", type=click.IntRange(min=0), default=None, help="Master seed (overrides config).")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default=None,
                      help="Output directory (overrides config).")(fn)
    fn = click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
                      help="Worker processes for independent cells.")(fn)
    return fn


def _load(config_path, seed, out):
    return load_config(config_path).with_overrides(seed=seed, out=out)


def _report(paths):
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


@click.group()
def cli():
    """Learn fine-grained label classifiers from coarse labels and a small warm-up set."""


@cli.command()
@_common
def synth(config_path, seed, out, threads):
    """Write a synthetic dataset (train pool and test split) to --out."""
    _report(experiments.run_synth(_load(config_path, seed, out)))


@cli.command()
@_common
@click.option("--save-params", is_flag=True, help="Also write every trained model.")
def benchmark(config_path, seed, out, threads, save_params):
    """Compare the learners at each warm-up ratio."""
    _report(experiments.run_benchmark(_load(config_path, seed, out), threads, save_params))


@cli.command()
@_common
def active(config_path, seed, out, threads):
    """Run the active-learning loop for each query strategy."""
    _report(experiments.run_active(_load(config_path, seed, out), threads))


@cli.command("eval")
@_common
@click.option("--params", "params_path", required=True, type=click.Path(dir_okay=False))
@click.option("--features", required=True, type=click.Path(dir_okay=False))
@click.option("--coarse", required=True, type=click.Path(dir_okay=False))
@click.option("--fine", required=True, type=click.Path(dir_okay=False))
@click.option("--hierarchy", required=True, type=click.Path(dir_okay=False))
def evaluate(config_path, seed, out, threads, params_path, features, coarse, fine, hierarchy):
    """Precision@k of a saved model on a labelled dataset."""
    cfg = _load(config_path, seed, out)
    data, _ = load_dataset(features, coarse, fine, hierarchy)
    path = experiments.run_eval(load_params(params_path), data, cfg.ks, cfg.out)
    _report({"eval": path})


@cli.command("show-config")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
def show_config(config_path):
    """Print the effective configuration as JSON."""
    click.echo(json.dumps(to_dict(load_config(config_path)), indent=2))


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="coarse2fine", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except RefineError as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    except OSError as exc:
        click.echo(f"error: {StorageError(str(exc))}", err=True)
        return StorageError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
