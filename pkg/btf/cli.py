"""Command-line interface
A click command group over the experiment scripts: generate synthetic instances, fit a tensor (optionally over a
hyperparameter grid with DIC selection, or through the dose-response pipeline), reproduce the benchmarks, score
predictions and export predictive curves.

Created: 19/10/2026
"""

# imports
import functools
import json
import os
from typing import Callable, Optional
import click
import pandas as pd
from btf.generating_data import (
    dose_response_gen,
    fit_gen,
    gass_benchmark_gen,
    poisson_benchmark_gen,
    synthetic_gen,
)
from btf.model.errors import BTFError
from btf.plotting_data import curves_plot_data
from btf.resources.logger import configure_logging
from btf.resources.metrics import score_frames
from btf.resources.utility import RunManifest, createFolder, produce_name_datetime, save_json

CONSTANTS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "constants")


# modules
def constants_path(name: str) -> str:
    return os.path.join(CONSTANTS_DIR, name)


def reports_errors(command: Callable) -> Callable:
    """Turn library errors into a clean message and exit status 1"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except BTFError as exc:
            raise click.ClickException(str(exc)) from exc
        except OSError as exc:
            raise click.ClickException("%s: %s" % (getattr(exc, "filename", None) or "I/O error", exc.strerror or exc)) from exc

    return wrapper


@click.group()
@click.option("--seed", type=int, default=None, help="Master seed; overrides the parameter file.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output folder (default results/<run>_<time>).")
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True, help="Worker threads / parallel jobs.")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None, help="JSON parameter file.")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]), default="INFO", show_default=True)
@click.pass_context
def cli(ctx: click.Context, seed: Optional[int], out: Optional[str], threads: int, config: Optional[str], log_level: str):
    """Bayesian tensor filtering."""
    configure_logging(level=log_level)
    ctx.obj = {"seed": seed, "out": out, "threads": threads, "config": config}


@cli.command()
@click.argument("kind", type=click.Choice(list(synthetic_gen.GENERATE_KINDS)))
@click.pass_obj
@reports_errors
def generate(obj: dict, kind: str):
    """Draw one synthetic instance (gass, poisson, gaussian or dose) with its ground truth."""
    fileName = synthetic_gen.main(
        kind=kind,
        BASE_PARAMS_LOAD=obj["config"] or constants_path("base_params_generate.json"),
        fileName=obj["out"],
        seed=obj["seed"] if obj["seed"] is not None else 0,
    )
    click.echo(fileName)


@cli.command()
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None, help="Long-format CSV row,col,dose,replicate,value.")
@click.option("--plates", type=click.Path(exists=True, dir_okay=False), default=None, help="Plate CSV; runs the dose-response pipeline.")
@click.option("--grid", type=str, default=None, help='Hyperparameter grid, e.g. "rho2=0.001,0.01,0.1 D=1,3".')
@click.option("--grid-file", type=click.Path(exists=True, dir_okay=False), default=None, help="variable_parameters_dict JSON.")
@click.option("--resume", is_flag=True, help="Continue from the checkpoint in --out.")
@click.pass_obj
@reports_errors
def fit(obj: dict, data: Optional[str], plates: Optional[str], grid: Optional[str], grid_file: Optional[str], resume: bool):
    """Fit the model, save samples, traces, DIC and predictive curves."""
    if resume and obj["out"] is None:
        raise click.UsageError("--resume needs --out pointing at the interrupted run")
    if plates is not None:
        fileName = dose_response_gen.main(
            BASE_PARAMS_LOAD=obj["config"] or constants_path("base_params_dose_response.json"),
            fileName=obj["out"],
            plates_csv=plates,
            seed=obj["seed"],
            threads=obj["threads"],
        )
    else:
        fileName = fit_gen.main(
            BASE_PARAMS_LOAD=obj["config"] or constants_path("base_params_fit.json"),
            fileName=obj["out"],
            data=data,
            grid=grid,
            VARIABLE_PARAMS_LOAD=grid_file,
            resume=resume,
            seed=obj["seed"],
            threads=obj["threads"],
        )
    click.echo(fileName)


@cli.command()
@click.argument("kind", type=click.Choice(["gass-table1", "poisson-table2", "dose-response"]))
@click.option("--trials", type=click.IntRange(min=1), default=None, help="Independent trials (instances).")
@click.option("--m", "m", type=click.IntRange(min=1), default=None, help="Retained samples per chain (gass-table1).")
@click.pass_obj
@reports_errors
def benchmark(obj: dict, kind: str, trials: Optional[int], m: Optional[int]):
    """Reproduce a benchmark table with mean ± standard error over trials."""
    if kind == "gass-table1":
        fileName = gass_benchmark_gen.main(
            BASE_PARAMS_LOAD=obj["config"] or constants_path("base_params_gass_benchmark.json"),
            fileName=obj["out"],
            seed=obj["seed"],
            trials=trials,
            m=m,
            threads=obj["threads"],
        )
    elif kind == "poisson-table2":
        fileName = poisson_benchmark_gen.main(
            BASE_PARAMS_LOAD=obj["config"] or constants_path("base_params_poisson_benchmark.json"),
            fileName=obj["out"],
            seed=obj["seed"],
            trials=trials,
            threads=obj["threads"],
        )
    else:
        fileName = dose_response_gen.main(
            BASE_PARAMS_LOAD=obj["config"] or constants_path("base_params_dose_response.json"),
            fileName=obj["out"],
            seed=obj["seed"],
            threads=obj["threads"],
        )
    click.echo(fileName)


@cli.command()
@click.option("--pred", "pred_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--level", type=float, default=0.9, show_default=True)
@click.pass_obj
@reports_errors
def metrics(obj: dict, pred_path: str, truth_path: str, level: float):
    """Score a tidy prediction CSV against a tidy truth CSV and write metrics.json."""
    report = score_frames(pd.read_csv(pred_path), pd.read_csv(truth_path), level=level)
    fileName = obj["out"] if obj["out"] is not None else produce_name_datetime("metrics")
    createFolder(fileName)
    manifest = RunManifest(command="metrics", config={"pred": pred_path, "truth": truth_path, "level": level}, seed=0)
    manifest.add_output(save_json(report, fileName + "/Data", "metrics"), fileName)
    manifest.finish("ok")
    manifest.write(fileName)
    click.echo(json.dumps(report, sort_keys=True))


@cli.command()
@click.option("--run", "run_dir", type=click.Path(exists=True, file_okay=False), required=True, help="Folder of a fit.")
@click.option("--level", type=float, default=0.9, show_default=True)
@reports_errors
def predict(run_dir: str, level: float):
    """Export posterior-mean curves and credible bands for every pair, held-out pairs included."""
    click.echo(curves_plot_data.main(fileName=run_dir, level=level))


if __name__ == "__main__":
    cli()
