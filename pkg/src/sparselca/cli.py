"""Command-line interface.

Subcommands: select-k, fit, refine, pipeline, simulate, heatmap.
Exit codes: 0 success, 2 input/parse error, 3 numerical failure,
4 configuration error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .em import EmConfig, em_fit, select_num_classes
from .errors import ConfigError, NumericalError, ParseError, PipelineStageError
from .io import (
    SCHEMA_VERSION,
    diagnostics_to_dict,
    dumps_document,
    model_to_dict,
    read_binary_csv,
    refinement_to_dict,
    setting_from_dict,
    simulation_to_dict,
    write_document,
    write_simulation_table,
)
from .model import posterior
from .pipeline import emit_heatmap_rows, pipeline_to_dict, run_pipeline
from .refine import EbicConfig, refine_item
from .simulate import preset_setting, run_simulation

EXIT_PARSE = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, PipelineStageError):
        return _exit_code(exc.cause)
    if isinstance(exc, ParseError) or isinstance(exc, OSError):
        return EXIT_PARSE
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ParseError, NumericalError, ConfigError, PipelineStageError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code(exc))

    return wrapper


def _em_options(fn):
    for option in reversed(
        [
            click.option("--seed", type=int, default=0, show_default=True),
            click.option("--starts", type=int, default=20, show_default=True,
                         help="Number of independent EM starts."),
            click.option("--tol", type=float, default=1e-7, show_default=True,
                         help="Absolute log-likelihood convergence threshold."),
            click.option("--max-iter", type=int, default=2000, show_default=True),
        ]
    ):
        fn = option(fn)
    return fn


def _io_options(fn):
    for option in reversed(
        [
            click.option("--header/--no-header", default=False,
                         help="First CSV row holds item labels."),
            click.option("--out", type=click.Path(dir_okay=False), default=None,
                         help="Write the output document here instead of stdout."),
        ]
    ):
        fn = option(fn)
    return fn


def _make_em_config(seed, starts, tol, max_iter) -> EmConfig:
    return EmConfig(max_iterations=max_iter, tolerance=tol, n_starts=starts, seed=seed)


def _emit(doc: dict, out: str | None) -> None:
    if out is None:
        click.echo(dumps_document(doc))
    else:
        write_document(doc, out)


@click.group()
def main():
    """Sparse latent class analysis with item-level refinement."""


@main.command("select-k")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.option("--k-min", type=int, default=1, show_default=True)
@click.option("--k-max", type=int, default=8, show_default=True)
@_em_options
@_io_options
@_guarded
def select_k_command(data, k_min, k_max, seed, starts, tol, max_iter, header, out):
    """Fit a range of class counts and report the BIC minimizer."""
    matrix = read_binary_csv(data, has_header=header)
    config = _make_em_config(seed, starts, tol, max_iter)
    best_k, trace = select_num_classes(matrix, k_min, k_max, config)
    _emit(
        {
            "schema_version": SCHEMA_VERSION,
            "selected_k": best_k,
            "bic_trace": [[k, v] for k, v in trace],
        },
        out,
    )


@main.command("fit")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.option("--classes", "-k", type=int, required=True, help="Number of latent classes.")
@_em_options
@_io_options
@_guarded
def fit_command(data, classes, seed, starts, tol, max_iter, header, out):
    """Unrestricted EM fit at a fixed class count."""
    matrix = read_binary_csv(data, has_header=header)
    config = _make_em_config(seed, starts, tol, max_iter)
    model, diagnostics = em_fit(matrix, classes, config)
    doc = model_to_dict(model)
    doc["diagnostics"] = diagnostics_to_dict(diagnostics)
    _emit(doc, out)


@main.command("refine")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.option("--classes", "-k", type=int, required=True, help="Number of latent classes.")
@click.option("--rho", type=float, default=20.0, show_default=True,
              help="EBIC sparsity-preference constant.")
@_em_options
@_io_options
@_guarded
def refine_command(data, classes, rho, seed, starts, tol, max_iter, header, out):
    """Fit, then run the item-level refinement and report selected levels."""
    matrix = read_binary_csv(data, has_header=header)
    config = _make_em_config(seed, starts, tol, max_iter)
    model, diagnostics = em_fit(matrix, classes, config)
    gamma = posterior(matrix, model)
    ebic_config = EbicConfig(rho=rho)
    refinements = [
        refine_item(j, matrix, gamma, model.items, ebic_config) for j in range(matrix.n_items)
    ]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "unrestricted": model_to_dict(model),
        "diagnostics": diagnostics_to_dict(diagnostics),
        "refinement": [refinement_to_dict(r) for r in refinements],
    }
    _emit(doc, out)


@main.command("pipeline")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.option("--classes", "-k", type=int, default=None,
              help="Fixed class count; omit to search --k-min..--k-max by BIC.")
@click.option("--k-min", type=int, default=1, show_default=True)
@click.option("--k-max", type=int, default=8, show_default=True)
@click.option("--rho", type=float, default=20.0, show_default=True)
@click.option("--no-se", is_flag=True, default=False, help="Skip standard errors.")
@_em_options
@_io_options
@_guarded
def pipeline_command(data, classes, k_min, k_max, rho, no_se, seed, starts, tol, max_iter,
                     header, out):
    """Full procedure: fit, refine every item, re-estimate, standard errors."""
    matrix = read_binary_csv(data, has_header=header)
    config = _make_em_config(seed, starts, tol, max_iter)
    k_range = classes if classes is not None else (k_min, k_max)
    output = run_pipeline(
        matrix, k_range, EbicConfig(rho=rho), config, compute_se=not no_se
    )
    _emit(pipeline_to_dict(output), out)


@main.command("simulate")
@click.option("--setting", "setting_name", default="setting1", show_default=True,
              help="setting1, setting2, or custom:<config.json>.")
@click.option("--n", type=int, default=None, help="Override the sample size.")
@click.option("--reps", type=int, default=None, help="Override the replication count.")
@click.option("--rho-grid", default=None,
              help="Comma-separated EBIC tuning values, e.g. '1,20,320'.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--starts", type=int, default=20, show_default=True)
@click.option("--tol", type=float, default=1e-7, show_default=True)
@click.option("--max-iter", type=int, default=2000, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the JSON report here (and a CSV table next to it).")
@click.option("--table", type=click.Path(dir_okay=False), default=None,
              help="Explicit path for the flat CSV table.")
@_guarded
def simulate_command(setting_name, n, reps, rho_grid, seed, starts, tol, max_iter, out, table):
    """Run the Monte Carlo harness for a named or custom setting."""
    import dataclasses

    if setting_name.startswith("custom:"):
        path = setting_name.split(":", 1)[1]
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read setting file {path!r}: {exc}") from exc
        setting = setting_from_dict(doc)
    else:
        setting = preset_setting(setting_name)

    overrides = {"seed": seed}
    if n is not None:
        overrides["n"] = n
    if reps is not None:
        overrides["n_replications"] = reps
    if rho_grid is not None:
        overrides["rho_grid"] = tuple(float(r) for r in rho_grid.split(","))
    setting = dataclasses.replace(setting, **overrides)

    config = _make_em_config(seed, starts, tol, max_iter)
    result = run_simulation(setting, config)
    doc = simulation_to_dict(result)
    _emit(doc, out)
    table_path = table or (str(Path(out).with_suffix(".csv")) if out else None)
    if table_path:
        write_simulation_table(result, table_path)


@main.command("heatmap")
@click.argument("pipeline_doc", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Destination CSV for the long-format heatmap table.")
@_guarded
def heatmap_command(pipeline_doc, out):
    """Emit long-format heatmap data from a pipeline output document."""
    try:
        doc = json.loads(Path(pipeline_doc).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"not a valid pipeline document: {exc}") from exc
    try:
        import numpy as np

        emit_heatmap_rows(
            item_labels=doc["item_labels"],
            class_order=doc["class_order"],
            item_order=doc["item_order"],
            beta=np.array(doc["final"]["beta"]),
            path=out,
        )
    except KeyError as exc:
        raise ParseError(f"pipeline document is missing field {exc}") from exc


if __name__ == "__main__":
    main()
