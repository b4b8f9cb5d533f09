#!/usr/bin/env python3
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

import json
from pathlib import Path
from typing import NoReturn

import click
from provide.foundation import logger
from provide.foundation.cli.decorators import output_options
from provide.foundation.console import perr, pout
from provide.foundation.context import CLIContext

from ringtdvp.config import DEFAULT_OUTPUT_DIR, RuntimeConfig, load_run_config
from ringtdvp.core import oracle_summary, run_experiment
from ringtdvp.errors import (
    CheckpointError,
    ConfigurationError,
    NumericsError,
    OracleError,
    OutputError,
    SolverError,
    StateError,
)
from ringtdvp.oracle import ORACLE_MAX_DIM, oracle_check
from ringtdvp.output import display_table, oracle_table, summary_table

EXIT_ORACLE = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

try:
    from importlib.metadata import version

    __version__ = version("ringtdvp")
except ImportError:
    __version__ = "unknown"


def _cli_context(ctx: click.Context, json_output: bool | None, no_color: bool, no_emoji: bool) -> CLIContext:
    if not hasattr(ctx, "obj") or ctx.obj is None:
        ctx.obj = CLIContext()
    cli_context: CLIContext = ctx.obj
    if json_output is not None:
        cli_context.json_output = json_output
    if no_color:
        cli_context.no_color = no_color
    if no_emoji:
        cli_context.no_emoji = no_emoji
    return cli_context


def _fail(code: int, event: str, message: str, **fields: object) -> NoReturn:
    logger.critical(event, error=message, exit_code=code, **fields)
    perr(f"Error: {message}")
    raise SystemExit(code) from None


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(version=__version__, package_name="ringtdvp", message="%(package)s version %(version)s")
def cli() -> None:
    """
    ringtdvp: cMPS ground states of a Bose gas on a ring with a rotating barrier.
    """


@cli.command(name="run", context_settings={"help_option_names": ["-h", "--help"]})
@click.argument(
    "config_path",
    type=click.Path(exists=False, dir_okay=False, path_type=Path),
)
@click.option(
    "--out",
    "-o",
    type=click.Path(file_okay=False, dir_okay=True, path_type=Path),
    default=None,
    envvar="RINGTDVP_OUTPUT_DIR",
    help=f"Directory for result files. [default: outputs.dir from the config, else {DEFAULT_OUTPUT_DIR}]",
)
@click.option(
    "--threads",
    "-j",
    type=click.IntRange(min=1),
    default=1,
    envvar="RINGTDVP_THREADS",
    show_default=True,
    help="Worker threads for independent sweep points.",
)
@click.option(
    "--resume",
    type=click.Path(exists=False, dir_okay=False, path_type=Path),
    default=None,
    help="Start from a .cmps.json checkpoint instead of the configured ansatz.",
)
@click.option(
    "--plots/--no-plots",
    default=False,
    envvar="RINGTDVP_PLOTS",
    help="Write SVG line plots next to the series.",
)
@click.option(
    "--progress/--no-progress",
    default=False,
    envvar="RINGTDVP_SHOW_PROGRESS",
    help="Show optimizer progress on the console.",
)
@output_options
@click.pass_context
def run_command(
    ctx: click.Context,
    config_path: Path,
    out: Path | None,
    threads: int,
    resume: Path | None,
    plots: bool,
    progress: bool,
    json_output: bool | None,
    no_color: bool,
    no_emoji: bool,
) -> None:
    """Runs the experiment described by a TOML configuration file."""
    cli_context = _cli_context(ctx, json_output, no_color, no_emoji)
    logger.info(
        "cli.run.start",
        config=str(config_path),
        threads=threads,
        resume=str(resume) if resume else None,
    )

    try:
        config = load_run_config(config_path)
        directory = out or config.outputs.dir or DEFAULT_OUTPUT_DIR
        runtime = RuntimeConfig(threads=threads, output_dir=directory, show_progress=progress, plots=plots)
        result = run_experiment(config, runtime, directory=directory, resume=resume, cli_context=cli_context)
    except ConfigurationError as e:
        _fail(EXIT_CONFIG, "cli.run.config_error", str(e), key=e.key)
    except (CheckpointError, OutputError) as e:
        _fail(EXIT_IO, "cli.run.io_error", str(e))
    except StateError as e:
        _fail(EXIT_CONFIG, "cli.run.state_error", str(e))
    except (SolverError, NumericsError) as e:
        _fail(EXIT_SOLVER, "cli.run.solver_error", f"{e} (partial results kept with a .partial suffix)")
    except OracleError as e:
        _fail(EXIT_ORACLE, "cli.run.oracle_failed", str(e), row=getattr(e, "row", None))
    except OSError as e:
        _fail(EXIT_IO, "cli.run.io_error", str(e))

    if cli_context.json_output:
        pout(json.dumps({"directory": str(result.directory), "summary": result.summary}, default=str))
    else:
        display_table(summary_table(f"{config.experiment.name} results", _flatten(result.summary)))
        pout(f"Results written to: {result.directory}", ctx=cli_context)
    logger.info("cli.run.complete", directory=str(result.directory))


def _flatten(summary: dict[str, object], prefix: str = "") -> dict[str, object]:
    flat: dict[str, object] = {}
    for key, value in summary.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        elif isinstance(value, list) and value and isinstance(value[0], dict):
            for index, item in enumerate(value):
                flat.update(_flatten(item, f"{name}[{index}]."))
        else:
            flat[name] = value
    return flat


@cli.command(name="oracle-check", context_settings={"help_option_names": ["-h", "--help"]})
@click.option(
    "--dim",
    "-D",
    type=click.IntRange(min=1, max=ORACLE_MAX_DIM),
    default=3,
    show_default=True,
    help="Bond dimension of the random test state.",
)
@click.option("--seed", "-s", type=int, default=0, show_default=True, help="Seed of the random test state.")
@click.option("--length", "-L", type=click.FloatRange(min=0, min_open=True), default=5.0, show_default=True)
@click.option(
    "--certify/--no-certify",
    default=True,
    help="Check the reference against adaptive quadrature before comparing.",
)
@output_options
@click.pass_context
def oracle_command(
    ctx: click.Context,
    dim: int,
    seed: int,
    length: float,
    certify: bool,
    json_output: bool | None,
    no_color: bool,
    no_emoji: bool,
) -> None:
    """Compares production contractions with the dense full-spectrum reference."""
    cli_context = _cli_context(ctx, json_output, no_color, no_emoji)
    try:
        report = oracle_check(dim, seed, L=length, certify=certify)
    except OracleError as e:
        _fail(EXIT_ORACLE, "cli.oracle.error", str(e))
    except (SolverError, NumericsError) as e:
        _fail(EXIT_SOLVER, "cli.oracle.solver_error", str(e))

    if cli_context.json_output:
        pout(json.dumps(oracle_summary(report)))
    else:
        rows = [(row.quantity, row.error, row.passed, row.worst_row) for row in report.rows]
        display_table(oracle_table(rows, threshold=report.threshold))

    if not report.passed:
        _fail(
            EXIT_ORACLE,
            "cli.oracle.failed",
            f"Oracle mismatch; worst row {report.worst_row}",
            row=report.worst_row,
        )
    logger.info("cli.oracle.passed", bond_dim=dim, seed=seed)


if __name__ == "__main__":  # pragma: no cover
    cli()

# 🐝📁🔚
