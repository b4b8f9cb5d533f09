#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""Result files and console tables.

Series go to CSV with fixed column orders, documents to JSON with a
``schema_version``, plots to SVG. Every run ends with ``manifest.json``.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Sequence
from contextlib import contextmanager
import csv
import datetime
import io
import json
import math
from pathlib import Path
import subprocess
import sys
import time
from typing import Any, Literal

import attrs
import numpy as np
from provide.foundation import logger
from provide.foundation.file import atomic_write
from rich.console import Console
from rich.table import Table

from ringtdvp.errors import OutputError

OUTPUT_SCHEMA_VERSION = 1
PARTIAL_SUFFIX = ".partial"
MANIFEST_NAME = "manifest.json"

TRACE_HEADER = ("iter", "energy_total", "energy_bulk", "grad_norm", "N", "mu", "boundary_residual", "wall_ms")
DENSITY_HEADER = ("x", "rho")
SWEEP_HEADER = ("omega", "energy", "current", "valid")
EPS_HEADER = ("eps", "energy_bulk", "energy_boundary", "boundary_residual")
WIDTH_HEADER = ("N", "sigma", "healing_length")

RunStatus = Literal["ok", "partial", "failed"]


def format_value(value: Any) -> str:
    """Exact, locale-free text for one CSV cell."""
    if isinstance(value, bool | np.bool_):
        return "true" if value else "false"
    if isinstance(value, int | np.integer):
        return str(int(value))
    if isinstance(value, float | np.floating):
        number = float(value)
        return "nan" if math.isnan(number) else repr(number)
    return str(value)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _write_bytes(path: Path, data: bytes) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write(path, data)
    except OSError as e:
        raise OutputError(f"Failed to write {path}: {e}") from e
    logger.debug("output.file.written", path=str(path), size=len(data))
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Raises:
    OutputError: If the file cannot be written.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise OutputError(f"Row of width {len(row)} does not match header {tuple(header)}")
        writer.writerow([format_value(cell) for cell in row])
    return _write_bytes(path, buffer.getvalue().encode("utf-8"))


def write_json(path: Path, document: dict[str, Any]) -> Path:
    payload = {"schema_version": OUTPUT_SCHEMA_VERSION, **document}
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default, allow_nan=True)
    return _write_bytes(path, (text + "\n").encode("utf-8"))


def write_line_plot(
    path: Path,
    x: Sequence[float],
    series: dict[str, Sequence[float]],
    *,
    xlabel: str,
    ylabel: str,
    title: str | None = None,
) -> Path:
    """Simple SVG line plot rendered off-screen."""
    from matplotlib.figure import Figure

    figure = Figure(figsize=(6.0, 4.0))
    axes = figure.subplots()
    for label, values in series.items():
        axes.plot(x, values, label=label)
    axes.set_xlabel(xlabel)
    axes.set_ylabel(ylabel)
    if title:
        axes.set_title(title)
    if len(series) > 1:
        axes.legend()
    buffer = io.BytesIO()
    figure.savefig(buffer, format="svg", metadata={"Date": None})
    return _write_bytes(path, buffer.getvalue())


def build_id() -> str:
    """``git describe`` of the working tree, or ``unknown`` outside a repository."""
    try:
        result = subprocess.run(  # noqa: S603
            ["git", "describe", "--always", "--dirty", "--tags"],  # noqa: S607
            capture_output=True,
            text=True,
            timeout=5,
            check=False,
            cwd=Path(__file__).parent,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    described = result.stdout.strip()
    return described if result.returncode == 0 and described else "unknown"


@attrs.define(slots=True, kw_only=True)
class RunManifest:
    """What a run did: parameters, seeds, timings and the files it left behind."""

    experiment: str
    parameters: dict[str, Any] = attrs.field(factory=dict)
    seeds: dict[str, int | None] = attrs.field(factory=dict)
    phases: dict[str, float] = attrs.field(factory=dict)
    files: list[str] = attrs.field(factory=list)
    status: RunStatus = "ok"
    error: str | None = None

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        """Record the wall time of a block under ``name`` (seconds)."""
        start = time.monotonic()
        try:
            yield
        finally:
            self.phases[name] = self.phases.get(name, 0.0) + time.monotonic() - start

    def document(self) -> dict[str, Any]:
        from ringtdvp import __version__

        return {
            "package_version": __version__,
            "build_id": build_id(),
            "experiment": self.experiment,
            "parameters": self.parameters,
            "seeds": self.seeds,
            "wall_seconds": self.phases,
            "files": self.files,
            "status": self.status,
            "error": self.error,
            "timestamp": datetime.datetime.now(datetime.UTC).isoformat(),
        }


class ResultWriter:
    """Writes one run's files into a directory; one writer per file.

    Formats not requested are skipped silently. ``mark_partial`` renames every
    file written so far with a ``.partial`` suffix.
    """

    def __init__(self, directory: Path, formats: Sequence[str], *, plots: bool = False) -> None:
        self.directory = directory
        self.formats = frozenset(formats)
        self.plots = plots or "svg" in self.formats
        self.written: list[Path] = []

    def track(self, path: Path) -> Path:
        """Register a file written outside the writer (checkpoints)."""
        if path not in self.written:
            self.written.append(path)
        return path

    def csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path | None:
        if "csv" not in self.formats:
            return None
        return self.track(write_csv(self.directory / f"{name}.csv", header, rows))

    def json(self, name: str, document: dict[str, Any]) -> Path | None:
        if "json" not in self.formats:
            return None
        return self.track(write_json(self.directory / f"{name}.json", document))

    def plot(
        self,
        name: str,
        x: Sequence[float],
        series: dict[str, Sequence[float]],
        *,
        xlabel: str,
        ylabel: str,
        title: str | None = None,
    ) -> Path | None:
        if not self.plots:
            return None
        path = self.directory / f"{name}.svg"
        return self.track(write_line_plot(path, x, series, xlabel=xlabel, ylabel=ylabel, title=title))

    def mark_partial(self) -> list[Path]:
        renamed: list[Path] = []
        for path in self.written:
            if not path.exists() or path.name.endswith(PARTIAL_SUFFIX):
                continue
            target = path.with_name(path.name + PARTIAL_SUFFIX)
            try:
                path.replace(target)
            except OSError as e:
                logger.error("output.partial.rename_failed", path=str(path), error=str(e))
                continue
            renamed.append(target)
        self.written = renamed
        logger.warning("output.partial", files=[str(path) for path in renamed])
        return renamed

    def finish(self, manifest: RunManifest) -> Path:
        """Write ``manifest.json`` listing every file of the run."""
        manifest.files = [path.name for path in self.written]
        return write_json(self.directory / MANIFEST_NAME, manifest.document())


def oracle_table(rows: Sequence[tuple[str, float, bool, str | None]], *, threshold: float) -> Table:
    table = Table(title=f"Oracle check (threshold {threshold:.0e})", header_style="bold cyan")
    table.add_column("Quantity", style="bold")
    table.add_column("Max rel. error", justify="right")
    table.add_column("Result", justify="center")
    table.add_column("Worst row", style="dim")
    for quantity, error, passed, worst in rows:
        result = "[bold green]pass[/]" if passed else "[bold red]FAIL[/]"
        table.add_row(quantity, f"{error:.3e}", result, worst or "-")
    return table


def summary_table(title: str, values: dict[str, Any]) -> Table:
    table = Table(title=title, header_style="bold cyan", show_header=True, row_styles=["none", "dim"])
    table.add_column("Quantity", style="bold")
    table.add_column("Value", justify="right", style="magenta")
    for key, value in values.items():
        shown = f"{value:.10g}" if isinstance(value, float) else str(value)
        table.add_row(key, shown)
    return table


def display_table(table: Table) -> None:
    Console(file=sys.stdout).print(table)


# 🐝📁🔚
