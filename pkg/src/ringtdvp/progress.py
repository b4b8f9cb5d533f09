#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""Console progress for optimizer iterations and sweep points."""

import time
from typing import Literal

from provide.foundation.console import pout
from provide.foundation.context import CLIContext

from ringtdvp.evolution import TraceRecord

PointStatus = Literal["converged", "unconverged", "failed", "skipped"]


class ProgressReporter:
    """Reports progress while an experiment runs.

    Uses Foundation's pout() for output. Automatically disabled in JSON mode.
    Respects no_color and no_emoji settings from CLIContext.
    """

    def __init__(
        self, enabled: bool = True, cli_context: CLIContext | None = None, *, every: int = 10
    ) -> None:
        """Initialize progress reporter.

        Args:
            enabled: Whether progress reporting is enabled
            cli_context: Optional CLI context (disables progress in JSON mode)
            every: Report every ``every``-th optimizer iteration
        """
        self.enabled = enabled
        self.cli_context = cli_context
        self.every = max(1, every)
        self.current_operation: str | None = None
        self.operation_start_time: float = 0.0

        if cli_context and cli_context.json_output:
            self.enabled = False

    def _should_output(self) -> bool:
        return self.enabled and not (self.cli_context and self.cli_context.json_output)

    def _get_status_symbol(self, status: PointStatus) -> str:
        no_emoji = self.cli_context and self.cli_context.no_emoji
        symbols = {
            "converged": "✓" if not no_emoji else "+",
            "unconverged": "≈" if not no_emoji else "~",
            "failed": "✗" if not no_emoji else "!",
            "skipped": "⊝" if not no_emoji else "-",
        }
        return symbols.get(status, "?")

    def _get_status_color(self, status: PointStatus) -> str:
        colors = {"converged": "green", "unconverged": "yellow", "failed": "red", "skipped": "yellow"}
        return colors.get(status, "white")

    def operation_start(self, operation_name: str) -> None:
        """Signal start of an experiment phase.

        Args:
            operation_name: Name of the phase (e.g., "Ground state D=4")
        """
        if not self._should_output():
            return

        self.current_operation = operation_name
        self.operation_start_time = time.monotonic()
        pout(f"\n{operation_name}...", color="cyan", bold=True, ctx=self.cli_context)

    def operation_end(self, operation_name: str, count: int, elapsed: float | None = None) -> None:
        """Signal end of a phase with the number of iterations or points it took."""
        if not self._should_output():
            return

        if elapsed is None and self.operation_start_time > 0:
            elapsed = time.monotonic() - self.operation_start_time

        elapsed_str = f" in {elapsed:.1f}s" if elapsed else ""
        pout(f"{operation_name} complete: {count} steps{elapsed_str}", color="cyan", ctx=self.cli_context)
        self.current_operation = None
        self.operation_start_time = 0.0

    def iteration(self, record: TraceRecord) -> None:
        """Optimizer callback; prints every ``every``-th iteration."""
        if not self._should_output() or record.iteration % self.every:
            return
        pout(
            f"  iter {record.iteration:5d}  E={record.energy_total:+.12f}  "
            f"|g|={record.grad_norm:.3e}  N={record.particle_number:.6f}",
            ctx=self.cli_context,
        )

    def point(self, label: str, status: PointStatus, details: str | None = None) -> None:
        """Report one sweep point."""
        if not self._should_output():
            return

        symbol = self._get_status_symbol(status)
        details_str = f" ({details})" if details else ""
        pout(
            f"  {symbol} {status.capitalize()}: {label}{details_str}",
            color=self._get_status_color(status),
            ctx=self.cli_context,
        )

    def simple_message(self, message: str, color: str = "white") -> None:
        if not self._should_output():
            return

        pout(f"  {message}", color=color, ctx=self.cli_context)


# 🐝📁🔚
