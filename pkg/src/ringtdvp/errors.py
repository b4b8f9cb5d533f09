#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""Error types for ringtdvp operations."""

from __future__ import annotations

from typing import Any

from provide.foundation import FoundationError


class RingTdvpError(FoundationError):
    """Base error for all ringtdvp operations."""


class ConfigurationError(RingTdvpError):
    """Error in a run configuration."""

    def __init__(self, message: str, *, key: str | None = None) -> None:
        super().__init__(message)
        self.key = key


class StateError(RingTdvpError):
    """Error constructing or manipulating a cMPS state."""


class InvalidStateError(StateError):
    """State parameters violate a structural requirement (D, L, shapes)."""


class GaugeError(StateError):
    """Non-Hermitian K or a singular gauge transformation."""


class GaugeFixingError(StateError):
    """The reduced gauge V = -R†W cannot be imposed for this state."""


class CheckpointError(StateError):
    """Failed to read or write a checkpoint file."""


class SchemaVersionError(CheckpointError):
    """Checkpoint schema version is not supported."""


class ChecksumMismatchError(CheckpointError):
    """Checkpoint payload does not match its CRC32."""


class NumericsError(RingTdvpError):
    """Error inside a numerical kernel."""


class DimensionMismatchError(NumericsError):
    """Operand shapes do not agree."""


class EigensolverError(NumericsError):
    """Eigendecomposition of the transfer generator failed."""

    def __init__(self, message: str, *, residual: float | None = None) -> None:
        super().__init__(message)
        self.residual = residual


class DegenerateSpectrumError(NumericsError):
    """Leading eigenvalue is degenerate beyond the merge threshold."""


class PseudoInverseError(NumericsError):
    """Deflated pseudo-inverse solve did not converge."""

    def __init__(self, message: str, *, residual: float | None = None, iterations: int | None = None) -> None:
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NormUnderflowError(NumericsError):
    """State norm fell below the degeneracy floor."""


class NonFiniteStepError(NumericsError):
    """An update produced NaN or infinite entries."""


class SolverError(RingTdvpError):
    """Error in an outer solver (optimizer, tuner, GP relaxation)."""


class GramSolveError(SolverError):
    """Gram system could not be solved to tolerance."""

    def __init__(
        self,
        message: str,
        *,
        residual: float | None = None,
        condition_estimate: float | None = None,
    ) -> None:
        super().__init__(message)
        self.residual = residual
        self.condition_estimate = condition_estimate


class StagnationError(SolverError):
    """Optimizer found no descent direction after a restart."""

    def __init__(self, message: str, *, state: Any = None, trace: Any = None) -> None:
        super().__init__(message)
        self.state = state
        self.trace = trace


class BracketError(SolverError):
    """Chemical potential bracket does not straddle the target particle number."""


class GpConvergenceError(SolverError):
    """Gross-Pitaevskii relaxation did not converge."""


class NoDepletionError(SolverError):
    """Density profile has no central depletion to measure."""


class OracleError(RingTdvpError):
    """Error in the reference implementations."""


class OracleCertificationError(OracleError):
    """Closed-form reference disagrees with direct quadrature."""


class OracleMismatchError(OracleError):
    """Production quantity disagrees with the reference."""

    def __init__(self, message: str, *, row: str | None = None) -> None:
        super().__init__(message)
        self.row = row


class OutputError(RingTdvpError):
    """Failed to write a result file."""


# 🐝📁🔚
