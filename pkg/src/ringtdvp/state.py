#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""The variational cMPS state, its gauge structure and checkpoint persistence."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal, Protocol
import zlib

import attrs
import numpy as np
from provide.foundation import logger
from provide.foundation.file import atomic_write
from provide.foundation.resilience import retry

from ringtdvp.errors import (
    CheckpointError,
    ChecksumMismatchError,
    GaugeError,
    InvalidStateError,
    SchemaVersionError,
)
from ringtdvp.transfer import ComplexMatrix

HERMITICITY_TOL = 1e-12
SCHEMA_VERSION = 1
CHECKPOINT_SUFFIX = ".cmps.json"
WARM_START_NOISE = 1e-3
SINGULAR_CONDITION = 1e14

InitMode = Literal["random", "warm-start"]


class CmpsLike(Protocol):
    """Anything carrying the matrices of a ring cMPS."""

    @property
    def Q(self) -> ComplexMatrix: ...

    @property
    def R(self) -> ComplexMatrix: ...

    @property
    def B(self) -> ComplexMatrix: ...

    @property
    def L(self) -> float: ...


def _square(matrix: Any) -> ComplexMatrix:
    array = np.array(matrix, dtype=np.complex128)
    if array.ndim == 0:
        array = array.reshape((1, 1))
    if array.ndim != 2 or array.shape[0] != array.shape[1] or array.shape[0] < 1:
        raise InvalidStateError(f"Expected a non-empty square matrix, got shape {array.shape}.")
    return array


def _check_hermitian(K: ComplexMatrix) -> ComplexMatrix:
    skew = float(np.linalg.norm(K - K.conj().T))
    if skew > HERMITICITY_TOL * max(1.0, float(np.linalg.norm(K))):
        raise GaugeError(f"K must be Hermitian, ‖K − K†‖ = {skew:.3e}")
    return 0.5 * (K + K.conj().T)


def _hermitian(matrix: Any) -> ComplexMatrix:
    return _check_hermitian(_square(matrix))


def derive_q(R: Any, K: Any) -> ComplexMatrix:
    """``Q = −½R†R − iK``, which satisfies the left gauge condition identically.

    Raises:
        GaugeError: If K is not Hermitian within tolerance.
    """
    R_arr = _square(R)
    K_arr = _hermitian(K)
    if R_arr.shape != K_arr.shape:
        raise InvalidStateError(f"R and K shapes differ: {R_arr.shape} vs {K_arr.shape}")
    return -0.5 * (R_arr.conj().T @ R_arr) - 1j * K_arr


def gauge_residual(Q: ComplexMatrix, R: ComplexMatrix) -> float:
    """``‖Q + Q† + R†R‖_F``."""
    return float(np.linalg.norm(Q + Q.conj().T + R.conj().T @ R))


def _positive_length(instance: Any, attribute: attrs.Attribute[float], value: float) -> None:
    if not np.isfinite(value) or value <= 0:
        raise InvalidStateError(f"Ring length L must be positive, got {value}")


@attrs.define(frozen=True, slots=True, kw_only=True)
class CmpsState:
    """Left-gauged ring cMPS parameterised by (R, K, B); Q is always derived."""

    R: ComplexMatrix = attrs.field(converter=_square)
    K: ComplexMatrix = attrs.field(converter=_hermitian)
    B: ComplexMatrix = attrs.field(converter=_square)
    L: float = attrs.field(converter=float, validator=_positive_length)

    def __attrs_post_init__(self) -> None:
        shapes = {self.R.shape, self.K.shape, self.B.shape}
        if len(shapes) != 1:
            raise InvalidStateError(f"R, K and B must share one shape, got {sorted(shapes)}")
        for name, matrix in (("R", self.R), ("K", self.K), ("B", self.B)):
            if not np.all(np.isfinite(matrix)):
                raise InvalidStateError(f"{name} has non-finite entries")

    @property
    def dim(self) -> int:
        return int(self.R.shape[0])

    @property
    def Q(self) -> ComplexMatrix:
        return -0.5 * (self.R.conj().T @ self.R) - 1j * self.K

    def with_matrices(
        self,
        *,
        R: ComplexMatrix | None = None,
        K: ComplexMatrix | None = None,
        B: ComplexMatrix | None = None,
    ) -> CmpsState:
        return attrs.evolve(
            self,
            R=self.R if R is None else R,
            K=self.K if K is None else K,
            B=self.B if B is None else B,
        )

    def equals(self, other: CmpsState) -> bool:
        return (
            self.L == other.L
            and np.array_equal(self.R, other.R)
            and np.array_equal(self.K, other.K)
            and np.array_equal(self.B, other.B)
        )


@attrs.define(frozen=True, slots=True, kw_only=True)
class GaugedTriple:
    """Similarity-transformed (Q, R, B); no longer left-gauged in general."""

    Q: ComplexMatrix
    R: ComplexMatrix
    B: ComplexMatrix
    L: float
    condition: float

    @property
    def dim(self) -> int:
        return int(self.R.shape[0])


def _complex_gaussian(rng: np.random.Generator, dim: int) -> ComplexMatrix:
    return (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)


def make_state(
    D: int,
    L: float,
    init: InitMode = "random",
    seed: int | None = None,
    *,
    base: CmpsState | None = None,
    noise: float = WARM_START_NOISE,
) -> CmpsState:
    """Build an initial state.

    Args:
        D: Bond dimension.
        L: Ring length.
        init: ``"random"`` or ``"warm-start"`` (requires ``base``).
        seed: Seed for the random draws; identical seeds give identical states.
        base: Smaller or equal-D state to clone and pad.
        noise: Scale of the random entries added to the new block when padding.

    Raises:
        InvalidStateError: On invalid D, L or a missing/oversized base state.
    """
    if D < 1:
        raise InvalidStateError(f"Bond dimension must be at least 1, got {D}")
    if not np.isfinite(L) or L <= 0:
        raise InvalidStateError(f"Ring length L must be positive, got {L}")
    rng = np.random.default_rng(seed)

    if init == "random":
        R = _complex_gaussian(rng, D) / np.sqrt(D)
        A = _complex_gaussian(rng, D)
        K = 0.5 * (A + A.conj().T)
        B = np.eye(D, dtype=np.complex128) + 0.01 * _complex_gaussian(rng, D)
        logger.debug("state.make.random", bond_dim=D, L=L, seed=seed)
        return CmpsState(R=R, K=K, B=B, L=L)

    if init != "warm-start":
        raise InvalidStateError(f"Unknown init mode {init!r}")
    if base is None:
        raise InvalidStateError("warm-start needs a base state")
    d = base.dim
    if d > D:
        raise InvalidStateError(f"Cannot warm-start D={D} from a larger D={d} state")
    if d == D:
        return CmpsState(R=base.R.copy(), K=base.K.copy(), B=base.B.copy(), L=L)

    new_block = np.ones((D, D), dtype=bool)
    new_block[:d, :d] = False

    def padded(matrix: ComplexMatrix) -> ComplexMatrix:
        out = np.zeros((D, D), dtype=np.complex128)
        out[:d, :d] = matrix
        return out

    R = padded(base.R) + noise * np.where(new_block, _complex_gaussian(rng, D), 0.0)
    A = np.where(new_block, _complex_gaussian(rng, D), 0.0)
    K = padded(base.K) + 0.5 * noise * (A + A.conj().T)
    # B stays block diagonal so the old sector is only perturbed at second order
    B = padded(base.B)
    logger.debug("state.make.warm_start", from_dim=d, bond_dim=D, noise=noise)
    return CmpsState(R=R, K=K, B=B, L=L)


def gauge_transform(state: CmpsLike, g: Any) -> GaugedTriple:
    """Similarity transform ``X ↦ g X g⁻¹`` of Q, R and B.

    Raises:
        GaugeError: If ``g`` is singular or numerically so.
    """
    g_arr = _square(g)
    if g_arr.shape != state.R.shape:
        raise InvalidStateError(f"Gauge matrix shape {g_arr.shape} does not match state {state.R.shape}")
    condition = float(np.linalg.cond(g_arr))
    if not np.isfinite(condition) or condition > SINGULAR_CONDITION:
        raise GaugeError(f"Gauge transformation is singular (condition number {condition:.3e})")
    g_inv = np.linalg.inv(g_arr)
    logger.debug("state.gauge.transform", condition=condition)
    return GaugedTriple(
        Q=g_arr @ state.Q @ g_inv,
        R=g_arr @ state.R @ g_inv,
        B=g_arr @ state.B @ g_inv,
        L=float(state.L),
        condition=condition,
    )


def _encode_matrix(matrix: ComplexMatrix) -> list[list[list[float]]]:
    return [[[float(z.real), float(z.imag)] for z in row] for row in matrix]


def _decode_matrix(rows: Any, dim: int, name: str) -> ComplexMatrix:
    try:
        array = np.array(
            [[complex(pair[0], pair[1]) for pair in row] for row in rows],
            dtype=np.complex128,
        )
    except (TypeError, ValueError, IndexError) as e:
        raise CheckpointError(f"Matrix {name} is malformed: {e}") from e
    if array.shape != (dim, dim):
        raise CheckpointError(f"Matrix {name} has shape {array.shape}, expected {(dim, dim)}")
    return array


def _canonical(payload: dict[str, Any]) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def state_payload(state: CmpsState) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "D": state.dim,
        "L": state.L,
        "R": _encode_matrix(state.R),
        "K": _encode_matrix(state.K),
        "B": _encode_matrix(state.B),
    }


def save_state(state: CmpsState, path: Path) -> Path:
    """Write a checkpoint atomically and return its path."""
    payload = state_payload(state)
    document = dict(payload)
    document["crc32"] = zlib.crc32(_canonical(payload))
    try:
        atomic_write(path, json.dumps(document, indent=1).encode("utf-8"))
    except OSError as e:
        raise CheckpointError(f"Failed to write checkpoint {path}: {e}") from e
    logger.info("state.checkpoint.saved", path=str(path), bond_dim=state.dim)
    return path


@retry(max_attempts=2)
def _read_bytes(path: Path) -> bytes:
    return path.read_bytes()


def load_state(path: Path) -> CmpsState:
    """Read a checkpoint written by ``save_state``.

    Raises:
        CheckpointError: If the file cannot be read or is malformed.
        SchemaVersionError: If the schema version is not supported.
        ChecksumMismatchError: If the file is truncated or its CRC32 does not match.
    """
    if not path.is_file():
        raise CheckpointError(f"Checkpoint {path} does not exist")
    try:
        raw = _read_bytes(path)
    except OSError as e:
        raise CheckpointError(f"Failed to read checkpoint {path}: {e}") from e
    try:
        document = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ChecksumMismatchError(f"Checkpoint {path} is truncated or corrupted") from e
    if not isinstance(document, dict):
        raise CheckpointError(f"Checkpoint {path} is not a JSON object")

    version = document.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"Checkpoint schema version {version!r} is not supported (expected {SCHEMA_VERSION})"
        )
    stored = document.pop("crc32", None)
    if stored != zlib.crc32(_canonical(document)):
        raise ChecksumMismatchError(f"Checkpoint {path} failed its CRC32 check")

    try:
        dim = int(document["D"])
        L = float(document["L"])
        matrices = {name: _decode_matrix(document[name], dim, name) for name in ("R", "K", "B")}
    except KeyError as e:
        raise CheckpointError(f"Checkpoint {path} is missing field {e}") from e
    logger.info("state.checkpoint.loaded", path=str(path), bond_dim=dim)
    return CmpsState(L=L, **matrices)


# 🐝📁🔚
