#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""Tangent-space geometry: norm, orthogonality vector, Gram action and gauge fixing.

Tangent vectors (V, W, Y) vary (Q, R, B). Covectors such as the Gram action,
the gradient and the orthogonality vector share the same container and pair
with tangents through ``⟨t, g⟩ = Σ Tr(t_X† g_X)``. The reduced form keeps only
(W, Y) and implies V = −R†W.
"""

from __future__ import annotations

from typing import Any

import attrs
import numpy as np
from numpy.typing import NDArray
from provide.foundation import logger
import scipy.linalg

from ringtdvp.contraction import (
    BraTemplate,
    EnvironmentFactory,
    Slot,
    ring_environment,
    spectral_environments,
)
from ringtdvp.errors import DimensionMismatchError, GaugeFixingError, NormUnderflowError
from ringtdvp.spectral import SpectralData
from ringtdvp.state import CmpsLike
from ringtdvp.transfer import ComplexMatrix, SuperOp

NORM_FLOOR = 1e-14
IMAG_TOL = 1e-10


def _matrix(value: Any) -> ComplexMatrix:
    return np.asarray(value, dtype=np.complex128)


def _optional_matrix(value: Any) -> ComplexMatrix | None:
    return None if value is None else _matrix(value)


@attrs.define(frozen=True, slots=True)
class TangentVector:
    """(V, W, Y) triple; ``V is None`` marks the reduced form."""

    V: ComplexMatrix | None = attrs.field(converter=_optional_matrix)
    W: ComplexMatrix = attrs.field(converter=_matrix)
    Y: ComplexMatrix = attrs.field(converter=_matrix)

    @classmethod
    def zeros(cls, dim: int, *, reduced: bool = False) -> TangentVector:
        zero = np.zeros((dim, dim), dtype=np.complex128)
        return cls(None if reduced else zero, zero, zero)

    @classmethod
    def from_vector(cls, vector: NDArray[np.complex128], dim: int, *, reduced: bool) -> TangentVector:
        blocks = np.asarray(vector, dtype=np.complex128).reshape((-1, dim, dim))
        if reduced:
            return cls(None, blocks[0], blocks[1])
        return cls(blocks[0], blocks[1], blocks[2])

    @property
    def reduced(self) -> bool:
        return self.V is None

    @property
    def dim(self) -> int:
        return int(self.W.shape[0])

    def components(self) -> tuple[ComplexMatrix, ...]:
        if self.V is None:
            return (self.W, self.Y)
        return (self.V, self.W, self.Y)

    def as_vector(self) -> NDArray[np.complex128]:
        return np.concatenate([block.ravel() for block in self.components()])

    def _check(self, other: TangentVector) -> None:
        if self.reduced != other.reduced or self.W.shape != other.W.shape:
            raise DimensionMismatchError("Tangent vectors must share form and dimension")

    def inner(self, other: TangentVector) -> complex:
        """``Σ Tr(self_X† other_X)``, antilinear in ``self``."""
        self._check(other)
        return complex(sum(np.vdot(a, b) for a, b in zip(self.components(), other.components(), strict=True)))

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self).real, 0.0)))

    def scaled(self, factor: complex) -> TangentVector:
        return TangentVector(
            None if self.V is None else factor * self.V,
            factor * self.W,
            factor * self.Y,
        )

    def __add__(self, other: TangentVector) -> TangentVector:
        self._check(other)
        return TangentVector(
            None if self.V is None or other.V is None else self.V + other.V,
            self.W + other.W,
            self.Y + other.Y,
        )

    def __sub__(self, other: TangentVector) -> TangentVector:
        return self + other.scaled(-1.0)

    def __neg__(self) -> TangentVector:
        return self.scaled(-1.0)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(block)) for block in self.components())


def expand(t: TangentVector, R: ComplexMatrix) -> TangentVector:
    """Materialise ``V = −R†W`` from a reduced tangent."""
    if not t.reduced:
        return t
    return TangentVector(-(R.conj().T @ t.W), t.W, t.Y)


def reduce_covector(g: TangentVector, R: ComplexMatrix) -> TangentVector:
    """Covector on reduced tangents: ``⟨expand(t), g⟩ = ⟨t, reduce_covector(g)⟩``."""
    if g.reduced:
        return g
    assert g.V is not None
    return TangentVector(None, g.W - R @ g.V, g.Y)


def gauge_direction(state: CmpsLike, X: ComplexMatrix) -> TangentVector:
    """Null tangent ``([X,Q], [X,R], [X,B])`` generated by an infinitesimal gauge change."""
    Q, R, B = state.Q, state.R, state.B
    return TangentVector(X @ Q - Q @ X, X @ R - R @ X, X @ B - B @ X)


def _commutator_map(left: ComplexMatrix, dim: int) -> ComplexMatrix:
    eye = np.eye(dim, dtype=np.complex128)
    # vec(X A − A X) with column stacking
    return np.kron(left.T, eye) - np.kron(eye, left)


def reduce(t: TangentVector, state: CmpsLike) -> TangentVector:
    """Reduced tangent describing the same state vector as a full one.

    The part of ``V + R†W`` outside the range of ``X ↦ [X,Q] + R†[X,R]`` is moved
    along the null direction ``(𝟙, 0, −L·B)``; the rest is removed by a gauge
    change X found by least squares. Returns ``(W − [X,R], Y − [X,B] + αL·B)``.

    Raises:
        GaugeFixingError: If R vanishes or Q is proportional to the identity.
    """
    if t.reduced:
        return t
    assert t.V is not None
    Q, R, B = state.Q, state.R, state.B
    dim = R.shape[0]
    scale = max(1.0, float(np.linalg.norm(Q)))
    traceless = Q - np.trace(Q) / dim * np.eye(dim)
    if not np.any(R) or (dim > 1 and float(np.linalg.norm(traceless)) <= 1e-14 * scale):
        raise GaugeFixingError("Gauge fixing V = -R†W needs R != 0 and Q not proportional to the identity")
    operator = _commutator_map(Q, dim) + np.kron(np.eye(dim), R.conj().T) @ _commutator_map(R, dim)
    target = (t.V + R.conj().T @ t.W).ravel(order="F")

    # the operator has rank D² − 1; its left null vector is the right fixed point
    left_null = scipy.linalg.svd(operator)[0][:, -1]
    identity = np.eye(dim, dtype=np.complex128).ravel(order="F")
    overlap = np.vdot(left_null, identity)
    if abs(overlap) < 1e-12:
        raise GaugeFixingError("Null direction (1, 0, -L·B) does not reach the cokernel of the gauge map")
    alpha = np.vdot(left_null, target) / overlap

    solution, *_ = scipy.linalg.lstsq(operator, target - alpha * identity)
    X = solution.reshape((dim, dim), order="F")
    residual = float(np.linalg.norm(operator @ solution - (target - alpha * identity)))
    logger.debug("tangent.reduce", residual=residual, alpha=complex(alpha))
    return TangentVector(None, t.W - (X @ R - R @ X), t.Y - (X @ B - B @ X) + alpha * state.L * B)


def _identity(dim: int) -> ComplexMatrix:
    return np.eye(dim, dtype=np.complex128)


def _slot_templates(state: CmpsLike) -> tuple[BraTemplate, BraTemplate]:
    return (
        BraTemplate(ket=_identity(state.R.shape[0]), slot="V"),
        BraTemplate(ket=state.R, slot="W"),
    )


def assemble(dim: int, parts: list[dict[Slot, ComplexMatrix]]) -> TangentVector:
    """Sum per-slot covector contributions into a full covector."""
    totals = {slot: np.zeros((dim, dim), dtype=np.complex128) for slot in ("V", "W", "Y")}
    for part in parts:
        for slot, value in part.items():
            totals[slot] += value
    return TangentVector(totals["V"], totals["W"], totals["Y"])


def norm_operator(state: CmpsLike) -> SuperOp:
    return SuperOp.product(state.B, state.B)


def state_norm(state: CmpsLike, spec: SpectralData) -> float:
    """``⟨Ψ|Ψ⟩ = Tr[B⊗B̄ e^{LT}]`` through the leading spectrum.

    Raises:
        NormUnderflowError: If the norm is below ``NORM_FLOOR``.
    """
    value = spectral_environments(spec)([], "norm").contract(norm_operator(state))
    if abs(value.imag) > IMAG_TOL * max(1.0, abs(value.real)):
        logger.warning("tangent.norm.imaginary", imag=value.imag, real=value.real)
    if value.real < NORM_FLOOR:
        raise NormUnderflowError(f"State norm {value.real:.3e} is below {NORM_FLOOR}")
    return float(value.real)


def ortho_vector(state: CmpsLike, spec: SpectralData) -> TangentVector:
    """Covector y with ``⟨t, y⟩ = ⟨Φ[V,W,Y]|Ψ⟩`` for every tangent t."""
    return ortho_covector(state, spectral_environments(spec))


def ortho_covector(state: CmpsLike, environment: EnvironmentFactory) -> TangentVector:
    dim = state.R.shape[0]
    bulk = environment([norm_operator(state)], "ortho.bulk")
    boundary = environment([], "ortho.y")
    return assemble(
        dim,
        [
            bulk.collect(_slot_templates(state)),
            boundary.collect([BraTemplate(ket=state.B, slot="Y")]),
        ],
    )


def tangent_operator(state: CmpsLike, t: TangentVector) -> SuperOp:
    """Ket-side insertion ``V⊗𝟙 + W⊗R̄`` of a full tangent."""
    assert t.V is not None
    return SuperOp.product(t.V, _identity(state.R.shape[0])) + SuperOp.product(t.W, state.R)


def gram_apply(state: CmpsLike, spec: SpectralData, t: TangentVector) -> TangentVector:
    """Gram action ``G·t`` with ``⟨t', G·t⟩ = ⟨Φ[t']|Φ[t]⟩``.

    A reduced ``t`` is expanded first and the result is returned as a reduced covector.
    """
    return gram_covector(state, spectral_environments(spec), t)


def gram_covector(state: CmpsLike, environment: EnvironmentFactory, t: TangentVector) -> TangentVector:
    full = expand(t, state.R)
    assert full.V is not None
    dim = state.R.shape[0]
    templates = _slot_templates(state)
    BB = norm_operator(state)
    ket = tangent_operator(state, full)
    parts: list[dict[Slot, ComplexMatrix]] = []

    if np.any(full.V) or np.any(full.W):
        parts.append(environment([BB, ket], "gram.direct").collect(templates))
        parts.append(environment([ket, BB], "gram.exchange").collect(templates))
        parts.append(environment([ket], "gram.y-bra").collect([BraTemplate(ket=state.B, slot="Y")]))
    if np.any(full.W):
        contact = environment([BB], "gram.contact")
        parts.append(contact.collect([BraTemplate(ket=full.W, slot="W")]))
    if np.any(full.Y):
        y_ket = SuperOp.product(full.Y, state.B)
        parts.append(environment([y_ket], "gram.y-ket").collect(templates))
        parts.append(environment([], "gram.yy").collect([BraTemplate(ket=full.Y, slot="Y")]))

    out = assemble(dim, parts)
    return reduce_covector(out, state.R) if t.reduced else out


def gram_diagonal(state: CmpsLike, spec: SpectralData) -> TangentVector:
    """Diagonal of the W–W contact block and the Y–Y block, as a reduced covector.

    Used as a Jacobi preconditioner for the reduced Gram system.
    """
    bulk = ring_environment(spec, [norm_operator(state)], block="gram.contact")
    single = ring_environment(spec, [], block="gram.yy")

    def diagonal(rows: Any) -> ComplexMatrix:
        dim = state.R.shape[0]
        out = np.zeros((dim, dim), dtype=np.complex128)
        for row in rows:
            out += np.einsum(
                "pq,pi,ql->il",
                row.coeffs,
                np.diagonal(row.bras, axis1=1, axis2=2).conj(),
                np.diagonal(row.kets, axis1=1, axis2=2),
            )
        return out

    return TangentVector(None, diagonal(bulk.rows), diagonal(single.rows))


# 🐝📁🔚
