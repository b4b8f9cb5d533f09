#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""Ring environments: cutoff expansion of path-ordered integrals on the ring.

Every expectation value the solver needs has the form

    ∫ Tr[P₀ e^{x₁T} P₁ e^{x₂T} ... X e^{x_{k+1}T}],   x₁ + ... + x_{k+1} = L,

with known doubled-space operators ``P_j`` and one open slot ``X`` that carries
the bra-side tangent. ``ring_environment`` evaluates the integral through the
leading spectrum and returns an ``Environment``: a list of rows, each a bilinear
form ``Σ C[p,q] (v_p| X |u_q)``. Kept modes enter through exact divided
differences of ``e^{Lz}``; the subleading modes are resummed through deflated
pseudo-inverse solves. Rows are named ``<block>/<shape>.<row>``.
"""

from __future__ import annotations

from collections.abc import Callable, Iterator, Mapping, Sequence
from contextlib import contextmanager
from contextvars import ContextVar
from fnmatch import fnmatchcase
from typing import Literal, Protocol

import attrs
import numpy as np
from numpy.typing import NDArray
from provide.foundation import logger

from ringtdvp.errors import DimensionMismatchError
from ringtdvp.spectral import (
    SpectralData,
    close_pairs,
    exp_dd2,
    exp_dd3,
    pinv_apply,
)
from ringtdvp.transfer import ComplexMatrix, SuperOp

Slot = Literal["V", "W", "Y"]
SHAPES = ("single", "double", "triple")

_ROW_SCALES: ContextVar[tuple[Mapping[str, complex], ...]] = ContextVar("ringtdvp_row_scales", default=())
_ROW_LOG: ContextVar[list[str] | None] = ContextVar("ringtdvp_row_log", default=None)


@contextmanager
def override_rows(scales: Mapping[str, complex]) -> Iterator[None]:
    """Rescale term-table rows whose name matches a key (shell-style patterns allowed).

    Fault-injection hook for the oracle suite; has no effect outside the ``with`` block.
    Nested overrides multiply.
    """
    token = _ROW_SCALES.set((*_ROW_SCALES.get(), dict(scales)))
    try:
        yield
    finally:
        _ROW_SCALES.reset(token)


@contextmanager
def record_rows() -> Iterator[list[str]]:
    """Collect the names of all rows built inside the block, in creation order."""
    names: list[str] = []
    token = _ROW_LOG.set(names)
    try:
        yield names
    finally:
        _ROW_LOG.reset(token)


def _row_scale(name: str) -> complex:
    factor: complex = 1.0
    for scales in _ROW_SCALES.get():
        for pattern, value in scales.items():
            if pattern == name or fnmatchcase(name, pattern):
                factor *= value
    return factor


@attrs.define(frozen=True, slots=True)
class BraTemplate:
    """Bra-side slot ``ket ⊗ conj(left · U · right)`` varied in the unknown ``U``."""

    ket: ComplexMatrix
    slot: Slot
    left: ComplexMatrix | None = None
    right: ComplexMatrix | None = None


@attrs.define(frozen=True, slots=True)
class EnvRow:
    """One term-table row, ``Σ coeffs[p,q] (bras[p]| X |kets[q])``."""

    name: str
    coeffs: NDArray[np.complex128]
    bras: NDArray[np.complex128]
    kets: NDArray[np.complex128]

    def value(self, op: SuperOp) -> complex:
        if op.is_zero or not self.coeffs.size:
            return 0.0
        return complex(np.sum(self.coeffs * op.elements(self.bras, self.kets)))

    def sandwich(self, ket_op: ComplexMatrix) -> ComplexMatrix:
        """``Σ coeffs[p,q] bras[p]† · ket_op · kets[q]``."""
        mixed = np.einsum("pq,qij->pij", self.coeffs, self.kets, optimize=True)
        return np.einsum("pji,jk,pkl->il", self.bras.conj(), ket_op, mixed, optimize=True)


@attrs.define(frozen=True, slots=True)
class Environment:
    """Open ring integral ready to be closed with an operator in its slot."""

    rows: tuple[EnvRow, ...] = attrs.field(factory=tuple)

    def __add__(self, other: Environment) -> Environment:
        return Environment(rows=self.rows + other.rows)

    def contract(self, op: SuperOp) -> complex:
        return sum((row.value(op) for row in self.rows), 0.0 + 0.0j)

    def contract_rows(self, op: SuperOp) -> dict[str, complex]:
        values: dict[str, complex] = {}
        for row in self.rows:
            values[row.name] = values.get(row.name, 0.0) + row.value(op)
        return values

    def covector(self, template: BraTemplate) -> ComplexMatrix:
        """Gradient of the closed integral with respect to the template's unknown."""
        dim = template.ket.shape[0]
        total = np.zeros((dim, dim), dtype=np.complex128)
        for row in self.rows:
            total += row.sandwich(template.ket)
        if template.left is not None:
            total = template.left.conj().T @ total
        if template.right is not None:
            total = total @ template.right.conj().T
        return total

    def collect(self, templates: Sequence[BraTemplate]) -> dict[Slot, ComplexMatrix]:
        out: dict[Slot, ComplexMatrix] = {}
        for template in templates:
            contribution = self.covector(template)
            out[template.slot] = out[template.slot] + contribution if template.slot in out else contribution
        return out


class EnvironmentLike(Protocol):
    """Anything that closes an open ring slot with an operator or a bra template."""

    def contract(self, op: SuperOp) -> complex: ...

    def collect(self, templates: Sequence[BraTemplate]) -> dict[Slot, ComplexMatrix]: ...


EnvironmentFactory = Callable[[Sequence[SuperOp], str], EnvironmentLike]


def spectral_environments(spec: SpectralData) -> EnvironmentFactory:
    """Factory building ``ring_environment`` for a fixed spectrum."""

    def build(ops: Sequence[SuperOp], block: str) -> EnvironmentLike:
        return ring_environment(spec, ops, block=block)

    return build


class _RowBuilder:
    def __init__(self, block: str, shape: str) -> None:
        self.prefix = f"{block}/{shape}"
        self.rows: list[EnvRow] = []

    def add(
        self,
        row: str,
        coeffs: NDArray[np.complex128],
        bras: NDArray[np.complex128],
        kets: NDArray[np.complex128],
    ) -> None:
        name = f"{self.prefix}.{row}"
        log = _ROW_LOG.get()
        if log is not None and name not in log:
            log.append(name)
        if bras.shape[0] == 0 or kets.shape[0] == 0 or not np.any(coeffs):
            return
        self.rows.append(EnvRow(name=name, coeffs=coeffs * _row_scale(name), bras=bras, kets=kets))


class _Resolvents:
    """Deflated pseudo-inverse solves ``G_o`` and ``G_o†`` for owner modes."""

    def __init__(self, spec: SpectralData) -> None:
        self.spec = spec
        self.forward = spec.action
        self.adjoint = spec.action.adjoint()
        self.rank = spec.m3

    def right(self, owner: int, b: ComplexMatrix, power: int = 1) -> ComplexMatrix:
        return pinv_apply(self.spec, self.forward, owner, self.rank, power, b)

    def left(self, owner: int, b: ComplexMatrix, power: int = 1) -> ComplexMatrix:
        return pinv_apply(self.spec, self.adjoint, owner, self.rank, power, b)


def _stack(matrices: Sequence[ComplexMatrix], dim: int) -> NDArray[np.complex128]:
    if not matrices:
        return np.zeros((0, dim, dim), dtype=np.complex128)
    return np.stack(matrices)


def ring_environment(spec: SpectralData, ops: Sequence[SuperOp], *, block: str) -> Environment:
    """Environment of the open slot closing the cyclic sequence ``[*ops, X]``.

    Args:
        spec: Leading spectrum of the state's transfer generator.
        ops: Zero, one or two known doubled-space operators in ring order.
        block: Physical block name used as the row-name prefix.

    Returns:
        The environment as named rows.
    """
    if len(ops) > 2:
        raise DimensionMismatchError(f"Ring environments take at most two operators, got {len(ops)}.")
    shape = SHAPES[len(ops)]
    builder = _RowBuilder(block, shape)
    if len(ops) == 0:
        _single(spec, builder)
    elif len(ops) == 1:
        _double(spec, ops[0], builder)
    else:
        _triple(spec, ops[0], ops[1], builder)
    logger.debug("contraction.environment", block=block, shape=shape, rows=len(builder.rows))
    return Environment(rows=tuple(builder.rows))


def _has_tail(spec: SpectralData) -> bool:
    return spec.m3 < spec.dim * spec.dim


def _single(spec: SpectralData, builder: _RowBuilder) -> None:
    m1 = spec.m1
    weights = np.exp(spec.L * spec.lambdas[:m1])
    builder.add("kept", np.diag(weights), spec.left_vecs[:m1], spec.right_vecs[:m1])


def _double(spec: SpectralData, op0: SuperOp, builder: _RowBuilder) -> None:
    m = spec.m3
    lam = spec.lambdas[:m]
    lefts = spec.left_vecs[:m]
    rights = spec.right_vecs[:m]
    dim = spec.dim
    # index a runs over the segment after X, b over the segment after op0
    weights = exp_dd2(spec.L, lam[:, None], lam[None, :])
    m0 = op0.elements(lefts, rights)
    builder.add("kept", (weights * m0).T, lefts, rights)

    if not _has_tail(spec):
        return
    solve = _Resolvents(spec)
    owners = range(spec.m1)
    exp_owner = np.exp(spec.L * spec.lambdas[: spec.m1])
    diag = np.diag(exp_owner)
    builder.add(
        "tail-left",
        diag,
        _stack([solve.left(o, op0.apply_adjoint(lefts[o])) for o in owners], dim),
        rights[: spec.m1],
    )
    builder.add(
        "tail-right",
        diag,
        lefts[: spec.m1],
        _stack([solve.right(o, op0.apply(rights[o])) for o in owners], dim),
    )


def _pair_weights(
    spec: SpectralData,
) -> tuple[NDArray[np.complex128], NDArray[np.complex128], NDArray[np.complex128]]:
    """Coefficients for kept pairs (x, y) with the third index in the tail.

    Returns ``split[x, y] = e^{Lλx}/(λx − λy)`` on well separated pairs and the
    ``linear``/``hat`` weights ``L e^{Lλx}`` and ``−e^{Lλx}`` on coincident pairs.
    A pair contributes while ``min(x, y) < m2``.
    """
    m = spec.m3
    lam = spec.lambdas[:m]
    index = np.arange(m)
    included = np.minimum(index[:, None], index[None, :]) < spec.m2
    close = close_pairs(lam[:, None], lam[None, :])
    far = included & ~close
    near = included & close
    grow = np.exp(spec.L * lam)[:, None]
    diff = lam[:, None] - lam[None, :]
    safe = np.where(far, diff, 1.0)
    split = np.where(far, grow / safe, 0.0)
    linear = np.where(near, spec.L * grow, 0.0)
    hat = np.where(near, -grow, 0.0)
    return split.astype(np.complex128), linear.astype(np.complex128), hat.astype(np.complex128)


def _triple(spec: SpectralData, op0: SuperOp, op1: SuperOp, builder: _RowBuilder) -> None:
    m = spec.m3
    lam = spec.lambdas[:m]
    lefts = spec.left_vecs[:m]
    rights = spec.right_vecs[:m]
    dim = spec.dim
    L = spec.L
    m0 = op0.elements(lefts, rights)
    m1 = op1.elements(lefts, rights)

    # i0 after op0, i1 after op1, i2 after X; the slot pairs (l_i1| with |r_i2)
    weights = exp_dd3(L, lam[:, None, None], lam[None, :, None], lam[None, None, :])
    kept = np.einsum("apq,qa,ap->pq", weights, m0, m1, optimize=True)
    builder.add("kept", kept, lefts, rights)

    if not _has_tail(spec):
        return
    solve = _Resolvents(spec)
    split, linear, hat = _pair_weights(spec)
    hat_owners = [x for x in range(m) if np.any(hat[x])]
    identity = np.eye(m, dtype=np.complex128)

    # tail after X: pair (x=i0, y=i1)
    w = _stack([solve.right(x, op0.apply(rights[x])) for x in range(m)], dim)
    builder.add("tail2.split", (split * m1).T, lefts, w)
    owner_y = []
    for y in range(m):
        seed = np.einsum("x,xij->ij", split[y, :] * m1[:, y], rights)
        owner_y.append(solve.right(y, op0.apply(seed)))
    builder.add("tail2.split", identity, lefts, _stack(owner_y, dim))
    builder.add("tail2.linear", (linear * m1).T, lefts, w)
    hat_kets = _stack([solve.right(x, w[x]) for x in hat_owners], dim)
    builder.add("tail2.hat", (hat * m1).T[:, hat_owners], lefts, hat_kets)

    # tail after op0: pair (x=i1, y=i2), slot (l_x| X |r_y)
    z = _stack([solve.right(x, op1.apply(rights[x])) for x in range(m)], dim)
    zeta = _stack([solve.left(y, op0.apply_adjoint(lefts[y])) for y in range(m)], dim)
    through_z = op0.elements(lefts, z)
    through_zeta = op1.elements(zeta, rights)
    builder.add("tail0.split", split * through_z.T + split.T * through_zeta.T, lefts, rights)
    builder.add("tail0.linear", linear * through_z.T, lefts, rights)
    hat_elements = np.zeros((m, m), dtype=np.complex128)
    if hat_owners:
        zz = _stack([solve.right(x, z[x]) for x in hat_owners], dim)
        hat_elements[:, hat_owners] = op0.elements(lefts, zz)
    builder.add("tail0.hat", hat * hat_elements.T, lefts, rights)

    # tail after op1: pair (x=i0, y=i2), slot (G_x† op1† l_x| X |r_y)
    eta = _stack([solve.left(x, op1.apply_adjoint(lefts[x])) for x in range(m)], dim)
    builder.add("tail1.split", split * m0.T, eta, rights)
    owner_y = []
    for y in range(m):
        seed = np.einsum("x,xij->ij", np.conj(split[y, :] * m0[y, :]), lefts)
        owner_y.append(solve.left(y, op1.apply_adjoint(seed)))
    builder.add("tail1.split", identity, _stack(owner_y, dim), rights)
    builder.add("tail1.linear", linear * m0.T, eta, rights)
    hat_bras = _stack([solve.left(x, eta[x]) for x in hat_owners], dim)
    builder.add("tail1.hat", (hat * m0.T)[hat_owners, :], hat_bras, rights)

    # two indices in the tail, one owner
    owners = list(range(spec.m1))
    diag = np.diag(np.exp(L * spec.lambdas[: spec.m1]))
    builder.add("tail12", diag, eta[owners], w[owners])
    builder.add(
        "tail02",
        diag,
        lefts[owners],
        _stack([solve.right(o, op0.apply(z[o])) for o in owners], dim),
    )
    builder.add(
        "tail01",
        diag,
        _stack([solve.left(o, op1.apply_adjoint(zeta[o])) for o in owners], dim),
        rights[owners],
    )


# 🐝📁🔚
