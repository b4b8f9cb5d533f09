#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""Superoperators on D×D matrices and the cMPS transfer generator.

Vectors of the doubled space are stored as D×D matrices. A product ``a ⊗ b̄``
acts as ``x ↦ a x b†`` and the inner product is ``(y|x) = Tr(y† x)``.
"""

from __future__ import annotations

from collections.abc import Iterable
from typing import Literal

import attrs
import numpy as np
from numpy.typing import NDArray

from ringtdvp.errors import DimensionMismatchError

ComplexMatrix = NDArray[np.complex128]
Direction = Literal["forward", "adjoint"]


def _as_complex(matrix: object) -> ComplexMatrix:
    return np.asarray(matrix, dtype=np.complex128)


@attrs.define(frozen=True, slots=True)
class SuperOp:
    """Sum of tensor products ``Σ a_k ⊗ b̄_k``."""

    terms: tuple[tuple[ComplexMatrix, ComplexMatrix], ...] = attrs.field(factory=tuple)

    @classmethod
    def product(cls, ket: object, bra: object, scale: complex = 1.0) -> SuperOp:
        return cls(terms=((scale * _as_complex(ket), _as_complex(bra)),))

    @classmethod
    def total(cls, ops: Iterable[SuperOp]) -> SuperOp:
        terms: list[tuple[ComplexMatrix, ComplexMatrix]] = []
        for op in ops:
            terms.extend(op.terms)
        return cls(terms=tuple(terms))

    def __add__(self, other: SuperOp) -> SuperOp:
        return SuperOp(terms=self.terms + other.terms)

    def scaled(self, factor: complex) -> SuperOp:
        return SuperOp(terms=tuple((factor * a, b) for a, b in self.terms))

    @property
    def is_zero(self) -> bool:
        return not self.terms or all(not np.any(a) or not np.any(b) for a, b in self.terms)

    def apply(self, x: ComplexMatrix) -> ComplexMatrix:
        out = np.zeros_like(x, dtype=np.complex128)
        for a, b in self.terms:
            out += a @ x @ b.conj().T
        return out

    def apply_adjoint(self, x: ComplexMatrix) -> ComplexMatrix:
        out = np.zeros_like(x, dtype=np.complex128)
        for a, b in self.terms:
            out += a.conj().T @ x @ b
        return out

    def element(self, left: ComplexMatrix, right: ComplexMatrix) -> complex:
        """Matrix element ``(left| op |right)``."""
        return complex(np.vdot(left, self.apply(right)))

    def elements(self, lefts: ComplexMatrix, rights: ComplexMatrix) -> ComplexMatrix:
        """All elements ``(lefts[p]| op |rights[q])`` for stacks of shape (n, D, D)."""
        out = np.zeros((lefts.shape[0], rights.shape[0]), dtype=np.complex128)
        for a, b in self.terms:
            applied = np.einsum("ij,qjk,lk->qil", a, rights, b.conj(), optimize=True)
            out += np.einsum("pil,qil->pq", lefts.conj(), applied, optimize=True)
        return out

    def dense(self) -> ComplexMatrix:
        """Matrix acting on column-stacked vectors, ``vec(a x b†) = (b̄ ⊗ a) vec(x)``."""
        if not self.terms:
            raise DimensionMismatchError("Cannot densify an empty superoperator without a dimension.")
        dim = self.terms[0][0].shape[0]
        out = np.zeros((dim * dim, dim * dim), dtype=np.complex128)
        for a, b in self.terms:
            out += np.kron(b.conj(), a)
        return out


@attrs.define(frozen=True, slots=True)
class TransferAction:
    """The generator ``T = Q⊗𝟙 + 𝟙⊗Q̄ + R⊗R̄`` in a chosen direction."""

    Q: ComplexMatrix = attrs.field(converter=_as_complex)
    R: ComplexMatrix = attrs.field(converter=_as_complex)
    direction: Direction = "forward"

    @property
    def dim(self) -> int:
        return int(self.Q.shape[0])

    def adjoint(self) -> TransferAction:
        flipped: Direction = "adjoint" if self.direction == "forward" else "forward"
        return TransferAction(Q=self.Q, R=self.R, direction=flipped)

    def as_superop(self) -> SuperOp:
        eye = np.eye(self.dim, dtype=np.complex128)
        return SuperOp(terms=((self.Q, eye), (eye, self.Q), (self.R, self.R)))

    def __call__(self, x: ComplexMatrix) -> ComplexMatrix:
        return apply_transfer(self, x)


def apply_transfer(action: TransferAction, x: object) -> ComplexMatrix:
    """Apply T (forward) or T† (adjoint) to a D×D matrix.

    Raises:
        DimensionMismatchError: If ``x`` is not D×D for the action's D.
    """
    matrix = _as_complex(x)
    dim = action.dim
    if matrix.shape != (dim, dim):
        raise DimensionMismatchError(f"Expected a {dim}x{dim} matrix, got shape {matrix.shape}.")
    Q, R = action.Q, action.R
    if action.direction == "forward":
        return Q @ matrix + matrix @ Q.conj().T + R @ matrix @ R.conj().T
    return Q.conj().T @ matrix + matrix @ Q + R.conj().T @ matrix @ R


# 🐝📁🔚
