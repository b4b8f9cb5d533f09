#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""Leading spectrum of the transfer generator and deflated pseudo-inverse solves."""

from __future__ import annotations

from functools import partial
import math
import time
from typing import TYPE_CHECKING

import attrs
import numpy as np
from numpy.typing import NDArray
from provide.foundation import logger
import scipy.linalg
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs, gmres

from ringtdvp.errors import DegenerateSpectrumError, EigensolverError, PseudoInverseError
from ringtdvp.transfer import ComplexMatrix, TransferAction

if TYPE_CHECKING:
    from ringtdvp.state import CmpsState

DENSE_THRESHOLD = 400
DEGENERACY_RTOL = 1e-8
EIGEN_RESIDUAL_TOL = 1e-9
PINV_RTOL = 1e-12
PINV_RESTART = 100
CLOSE_SEGMENT = 0.5


@attrs.define(frozen=True, slots=True, kw_only=True)
class SpectralData:
    """Leading eigentriples of T sorted by descending real part.

    ``right_vecs[i]`` and ``left_vecs[i]`` are D×D matrices with
    ``Tr(left_vecs[i]† right_vecs[j]) = δ_ij``. Indices are zero-based, so the
    cutoff rank ``m1`` covers ``lambdas[:m1]``.
    """

    lambdas: NDArray[np.complex128]
    right_vecs: NDArray[np.complex128]
    left_vecs: NDArray[np.complex128]
    m1: int
    m2: int
    m3: int
    tol: float
    L: float
    action: TransferAction

    @property
    def n_stored(self) -> int:
        return int(self.lambdas.shape[0])

    @property
    def dim(self) -> int:
        return self.action.dim

    def cutoff(self, power: int) -> int:
        """Rank for weights ``L^power e^{λL}`` (power 0, 1 or 2)."""
        return (self.m1, self.m2, self.m3)[power]

    @property
    def exp_weights(self) -> NDArray[np.complex128]:
        return np.exp(self.L * self.lambdas)

    def with_tol(self, tol: float) -> SpectralData:
        """Same eigentriples with cutoffs recomputed for a looser ``tol``."""
        if tol < self.tol:
            raise ValueError(f"Cannot tighten tol from {self.tol} to {tol} without recomputing the spectrum")
        m1, m2, m3 = cutoff_ranks(self.lambdas, self.L, tol)
        return attrs.evolve(self, m1=m1, m2=m2, m3=m3, tol=tol)


def cutoff_ranks(lambdas: NDArray[np.complex128], L: float, tol: float) -> tuple[int, int, int]:
    """Smallest m1 ≤ m2 ≤ m3 with ``L^k/k! |e^{Lλ_i}| < tol`` for every i beyond m_{k+1}."""
    magnitude = np.exp(L * lambdas.real)
    m1 = int(np.count_nonzero(magnitude >= tol))
    m2 = int(np.count_nonzero(L * magnitude >= tol))
    m3 = int(np.count_nonzero(0.5 * L * L * magnitude >= tol))
    n = len(lambdas)
    m1 = min(max(m1, 1), n)
    m2 = min(max(m2, m1), n)
    m3 = min(max(m3, m2), n)
    return m1, m2, m3


def _sort_order(lambdas: NDArray[np.complex128]) -> NDArray[np.intp]:
    return np.lexsort((-lambdas.imag, -np.round(lambdas.real, 12)))


def _biorthonormalize(
    rights: NDArray[np.complex128], lefts: NDArray[np.complex128]
) -> NDArray[np.complex128]:
    overlap = np.einsum("pij,qij->pq", lefts.conj(), rights)
    try:
        inverse = np.linalg.inv(overlap)
    except np.linalg.LinAlgError as e:
        raise DegenerateSpectrumError(f"Transfer generator is defective: {e}") from e
    if not np.all(np.isfinite(inverse)) or np.linalg.cond(overlap) > 1e12:
        raise DegenerateSpectrumError("Left and right eigenvectors cannot be biorthonormalized.")
    return np.einsum("ps,sij->pij", inverse.conj(), lefts)


def _from_columns(columns: NDArray[np.complex128], dim: int) -> NDArray[np.complex128]:
    return np.stack([columns[:, k].reshape((dim, dim), order="F") for k in range(columns.shape[1])])


def _dense_spectrum(action: TransferAction) -> tuple[NDArray[np.complex128], ...]:
    matrix = action.as_superop().dense()
    try:
        values, left_cols, right_cols = scipy.linalg.eig(matrix, left=True, right=True)
    except scipy.linalg.LinAlgError as e:
        raise EigensolverError(f"Dense eigendecomposition failed: {e}") from e
    order = _sort_order(values)
    dim = action.dim
    return values[order], _from_columns(right_cols[:, order], dim), _from_columns(left_cols[:, order], dim)


def _matvec(action: TransferAction, vector: NDArray[np.complex128]) -> NDArray[np.complex128]:
    dim = action.dim
    return action(vector.reshape((dim, dim))).ravel()


def _krylov_spectrum(action: TransferAction, count: int) -> tuple[NDArray[np.complex128], ...]:
    dim = action.dim
    n = dim * dim
    forward = LinearOperator((n, n), matvec=partial(_matvec, action), dtype=np.complex128)
    adjoint = LinearOperator((n, n), matvec=partial(_matvec, action.adjoint()), dtype=np.complex128)
    try:
        values, right_cols = eigs(forward, k=count, which="LR", tol=1e-13)
        adj_values, left_cols = eigs(adjoint, k=count, which="LR", tol=1e-13)
    except ArpackNoConvergence as e:
        raise EigensolverError(
            f"Krylov eigensolver did not converge for k={count}: {e}",
            residual=float("nan"),
        ) from e
    order = _sort_order(values)
    values = values[order]
    right_cols = right_cols[:, order]
    # pair each right eigenvalue with the nearest conjugate adjoint eigenvalue
    pairing = [int(np.argmin(np.abs(adj_values.conj() - value))) for value in values]
    left_cols = left_cols[:, pairing]
    rights = np.stack([right_cols[:, k].reshape((dim, dim)) for k in range(count)])
    lefts = np.stack([left_cols[:, k].reshape((dim, dim)) for k in range(count)])
    return values, rights, lefts


def _residuals(
    action: TransferAction, values: NDArray[np.complex128], rights: NDArray[np.complex128]
) -> float:
    worst = 0.0
    for value, right in zip(values, rights, strict=True):
        scale = max(1.0, abs(value)) * float(np.linalg.norm(right))
        worst = max(worst, float(np.linalg.norm(action(right) - value * right)) / scale)
    return worst


def spectral_decompose(
    state: CmpsState,
    tol: float,
    *,
    dense_threshold: int = DENSE_THRESHOLD,
) -> SpectralData:
    """Leading spectrum of the transfer generator with the three cutoff ranks.

    Dense eigendecomposition is used while D² ≤ ``dense_threshold``; above it the
    number of Krylov eigenpairs is doubled until the cutoffs fall strictly inside
    the computed set.

    Raises:
        ValueError: If ``tol`` is outside (0, 1).
        EigensolverError: If the eigensolver fails or its residual is too large.
        DegenerateSpectrumError: If the eigenvectors cannot be biorthonormalized.
    """
    return decompose_action(
        TransferAction(Q=state.Q, R=state.R), float(state.L), tol, dense_threshold=dense_threshold
    )


def complete_spectrum(spec: SpectralData) -> SpectralData:
    """``spec`` itself if it holds all D² eigentriples, else a dense recomputation."""
    if spec.n_stored == spec.dim * spec.dim:
        return spec
    logger.debug("spectral.complete.recompute", bond_dim=spec.dim, stored=spec.n_stored)
    return decompose_action(spec.action, spec.L, spec.tol, dense_threshold=spec.dim * spec.dim)


def decompose_action(
    action: TransferAction,
    L: float,
    tol: float,
    *,
    dense_threshold: int = DENSE_THRESHOLD,
) -> SpectralData:
    """:func:`spectral_decompose` for a bare transfer generator on a ring of length ``L``."""
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    start = time.monotonic()
    dim = action.dim
    n = dim * dim

    path = "dense"
    if n <= dense_threshold:
        values, rights, lefts = _dense_spectrum(action)
    else:
        path = "krylov"
        count = min(16, n - 2)
        while True:
            values, rights, lefts = _krylov_spectrum(action, count)
            m1, m2, m3 = cutoff_ranks(values, L, tol)
            if m3 < count:
                break
            if 2 * count >= n - 1:
                logger.warning("spectral.krylov.fallback_dense", bond_dim=dim, requested=2 * count)
                path = "dense"
                values, rights, lefts = _dense_spectrum(action)
                break
            count *= 2

    lefts = _biorthonormalize(rights, lefts)
    m1, m2, m3 = cutoff_ranks(values, L, tol)
    residual = _residuals(action, values[:m3], rights[:m3])
    if residual > 1e-6:
        raise EigensolverError(f"Eigenpair residual {residual:.3e} exceeds tolerance.", residual=residual)
    if residual > EIGEN_RESIDUAL_TOL:
        logger.warning("spectral.residual.high", residual=residual, bond_dim=dim)

    if len(values) > 1 and abs(values[0] - values[1]) < DEGENERACY_RTOL * max(1.0, abs(values[0])):
        logger.warning("spectral.leading.degenerate", gap=float(abs(values[0] - values[1])), bond_dim=dim)

    logger.debug(
        "spectral.decompose.complete",
        bond_dim=dim,
        path=path,
        m1=m1,
        m2=m2,
        m3=m3,
        leading=complex(values[0]),
        wall_ms=1e3 * (time.monotonic() - start),
    )
    return SpectralData(
        lambdas=values,
        right_vecs=rights,
        left_vecs=lefts,
        m1=m1,
        m2=m2,
        m3=m3,
        tol=tol,
        L=L,
        action=action,
    )


def _project_off(
    kets: NDArray[np.complex128], bras: NDArray[np.complex128], x: ComplexMatrix
) -> ComplexMatrix:
    if kets.shape[0] == 0:
        return x
    coefficients = np.einsum("kij,ij->k", bras.conj(), x)
    return x - np.einsum("k,kij->ij", coefficients, kets)


def pinv_apply(
    spec: SpectralData,
    action: TransferAction,
    i: int,
    m: int,
    power: int,
    b: ComplexMatrix,
    *,
    rtol: float = PINV_RTOL,
) -> ComplexMatrix:
    """Apply ``(T̃_i^m)^power`` to ``b`` by a deflated GMRES solve.

    ``T̃_i^m = Σ_{k≥m} |r_k)(l_k| / (λ_i − λ_k)`` is realised by solving
    ``(λ_i P⊥ − T P⊥) y = P⊥ b`` on the complement of the leading ``m`` modes.
    With an adjoint ``action`` the adjoint operator is applied instead.

    Raises:
        PseudoInverseError: If ``i`` is not below ``m`` or GMRES does not converge.
    """
    if power not in (1, 2):
        raise ValueError(f"power must be 1 or 2, got {power}")
    if not 0 <= i < m <= spec.n_stored:
        raise PseudoInverseError(f"Pseudo-inverse index i={i} must satisfy 0 <= i < m={m} <= {spec.n_stored}.")

    dim = action.dim
    n = dim * dim
    forward = action.direction == "forward"
    shift = spec.lambdas[i] if forward else np.conj(spec.lambdas[i])
    kets = spec.right_vecs[:m] if forward else spec.left_vecs[:m]
    bras = spec.left_vecs[:m] if forward else spec.right_vecs[:m]

    rhs = _project_off(kets, bras, np.asarray(b, dtype=np.complex128))
    if m >= n:
        return np.zeros((dim, dim), dtype=np.complex128)

    def shifted(vector: NDArray[np.complex128]) -> NDArray[np.complex128]:
        y = _project_off(kets, bras, vector.reshape((dim, dim)))
        return (shift * y - action(y)).ravel()

    operator = LinearOperator((n, n), matvec=shifted, dtype=np.complex128)
    restart = min(n, PINV_RESTART)
    cycles = max(1, math.ceil(5 * n / restart))
    for _ in range(power):
        rhs_norm = float(np.linalg.norm(rhs))
        if rhs_norm == 0.0:
            return np.zeros((dim, dim), dtype=np.complex128)
        solution, info = gmres(operator, rhs.ravel(), rtol=rtol, atol=0.0, restart=restart, maxiter=cycles)
        residual = float(np.linalg.norm(operator.matvec(solution) - rhs.ravel())) / rhs_norm
        if info != 0 and residual > 10 * rtol:
            raise PseudoInverseError(
                f"Deflated solve for mode {i} stalled at relative residual {residual:.3e}.",
                residual=residual,
                iterations=cycles * restart,
            )
        rhs = _project_off(kets, bras, solution.reshape((dim, dim)))
    return rhs


def _exp_dd2_raw(L: float, a: NDArray[np.complex128], b: NDArray[np.complex128]) -> NDArray[np.complex128]:
    swap = a.real < b.real
    high = np.where(swap, b, a)
    low = np.where(swap, a, b)
    diff = low - high
    safe = np.where(diff == 0, 1.0, diff)
    quotient = np.exp(L * high) * np.expm1(L * diff) / safe
    return np.where(diff == 0, L * np.exp(L * high), quotient)


def close_pairs(a: NDArray[np.complex128], b: NDArray[np.complex128]) -> NDArray[np.bool_]:
    """Mask of eigenvalue pairs treated as coincident."""
    return np.abs(a - b) < DEGENERACY_RTOL * np.maximum(1.0, np.abs(a))


def exp_dd1(L: float, a: NDArray[np.complex128]) -> NDArray[np.complex128]:
    return np.exp(L * np.asarray(a, dtype=np.complex128))


def exp_dd2(L: float, a: object, b: object) -> NDArray[np.complex128]:
    """Divided difference ``(e^{La} − e^{Lb})/(a − b)`` with the coincident-pair series."""
    a_arr, b_arr = np.broadcast_arrays(np.asarray(a, dtype=np.complex128), np.asarray(b, dtype=np.complex128))
    close = close_pairs(a_arr, b_arr)
    series = L * np.exp(L * a_arr) * (1.0 + 0.5 * L * (b_arr - a_arr))
    return np.where(close, series, _exp_dd2_raw(L, a_arr, b_arr))


def exp_dd3(L: float, a: object, b: object, c: object) -> NDArray[np.complex128]:
    """Second divided difference of ``e^{Lz}``, i.e. the ordered double integral weight."""
    a_arr, b_arr, c_arr = np.broadcast_arrays(
        np.asarray(a, dtype=np.complex128),
        np.asarray(b, dtype=np.complex128),
        np.asarray(c, dtype=np.complex128),
    )
    points = np.stack([a_arr, b_arr, c_arr], axis=-1)
    gaps = np.stack([np.abs(b_arr - c_arr), np.abs(a_arr - c_arr), np.abs(a_arr - b_arr)], axis=-1)
    # the vertex opposite the longest edge sits in the middle of the quotient
    middle = np.argmax(gaps, axis=-1)
    first = (middle + 1) % 3
    last = (middle + 2) % 3
    pa = np.take_along_axis(points, first[..., None], axis=-1)[..., 0]
    pb = np.take_along_axis(points, middle[..., None], axis=-1)[..., 0]
    pc = np.take_along_axis(points, last[..., None], axis=-1)[..., 0]
    spread = np.max(gaps, axis=-1)

    out = np.empty(a_arr.shape, dtype=np.complex128)
    confluent = spread < DEGENERACY_RTOL * np.maximum(1.0, np.abs(pa))
    near = (~confluent) & (L * spread < CLOSE_SEGMENT)
    far = ~(confluent | near)

    if np.any(confluent):
        base = pa[confluent]
        shift = (pb[confluent] - base) + (pc[confluent] - base)
        out[confluent] = 0.5 * L * L * np.exp(L * base) * (1.0 + L * shift / 3.0)
    if np.any(far):
        numerator = _exp_dd2_raw(L, pa[far], pb[far]) - _exp_dd2_raw(L, pb[far], pc[far])
        out[far] = numerator / (pa[far] - pc[far])
    if np.any(near):
        # exact for clustered arguments: e^{LZ} of the bidiagonal matrix carries f[a,b,c] in its corner
        count = int(np.count_nonzero(near))
        blocks = np.zeros((count, 3, 3), dtype=np.complex128)
        blocks[:, 0, 0] = pa[near]
        blocks[:, 1, 1] = pb[near]
        blocks[:, 2, 2] = pc[near]
        blocks[:, 0, 1] = 1.0
        blocks[:, 1, 2] = 1.0
        out[near] = scipy.linalg.expm(L * blocks)[:, 0, 2]
    return out


# 🐝📁🔚
