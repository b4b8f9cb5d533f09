#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""Reference implementations for verification.

- ``full_spectrum_reference``: every ring integral evaluated without cutoffs as
  a block-bidiagonal matrix exponential of the dense D²×D² generator.
- ``certify_reference``: cross-checks those integrals against adaptive quadrature.
- ``oracle_check``: compares the production contractions against the reference
  and names the term-table row that best explains a mismatch.
- ``gp_ground_state``: mean-field Gross-Pitaevskii solver on the ring.
- ``fd_directional``: central-difference energy derivative along a tangent.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
import math

import attrs
import numpy as np
from numpy.typing import NDArray
from provide.foundation import logger
import scipy.fft
import scipy.linalg
from scipy.integrate import quad_vec
from scipy.optimize import NoConvergence, newton_krylov

from ringtdvp.contraction import (
    BraTemplate,
    EnvironmentFactory,
    EnvironmentLike,
    Slot,
    override_rows,
    record_rows,
)
from ringtdvp.errors import (
    GpConvergenceError,
    OracleCertificationError,
    OracleError,
    OracleMismatchError,
)
from ringtdvp.evolution import retract
from ringtdvp.hamiltonian import HamiltonianParams, energy, energy_terms, gradient, gradient_covector
from ringtdvp.spectral import spectral_decompose
from ringtdvp.state import CmpsLike, CmpsState, make_state
from ringtdvp.tangent import (
    TangentVector,
    gram_apply,
    norm_operator,
    ortho_vector,
    reduce,
    state_norm,
)
from ringtdvp.transfer import ComplexMatrix, SuperOp, TransferAction

ORACLE_MAX_DIM = 6
AGREEMENT_TOL = 1e-8
QUAD_EPSREL = 1e-10
FD_STEP_RANGE = (1e-7, 1e-3)
GP_MIN_GRID = 256
GP_ENERGY_TOL = 1e-12
GP_RESIDUAL_TOL = 1e-8
GP_DTAU_LADDER = (1.0, 0.1)

FloatArray = NDArray[np.float64]


def transfer_matrix(state: CmpsLike) -> ComplexMatrix:
    """Dense D²×D² generator T acting on column-stacked vectors."""
    return TransferAction(Q=state.Q, R=state.R).as_superop().dense()


def chain_integral(T: ComplexMatrix, ops: Sequence[ComplexMatrix], L: float) -> ComplexMatrix:
    """``∫ e^{x₀T} A₁ e^{x₁T} ... A_k e^{x_kT}`` over ``x₀ + ... + x_k = L``.

    The corner block of ``expm(L·M)`` where M carries T on the block diagonal
    and the A's on the superdiagonal.
    """
    n = T.shape[0]
    k = len(ops)
    if k == 0:
        return np.asarray(scipy.linalg.expm(L * T), dtype=np.complex128)
    big = np.zeros(((k + 1) * n, (k + 1) * n), dtype=np.complex128)
    for j in range(k + 1):
        big[j * n : (j + 1) * n, j * n : (j + 1) * n] = T
    for j, A in enumerate(ops):
        big[j * n : (j + 1) * n, (j + 1) * n : (j + 2) * n] = A
    return np.asarray(scipy.linalg.expm(L * big)[:n, k * n :], dtype=np.complex128)


@attrs.define(frozen=True, slots=True)
class DenseEnvironment:
    """Open ring slot held as the dense matrix Z with ``value(X) = Tr[Z·X]``."""

    Z: ComplexMatrix
    dim: int

    def contract(self, op: SuperOp) -> complex:
        if op.is_zero:
            return 0.0 + 0.0j
        return complex(np.einsum("ij,ji->", self.Z, op.dense()))

    def covector(self, template: BraTemplate) -> ComplexMatrix:
        d = self.dim
        # Z[jD+i, lD+k] pairs with ket[k,i] and conj(bra[l,j])
        total = np.einsum("jilk,ki->lj", self.Z.reshape(d, d, d, d), template.ket)
        if template.left is not None:
            total = template.left.conj().T @ total
        if template.right is not None:
            total = total @ template.right.conj().T
        return np.asarray(total, dtype=np.complex128)

    def collect(self, templates: Sequence[BraTemplate]) -> dict[Slot, ComplexMatrix]:
        out: dict[Slot, ComplexMatrix] = {}
        for template in templates:
            contribution = self.covector(template)
            out[template.slot] = out[template.slot] + contribution if template.slot in out else contribution
        return out


def dense_environments(state: CmpsLike) -> EnvironmentFactory:
    """Environment factory evaluating every ring integral exactly."""
    T = transfer_matrix(state)
    dim = state.R.shape[0]

    def build(ops: Sequence[SuperOp], _block: str) -> EnvironmentLike:
        return DenseEnvironment(Z=chain_integral(T, [op.dense() for op in ops], state.L), dim=dim)

    return build


@attrs.define(frozen=True, slots=True, kw_only=True)
class ReferenceQuantities:
    """Cutoff-free values of the quantities the production path approximates."""

    eigenvalues: NDArray[np.complex128]
    norm: float
    y_vector: TangentVector
    gram_matrix: ComplexMatrix
    gradient: TangentVector | None = None
    energy: float | None = None

    def gram_apply(self, t: TangentVector) -> TangentVector:
        return TangentVector.from_vector(self.gram_matrix @ t.as_vector(), t.dim, reduced=False)


def _ket_operator(state: CmpsLike, t: TangentVector) -> SuperOp:
    assert t.V is not None
    return SuperOp.product(t.V, np.eye(state.R.shape[0])) + SuperOp.product(t.W, state.R)


def _bra_operator(state: CmpsLike, t: TangentVector) -> SuperOp:
    assert t.V is not None
    return SuperOp.product(np.eye(state.R.shape[0]), t.V) + SuperOp.product(state.R, t.W)


def direct_pairings(state: CmpsLike) -> tuple[TangentVector, ComplexMatrix]:
    """y-vector and full Gram matrix from ring traces of the overlap expressions.

    Each pairing is read off as ``Tr[X·Z]`` with Z a chain integral, term by
    term as :func:`certify_reference` integrates them. The production covector
    assembly is not involved.
    """
    dim = state.R.shape[0]
    size = 3 * dim * dim
    T = transfer_matrix(state)
    L = state.L
    eye = np.eye(dim, dtype=np.complex128)
    BB = norm_operator(state).dense()
    single = DenseEnvironment(Z=chain_integral(T, [BB], L), dim=dim)
    closed = DenseEnvironment(Z=chain_integral(T, [], L), dim=dim)

    def bra_side(env: DenseEnvironment) -> tuple[ComplexMatrix, ComplexMatrix]:
        # covectors of the bra insertion 𝟙⊗V̄ + R⊗W̄
        return env.covector(BraTemplate(ket=eye, slot="V")), env.covector(BraTemplate(ket=state.R, slot="W"))

    def open_ring(*ops: ComplexMatrix) -> DenseEnvironment:
        return DenseEnvironment(Z=chain_integral(T, list(ops), L), dim=dim)

    y_V, y_W = bra_side(single)
    y = TangentVector(y_V, y_W, closed.covector(BraTemplate(ket=state.B, slot="Y")))

    columns = []
    for index in range(size):
        unit = np.zeros(size, dtype=np.complex128)
        unit[index] = 1.0
        t = TangentVector.from_vector(unit, dim, reduced=False)
        assert t.V is not None
        V = np.zeros((dim, dim), dtype=np.complex128)
        W = np.zeros_like(V)
        Y = np.zeros_like(V)
        if np.any(t.V) or np.any(t.W):
            ket = _ket_operator(state, t).dense()
            direct_V, direct_W = bra_side(open_ring(BB, ket))
            exchange_V, exchange_W = bra_side(open_ring(ket, BB))
            V += direct_V + exchange_V
            W += direct_W + exchange_W + single.covector(BraTemplate(ket=t.W, slot="W"))
            Y += open_ring(ket).covector(BraTemplate(ket=state.B, slot="Y"))
        if np.any(t.Y):
            tail_V, tail_W = bra_side(open_ring(SuperOp.product(t.Y, state.B).dense()))
            V += tail_V
            W += tail_W
            Y += closed.covector(BraTemplate(ket=t.Y, slot="Y"))
        columns.append(TangentVector(V, W, Y).as_vector())
    return y, np.column_stack(columns)


def full_spectrum_reference(state: CmpsLike, params: HamiltonianParams | None = None) -> ReferenceQuantities:
    """Norm, y-vector, explicit 3D²×3D² Gram matrix and (with ``params``) the gradient.

    The norm, y-vector and Gram matrix come from :func:`direct_pairings`. The
    gradient and energy run the production term formulas on exact environments,
    so they check truncation and deflation only; :func:`fd_directional` checks
    the gradient formula itself.

    Raises:
        OracleError: If D exceeds ``ORACLE_MAX_DIM`` or the dense spectrum is not finite.
    """
    dim = state.R.shape[0]
    if dim > ORACLE_MAX_DIM:
        raise OracleError(f"Reference needs D <= {ORACLE_MAX_DIM}, got {dim}")
    eigenvalues = scipy.linalg.eigvals(transfer_matrix(state))
    if not np.all(np.isfinite(eigenvalues)):
        raise OracleError("Dense eigendecomposition of the transfer generator failed")
    eigenvalues = eigenvalues[np.argsort(-eigenvalues.real)]

    environment = dense_environments(state)
    norm = environment([], "norm").contract(norm_operator(state)).real
    y, gram = direct_pairings(state)

    g = None
    total = None
    if params is not None:
        g = gradient_covector(state, params, environment)
        bulk, boundary, _ = energy_terms(state, params, environment)
        total = float((bulk + boundary).real) / norm
    logger.debug("oracle.reference.complete", bond_dim=dim, norm=norm)
    return ReferenceQuantities(
        eigenvalues=eigenvalues,
        norm=float(norm),
        y_vector=y,
        gram_matrix=gram,
        gradient=g,
        energy=total,
    )


def _as_pair(value: complex) -> FloatArray:
    return np.array([value.real, value.imag])


def _from_pair(pair: FloatArray) -> complex:
    return complex(pair[0], pair[1])


def _propagator(T: ComplexMatrix) -> Callable[[float], ComplexMatrix]:
    def expm(x: float) -> ComplexMatrix:
        return np.asarray(scipy.linalg.expm(x * T), dtype=np.complex128)

    return expm


def quad_trace(T: ComplexMatrix, L: float, first: ComplexMatrix) -> complex:
    """``∫₀ᴸ Tr[first e^{xT}] dx`` by adaptive quadrature."""
    expm = _propagator(T)
    result, _ = quad_vec(lambda x: _as_pair(complex(np.trace(first @ expm(x)))), 0.0, L, epsrel=QUAD_EPSREL)
    return _from_pair(result)


def quad_single(T: ComplexMatrix, L: float, first: ComplexMatrix, second: ComplexMatrix) -> complex:
    """``∫₀ᴸ Tr[first e^{xT} second e^{(L−x)T}] dx`` by adaptive quadrature."""
    expm = _propagator(T)

    def integrand(x: float) -> FloatArray:
        return _as_pair(complex(np.trace(first @ expm(x) @ second @ expm(L - x))))

    result, _ = quad_vec(integrand, 0.0, L, epsrel=QUAD_EPSREL)
    return _from_pair(result)


def quad_double(
    T: ComplexMatrix, L: float, first: ComplexMatrix, second: ComplexMatrix, third: ComplexMatrix
) -> complex:
    """``∫∫_{0≤x≤y≤L} Tr[first e^{xT} second e^{(y−x)T} third e^{(L−y)T}]`` by nested quadrature."""
    expm = _propagator(T)

    def outer(x: float) -> FloatArray:
        head = first @ expm(x) @ second

        def inner(y: float) -> FloatArray:
            return _as_pair(complex(np.trace(head @ expm(y - x) @ third @ expm(L - y))))

        result, _ = quad_vec(inner, x, L, epsrel=QUAD_EPSREL)
        return np.asarray(result)

    result, _ = quad_vec(outer, 0.0, L, epsrel=QUAD_EPSREL)
    return _from_pair(result)


def _relative(value: complex, reference: complex) -> float:
    scale = abs(reference)
    return abs(value - reference) / scale if scale > 1e-14 else abs(value - reference)


def certify_reference(
    state: CmpsLike, reference: ReferenceQuantities, rng: np.random.Generator, *, tol: float = AGREEMENT_TOL
) -> dict[str, float]:
    """Check the norm, one y-pairing and one Gram pairing against quadrature.

    Returns:
        Relative deviation per certified quantity.

    Raises:
        OracleCertificationError: If any deviation exceeds ``tol``.
    """
    dim = state.R.shape[0]
    T = transfer_matrix(state)
    L = state.L
    BB = norm_operator(state).dense()
    t = random_tangent(dim, rng)
    t_bra = random_tangent(dim, rng)
    assert t.V is not None and t_bra.V is not None

    # Tr[BB̄ e^{LT}] = Tr[BB̄] + ∫ Tr[BB̄ T e^{xT}]
    norm_quad = complex(np.trace(BB)) + quad_trace(T, L, BB @ T)

    bra = _bra_operator(state, t_bra).dense()
    y_quad = quad_single(T, L, BB, bra) + complex(
        np.trace(SuperOp.product(state.B, t_bra.Y).dense() @ scipy.linalg.expm(L * T))
    )

    ket = _ket_operator(state, t).dense()
    contact = SuperOp.product(t.W, t_bra.W).dense()
    y_ket = SuperOp.product(t.Y, state.B).dense()
    y_bra = SuperOp.product(state.B, t_bra.Y).dense()
    yy = SuperOp.product(t.Y, t_bra.Y).dense()
    gram_quad = (
        quad_double(T, L, BB, ket, bra)
        + quad_double(T, L, BB, bra, ket)
        + quad_single(T, L, BB, contact)
        + quad_single(T, L, y_ket, bra)
        + quad_single(T, L, y_bra, ket)
        + complex(np.trace(yy @ scipy.linalg.expm(L * T)))
    )

    gram_pairing = complex(np.vdot(t_bra.as_vector(), reference.gram_matrix @ t.as_vector()))
    deviations = {
        "norm": _relative(reference.norm, norm_quad),
        "y": _relative(t_bra.inner(reference.y_vector), y_quad),
        "gram": _relative(gram_pairing, gram_quad),
    }
    logger.debug("oracle.certify", bond_dim=dim, **deviations)
    failed = {name: value for name, value in deviations.items() if value > tol}
    if failed:
        raise OracleCertificationError(f"Reference disagrees with quadrature: {failed}")
    return deviations


def random_tangent(dim: int, rng: np.random.Generator, *, reduced: bool = False) -> TangentVector:
    blocks = 2 if reduced else 3
    raw = rng.standard_normal((blocks, dim, dim)) + 1j * rng.standard_normal((blocks, dim, dim))
    return TangentVector.from_vector(raw.ravel() / math.sqrt(2.0), dim, reduced=reduced)


def oracle_params(L: float) -> HamiltonianParams:
    """Couplings exercising every term of the Hamiltonian."""
    return HamiltonianParams(c=1.0, mu=0.5, U0=0.7, Omega=0.2, eps=0.1, L=L)


def vector_error(value: NDArray[np.complex128], reference: NDArray[np.complex128]) -> float:
    """``‖value − reference‖ / ‖reference‖`` (absolute when the reference vanishes)."""
    scale = float(np.linalg.norm(reference))
    difference = float(np.linalg.norm(np.asarray(value) - np.asarray(reference)))
    return difference / scale if scale > 1e-14 else difference


@attrs.define(frozen=True, slots=True, kw_only=True)
class OracleRow:
    quantity: str
    error: float
    passed: bool
    worst_row: str | None = None


@attrs.define(frozen=True, slots=True, kw_only=True)
class OracleReport:
    dim: int
    seed: int
    L: float
    threshold: float
    rows: tuple[OracleRow, ...]
    certification: dict[str, float] = attrs.field(factory=dict)

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def worst_row(self) -> str | None:
        failing = [row for row in self.rows if not row.passed]
        if not failing:
            return None
        return max(failing, key=lambda row: row.error).worst_row


def diagnose_rows(
    production: Callable[[], NDArray[np.complex128]], reference: NDArray[np.complex128]
) -> str | None:
    """Name the term-table row whose rescaling best explains ``production − reference``.

    Each row's contribution is isolated by zeroing it; the row whose optimally
    rescaled contribution leaves the smallest residual wins.
    """
    with record_rows() as names:
        full = production()
    target = reference - full
    best: tuple[float, str] | None = None
    for name in names:
        with override_rows({name: 0.0}):
            contribution = full - production()
        weight = float(np.vdot(contribution, contribution).real)
        if weight == 0.0:
            continue
        factor = np.vdot(contribution, target) / weight
        residual = float(np.linalg.norm(target - factor * contribution))
        if best is None or residual < best[0]:
            best = (residual, name)
    return None if best is None else best[1]


def oracle_check(
    dim: int,
    seed: int,
    *,
    L: float = 5.0,
    tol: float = 1e-12,
    threshold: float = AGREEMENT_TOL,
    certify: bool = True,
) -> OracleReport:
    """Compare production norm, y-vector, Gram action and gradient with the reference.

    Raises:
        OracleError: If D is out of range or the reference fails certification.
    """
    if not 1 <= dim <= ORACLE_MAX_DIM:
        raise OracleError(f"oracle-check supports 1 <= D <= {ORACLE_MAX_DIM}, got {dim}")
    state = make_state(dim, L, seed=seed)
    params = oracle_params(L)
    rng = np.random.default_rng(seed + 1)
    reference = full_spectrum_reference(state, params)
    certification = certify_reference(state, reference, rng) if certify else {}
    reference_gradient = reference.gradient
    assert reference_gradient is not None

    spec = spectral_decompose(state, tol)
    t = random_tangent(dim, rng)
    checks: list[tuple[str, Callable[[], NDArray[np.complex128]], NDArray[np.complex128]]] = [
        ("norm", lambda: np.array([state_norm(state, spec)], dtype=np.complex128), np.array([reference.norm])),
        ("y", lambda: ortho_vector(state, spec).as_vector(), reference.y_vector.as_vector()),
        ("gram", lambda: gram_apply(state, spec, t).as_vector(), reference.gram_matrix @ t.as_vector()),
        ("gradient", lambda: gradient(state, spec, params).as_vector(), reference_gradient.as_vector()),
    ]
    rows = []
    for quantity, production, expected in checks:
        error = vector_error(production(), expected)
        passed = error <= threshold
        worst = None if passed else diagnose_rows(production, expected)
        rows.append(OracleRow(quantity=quantity, error=error, passed=passed, worst_row=worst))
        logger.info("oracle.check.quantity", quantity=quantity, error=error, passed=passed, worst_row=worst)
    return OracleReport(
        dim=dim,
        seed=seed,
        L=L,
        threshold=threshold,
        rows=tuple(rows),
        certification=certification,
    )


def require_pass(report: OracleReport) -> None:
    """Raise ``OracleMismatchError`` naming the worst row if any quantity failed."""
    if not report.passed:
        failing = ", ".join(f"{row.quantity}={row.error:.3e}" for row in report.rows if not row.passed)
        raise OracleMismatchError(f"Production disagrees with the reference: {failing}", row=report.worst_row)


@attrs.define(frozen=True, slots=True)
class FiniteDifference:
    value: float
    truncation: float


def fd_directional(
    state: CmpsState,
    params: HamiltonianParams,
    direction: TangentVector,
    h: float,
    *,
    tol: float = 1e-12,
) -> FiniteDifference:
    """Central difference of the normalised energy along a tangent.

    A full tangent is reduced first. The truncation estimate is ``h²``.
    """
    low, high = FD_STEP_RANGE
    if not low <= h <= high:
        raise ValueError(f"h must lie in [{low}, {high}], got {h}")
    reduced = reduce(direction, state) if not direction.reduced else direction
    if not any(np.any(block) for block in reduced.components()):
        return FiniteDifference(0.0, h * h)

    def total(step: float) -> float:
        shifted = retract(state, reduced, step)
        return energy(shifted, spectral_decompose(shifted, tol), params).total

    return FiniteDifference((total(h) - total(-h)) / (2.0 * h), h * h)


@attrs.define(frozen=True, slots=True, kw_only=True)
class GpState:
    """Mean-field ground state sampled on ``n`` uniform points of [0, L)."""

    x: FloatArray
    psi: NDArray[np.complex128]
    params: HamiltonianParams
    energy: float
    particle_number: float
    residual: float
    steps: int

    @property
    def density(self) -> FloatArray:
        return np.abs(self.psi) ** 2

    @property
    def dx(self) -> float:
        return self.params.L / self.psi.size


class _GpGrid:
    """Discrete GP functional: spectral kinetic term, single-cell barrier."""

    def __init__(self, params: HamiltonianParams, n_grid: int) -> None:
        self.params = params
        self.n = n_grid
        self.dx = params.L / n_grid
        self.x = np.arange(n_grid) * self.dx
        k = 2.0 * np.pi * scipy.fft.fftfreq(n_grid, d=self.dx)
        # ħ²/2m = 1; the flux shifts every momentum by 2πΩ/L
        self.kinetic = (k - 2.0 * np.pi * params.Omega / params.L) ** 2
        self.barrier = np.zeros(n_grid)
        self.barrier[0] = params.U0 / self.dx

    def kinetic_apply(self, psi: NDArray[np.complex128]) -> NDArray[np.complex128]:
        return np.asarray(scipy.fft.ifft(self.kinetic * scipy.fft.fft(psi)))

    def number(self, psi: NDArray[np.complex128]) -> float:
        return float(self.dx * np.sum(np.abs(psi) ** 2))

    def residual(self, psi: NDArray[np.complex128], mu: float) -> NDArray[np.complex128]:
        """Gradient of the discrete functional per unit cell."""
        potential = self.barrier + 2.0 * self.params.c * np.abs(psi) ** 2 - mu
        return self.kinetic_apply(psi) + potential * psi

    def residual_norm(self, psi: NDArray[np.complex128], mu: float) -> float:
        return float(np.sqrt(self.dx * np.sum(np.abs(self.residual(psi, mu)) ** 2)))

    def energy(self, psi: NDArray[np.complex128], mu: float) -> float:
        rho = np.abs(psi) ** 2
        kinetic = np.vdot(psi, self.kinetic_apply(psi)).real
        local = np.sum((self.barrier - mu) * rho + self.params.c * rho * rho)
        return float(self.dx * (kinetic + local))

    def chemical_potential(self, psi: NDArray[np.complex128]) -> float:
        """μ of a canonical state: ⟨ψ|K + V + 2c|ψ|²|ψ⟩ / N."""
        potential = self.barrier + 2.0 * self.params.c * np.abs(psi) ** 2
        value = np.vdot(psi, self.kinetic_apply(psi) + potential * psi).real
        return float(self.dx * value / self.number(psi))

    def step(self, psi: NDArray[np.complex128], mu: float, dtau: float) -> NDArray[np.complex128]:
        def half(field: NDArray[np.complex128]) -> NDArray[np.complex128]:
            potential = self.barrier + 2.0 * self.params.c * np.abs(field) ** 2 - mu
            return np.exp(-0.5 * dtau * potential) * field

        psi = half(psi)
        psi = np.asarray(scipy.fft.ifft(np.exp(-dtau * self.kinetic) * scipy.fft.fft(psi)))
        return half(psi)


def _relax(
    grid: _GpGrid,
    psi: NDArray[np.complex128],
    mu: float,
    dtau: float,
    target_N: float | None,
    max_steps: int,
    check_every: int = 10,
) -> tuple[NDArray[np.complex128], float, int, bool]:
    previous = grid.energy(psi, mu)
    for step in range(1, max_steps + 1):
        psi = grid.step(psi, mu, dtau)
        if target_N is not None:
            psi = psi * math.sqrt(target_N / grid.number(psi))
        if step % check_every:
            continue
        if target_N is not None:
            mu = grid.chemical_potential(psi)
        current = grid.energy(psi, mu)
        if not math.isfinite(current):
            raise GpConvergenceError(f"GP relaxation diverged at dtau={dtau}")
        if abs(current - previous) / check_every < GP_ENERGY_TOL * max(1.0, abs(current)):
            return psi, mu, step, True
        previous = current
    return psi, mu, max_steps, False


def _polish(
    grid: _GpGrid, psi: NDArray[np.complex128], mu: float, target_N: float | None
) -> tuple[NDArray[np.complex128], float]:
    """Newton-Krylov on the real stationarity equations (plus the particle constraint)."""
    real = psi.real.copy()
    # reference scale keeps the constraint row comparable to the residual rows
    scale = 1.0 / grid.params.L

    if target_N is None:

        def equations(field: FloatArray) -> FloatArray:
            return grid.residual(field.astype(np.complex128), mu).real

        solution = newton_krylov(equations, real, f_tol=1e-11, maxiter=100)
        return solution.astype(np.complex128), mu

    def constrained(unknowns: FloatArray) -> FloatArray:
        field, mu_value = unknowns[:-1], unknowns[-1]
        constraint = scale * (grid.number(field.astype(np.complex128)) - target_N)
        return np.append(grid.residual(field.astype(np.complex128), mu_value).real, constraint)

    solution = newton_krylov(constrained, np.append(real, mu), f_tol=1e-11, maxiter=100)
    return solution[:-1].astype(np.complex128), float(solution[-1])


def gp_ground_state(
    params: HamiltonianParams,
    n_grid: int,
    *,
    target_N: float | None = None,
    dtau_ladder: Sequence[float] = GP_DTAU_LADDER,
    max_steps: int = 200_000,
    polish: bool = True,
) -> GpState:
    """Imaginary-time split-step relaxation of the GP equation on the ring.

    Grand-canonical at fixed ``params.mu`` unless ``target_N`` is given, in which
    case ψ is renormalised after every step and μ is the Lagrange multiplier. Real
    ground states (Ω = 0) are polished with Newton-Krylov.

    Raises:
        GpConvergenceError: If relaxation or the polish fails.
    """
    if n_grid < GP_MIN_GRID:
        raise ValueError(f"n_grid must be at least {GP_MIN_GRID}, got {n_grid}")
    grid = _GpGrid(params, n_grid)
    mu = params.mu
    if target_N is not None:
        psi = np.full(n_grid, math.sqrt(target_N / params.L), dtype=np.complex128)
    else:
        psi = np.full(n_grid, math.sqrt(max(mu, 1e-3) / (2.0 * params.c)), dtype=np.complex128)

    steps = 0
    converged = False
    for dtau in dtau_ladder:
        psi, mu, taken, converged = _relax(grid, psi, mu, dtau, target_N, max_steps)
        steps += taken
        logger.debug("oracle.gp.rung", dtau=dtau, steps=taken, converged=converged)
    if not converged:
        raise GpConvergenceError(f"GP relaxation did not converge within {max_steps} steps per rung")

    if polish and params.Omega == 0 and np.any(psi):
        try:
            psi, mu = _polish(grid, psi, mu, target_N)
        except (NoConvergence, ValueError) as e:
            raise GpConvergenceError(f"Newton-Krylov polish failed: {e}") from e

    residual = grid.residual_norm(psi, mu)
    if polish and params.Omega == 0 and residual > GP_RESIDUAL_TOL:
        raise GpConvergenceError(f"GP residual {residual:.3e} above {GP_RESIDUAL_TOL}")
    number = grid.number(psi)
    logger.info(
        "oracle.gp.complete", n_grid=n_grid, steps=steps, mu=mu, particle_number=number, residual=residual
    )
    return GpState(
        x=grid.x,
        psi=psi,
        params=params.with_mu(mu),
        energy=grid.energy(psi, mu),
        particle_number=number,
        residual=residual,
        steps=steps,
    )


def gp_energy(gp: GpState) -> float:
    """Grand-canonical functional E − μN of a GP state on its own grid."""
    return _GpGrid(gp.params, gp.psi.size).energy(gp.psi, gp.params.mu)


def uniform_gp_density(params: HamiltonianParams) -> float:
    """Optimal constant density ``(μ − U₀/L)/(2c)``: the D = 1 cMPS and uniform GP profile."""
    return max(0.0, (params.mu - params.U0 / params.L) / (2.0 * params.c))


def uniform_gp_energy(params: HamiltonianParams, density: float) -> float:
    """``L(cρ² − μρ) + U₀ρ`` for a constant profile at Ω = 0."""
    return params.L * (params.c * density * density - params.mu * density) + params.U0 * density


# 🐝📁🔚
