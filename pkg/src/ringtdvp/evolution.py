#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""TDVP integration, manifold conjugate gradient and chemical-potential tuning.

All updates live in the reduced coordinates (W, Y) with V = −R†W. A step moves
R and B along the tangent and K by ``K̇ = (i/2)(Ṙ†R − R†Ṙ)``, so the derived Q
stays left-gauged.
"""

from __future__ import annotations

from collections.abc import Callable
import math
import time
from typing import Literal

import attrs
import numpy as np
from numpy.typing import NDArray
from provide.foundation import logger
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from ringtdvp.errors import (
    BracketError,
    ConfigurationError,
    GramSolveError,
    NonFiniteStepError,
    RingTdvpError,
    StagnationError,
)
from ringtdvp.hamiltonian import EnergyBreakdown, HamiltonianParams, boundary_residual, energy, gradient
from ringtdvp.spectral import SpectralData, spectral_decompose
from ringtdvp.state import CmpsState
from ringtdvp.tangent import TangentVector, gram_apply, gram_diagonal, ortho_vector, reduce_covector

Mode = Literal["imaginary", "real"]
CONDITION_LIMIT = 1e12
REGULARIZATION = 1e-10


def _positive(instance: object, attribute: attrs.Attribute[float], value: float) -> None:
    if not value > 0:
        raise ConfigurationError(f"{attribute.name} must be positive, got {value}", key=attribute.name)


def _unit_interval(instance: object, attribute: attrs.Attribute[float], value: float) -> None:
    if not 0 < value < 1:
        raise ConfigurationError(f"{attribute.name} must lie in (0, 1), got {value}", key=attribute.name)


@attrs.define(frozen=True, slots=True, kw_only=True)
class LineSearchOptions:
    """Armijo backtracking parameters."""

    initial_step: float | None = attrs.field(default=None)
    max_step: float = attrs.field(default=1.0, validator=_positive)
    shrink: float = attrs.field(default=0.5, validator=_unit_interval)
    c1: float = attrs.field(default=1e-4, validator=_unit_interval)
    max_halvings: int = attrs.field(default=30, validator=_positive)


@attrs.define(frozen=True, slots=True, kw_only=True)
class TargetOptions:
    """Particle-number target for chemical-potential tuning."""

    N: float = attrs.field(validator=_positive)
    mu_lo: float | None = None
    mu_hi: float | None = None
    tol_N: float | None = None
    max_expansions: int = 8
    max_iters: int = 30

    @property
    def tolerance(self) -> float:
        return self.tol_N if self.tol_N is not None else 1e-3 * self.N


@attrs.define(frozen=True, slots=True, kw_only=True)
class OptimizerOptions:
    """Settings shared by the TDVP integrator and the CG ground-state search."""

    dt: float = attrs.field(default=0.05, validator=_positive)
    mode: Mode = attrs.field(default="imaginary", validator=attrs.validators.in_(("imaginary", "real")))
    max_iters: int = attrs.field(default=500, validator=_positive)
    grad_tol: float = attrs.field(default=1e-8, validator=_positive)
    cg: bool = True
    restart_period: int | None = None
    spectral_tol: float = attrs.field(default=1e-12, validator=_unit_interval)
    gram_tol: float = attrs.field(default=1e-9, validator=_unit_interval)
    line_search: LineSearchOptions = attrs.field(factory=LineSearchOptions)
    target: TargetOptions | None = None

    @property
    def gram_rtol(self) -> float:
        return max(1e-10, 1e-2 * self.grad_tol)


@attrs.define(frozen=True, slots=True, kw_only=True)
class TraceRecord:
    """One optimizer iteration.

    ``grad_norm`` is √(Re⟨x, G·x⟩ / ⟨Ψ|Ψ⟩) for the natural gradient x = G⁻¹g, so
    it does not change when the state is rescaled.
    """

    iteration: int
    energy_total: float
    energy_bulk: float
    grad_norm: float
    particle_number: float
    mu: float
    boundary_residual: float
    wall_ms: float

    def as_row(self) -> tuple[int, float, float, float, float, float, float, float]:
        return (
            self.iteration,
            self.energy_total,
            self.energy_bulk,
            self.grad_norm,
            self.particle_number,
            self.mu,
            self.boundary_residual,
            self.wall_ms,
        )


@attrs.define(slots=True)
class OptimizerTrace:
    """Per-iteration history of an optimisation."""

    records: list[TraceRecord] = attrs.field(factory=list)
    converged: bool = False
    stop_reason: str = ""

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    @property
    def final(self) -> TraceRecord | None:
        return self.records[-1] if self.records else None


@attrs.define(frozen=True, slots=True, kw_only=True)
class GramSolution:
    x: TangentVector
    residual: float
    iterations: int
    regularized: bool = False
    condition_estimate: float | None = None


def conjugate_residual(
    A: LinearOperator,
    b: NDArray[np.complex128],
    *,
    rtol: float,
    maxiter: int,
    M: LinearOperator | None = None,
    callback: Callable[[NDArray[np.complex128]], None] | None = None,
) -> tuple[NDArray[np.complex128], int]:
    """Preconditioned conjugate-residual iteration for Hermitian ``A x = b``.

    ``M`` approximates ``A⁻¹`` and must be Hermitian positive definite. Stops once
    ``‖b − A x‖ ≤ rtol·‖b‖``. Returns ``(x, info)`` with ``info = 0`` on
    convergence, otherwise the number of iterations taken.
    """
    precondition = M.matvec if M is not None else (lambda v: v)
    x = np.zeros_like(b, dtype=np.complex128)
    r = np.array(b, dtype=np.complex128)
    z = precondition(r)
    Az = A.matvec(z)
    p = z.copy()
    Ap = Az.copy()
    rho = float(np.vdot(z, Az).real)
    bound = rtol * float(np.linalg.norm(b))
    if float(np.linalg.norm(r)) <= bound:
        return x, 0
    for iteration in range(1, maxiter + 1):
        MAp = precondition(Ap)
        curvature = float(np.vdot(Ap, MAp).real)
        if curvature <= 0.0 or rho == 0.0:
            return x, iteration
        alpha = rho / curvature
        x += alpha * p
        r -= alpha * Ap
        z -= alpha * MAp
        if callback is not None:
            callback(x)
        if float(np.linalg.norm(r)) <= bound:
            return x, 0
        Az = A.matvec(z)
        rho_next = float(np.vdot(z, Az).real)
        beta = rho_next / rho
        p = z + beta * p
        Ap = Az + beta * Ap
        rho = rho_next
    return x, maxiter


class GramSolver:
    """Conjugate-residual solves of the reduced Gram system with a Jacobi preconditioner."""

    def __init__(self, state: CmpsState, spec: SpectralData, *, rtol: float) -> None:
        self.state = state
        self.spec = spec
        self.rtol = rtol
        self.dim = state.dim
        self.size = 2 * self.dim * self.dim
        diagonal = gram_diagonal(state, spec).as_vector().real
        floor = 1e-8 * max(float(np.max(diagonal)), 1e-300)
        self._diagonal = np.maximum(diagonal, floor)
        self.trace_estimate = float(np.sum(self._diagonal))

    def apply(self, t: TangentVector) -> TangentVector:
        return gram_apply(self.state, self.spec, t)

    def _matvec(self, vector: NDArray[np.complex128], shift: float = 0.0) -> NDArray[np.complex128]:
        t = TangentVector.from_vector(vector, self.dim, reduced=True)
        out = self.apply(t).as_vector()
        return out + shift * vector if shift else out

    def _operator(self, shift: float = 0.0) -> LinearOperator:
        return LinearOperator(
            (self.size, self.size),
            matvec=lambda v: self._matvec(v, shift),
            dtype=np.complex128,
        )

    def _preconditioner(self, shift: float = 0.0) -> LinearOperator:
        inverse = 1.0 / (self._diagonal + shift)
        return LinearOperator((self.size, self.size), matvec=lambda v: inverse * v, dtype=np.complex128)

    def condition_estimate(self) -> float:
        """Ratio of the extreme Ritz values of the reduced Gram matrix."""
        operator = self._operator()
        try:
            largest = eigsh(operator, k=1, which="LA", return_eigenvectors=False, maxiter=200)
            smallest = eigsh(operator, k=1, which="SA", return_eigenvectors=False, maxiter=200)
        except ArpackNoConvergence as e:
            values = np.abs(np.asarray(e.eigenvalues, dtype=float))
            if values.size == 0:
                return math.inf
            largest, smallest = np.array([values.max()]), np.array([values.min()])
        low = abs(float(smallest[0]))
        return math.inf if low == 0.0 else abs(float(largest[0])) / low

    def _run(self, b: NDArray[np.complex128], shift: float) -> tuple[NDArray[np.complex128], float, int]:
        count = 0

        def tick(_: NDArray[np.complex128]) -> None:
            nonlocal count
            count += 1

        solution, _info = conjugate_residual(
            self._operator(shift),
            b,
            rtol=self.rtol,
            maxiter=10 * self.size,
            M=self._preconditioner(shift),
            callback=tick,
        )
        residual = float(np.linalg.norm(self._matvec(solution, shift) - b)) / float(np.linalg.norm(b))
        return solution, residual, count

    def solve(self, b: TangentVector) -> GramSolution:
        """Solve ``G x = b`` for a reduced covector ``b``.

        Raises:
            GramSolveError: If neither the plain nor the regularised solve converges.
        """
        rhs = b.as_vector()
        if not np.any(rhs):
            return GramSolution(x=TangentVector.zeros(self.dim, reduced=True), residual=0.0, iterations=0)
        solution, residual, iterations = self._run(rhs, 0.0)
        accept = max(10 * self.rtol, 1e-8)
        if residual <= accept:
            return GramSolution(
                x=TangentVector.from_vector(solution, self.dim, reduced=True),
                residual=residual,
                iterations=iterations,
            )

        condition = self.condition_estimate()
        delta = REGULARIZATION * self.trace_estimate
        logger.warning(
            "evolution.gram.regularized",
            residual=residual,
            condition_estimate=condition,
            ill_conditioned=condition > CONDITION_LIMIT,
            delta=delta,
            bond_dim=self.dim,
        )
        solution, residual, more = self._run(rhs, delta)
        if residual > accept:
            raise GramSolveError(
                f"Gram solve stalled at relative residual {residual:.3e} (condition ≈ {condition:.3e})",
                residual=residual,
                condition_estimate=condition,
            )
        return GramSolution(
            x=TangentVector.from_vector(solution, self.dim, reduced=True),
            residual=residual,
            iterations=iterations + more,
            regularized=True,
            condition_estimate=condition,
        )


def retract(state: CmpsState, direction: TangentVector, coefficient: complex) -> CmpsState:
    """Straight-line update along a reduced tangent, keeping Q left-gauged.

    Raises:
        NonFiniteStepError: If the step produces NaN or infinite entries.
    """
    if not direction.reduced:
        raise ValueError("retract expects a reduced tangent")
    R_dot = coefficient * direction.W
    K_dot = 0.5j * (R_dot.conj().T @ state.R - state.R.conj().T @ R_dot)
    R = state.R + R_dot
    K = state.K + 0.5 * (K_dot + K_dot.conj().T)
    B = state.B + coefficient * direction.Y
    if not (np.all(np.isfinite(R)) and np.all(np.isfinite(K)) and np.all(np.isfinite(B))):
        raise NonFiniteStepError(f"Step with coefficient {coefficient} produced non-finite entries")
    return state.with_matrices(R=R, K=K, B=B)


@attrs.define(frozen=True, slots=True, kw_only=True)
class Evaluation:
    """Everything one iteration needs at a fixed state."""

    state: CmpsState
    spec: SpectralData
    breakdown: EnergyBreakdown
    projected_gradient: TangentVector
    ortho: TangentVector
    natural: GramSolution
    grad_norm: float
    solver: GramSolver


def evaluate(state: CmpsState, params: HamiltonianParams, opts: OptimizerOptions) -> Evaluation:
    """Energy, projected gradient ``g − E·y`` and natural gradient at ``state``."""
    spec = spectral_decompose(state, opts.spectral_tol)
    breakdown = energy(state, spec, params)
    g = gradient(state, spec, params)
    y = ortho_vector(state, spec)
    projected = reduce_covector(g - y.scaled(breakdown.total), state.R)
    solver = GramSolver(state, spec.with_tol(max(opts.gram_tol, opts.spectral_tol)), rtol=opts.gram_rtol)
    natural = solver.solve(projected)
    pairing = natural.x.inner(projected).real
    # G and g both carry one factor of ⟨Ψ|Ψ⟩
    grad_norm = math.sqrt(max(pairing, 0.0) / breakdown.norm)
    return Evaluation(
        state=state,
        spec=spec,
        breakdown=breakdown,
        projected_gradient=projected,
        ortho=reduce_covector(y, state.R),
        natural=natural,
        grad_norm=grad_norm,
        solver=solver,
    )


@attrs.define(frozen=True, slots=True, kw_only=True)
class StepDiagnostics:
    energy: EnergyBreakdown
    grad_norm: float
    gram_residual: float
    gram_iterations: int
    regularized: bool


def _project_off_state(evaluation: Evaluation, x: TangentVector) -> TangentVector:
    y = evaluation.ortho
    overlap = y.inner(x)
    if overlap == 0:
        return x
    z = evaluation.solver.solve(y).x
    weight = y.inner(z)
    if abs(weight) == 0:
        return x
    return x - z.scaled(overlap / weight)


def tdvp_step(
    state: CmpsState, params: HamiltonianParams, opts: OptimizerOptions
) -> tuple[CmpsState, StepDiagnostics]:
    """One explicit TDVP step of size ``opts.dt`` in imaginary or real time."""
    evaluation = evaluate(state, params, opts)
    x = evaluation.natural.x
    if opts.mode == "imaginary":
        x = _project_off_state(evaluation, x)
        coefficient: complex = -opts.dt
    else:
        coefficient = -1j * opts.dt
    new_state = retract(state, x, coefficient) if np.any(x.as_vector()) else state
    diagnostics = StepDiagnostics(
        energy=evaluation.breakdown,
        grad_norm=evaluation.grad_norm,
        gram_residual=evaluation.natural.residual,
        gram_iterations=evaluation.natural.iterations,
        regularized=evaluation.natural.regularized,
    )
    logger.debug(
        "evolution.tdvp.step",
        mode=opts.mode,
        energy=evaluation.breakdown.total,
        grad_norm=evaluation.grad_norm,
        gram_iterations=evaluation.natural.iterations,
    )
    return new_state, diagnostics


def _record(iteration: int, evaluation: Evaluation, params: HamiltonianParams, start: float) -> TraceRecord:
    breakdown = evaluation.breakdown
    return TraceRecord(
        iteration=iteration,
        energy_total=breakdown.total,
        energy_bulk=breakdown.bulk,
        grad_norm=evaluation.grad_norm,
        particle_number=breakdown.particle_number,
        mu=params.mu,
        boundary_residual=boundary_residual(evaluation.state, evaluation.spec, params.Omega),
        wall_ms=1e3 * (time.monotonic() - start),
    )


def _line_search(
    evaluation: Evaluation,
    direction: TangentVector,
    slope: float,
    step: float,
    params: HamiltonianParams,
    opts: OptimizerOptions,
) -> tuple[CmpsState, float] | None:
    base = evaluation.breakdown.total
    search = opts.line_search
    for _ in range(search.max_halvings):
        try:
            trial = retract(evaluation.state, direction, step)
            value = energy(trial, spectral_decompose(trial, opts.spectral_tol), params).total
        except NonFiniteStepError:
            value = math.inf
        except RingTdvpError as e:
            logger.debug("evolution.line_search.trial_failed", step=step, error=str(e))
            value = math.inf
        if value <= base + search.c1 * step * slope and value < base:
            return trial, step
        step *= search.shrink
    return None


def cg_ground_state(
    state0: CmpsState,
    params: HamiltonianParams,
    opts: OptimizerOptions,
    *,
    on_iteration: Callable[[TraceRecord], None] | None = None,
) -> tuple[CmpsState, OptimizerTrace]:
    """Polak–Ribière+ conjugate gradient on the cMPS manifold.

    The natural gradient ``x = G⁻¹(g − E·y)`` seeds each search direction;
    steps are straight-line retractions accepted by an Armijo line search.

    Returns:
        The final state and the iteration trace.

    Raises:
        StagnationError: If no descent step is found even along the natural gradient.
        GramSolveError: If the Gram system cannot be solved.
    """
    start = time.monotonic()
    trace = OptimizerTrace()
    restart_period = opts.restart_period or max(state0.dim**2, 1)
    step = opts.line_search.initial_step or opts.dt
    state = state0
    previous: Evaluation | None = None
    direction: TangentVector | None = None
    since_restart = 0
    logger.info("evolution.cg.start", bond_dim=state0.dim, mu=params.mu, Omega=params.Omega, eps=params.eps)

    for iteration in range(opts.max_iters + 1):
        evaluation = evaluate(state, params, opts)
        record = _record(iteration, evaluation, params, start)
        trace.append(record)
        if on_iteration is not None:
            on_iteration(record)
        logger.info(
            "evolution.cg.iteration",
            iteration=iteration,
            energy=record.energy_total,
            grad_norm=record.grad_norm,
            N=record.particle_number,
        )
        if evaluation.grad_norm < opts.grad_tol:
            trace.converged = True
            trace.stop_reason = "grad_tol"
            break
        if iteration == opts.max_iters:
            trace.stop_reason = "max_iters"
            break

        steepest = -evaluation.natural.x
        candidate = steepest
        if opts.cg and previous is not None and direction is not None and since_restart < restart_period:
            numerator = evaluation.natural.x.inner(
                evaluation.projected_gradient - previous.projected_gradient
            ).real
            denominator = previous.natural.x.inner(previous.projected_gradient).real
            beta = max(0.0, numerator / denominator) if denominator > 0 else 0.0
            candidate = steepest + direction.scaled(beta)
        else:
            since_restart = 0

        slope = 2.0 * candidate.inner(evaluation.projected_gradient).real / evaluation.breakdown.norm
        if slope >= 0:
            logger.debug("evolution.cg.restart", iteration=iteration, reason="ascent")
            candidate = steepest
            since_restart = 0
            slope = 2.0 * candidate.inner(evaluation.projected_gradient).real / evaluation.breakdown.norm

        result = _line_search(evaluation, candidate, slope, step, params, opts)
        if result is None and candidate is not steepest:
            candidate = steepest
            since_restart = 0
            slope = 2.0 * candidate.inner(evaluation.projected_gradient).real / evaluation.breakdown.norm
            result = _line_search(evaluation, candidate, slope, step, params, opts)
        if result is None:
            trace.stop_reason = "stagnation"
            logger.error("evolution.cg.stagnation", iteration=iteration, energy=record.energy_total)
            raise StagnationError(
                f"No descent step found at iteration {iteration} (energy {record.energy_total:.12g})",
                state=state,
                trace=trace,
            )
        state, accepted = result
        step = min(opts.line_search.max_step, 2.0 * accepted)
        previous = evaluation
        direction = candidate
        since_restart += 1

    logger.info(
        "evolution.cg.complete",
        iterations=len(trace.records) - 1,
        converged=trace.converged,
        energy=trace.records[-1].energy_total,
        wall_ms=1e3 * (time.monotonic() - start),
    )
    return state, trace


def false_position(lo: float, f_lo: float, hi: float, f_hi: float) -> float:
    """Root of the chord through (lo, f_lo) and (hi, f_hi); the midpoint if it leaves (lo, hi)."""
    if f_hi == f_lo:
        return 0.5 * (lo + hi)
    mu = lo - f_lo * (hi - lo) / (f_hi - f_lo)
    return mu if lo < mu < hi else 0.5 * (lo + hi)


def tune_mu(
    params: HamiltonianParams,
    target: TargetOptions,
    opts: OptimizerOptions,
    state0: CmpsState,
) -> tuple[float, CmpsState, OptimizerTrace]:
    """Illinois false-position search on μ until the ground state holds ``target.N`` particles.

    Each evaluation is a CG ground-state search warm-started from the previous one.
    When the same endpoint survives two steps in a row its mismatch is halved, so
    a convex N(μ) cannot pin one side of the bracket.

    Raises:
        BracketError: If the bracket cannot be made to straddle the target.
    """
    state = state0
    traces: dict[float, OptimizerTrace] = {}
    last_mu: float | None = None

    def mismatch(mu: float) -> float:
        nonlocal state, last_mu
        state, trace = cg_ground_state(state, params.with_mu(mu), opts)
        traces[mu] = trace
        last_mu = mu
        final = trace.final
        assert final is not None
        logger.info("evolution.tune_mu.evaluate", mu=mu, N=final.particle_number, target=target.N)
        return final.particle_number - target.N

    lo = target.mu_lo if target.mu_lo is not None else params.mu - max(1.0, abs(params.mu))
    hi = target.mu_hi if target.mu_hi is not None else params.mu + max(1.0, abs(params.mu))
    f_lo, f_hi = mismatch(lo), mismatch(hi)
    for _ in range(target.max_expansions):
        if f_lo <= 0 <= f_hi:
            break
        width = hi - lo
        if f_lo > 0:
            lo -= width
            f_lo = mismatch(lo)
        else:
            hi += width
            f_hi = mismatch(hi)
    else:
        if not f_lo <= 0 <= f_hi:
            raise BracketError(f"N(μ) does not straddle {target.N} on [{lo}, {hi}]")

    best_mu, best_f = (lo, f_lo) if abs(f_lo) < abs(f_hi) else (hi, f_hi)
    kept: str | None = None
    for _ in range(target.max_iters):
        if abs(best_f) <= target.tolerance:
            break
        mu = false_position(lo, f_lo, hi, f_hi)
        f_mu = mismatch(mu)
        if f_mu <= 0:
            lo, f_lo = mu, f_mu
            if kept == "hi":
                f_hi *= 0.5
            kept = "hi"
        else:
            hi, f_hi = mu, f_mu
            if kept == "lo":
                f_lo *= 0.5
            kept = "lo"
        if abs(f_mu) < abs(best_f):
            best_mu, best_f = mu, f_mu
    else:
        if abs(best_f) > target.tolerance:
            raise BracketError(f"μ search stopped at N mismatch {best_f:.3e} after {target.max_iters} steps")

    if best_mu != last_mu:
        mismatch(best_mu)
    logger.info("evolution.tune_mu.complete", mu=best_mu, mismatch=best_f)
    return best_mu, state, traces[best_mu]


# 🐝📁🔚
