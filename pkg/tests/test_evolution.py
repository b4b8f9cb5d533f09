#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

import math

import numpy as np
import pytest
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from ringtdvp.errors import ConfigurationError, NonFiniteStepError
from ringtdvp.evolution import (
    GramSolver,
    LineSearchOptions,
    OptimizerOptions,
    OptimizerTrace,
    TargetOptions,
    TraceRecord,
    cg_ground_state,
    conjugate_residual,
    false_position,
    retract,
    tdvp_step,
    tune_mu,
)
from ringtdvp.hamiltonian import HamiltonianParams, energy
from ringtdvp.oracle import random_tangent, uniform_gp_density, uniform_gp_energy
from ringtdvp.spectral import spectral_decompose
from ringtdvp.state import CmpsState, gauge_residual, make_state
from ringtdvp.tangent import state_norm


def _energy(state: CmpsState, params: HamiltonianParams) -> float:
    return energy(state, spectral_decompose(state, 1e-12), params).total


def test_retract_keeps_the_left_gauge(state_d2: CmpsState):
    direction = random_tangent(2, np.random.default_rng(1), reduced=True)

    moved = retract(state_d2, direction, 0.3)

    assert gauge_residual(moved.Q, moved.R) < 1e-12
    np.testing.assert_allclose(moved.R, state_d2.R + 0.3 * direction.W)
    np.testing.assert_allclose(moved.B, state_d2.B + 0.3 * direction.Y)


def test_retract_rejects_full_tangents(state_d2: CmpsState):
    with pytest.raises(ValueError, match="reduced"):
        retract(state_d2, random_tangent(2, np.random.default_rng(1)), 0.1)


def test_retract_rejects_non_finite_steps(state_d2: CmpsState):
    direction = random_tangent(2, np.random.default_rng(1), reduced=True)

    with pytest.raises(NonFiniteStepError):
        retract(state_d2, direction, complex(np.inf))


def test_gram_solver_inverts_the_gram_action(state_d2: CmpsState):
    spec = spectral_decompose(state_d2, 1e-12)
    solver = GramSolver(state_d2, spec, rtol=1e-10)
    rhs = random_tangent(2, np.random.default_rng(2), reduced=True)

    solution = solver.solve(rhs)

    residual = solver.apply(solution.x) - rhs
    assert residual.norm() < 1e-8 * rhs.norm()
    assert not solution.regularized


def test_gram_solver_returns_zero_for_a_zero_rhs(state_d2: CmpsState):
    solver = GramSolver(state_d2, spectral_decompose(state_d2, 1e-12), rtol=1e-10)

    solution = solver.solve(random_tangent(2, np.random.default_rng(3), reduced=True).scaled(0.0))

    assert solution.iterations == 0
    assert not np.any(solution.x.as_vector())


def _hermitian_system(size: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    b = rng.normal(size=size) + 1j * rng.normal(size=size)
    return x @ x.conj().T + size * np.eye(size), b


def test_conjugate_residual_solves_a_hermitian_system():
    matrix, b = _hermitian_system(8, 20)

    x, info = conjugate_residual(aslinearoperator(matrix), b, rtol=1e-12, maxiter=100)

    assert info == 0
    assert np.linalg.norm(matrix @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_conjugate_residual_accepts_a_jacobi_preconditioner():
    matrix, b = _hermitian_system(8, 21)
    inverse_diagonal = 1.0 / np.diag(matrix).real
    jacobi = LinearOperator((8, 8), matvec=lambda v: inverse_diagonal * v, dtype=np.complex128)
    seen: list[np.ndarray] = []

    x, info = conjugate_residual(
        aslinearoperator(matrix), b, rtol=1e-12, maxiter=100, M=jacobi, callback=seen.append
    )

    assert info == 0
    assert seen
    np.testing.assert_allclose(x, np.linalg.solve(matrix, b), rtol=1e-9, atol=1e-12)


def test_conjugate_residual_reports_an_exhausted_budget():
    matrix, b = _hermitian_system(8, 22)

    _, info = conjugate_residual(aslinearoperator(matrix), b, rtol=1e-14, maxiter=2)

    assert info == 2


def test_conjugate_residual_returns_zero_for_a_zero_rhs():
    matrix, _ = _hermitian_system(4, 23)

    x, info = conjugate_residual(aslinearoperator(matrix), np.zeros(4, dtype=complex), rtol=1e-10, maxiter=10)

    assert info == 0
    assert not np.any(x)


def test_scalar_ground_state_reaches_the_uniform_optimum(static_params: HamiltonianParams):
    opts = OptimizerOptions(max_iters=200, grad_tol=1e-6)

    state, trace = cg_ground_state(make_state(1, static_params.L, seed=0), static_params, opts)

    rho = uniform_gp_density(static_params)
    assert trace.converged
    assert trace.stop_reason == "grad_tol"
    assert abs(state.R[0, 0]) ** 2 == pytest.approx(rho, rel=1e-5)
    assert _energy(state, static_params) == pytest.approx(uniform_gp_energy(static_params, rho), rel=1e-8)


def test_accepted_steps_strictly_lower_the_energy(static_params: HamiltonianParams):
    opts = OptimizerOptions(max_iters=30)
    seen: list[float] = []

    _, trace = cg_ground_state(
        make_state(2, static_params.L, seed=9),
        static_params,
        opts,
        on_iteration=lambda record: seen.append(record.energy_total),
    )

    energies = [record.energy_total for record in trace.records]
    assert energies == seen
    assert all(later < earlier for earlier, later in zip(energies, energies[1:], strict=False))


def test_iteration_cap_is_reported(static_params: HamiltonianParams):
    opts = OptimizerOptions(max_iters=2, grad_tol=1e-14)

    _, trace = cg_ground_state(make_state(2, static_params.L, seed=9), static_params, opts)

    assert not trace.converged
    assert trace.stop_reason == "max_iters"
    assert [record.iteration for record in trace.records] == [0, 1, 2]


def test_steepest_descent_also_descends(static_params: HamiltonianParams):
    opts = OptimizerOptions(max_iters=5, cg=False)

    _, trace = cg_ground_state(make_state(2, static_params.L, seed=9), static_params, opts)

    assert trace.records[-1].energy_total < trace.records[0].energy_total


def test_imaginary_time_step_lowers_the_energy(static_params: HamiltonianParams):
    state = make_state(2, static_params.L, seed=10)
    opts = OptimizerOptions(dt=1e-3, mode="imaginary")

    stepped, diagnostics = tdvp_step(state, static_params, opts)

    assert _energy(stepped, static_params) < diagnostics.energy.total
    assert diagnostics.grad_norm > 0


def _real_time_drift(state: CmpsState, params: HamiltonianParams, dt: float, steps: int) -> tuple[float, float]:
    opts = OptimizerOptions(dt=dt, mode="real")
    spec = spectral_decompose(state, 1e-12)
    e0 = energy(state, spec, params).total
    n0 = state_norm(state, spec)
    for _ in range(steps):
        state, _ = tdvp_step(state, params, opts)
    spec = spectral_decompose(state, 1e-12)
    return abs(energy(state, spec, params).total - e0) / abs(e0), abs(state_norm(state, spec) - n0) / n0


def test_real_time_drift_is_second_order_in_the_step(static_params: HamiltonianParams):
    state = make_state(2, static_params.L, seed=12)

    energy_coarse, norm_coarse = _real_time_drift(state, static_params, 2e-3, 10)
    energy_fine, norm_fine = _real_time_drift(state, static_params, 1e-3, 10)

    assert energy_coarse >= 3.0 * energy_fine
    assert norm_coarse >= 3.0 * norm_fine


def test_real_time_steps_conserve_energy_and_norm(static_params: HamiltonianParams):
    state = make_state(2, static_params.L, seed=12)

    energy_drift, norm_drift = _real_time_drift(state, static_params, 1e-4, 100)

    assert energy_drift <= 1e-6
    assert norm_drift <= 1e-6


@pytest.mark.slow
def test_a_long_run_only_accepts_descending_steps(static_params: HamiltonianParams):
    opts = OptimizerOptions(max_iters=500, grad_tol=1e-6)

    _, trace = cg_ground_state(make_state(2, static_params.L, seed=13), static_params, opts)

    energies = [record.energy_total for record in trace.records]
    assert len(energies) > 1
    assert all(later < earlier for earlier, later in zip(energies, energies[1:], strict=False))


def test_tune_mu_hits_the_particle_number(static_params: HamiltonianParams):
    opts = OptimizerOptions(max_iters=300, grad_tol=1e-6)
    target = TargetOptions(N=2.0, tol_N=1e-4)

    mu, state, trace = tune_mu(static_params, target, opts, make_state(1, static_params.L, seed=0))

    assert trace.final is not None
    assert trace.final.particle_number == pytest.approx(2.0, abs=1e-4)
    # N = L(μ − U₀/L)/(2c) for the uniform state
    assert mu == pytest.approx(2.0 * static_params.c * 2.0 / static_params.L + 0.5 / static_params.L, abs=1e-3)
    assert abs(state.R[0, 0]) ** 2 == pytest.approx(0.4, rel=1e-3)


def _exponential_particle_number(
    state: CmpsState, params: HamiltonianParams, opts: OptimizerOptions, **_: object
):
    record = TraceRecord(
        iteration=0,
        energy_total=0.0,
        energy_bulk=0.0,
        grad_norm=0.0,
        particle_number=math.exp(params.mu),
        mu=params.mu,
        boundary_residual=0.0,
        wall_ms=0.0,
    )
    return state, OptimizerTrace(records=[record], converged=True, stop_reason="grad_tol")


def test_tune_mu_does_not_stall_on_a_convex_particle_number(
    monkeypatch: pytest.MonkeyPatch, static_params: HamiltonianParams
):
    monkeypatch.setattr("ringtdvp.evolution.cg_ground_state", _exponential_particle_number)
    # plain false position keeps μ = 2 and needs about thirty steps here
    target = TargetOptions(N=2.0, tol_N=1e-10, max_iters=15)

    mu, _, trace = tune_mu(static_params, target, OptimizerOptions(), make_state(1, static_params.L, seed=0))

    assert mu == pytest.approx(math.log(2.0), abs=1e-9)
    assert trace.final is not None
    assert trace.final.particle_number == pytest.approx(2.0, abs=1e-10)


@pytest.mark.parametrize(
    ("lo", "f_lo", "hi", "f_hi", "expected"),
    [
        (0.0, -1.0, 2.0, 1.0, 1.0),
        (0.0, -1.0, 4.0, 3.0, 1.0),
        (0.0, -1.0, 2.0, -1.0, 1.0),
    ],
)
def test_false_position_takes_the_chord_root(lo: float, f_lo: float, hi: float, f_hi: float, expected: float):
    assert false_position(lo, f_lo, hi, f_hi) == pytest.approx(expected)


@pytest.mark.parametrize(
    ("factory", "kwargs", "key"),
    [
        (OptimizerOptions, {"dt": 0.0}, "dt"),
        (OptimizerOptions, {"grad_tol": -1.0}, "grad_tol"),
        (OptimizerOptions, {"spectral_tol": 1.5}, "spectral_tol"),
        (LineSearchOptions, {"shrink": 1.0}, "shrink"),
        (TargetOptions, {"N": 0.0}, "N"),
    ],
)
def test_invalid_solver_options_name_their_key(factory: type, kwargs: dict[str, float], key: str):
    with pytest.raises(ConfigurationError) as info:
        factory(**kwargs)

    assert info.value.key == key


def test_mode_must_be_known():
    with pytest.raises(ValueError, match="mode"):
        OptimizerOptions(mode="sideways")


# 🐝📁🔚
