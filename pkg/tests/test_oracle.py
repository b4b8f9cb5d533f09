#
# SPDX-FileCopyrightText: Copyright (c) 2025 provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""Tests for the cutoff-free reference implementations and the GP solver."""

import math

import numpy as np
import pytest

from ringtdvp.contraction import override_rows
from ringtdvp.errors import OracleError, OracleMismatchError
from ringtdvp.hamiltonian import HamiltonianParams, energy
from ringtdvp.oracle import (
    dense_environments,
    direct_pairings,
    full_spectrum_reference,
    gp_energy,
    gp_ground_state,
    oracle_check,
    oracle_params,
    random_tangent,
    require_pass,
    uniform_gp_density,
    uniform_gp_energy,
    vector_error,
)
from ringtdvp.spectral import spectral_decompose
from ringtdvp.state import make_state
from ringtdvp.tangent import gram_covector, ortho_covector


def test_oracle_check_passes_for_scalar_state() -> None:
    report = oracle_check(1, 0)
    assert report.passed
    assert report.worst_row is None
    assert {row.quantity for row in report.rows} == {"norm", "y", "gram", "gradient"}
    assert report.certification
    require_pass(report)


@pytest.mark.parametrize("dim", [2, 3])
def test_oracle_check_passes_for_small_bond_dims(dim: int) -> None:
    report = oracle_check(dim, 5, certify=False)
    assert report.passed, [(row.quantity, row.error) for row in report.rows]


def test_oracle_check_certifies_d2_reference() -> None:
    report = oracle_check(2, 1)
    assert report.passed
    assert all(error <= 1e-8 for error in report.certification.values())


@pytest.mark.parametrize("dim", [0, 7])
def test_oracle_check_rejects_out_of_range_dim(dim: int) -> None:
    with pytest.raises(OracleError, match="supports"):
        oracle_check(dim, 0)


@pytest.mark.parametrize("ring", [1.0, 5.0, 20.0], ids=["L1", "L5", "L20"])
@pytest.mark.parametrize("dim", [1, 2, 3, 4])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_oracle_check_across_ring_lengths(dim: int, ring: float, seed: int) -> None:
    report = oracle_check(dim, seed, L=ring, certify=False)
    assert report.passed, [(row.quantity, row.error) for row in report.rows]


def test_injected_fault_is_localised_to_its_row() -> None:
    with override_rows({"gram.contact/double.kept": 1.5}):
        report = oracle_check(2, 1, certify=False)

    assert not report.passed
    failing = {row.quantity for row in report.rows if not row.passed}
    assert failing == {"gram"}
    assert report.worst_row == "gram.contact/double.kept"

    with pytest.raises(OracleMismatchError) as excinfo:
        require_pass(report)
    assert excinfo.value.row == "gram.contact/double.kept"


def test_override_outside_block_has_no_effect() -> None:
    with override_rows({"gram.*": 0.0}):
        pass
    assert oracle_check(2, 2, certify=False).passed


def test_reference_energy_matches_production(random_state) -> None:
    params = oracle_params(random_state.L)
    reference = full_spectrum_reference(random_state, params)
    production = energy(random_state, spectral_decompose(random_state, 1e-12), params)
    assert reference.energy == pytest.approx(production.total, rel=1e-9)
    assert reference.norm == pytest.approx(production.norm, rel=1e-9)
    assert reference.eigenvalues[0].real == pytest.approx(0.0, abs=1e-10)


def test_reference_gram_is_hermitian(state_d2) -> None:
    gram = full_spectrum_reference(state_d2).gram_matrix
    np.testing.assert_allclose(gram, gram.conj().T, atol=1e-10 * np.abs(gram).max())


@pytest.mark.parametrize("dim", [2, 3])
def test_direct_pairings_agree_with_the_covector_assembly(dim: int) -> None:
    state = make_state(dim, 5.0, seed=30 + dim)
    environment = dense_environments(state)
    t = random_tangent(dim, np.random.default_rng(dim))

    y, gram = direct_pairings(state)

    assert vector_error(y.as_vector(), ortho_covector(state, environment).as_vector()) <= 1e-10
    assert vector_error(gram @ t.as_vector(), gram_covector(state, environment, t).as_vector()) <= 1e-10


def test_reference_rejects_large_bond_dim() -> None:
    with pytest.raises(OracleError, match="D <= 6"):
        full_spectrum_reference(make_state(7, 5.0, seed=0))


def test_gp_uniform_grand_canonical() -> None:
    params = HamiltonianParams(c=1.0, mu=1.0, L=5.0)
    gp = gp_ground_state(params, 256)
    np.testing.assert_allclose(gp.density, 0.5, rtol=1e-10)
    assert gp.energy == pytest.approx(uniform_gp_energy(params, 0.5), rel=1e-10)
    assert gp_energy(gp) == pytest.approx(gp.energy, rel=1e-12)
    assert gp.residual < 1e-8
    assert gp.particle_number == pytest.approx(2.5, rel=1e-10)


def test_gp_canonical_fixes_particle_number() -> None:
    params = HamiltonianParams(c=1.0, mu=0.3, L=5.0)
    gp = gp_ground_state(params, 256, target_N=3.0)
    assert gp.particle_number == pytest.approx(3.0, rel=1e-10)
    assert gp.params.mu == pytest.approx(2.0 * 3.0 / 5.0, rel=1e-8)


def test_gp_barrier_depletes_density() -> None:
    params = HamiltonianParams(c=1.0, mu=1.0, U0=1.0, L=5.0)
    gp = gp_ground_state(params, 256, target_N=2.5)
    assert gp.residual < 1e-8
    assert gp.particle_number == pytest.approx(2.5, rel=1e-8)
    assert gp.density[0] < gp.density[128]
    assert gp.x[0] == 0.0
    assert gp.x[-1] < 5.0


def test_gp_rejects_coarse_grid() -> None:
    with pytest.raises(ValueError, match="at least 256"):
        gp_ground_state(HamiltonianParams(c=1.0, mu=1.0, L=5.0), 128)


def test_uniform_gp_density_clamps_at_zero() -> None:
    assert uniform_gp_density(HamiltonianParams(c=1.0, mu=0.1, U0=1.0, L=5.0)) == 0.0
    assert uniform_gp_density(HamiltonianParams(c=2.0, mu=1.0, U0=1.0, L=5.0)) == pytest.approx(0.2)


def test_scalar_cmps_matches_uniform_gp(scalar_state, static_params) -> None:
    density = uniform_gp_density(static_params)
    state = scalar_state.with_matrices(R=np.array([[math.sqrt(density)]], dtype=np.complex128))
    result = energy(state, spectral_decompose(state, 1e-12), static_params)
    assert result.total == pytest.approx(uniform_gp_energy(static_params, density), rel=1e-10)


@pytest.mark.slow
def test_oracle_check_long_ring_exercises_tails() -> None:
    report = oracle_check(3, 4, L=40.0)
    assert report.passed, [(row.quantity, row.error) for row in report.rows]


@pytest.mark.slow
@pytest.mark.parametrize("dim", [4, 5, 6])
def test_oracle_check_largest_bond_dims(dim: int) -> None:
    assert oracle_check(dim, dim, certify=False).passed


@pytest.mark.slow
@pytest.mark.parametrize("ring", [1.0, 5.0, 20.0], ids=["L1", "L5", "L20"])
@pytest.mark.parametrize("dim", [1, 2, 3, 4])
def test_oracle_check_over_twenty_random_states(dim: int, ring: float) -> None:
    failures = {}
    for seed in range(20):
        report = oracle_check(dim, seed, L=ring, certify=False)
        if not report.passed:
            failures[seed] = [(row.quantity, row.error) for row in report.rows if not row.passed]
    assert not failures


# 🐝📁🔚
