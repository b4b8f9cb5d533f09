#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#


import numpy as np
import pytest
import scipy.linalg

from ringtdvp.errors import PseudoInverseError
from ringtdvp.spectral import (
    complete_spectrum,
    cutoff_ranks,
    exp_dd2,
    exp_dd3,
    pinv_apply,
    spectral_decompose,
)
from ringtdvp.state import CmpsState, make_state


def _corner(L: float, points: list[complex]) -> complex:
    """Divided difference of e^{Lz} read off the exponential of a bidiagonal matrix."""
    n = len(points)
    Z = np.diag(np.asarray(points, dtype=np.complex128)) + np.diag(np.ones(n - 1), 1)
    return complex(scipy.linalg.expm(L * Z)[0, n - 1])


def test_leading_eigenvalue_is_zero_for_left_gauged_state(random_state: CmpsState):
    spec = spectral_decompose(random_state, 1e-12)

    assert abs(spec.lambdas[0]) < 1e-10
    assert np.all(spec.lambdas.real <= 1e-10)


def test_eigentriples_are_biorthonormal(random_state: CmpsState):
    spec = spectral_decompose(random_state, 1e-12)
    m = spec.m3

    overlap = np.einsum("pij,qij->pq", spec.left_vecs[:m].conj(), spec.right_vecs[:m])

    np.testing.assert_allclose(overlap, np.eye(m), atol=1e-9)


def test_right_vectors_are_eigenvectors(random_state: CmpsState):
    spec = spectral_decompose(random_state, 1e-12)

    for value, right in zip(spec.lambdas[: spec.m3], spec.right_vecs[: spec.m3], strict=True):
        residual = spec.action(right) - value * right
        assert np.linalg.norm(residual) < 1e-9 * max(1.0, abs(value))


def test_cutoff_ranks_follow_the_weight_thresholds():
    lambdas = np.array([0.0, -1.0, -3.0, -6.0, -10.0], dtype=np.complex128)

    assert cutoff_ranks(lambdas, 5.0, 1e-12) == (3, 3, 4)


def test_cutoff_ranks_keep_at_least_one_mode():
    lambdas = np.array([-100.0, -200.0], dtype=np.complex128)

    assert cutoff_ranks(lambdas, 5.0, 0.5) == (1, 1, 1)


def test_with_tol_only_loosens(state_d2: CmpsState):
    spec = spectral_decompose(state_d2, 1e-12)
    loose = spec.with_tol(1e-3)

    assert loose.m1 <= spec.m1
    assert loose.m3 <= spec.m3
    with pytest.raises(ValueError, match="tighten"):
        loose.with_tol(1e-14)


@pytest.mark.parametrize("tol", [0.0, 1.0, -1e-3])
def test_tolerance_must_lie_in_unit_interval(state_d2: CmpsState, tol: float):
    with pytest.raises(ValueError, match="tol"):
        spectral_decompose(state_d2, tol)


def test_krylov_path_agrees_with_dense_spectrum():
    state = make_state(5, 50.0, seed=4)

    dense = spectral_decompose(state, 1e-2)
    krylov = spectral_decompose(state, 1e-2, dense_threshold=0)

    assert krylov.m1 == dense.m1
    for value in krylov.lambdas[: krylov.m1]:
        assert np.min(np.abs(dense.lambdas - value)) < 1e-8


def test_complete_spectrum_keeps_a_full_decomposition(spec_d2):
    assert complete_spectrum(spec_d2) is spec_d2


def test_complete_spectrum_fills_in_a_krylov_decomposition():
    state = make_state(5, 50.0, seed=4)
    krylov = spectral_decompose(state, 1e-2, dense_threshold=0)

    full = complete_spectrum(krylov)

    assert krylov.n_stored < 25
    assert full.n_stored == 25
    assert full.L == krylov.L
    np.testing.assert_allclose(full.lambdas[0], krylov.lambdas[0], atol=1e-8)


def test_pinv_apply_inverts_the_shifted_generator_off_the_kept_modes():
    state = make_state(3, 5.0, seed=5)
    spec = spectral_decompose(state, 1e-12)
    rng = np.random.default_rng(6)
    b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    m = 2

    y = pinv_apply(spec, spec.action, 0, m, 1, b)

    coefficients = np.einsum("kij,ij->k", spec.left_vecs[:m].conj(), b)
    projected = b - np.einsum("k,kij->ij", coefficients, spec.right_vecs[:m])
    np.testing.assert_allclose(spec.lambdas[0] * y - spec.action(y), projected, atol=1e-9)
    assert np.allclose(np.einsum("kij,ij->k", spec.left_vecs[:m].conj(), y), 0.0, atol=1e-9)


def test_pinv_apply_squared_applies_the_resolvent_twice():
    state = make_state(3, 5.0, seed=5)
    spec = spectral_decompose(state, 1e-12)
    rng = np.random.default_rng(7)
    b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))

    once = pinv_apply(spec, spec.action, 0, 2, 1, b)
    twice = pinv_apply(spec, spec.action, 0, 2, 2, b)

    np.testing.assert_allclose(spec.lambdas[0] * twice - spec.action(twice), once, atol=1e-9)


def test_pinv_apply_adjoint_direction():
    state = make_state(2, 5.0, seed=8)
    spec = spectral_decompose(state, 1e-12)
    adjoint = spec.action.adjoint()
    b = np.array([[1.0, 0.5j], [0.2, -1.0]], dtype=np.complex128)

    y = pinv_apply(spec, adjoint, 0, 1, 1, b)

    coefficients = np.einsum("kij,ij->k", spec.right_vecs[:1].conj(), b)
    projected = b - np.einsum("k,kij->ij", coefficients, spec.left_vecs[:1])
    np.testing.assert_allclose(np.conj(spec.lambdas[0]) * y - adjoint(y), projected, atol=1e-9)


def test_pinv_apply_rejects_an_owner_outside_the_kept_range(state_d2: CmpsState):
    spec = spectral_decompose(state_d2, 1e-12)

    with pytest.raises(PseudoInverseError):
        pinv_apply(spec, spec.action, 2, 2, 1, np.eye(2))


@pytest.mark.parametrize(
    ("a", "b"),
    [(0.0, -1.0), (-0.3 + 0.2j, -2.0 - 1.0j), (-1.0, -1.0), (-0.5, -0.5 + 1e-10)],
    ids=["far", "complex", "coincident", "close"],
)
def test_exp_dd2_matches_the_matrix_exponential(a: complex, b: complex):
    L = 5.0

    value = complex(exp_dd2(L, a, b))

    assert value == pytest.approx(_corner(L, [a, b]), rel=1e-9)


@pytest.mark.parametrize(
    "points",
    [
        [0.0, -1.0, -2.5],
        [-0.2 + 0.1j, -0.25, -0.22 - 0.05j],
        [-1.0, -1.0, -1.0],
        [-0.4, -0.4 + 1e-11, -0.4 - 1e-11],
        [0.0, -0.05, -3.0],
    ],
    ids=["far", "clustered", "confluent", "nearly-confluent", "mixed"],
)
def test_exp_dd3_matches_the_matrix_exponential(points: list[complex]):
    L = 5.0

    value = complex(exp_dd3(L, *points))

    assert value == pytest.approx(_corner(L, points), rel=1e-9)


def test_exp_dd3_is_symmetric_in_its_arguments():
    L = 3.0
    points = np.array([-0.1, -0.7 + 0.3j, -1.9])

    values = [complex(exp_dd3(L, *np.roll(points, k))) for k in range(3)]

    assert values[1] == pytest.approx(values[0], rel=1e-11)
    assert values[2] == pytest.approx(values[0], rel=1e-11)


# 🐝📁🔚
