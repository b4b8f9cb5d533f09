#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#


import numpy as np
import pytest
import scipy.linalg

from ringtdvp.errors import DimensionMismatchError, GaugeFixingError
from ringtdvp.oracle import full_spectrum_reference, random_tangent
from ringtdvp.spectral import spectral_decompose
from ringtdvp.state import CmpsState
from ringtdvp.tangent import (
    TangentVector,
    expand,
    gauge_direction,
    gram_apply,
    ortho_vector,
    reduce,
    reduce_covector,
    state_norm,
)


def test_scalar_state_norm_is_b_squared(scalar_state: CmpsState):
    spec = spectral_decompose(scalar_state, 1e-12)

    assert state_norm(scalar_state, spec) == pytest.approx(1.44, rel=1e-12)


def test_identity_insertion_pairs_to_length_times_norm(random_state: CmpsState):
    spec = spectral_decompose(random_state, 1e-12)
    dim = random_state.dim
    zero = np.zeros((dim, dim))
    y = ortho_vector(random_state, spec)
    norm = state_norm(random_state, spec)

    pairing = TangentVector(np.eye(dim), zero, zero).inner(y)

    assert pairing.real == pytest.approx(random_state.L * norm, rel=1e-9)
    assert abs(pairing.imag) < 1e-9 * norm


def test_boundary_insertion_of_b_pairs_to_the_norm(random_state: CmpsState):
    spec = spectral_decompose(random_state, 1e-12)
    dim = random_state.dim
    zero = np.zeros((dim, dim))

    pairing = TangentVector(zero, zero, random_state.B).inner(ortho_vector(random_state, spec))

    assert pairing == pytest.approx(state_norm(random_state, spec), rel=1e-9)


def test_gram_is_hermitian_and_positive(random_state: CmpsState):
    spec = spectral_decompose(random_state, 1e-12)
    rng = np.random.default_rng(3)
    first = random_tangent(random_state.dim, rng)
    second = random_tangent(random_state.dim, rng)

    forward = first.inner(gram_apply(random_state, spec, second))
    backward = second.inner(gram_apply(random_state, spec, first))
    scale = abs(forward) + abs(backward)

    assert abs(forward - backward.conjugate()) < 1e-9 * scale
    assert first.inner(gram_apply(random_state, spec, first)).real > 0


def test_gauge_directions_are_gram_null(random_state: CmpsState):
    spec = spectral_decompose(random_state, 1e-12)
    rng = np.random.default_rng(4)
    dim = random_state.dim
    X = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    reference = full_spectrum_reference(random_state)
    gram_scale = float(np.linalg.norm(reference.gram_matrix, 2))

    null = gauge_direction(random_state, X)

    assert gram_apply(random_state, spec, null).norm() < 1e-9 * gram_scale * null.norm()


def test_norm_rescaling_direction_is_gram_null(random_state: CmpsState):
    spec = spectral_decompose(random_state, 1e-12)
    dim = random_state.dim
    null = TangentVector(np.eye(dim), np.zeros((dim, dim)), -random_state.L * random_state.B)
    reference = full_spectrum_reference(random_state)
    gram_scale = float(np.linalg.norm(reference.gram_matrix, 2))

    assert gram_apply(random_state, spec, null).norm() < 1e-9 * gram_scale * null.norm()


def test_dense_gram_has_a_kernel_of_dimension_d_squared(random_state: CmpsState):
    reference = full_spectrum_reference(random_state)

    singular = scipy.linalg.svdvals(reference.gram_matrix)

    assert int(np.count_nonzero(singular < 1e-9 * singular[0])) == random_state.dim**2


def test_reduce_represents_the_same_state_vector(random_state: CmpsState):
    spec = spectral_decompose(random_state, 1e-12)
    rng = np.random.default_rng(5)
    t = random_tangent(random_state.dim, rng)
    reference = full_spectrum_reference(random_state)
    gram_scale = float(np.linalg.norm(reference.gram_matrix, 2))

    reduced = reduce(t, random_state)
    difference = t - expand(reduced, random_state.R)

    assert reduced.reduced
    assert gram_apply(random_state, spec, difference).norm() < 1e-8 * gram_scale * t.norm()


def test_reduce_covector_is_adjoint_to_expand(state_d2: CmpsState):
    rng = np.random.default_rng(6)
    t = random_tangent(2, rng, reduced=True)
    g = random_tangent(2, rng)

    lhs = expand(t, state_d2.R).inner(g)
    rhs = t.inner(reduce_covector(g, state_d2.R))

    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_reduce_needs_a_nonzero_r(state_d2: CmpsState):
    flat = state_d2.with_matrices(R=np.zeros((2, 2)))

    with pytest.raises(GaugeFixingError):
        reduce(TangentVector.zeros(2), flat)


def test_mixing_reduced_and_full_tangents_fails():
    with pytest.raises(DimensionMismatchError):
        TangentVector.zeros(2).inner(TangentVector.zeros(2, reduced=True))


def test_vector_layout_round_trips_through_from_vector():
    rng = np.random.default_rng(7)
    t = random_tangent(3, rng, reduced=True)

    rebuilt = TangentVector.from_vector(t.as_vector(), 3, reduced=True)

    np.testing.assert_array_equal(rebuilt.W, t.W)
    np.testing.assert_array_equal(rebuilt.Y, t.Y)


# 🐝📁🔚
