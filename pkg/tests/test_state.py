#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#


import json
from pathlib import Path

import numpy as np
import pytest

from ringtdvp.errors import (
    CheckpointError,
    ChecksumMismatchError,
    GaugeError,
    InvalidStateError,
    SchemaVersionError,
)
from ringtdvp.hamiltonian import HamiltonianParams, energy
from ringtdvp.spectral import spectral_decompose
from ringtdvp.state import (
    CHECKPOINT_SUFFIX,
    CmpsState,
    derive_q,
    gauge_residual,
    gauge_transform,
    load_state,
    make_state,
    save_state,
)


def test_same_seed_gives_identical_states():
    first = make_state(3, 4.0, seed=42)
    second = make_state(3, 4.0, seed=42)
    other = make_state(3, 4.0, seed=43)

    assert first.equals(second)
    assert not first.equals(other)


def test_random_state_is_left_gauged(random_state: CmpsState):
    assert gauge_residual(random_state.Q, random_state.R) < 1e-12
    np.testing.assert_allclose(random_state.K, random_state.K.conj().T)


def test_derive_q_rejects_non_hermitian_k():
    with pytest.raises(GaugeError, match="Hermitian"):
        derive_q(np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]]))


@pytest.mark.parametrize("D", [0, -2])
def test_invalid_bond_dimension(D: int):
    with pytest.raises(InvalidStateError, match="Bond dimension"):
        make_state(D, 1.0)


def test_invalid_ring_length():
    with pytest.raises(InvalidStateError, match="positive"):
        make_state(2, 0.0)


def test_non_finite_entries_are_rejected():
    with pytest.raises(InvalidStateError, match="non-finite"):
        CmpsState(R=np.array([[np.nan]]), K=np.zeros((1, 1)), B=np.eye(1), L=1.0)


def test_mismatched_shapes_are_rejected():
    with pytest.raises(InvalidStateError, match="share one shape"):
        CmpsState(R=np.eye(2), K=np.zeros((3, 3)), B=np.eye(2), L=1.0)


def test_warm_start_keeps_the_old_block():
    base = make_state(2, 6.0, seed=1)

    grown = make_state(4, 6.0, "warm-start", seed=2, base=base)

    assert grown.dim == 4
    np.testing.assert_array_equal(grown.R[:2, :2], base.R)
    np.testing.assert_array_equal(grown.K[:2, :2], base.K)
    np.testing.assert_array_equal(grown.B[:2, :2], base.B)
    assert not np.any(grown.B[2:, :])
    assert gauge_residual(grown.Q, grown.R) < 1e-12


def test_warm_start_from_a_larger_state_fails():
    base = make_state(3, 6.0, seed=1)

    with pytest.raises(InvalidStateError, match="larger"):
        make_state(2, 6.0, "warm-start", base=base)


def test_warm_start_needs_a_base():
    with pytest.raises(InvalidStateError, match="base"):
        make_state(2, 6.0, "warm-start")


def test_warm_start_keeps_the_energy_of_its_base(full_params: HamiltonianParams):
    base = make_state(2, full_params.L, seed=5)

    grown = make_state(3, full_params.L, "warm-start", seed=6, base=base, noise=1e-4)

    before = energy(base, spectral_decompose(base, 1e-12), full_params).total
    after = energy(grown, spectral_decompose(grown, 1e-12), full_params).total
    assert after == pytest.approx(before, rel=1e-6)


def test_gauge_transform_preserves_the_spectrum(state_d2: CmpsState):
    g = np.array([[2.0, 0.5], [0.1, 1.0 + 0.3j]])

    gauged = gauge_transform(state_d2, g)

    np.testing.assert_allclose(
        np.sort_complex(np.linalg.eigvals(gauged.R)),
        np.sort_complex(np.linalg.eigvals(state_d2.R)),
        atol=1e-12,
    )
    assert gauged.condition > 1.0


def test_inverse_gauge_transform_restores_the_triple(state_d2: CmpsState):
    g = np.array([[2.0, 0.5], [0.1, 1.0 + 0.3j]])

    restored = gauge_transform(gauge_transform(state_d2, g), np.linalg.inv(g))

    for name in ("Q", "R", "B"):
        original = getattr(state_d2, name)
        scale = np.linalg.norm(original)
        np.testing.assert_allclose(getattr(restored, name), original, rtol=0, atol=1e-12 * scale)


def test_singular_gauge_transform_fails(state_d2: CmpsState):
    with pytest.raises(GaugeError, match="singular"):
        gauge_transform(state_d2, np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_checkpoint_round_trip_is_bit_exact(tmp_path: Path, state_d2: CmpsState):
    path = save_state(state_d2, tmp_path / f"ground{CHECKPOINT_SUFFIX}")

    assert load_state(path).equals(state_d2)


def test_tampered_checkpoint_fails_its_checksum(tmp_path: Path, state_d2: CmpsState):
    path = save_state(state_d2, tmp_path / f"ground{CHECKPOINT_SUFFIX}")
    document = json.loads(path.read_text())
    document["L"] = 7.0
    path.write_text(json.dumps(document))

    with pytest.raises(ChecksumMismatchError, match="CRC32"):
        load_state(path)


def test_truncated_checkpoint_is_detected(tmp_path: Path, state_d2: CmpsState):
    path = save_state(state_d2, tmp_path / f"ground{CHECKPOINT_SUFFIX}")
    path.write_bytes(path.read_bytes()[:40])

    with pytest.raises(ChecksumMismatchError, match="truncated"):
        load_state(path)


def test_unsupported_schema_version(tmp_path: Path, state_d2: CmpsState):
    path = save_state(state_d2, tmp_path / f"ground{CHECKPOINT_SUFFIX}")
    document = json.loads(path.read_text())
    document["schema_version"] = 99
    path.write_text(json.dumps(document))

    with pytest.raises(SchemaVersionError, match="99"):
        load_state(path)


def test_missing_checkpoint_raises(tmp_path: Path):
    with pytest.raises(CheckpointError, match="does not exist"):
        load_state(tmp_path / f"absent{CHECKPOINT_SUFFIX}")


# 🐝📁🔚
