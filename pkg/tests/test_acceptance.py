#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""Full-scale physics runs driven through the experiment runners (minutes to an hour each)."""

import csv
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from ringtdvp.config import RuntimeConfig, parse_run_config
from ringtdvp.core import RunResult, run_experiment
from ringtdvp.oracle import gp_ground_state

pytestmark = [pytest.mark.slow, pytest.mark.integration]

# ring with a rotating barrier at the scale of the current-amplitude study
RING = {"L": 120.0, "N": 18.0}
TARGET = {"N": 18.0, "tol_N": 1e-6}


def _run(document: dict[str, Any], directory: Path) -> RunResult:
    return run_experiment(parse_run_config(document), RuntimeConfig(), directory=directory)


def _rows(path: Path) -> list[list[str]]:
    with path.open(encoding="utf-8") as handle:
        return list(csv.reader(handle))[1:]


def _density_document(D: int, barrier_lambda: float) -> dict[str, Any]:
    return {
        "model": {**RING, "gamma": 0.03, "barrier_lambda": barrier_lambda},
        "ansatz": {"D": D, "seed": 1},
        "solver": {"max_iters": 3000, "grad_tol": 1e-8, "target": TARGET},
        "experiment": {"name": "density", "n_points": 481},
    }


def _gp_deviation(document: dict[str, Any], directory: Path, D: int) -> tuple[float, float]:
    """Largest pointwise relative and bulk-scaled deviations from the mean-field profile."""
    params = parse_run_config(document).params
    gp = gp_ground_state(params, 1024, target_N=RING["N"])
    rows = _rows(directory / f"density_D{D}.csv")
    x = np.array([float(row[0]) for row in rows])
    rho = np.array([float(row[1]) for row in rows])
    reference = np.interp(x, gp.x, gp.density, period=params.L)
    pointwise = float(np.max(np.abs(rho - reference) / reference))
    bulk_scaled = float(np.max(np.abs(rho - reference)) / np.max(reference))
    return pointwise, bulk_scaled


def test_scalar_state_matches_the_uniform_mean_field_profile(tmp_path: Path):
    document = _density_document(1, 0.0)

    _run(document, tmp_path)

    pointwise, _ = _gp_deviation(document, tmp_path, 1)
    assert pointwise <= 1e-4


def test_weak_coupling_profile_follows_mean_field(tmp_path: Path):
    document = _density_document(4, 19.1)

    _run(document, tmp_path)

    _, bulk_scaled = _gp_deviation(document, tmp_path, 4)
    assert bulk_scaled <= 0.02


def _sweep_document(barrier_lambda: float) -> dict[str, Any]:
    return {
        "model": {**RING, "gamma": 2.33, "barrier_lambda": barrier_lambda},
        "ansatz": {"D": 4, "seed": 2},
        "solver": {"max_iters": 3000, "grad_tol": 1e-8, "target": TARGET},
        "experiment": {"name": "sweep-omega", "omega_min": -0.5, "omega_max": 0.5, "omega_points": 11},
    }


def test_energy_is_periodic_and_reflection_symmetric_in_omega(tmp_path: Path):
    weak = _run(_sweep_document(9.5), tmp_path / "weak")
    strong = _run(_sweep_document(38.2), tmp_path / "strong")

    rows = _rows(tmp_path / "weak" / "sweep.csv")
    assert all(row[3] == "true" for row in rows)
    shifts = np.array([float(row[1]) for row in rows])
    currents = np.array([float(row[2]) for row in rows])
    # Ω = ±0.5 are one period apart as well as mirror images
    np.testing.assert_allclose(shifts, shifts[::-1], rtol=0, atol=1e-5)
    assert abs(currents[5]) <= 1e-3 * np.max(np.abs(currents))
    assert weak.summary["alpha"] > strong.summary["alpha"]


def test_current_amplitude_peaks_at_intermediate_coupling(tmp_path: Path):
    document = {
        "model": {**RING, "gamma": 0.03, "barrier_lambda": 19.1},
        "ansatz": {"D": 8, "seed": 3},
        "solver": {"max_iters": 3000, "grad_tol": 1e-7, "target": TARGET},
        "experiment": {
            "name": "sweep-omega",
            "omega_min": 0.0,
            "omega_max": 1.0,
            "omega_points": 11,
            "gamma_values": [0.03, 0.3, 2.33, 33.0],
        },
    }

    result = _run(document, tmp_path)

    assert all(alpha is not None for alpha in result.summary["alpha"])
    assert result.summary["interior_maximum"] is True


def _strong_coupling_document(experiment: dict[str, Any]) -> dict[str, Any]:
    # ρ = 0.125 on L = 256 holds 32 particles
    return {
        "model": {"L": 256.0, "N": 32.0, "gamma": 80.0, "Lambda": 4.0, "eps": 2.5e-3},
        "ansatz": {"D": 8, "seed": 4},
        "solver": {"max_iters": 5000, "grad_tol": 1e-8, "target": {"N": 32.0, "tol_N": 1e-6}},
        "experiment": experiment,
    }


def test_strong_coupling_bulk_energy_density(tmp_path: Path):
    result = _run(_strong_coupling_document({"name": "ground"}), tmp_path)

    assert result.summary["bulk_energy_density"] == pytest.approx(0.00632, abs=1e-4)


def test_boundary_terms_are_linear_in_the_penalty_width(tmp_path: Path):
    document = _strong_coupling_document(
        {"name": "eps-scan", "eps_values": [1e-3, 2.5e-3, 5e-3, 7.5e-3, 1e-2]}
    )

    result = _run(document, tmp_path)

    assert result.summary["boundary_fit"]["r_squared"] > 0.99
    assert result.summary["residual_fit"]["r_squared"] > 0.99
    residuals = {float(row[0]): float(row[3]) for row in _rows(tmp_path / "eps_scan.csv")}
    assert residuals[2.5e-3] <= 1e-6


# 🐝📁🔚
