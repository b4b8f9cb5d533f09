#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""Measurements on converged states: density, particle number, persistent current, depletion width."""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
import math

import attrs
import numpy as np
from numpy.typing import NDArray
from provide.foundation import logger

from ringtdvp.contraction import ring_environment
from ringtdvp.errors import NoDepletionError, NumericsError, SolverError
from ringtdvp.evolution import OptimizerOptions, cg_ground_state
from ringtdvp.hamiltonian import MASS, HamiltonianParams
from ringtdvp.spectral import SpectralData, complete_spectrum
from ringtdvp.state import CmpsLike, CmpsState
from ringtdvp.tangent import IMAG_TOL, norm_operator, state_norm
from ringtdvp.transfer import SuperOp

FloatArray = NDArray[np.float64]
DEPLETION_THRESHOLD = 0.01


def current_unit(L: float) -> float:
    """I₀ = 2π/(mL²)."""
    return 2.0 * math.pi / (MASS * L * L)


@attrs.define(frozen=True, slots=True, kw_only=True)
class ObservableSeries:
    """Sampled observables; unused series are ``None``."""

    x_grid: FloatArray | None = None
    density: FloatArray | None = None
    omega_grid: FloatArray | None = None
    energies: FloatArray | None = None
    currents: FloatArray | None = None
    valid: NDArray[np.bool_] | None = None
    alpha: float | None = None
    sigma: float | None = None

    @property
    def energy_shift(self) -> FloatArray | None:
        """E(Ω) − E(0), taken at the grid point closest to Ω = 0."""
        if self.energies is None or self.omega_grid is None:
            return None
        reference = self.energies[int(np.argmin(np.abs(self.omega_grid)))]
        return self.energies - reference


def density_profile(state: CmpsLike, spec: SpectralData, n_points: int) -> ObservableSeries:
    """ρ(x) on ``n_points`` uniform positions covering [0, L].

    Sums over the complete spectrum:
    ``ρ(x) = Σ_ab e^{xλ_b + (L−x)λ_a} (l_a|B⊗B̄|r_b)(l_b|R⊗R̄|r_a) / ⟨Ψ|Ψ⟩``.
    Near the boundary the fast-decaying modes carry weight of order one, so a
    truncated Krylov spectrum is replaced by a dense one first.
    """
    if n_points < 2:
        raise ValueError(f"n_points must be at least 2, got {n_points}")
    spec = complete_spectrum(spec)
    norm = state_norm(state, spec)
    lefts, rights, lam = spec.left_vecs, spec.right_vecs, spec.lambdas
    boundary = norm_operator(state).elements(lefts, rights)
    number = SuperOp.product(state.R, state.R).elements(lefts, rights)
    coupling = boundary * number.T
    x = np.linspace(0.0, spec.L, n_points)
    growth_b = np.exp(np.outer(x, lam))
    growth_a = np.exp(np.outer(spec.L - x, lam))
    values = np.einsum("xa,ab,xb->x", growth_a, coupling, growth_b, optimize=True) / norm
    worst = float(np.max(np.abs(values.imag))) if values.size else 0.0
    if worst > IMAG_TOL * max(1.0, float(np.max(np.abs(values.real)))):
        logger.warning("observables.density.imaginary", imag=worst)
    return ObservableSeries(x_grid=x, density=values.real.copy())


def particle_number(state: CmpsLike, spec: SpectralData) -> float:
    """N = ∫ρ evaluated analytically through the spectral sums."""
    value = ring_environment(spec, [norm_operator(state)], block="observables.number").contract(
        SuperOp.product(state.R, state.R)
    )
    return float(value.real) / state_norm(state, spec)


def currents_from_energies(
    omega_grid: FloatArray, energies: FloatArray, valid: NDArray[np.bool_], L: float
) -> tuple[FloatArray, float | None]:
    """I(Ω) = −(1/2π) ∂E/∂Ω in I₀ units and the amplitude over one period."""
    currents = np.full(omega_grid.shape, np.nan)
    if np.count_nonzero(valid) < 2:
        return currents, None
    omegas = omega_grid[valid]
    derivative = np.gradient(energies[valid], omegas)
    currents[valid] = -derivative / (2.0 * math.pi) / current_unit(L)
    period = omegas < omegas[0] + 1.0 if omegas[-1] - omegas[0] >= 1.0 else np.ones_like(omegas, dtype=bool)
    in_period = currents[valid][period]
    alpha = 0.5 * float(np.max(in_period) - np.min(in_period))
    return currents, alpha


def current_sweep(
    params: HamiltonianParams,
    omega_grid: Sequence[float],
    opts: OptimizerOptions,
    state0: CmpsState,
    *,
    threads: int = 1,
) -> tuple[ObservableSeries, list[CmpsState | None]]:
    """Ground states across Ω, their bulk energies and the persistent current.

    The first point is solved sequentially and seeds the rest. Failed points are
    marked invalid and excluded from differentiation.
    """
    omegas = np.asarray(omega_grid, dtype=float)
    if omegas.size < 2:
        raise ValueError("omega_grid needs at least two points")
    energies = np.full(omegas.shape, np.nan)
    valid = np.zeros(omegas.shape, dtype=bool)
    states: list[CmpsState | None] = [None] * omegas.size

    def solve(index: int, seed: CmpsState) -> CmpsState | None:
        omega = float(omegas[index])
        try:
            state, trace = cg_ground_state(seed, params.with_omega(omega), opts)
        except (SolverError, NumericsError) as e:
            logger.warning("observables.sweep.point_failed", omega=omega, error=str(e))
            return None
        final = trace.final
        assert final is not None
        energies[index] = final.energy_bulk
        valid[index] = True
        states[index] = state
        return state

    seed = solve(0, state0) or state0
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda index: solve(index, seed), range(1, omegas.size)))
    else:
        for index in range(1, omegas.size):
            seed = solve(index, seed) or seed

    currents, alpha = currents_from_energies(omegas, energies, valid, params.L)
    logger.info(
        "observables.sweep.complete",
        points=int(omegas.size),
        valid=int(np.count_nonzero(valid)),
        alpha=alpha,
    )
    series = ObservableSeries(
        omega_grid=omegas, energies=energies, currents=currents, valid=valid, alpha=alpha
    )
    return series, states


def depletion_width(x_grid: Sequence[float], density: Sequence[float], L: float) -> float:
    """Full width at half depth of the density dip centred on x = 0.

    ρ_bulk is the median over the middle third of the ring; crossings of
    (ρ_bulk + ρ_min)/2 are located by linear interpolation.

    Raises:
        NoDepletionError: If the dip is shallower than 1% of the bulk density.
    """
    wrapped = np.mod(np.asarray(x_grid, dtype=float), L)
    # x = L folds onto x = 0
    x, first = np.unique(wrapped, return_index=True)
    rho = np.asarray(density, dtype=float)[first]

    middle = (x >= L / 3.0) & (x <= 2.0 * L / 3.0)
    if not np.any(middle):
        raise NoDepletionError("Profile has no samples in the middle third of the ring")
    bulk = float(np.median(rho[middle]))

    centred = np.where(x >= L / 2.0, x - L, x)
    order = np.argsort(centred)
    centred, rho = centred[order], rho[order]
    near = np.abs(centred) <= L / 3.0
    bottom = int(np.flatnonzero(near)[np.argmin(rho[near])])
    minimum = float(rho[bottom])
    if bulk - minimum < DEPLETION_THRESHOLD * abs(bulk):
        raise NoDepletionError(f"No depletion: minimum {minimum:.6g} within 1% of bulk {bulk:.6g}")
    level = 0.5 * (bulk + minimum)

    def crossing(step: int) -> float:
        index = bottom
        while 0 <= index + step < rho.size:
            nxt = index + step
            if rho[nxt] >= level:
                fraction = (level - rho[index]) / (rho[nxt] - rho[index])
                return float(centred[index] + fraction * (centred[nxt] - centred[index]))
            index = nxt
        raise NoDepletionError("Density never recovers to the half level")

    return crossing(1) - crossing(-1)


def linear_fit(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares line; returns (slope, intercept, R²)."""
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(xs, ys, 1)
    residual = ys - (slope * xs + intercept)
    spread = float(np.sum((ys - ys.mean()) ** 2))
    r_squared = 1.0 - float(np.sum(residual**2)) / spread if spread > 0 else 1.0
    return float(slope), float(intercept), r_squared


def power_law_fit(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Fit y = A·x^η on a log-log scale; returns (η, A, R²)."""
    log_x = np.log(np.asarray(x, dtype=float))
    log_y = np.log(np.asarray(y, dtype=float))
    slope, intercept, r_squared = linear_fit(log_x, log_y)
    return slope, float(np.exp(intercept)), r_squared


# 🐝📁🔚
