#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""The regularised ring Hamiltonian: energy, analytic gradient and boundary diagnostics.

Bulk density ``h = [Q,R]⊗[Q̄,R̄] + cR²⊗R̄² − μR⊗R̄`` is integrated around the
ring. The barrier sits at x = 0 where ``ψ(0) ↔ BR`` and ``ψ(L) ↔ RB``; with
``P = BR − e^{i2πΩ}RB`` and ``D = B[Q,R] + e^{i2πΩ}[Q,R]B`` the boundary operator is

    U₀/2 (BR⊗B̄R̄ + RB⊗R̄B̄) + (1/ε) P⊗P̄ + ½ (D⊗P̄ + P⊗D̄).

Units: ħ = 1, m = ½.
"""

from __future__ import annotations

import math

import attrs
import numpy as np
from provide.foundation import logger

from ringtdvp.contraction import BraTemplate, EnvironmentFactory, ring_environment, spectral_environments
from ringtdvp.errors import ConfigurationError
from ringtdvp.spectral import SpectralData
from ringtdvp.state import CmpsLike
from ringtdvp.tangent import IMAG_TOL, TangentVector, assemble, norm_operator, state_norm
from ringtdvp.transfer import ComplexMatrix, SuperOp

MASS = 0.5
DEFAULT_EPS = 2.5e-3


def _positive(instance: object, attribute: attrs.Attribute[float], value: float) -> None:
    if not math.isfinite(value) or value <= 0:
        raise ConfigurationError(f"{attribute.name} must be positive, got {value}", key=attribute.name)


def _finite(instance: object, attribute: attrs.Attribute[float], value: float) -> None:
    if not math.isfinite(value):
        raise ConfigurationError(f"{attribute.name} must be finite, got {value}", key=attribute.name)


@attrs.define(frozen=True, slots=True, kw_only=True)
class HamiltonianParams:
    """Couplings of the regularised Hamiltonian."""

    c: float = attrs.field(converter=float, validator=_positive)
    mu: float = attrs.field(converter=float, validator=_finite)
    U0: float = attrs.field(default=0.0, converter=float, validator=_finite)
    Omega: float = attrs.field(default=0.0, converter=float, validator=_finite)
    eps: float = attrs.field(default=DEFAULT_EPS, converter=float, validator=_positive)
    L: float = attrs.field(converter=float, validator=_positive)

    @property
    def twist(self) -> complex:
        return complex(np.exp(2j * np.pi * self.Omega))

    def gamma(self, density: float) -> float:
        """Lieb parameter c/ρ."""
        return self.c / density

    def barrier_Lambda(self, particle_number: float) -> float:
        """Size-independent barrier height m·U₀·L/N."""
        return MASS * self.U0 * self.L / particle_number

    @property
    def barrier_lambda(self) -> float:
        """Barrier height m·U₀·L/π."""
        return MASS * self.U0 * self.L / math.pi

    def healing_length(self, density: float) -> float:
        """ξ = 1/√(4mcρ)."""
        return 1.0 / math.sqrt(4.0 * MASS * self.c * density)

    def with_omega(self, omega: float) -> HamiltonianParams:
        return attrs.evolve(self, Omega=omega)

    def with_mu(self, mu: float) -> HamiltonianParams:
        return attrs.evolve(self, mu=mu)


@attrs.define(frozen=True, slots=True, kw_only=True)
class EnergyBreakdown:
    """Normalised energies; ``bulk`` includes the −μN term."""

    total: float
    bulk: float
    boundary: float
    norm: float
    density: float
    particle_number: float
    mu: float
    L: float
    imag_residue: float = 0.0

    @property
    def canonical_bulk_density(self) -> float:
        """Ω-independent bulk energy density (bulk + μN)/L."""
        return (self.bulk + self.mu * self.particle_number) / self.L


def _commutator(A: ComplexMatrix, B: ComplexMatrix) -> ComplexMatrix:
    return A @ B - B @ A


def bulk_operator(state: CmpsLike, params: HamiltonianParams) -> SuperOp:
    """Hamiltonian density ``h`` as a doubled-space operator."""
    Q, R = state.Q, state.R
    kinetic = _commutator(Q, R)
    R2 = R @ R
    return (
        SuperOp.product(kinetic, kinetic)
        + SuperOp.product(params.c * R2, R2)
        + SuperOp.product(-params.mu * R, R)
    )


def _boundary_pieces(state: CmpsLike, params: HamiltonianParams) -> dict[str, SuperOp]:
    Q, R, B = state.Q, state.R, state.B
    e = params.twist
    BR = B @ R
    RB = R @ B
    kinetic = _commutator(Q, R)
    P = BR - e * RB
    D = B @ kinetic + e * kinetic @ B
    return {
        "barrier": SuperOp.product(0.5 * params.U0 * BR, BR) + SuperOp.product(0.5 * params.U0 * RB, RB),
        "penalty": SuperOp.product(P / params.eps, P),
        "mixed": SuperOp.product(0.5 * D, P) + SuperOp.product(0.5 * P, D),
    }


def boundary_operator(state: CmpsLike, params: HamiltonianParams) -> SuperOp:
    return SuperOp.total(_boundary_pieces(state, params).values())


def _real(value: complex, label: str) -> float:
    if abs(value.imag) > IMAG_TOL * max(1.0, abs(value.real)):
        logger.warning("hamiltonian.imaginary_residue", quantity=label, imag=value.imag, real=value.real)
    return float(value.real)


def energy(state: CmpsLike, spec: SpectralData, params: HamiltonianParams) -> EnergyBreakdown:
    """Normalised ``⟨Ψ|H_ε|Ψ⟩`` split into bulk and boundary parts.

    Raises:
        NormUnderflowError: If the state norm underflows.
    """
    norm = state_norm(state, spec)
    bulk_raw, boundary_raw, number_raw = energy_terms(state, params, spectral_environments(spec))

    bulk = _real(bulk_raw, "bulk") / norm
    boundary = _real(boundary_raw, "boundary") / norm
    particle_number = _real(number_raw, "particle_number") / norm
    residue = max(abs(bulk_raw.imag), abs(boundary_raw.imag)) / norm
    return EnergyBreakdown(
        total=bulk + boundary,
        bulk=bulk,
        boundary=boundary,
        norm=norm,
        density=particle_number / params.L,
        particle_number=particle_number,
        mu=params.mu,
        L=params.L,
        imag_residue=residue,
    )


def energy_terms(
    state: CmpsLike, params: HamiltonianParams, environment: EnvironmentFactory
) -> tuple[complex, complex, complex]:
    """Unnormalised bulk energy, boundary energy and particle number."""
    bulk_env = environment([norm_operator(state)], "energy.bulk")
    bulk_raw = bulk_env.contract(bulk_operator(state, params))
    number_raw = bulk_env.contract(SuperOp.product(state.R, state.R))
    boundary_raw = environment([], "energy.boundary").contract(boundary_operator(state, params))
    return bulk_raw, boundary_raw, number_raw


def energy_split(state: CmpsLike, spec: SpectralData, params: HamiltonianParams) -> dict[str, float]:
    """Normalised bulk energy and each boundary piece (barrier, penalty, mixed)."""
    norm = state_norm(state, spec)
    single = ring_environment(spec, [], block="energy.boundary")
    out = {
        name: _real(single.contract(op), name) / norm for name, op in _boundary_pieces(state, params).items()
    }
    bulk_env = ring_environment(spec, [norm_operator(state)], block="energy.bulk")
    out["bulk"] = _real(bulk_env.contract(bulk_operator(state, params)), "bulk") / norm
    return out


def boundary_residual(state: CmpsLike, spec: SpectralData, Omega: float) -> float:
    """Normalised ``⟨(ψ(0) − e^{i2πΩ}ψ(L))†(ψ(0) − e^{i2πΩ}ψ(L))⟩``."""
    P = state.B @ state.R - np.exp(2j * np.pi * Omega) * state.R @ state.B
    value = ring_environment(spec, [], block="residual").contract(SuperOp.product(P, P))
    return max(0.0, _real(value, "boundary_residual") / state_norm(state, spec))


def _bulk_templates(state: CmpsLike, params: HamiltonianParams) -> list[BraTemplate]:
    Q, R = state.Q, state.R
    kinetic = _commutator(Q, R)
    cR2 = params.c * (R @ R)
    return [
        BraTemplate(ket=kinetic, slot="W", left=Q),
        BraTemplate(ket=-kinetic, slot="W", right=Q),
        BraTemplate(ket=kinetic, slot="V", right=R),
        BraTemplate(ket=-kinetic, slot="V", left=R),
        BraTemplate(ket=cR2, slot="W", left=R),
        BraTemplate(ket=cR2, slot="W", right=R),
        BraTemplate(ket=-params.mu * R, slot="W"),
    ]


def _barrier_templates(state: CmpsLike, params: HamiltonianParams) -> list[BraTemplate]:
    Q, R, B = state.Q, state.R, state.B
    e = params.twist
    eb = np.conj(e)
    BR = B @ R
    RB = R @ B
    kinetic = _commutator(Q, R)
    P = BR - e * RB
    D = B @ kinetic + e * kinetic @ B
    half_u = 0.5 * params.U0
    templates = [
        BraTemplate(ket=half_u * BR, slot="W", left=B),
        BraTemplate(ket=half_u * BR, slot="Y", right=R),
        BraTemplate(ket=half_u * RB, slot="W", right=B),
        BraTemplate(ket=half_u * RB, slot="Y", left=R),
    ]
    # variations of P̄ under the penalty and mixed kets
    for ket in (P / params.eps, 0.5 * D):
        templates += [
            BraTemplate(ket=ket, slot="W", left=B),
            BraTemplate(ket=-eb * ket, slot="W", right=B),
            BraTemplate(ket=ket, slot="Y", right=R),
            BraTemplate(ket=-eb * ket, slot="Y", left=R),
        ]
    # variations of D̄ against P
    half_p = 0.5 * P
    templates += [
        BraTemplate(ket=half_p, slot="W", left=B @ Q),
        BraTemplate(ket=-half_p, slot="W", left=B, right=Q),
        BraTemplate(ket=eb * half_p, slot="W", left=Q, right=B),
        BraTemplate(ket=-eb * half_p, slot="W", right=Q @ B),
        BraTemplate(ket=half_p, slot="V", left=B, right=R),
        BraTemplate(ket=-half_p, slot="V", left=BR),
        BraTemplate(ket=eb * half_p, slot="V", right=RB),
        BraTemplate(ket=-eb * half_p, slot="V", left=R, right=B),
        BraTemplate(ket=half_p, slot="Y", right=kinetic),
        BraTemplate(ket=eb * half_p, slot="Y", left=kinetic),
    ]
    return templates


def gradient(state: CmpsLike, spec: SpectralData, params: HamiltonianParams) -> TangentVector:
    """Covector g with ``⟨t, g⟩ = ⟨Φ[V,W,Y]|H_ε|Ψ⟩`` for every full tangent t (unnormalised)."""
    return gradient_covector(state, params, spectral_environments(spec))


def gradient_covector(
    state: CmpsLike, params: HamiltonianParams, environment: EnvironmentFactory
) -> TangentVector:
    dim = state.R.shape[0]
    BB = norm_operator(state)
    h = bulk_operator(state, params)
    H_B = boundary_operator(state, params)
    slot_templates = [
        BraTemplate(ket=np.eye(dim, dtype=np.complex128), slot="V"),
        BraTemplate(ket=state.R, slot="W"),
    ]
    parts = [
        environment([BB, h], "grad.bulk").collect(slot_templates),
        environment([h, BB], "grad.bulk-exchange").collect(slot_templates),
        environment([BB], "grad.contact").collect(_bulk_templates(state, params)),
        environment([H_B], "grad.barrier").collect(slot_templates),
        environment([], "grad.barrier-contact").collect(_barrier_templates(state, params)),
        environment([h], "grad.y-bulk").collect([BraTemplate(ket=state.B, slot="Y")]),
    ]
    return assemble(dim, parts)


# 🐝📁🔚
