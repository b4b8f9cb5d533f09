#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""ringtdvp: continuous matrix product state ground states for a Bose gas on a ring.

Integrated with provide-foundation for logging, configuration and console output.
"""

from provide.foundation import get_hub, logger
from provide.foundation.utils.versioning import get_version

from ringtdvp.config import RunConfig, RuntimeConfig, load_run_config
from ringtdvp.core import run_experiment
from ringtdvp.evolution import OptimizerOptions, cg_ground_state, tdvp_step, tune_mu
from ringtdvp.hamiltonian import HamiltonianParams, energy, gradient
from ringtdvp.observables import current_sweep, density_profile, depletion_width, particle_number
from ringtdvp.oracle import gp_ground_state, oracle_check
from ringtdvp.spectral import SpectralData, spectral_decompose
from ringtdvp.state import CmpsState, load_state, make_state, save_state
from ringtdvp.telemetry import EVENT_SET
from ringtdvp.tangent import TangentVector, gram_apply, ortho_vector, state_norm

# Initialize the Foundation Hub (available for advanced usage)
_hub = get_hub()

logger.debug(
    "ringtdvp.init",
    foundation_hub_available=True,
    event_set=EVENT_SET.name,
)

__all__ = [
    "EVENT_SET",
    # States
    "CmpsState",
    # Couplings and solver settings
    "HamiltonianParams",
    "OptimizerOptions",
    # Configuration
    "RunConfig",
    "RuntimeConfig",
    "SpectralData",
    "TangentVector",
    # Optimisation
    "cg_ground_state",
    # Observables
    "current_sweep",
    "density_profile",
    "depletion_width",
    "energy",
    # Foundation integration
    "get_hub",
    # References
    "gp_ground_state",
    "gradient",
    "gram_apply",
    "load_run_config",
    "load_state",
    "make_state",
    "oracle_check",
    "ortho_vector",
    "particle_number",
    "run_experiment",
    "save_state",
    "spectral_decompose",
    "state_norm",
    "tdvp_step",
    "tune_mu",
]

__version__ = get_version("ringtdvp", caller_file=__file__)

# 🐝📁🔚
