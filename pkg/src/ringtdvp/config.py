#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""Runtime settings and TOML experiment files."""

from __future__ import annotations

import math
from pathlib import Path
import tomllib
from typing import Any, Literal

import attrs
from provide.foundation import logger
from provide.foundation.config.base import BaseConfig, field

from ringtdvp.errors import ConfigurationError
from ringtdvp.evolution import LineSearchOptions, OptimizerOptions, TargetOptions
from ringtdvp.hamiltonian import DEFAULT_EPS, MASS, HamiltonianParams

EXPERIMENTS: tuple[str, ...] = ("ground", "sweep-omega", "density", "width-scan", "eps-scan", "oracle-check")
OUTPUT_FORMATS: tuple[str, ...] = ("csv", "json", "svg")
DEFAULT_OUTPUT_DIR = Path("ringtdvp-out")

_SECTION_KEYS: dict[str, frozenset[str]] = {
    "": frozenset({"model", "ansatz", "solver", "outputs", "experiment"}),
    "model": frozenset(
        {"c", "gamma", "rho", "mu", "U0", "Lambda", "N", "barrier_lambda", "Omega", "eps", "L"}
    ),
    "ansatz": frozenset({"D", "seed", "init", "warm_start_path"}),
    "solver": frozenset(
        {
            "dt",
            "mode",
            "max_iters",
            "grad_tol",
            "cg",
            "restart_period",
            "spectral_tol",
            "gram_tol",
            "line_search",
            "target",
        }
    ),
    "solver.line_search": frozenset({"initial_step", "max_step", "shrink", "c1", "max_halvings"}),
    "solver.target": frozenset({"N", "mu_lo", "mu_hi", "tol_N", "max_expansions", "max_iters"}),
    "outputs": frozenset({"dir", "formats", "checkpoint"}),
    "experiment": frozenset(
        {
            "name",
            "omega_min",
            "omega_max",
            "omega_points",
            "n_points",
            "bond_dims",
            "eps_values",
            "particle_numbers",
            "gamma_values",
            "oracle_dim",
            "oracle_seed",
        }
    ),
}


@attrs.define(kw_only=True, slots=True)
class RuntimeConfig(BaseConfig):
    """Process-level settings; command-line options override the environment."""

    threads: int = field(
        default=1,
        converter=int,
        description="Worker threads for independent sweep points",
        env_var="RINGTDVP_THREADS",
    )
    output_dir: Path = field(  # noqa: RUF009
        default=DEFAULT_OUTPUT_DIR,
        converter=Path,
        validator=attrs.validators.instance_of(Path),
        description="Directory receiving result files",
        env_var="RINGTDVP_OUTPUT_DIR",
    )
    show_progress: bool = field(
        default=False,
        description="Show optimizer progress on the console",
        env_var="RINGTDVP_SHOW_PROGRESS",
    )
    plots: bool = field(
        default=False,
        description="Write SVG plots next to the CSV series",
        env_var="RINGTDVP_PLOTS",
    )

    def __attrs_post_init__(self) -> None:
        super().__attrs_post_init__()
        self.validate()

    def validate(self) -> None:
        if self.threads < 1:
            raise ConfigurationError(f"threads must be at least 1, got {self.threads}", key="threads")


def _invalid(section: str, key: str, problem: str) -> ConfigurationError:
    return ConfigurationError(f"'{section}.{key}' {problem}", key=f"{section}.{key}")


def _both(section: str, first: str, second: str) -> ConfigurationError:
    return ConfigurationError(
        f"Conflicting keys '{section}.{first}' and '{section}.{second}': give only one of them",
        key=f"{section}.{first}",
    )


@attrs.define(frozen=True, slots=True, kw_only=True)
class ModelSection:
    """Couplings as written in the file; ``params`` resolves the derived ones.

    c comes from ``c`` or ``gamma``·ρ with ρ = ``rho`` or ``N``/L. U₀ comes from
    ``U0``, ``Lambda``·N/(mL) or π·``barrier_lambda``/(mL).
    """

    L: float
    mu: float = 0.0
    Omega: float = 0.0
    eps: float = DEFAULT_EPS
    c: float | None = None
    gamma: float | None = None
    rho: float | None = None
    N: float | None = None
    U0: float | None = None
    Lambda: float | None = None
    barrier_lambda: float | None = None

    def __attrs_post_init__(self) -> None:
        if self.c is not None and self.gamma is not None:
            raise _both("model", "c", "gamma")
        if self.c is None and self.gamma is None:
            raise ConfigurationError("One of 'model.c' or 'model.gamma' is required", key="model.c")
        if self.gamma is not None and self.rho is None and self.N is None:
            raise ConfigurationError("'model.gamma' needs 'model.rho' or 'model.N'", key="model.rho")
        barrier_keys = [name for name in ("U0", "Lambda", "barrier_lambda") if getattr(self, name) is not None]
        if len(barrier_keys) > 1:
            raise _both("model", barrier_keys[0], barrier_keys[1])
        if self.Lambda is not None and self.N is None:
            raise ConfigurationError("'model.Lambda' needs 'model.N'", key="model.N")

    def density(self, N: float | None = None) -> float | None:
        if N is not None:
            return N / self.L
        if self.rho is not None:
            return self.rho
        return None if self.N is None else self.N / self.L

    def coupling(self, N: float | None = None) -> float:
        if self.c is not None:
            return self.c
        rho = self.density(N)
        assert self.gamma is not None and rho is not None
        return self.gamma * rho

    def barrier(self, N: float | None = None) -> float:
        if self.U0 is not None:
            return self.U0
        if self.Lambda is not None:
            number = N if N is not None else self.N
            assert number is not None
            return self.Lambda * number / (MASS * self.L)
        if self.barrier_lambda is not None:
            return math.pi * self.barrier_lambda / (MASS * self.L)
        return 0.0

    def params(self, *, N: float | None = None, eps: float | None = None) -> HamiltonianParams:
        """Hamiltonian couplings, re-resolved for particle number ``N`` when given."""
        return HamiltonianParams(
            c=self.coupling(N),
            mu=self.mu,
            U0=self.barrier(N),
            Omega=self.Omega,
            eps=self.eps if eps is None else eps,
            L=self.L,
        )


@attrs.define(frozen=True, slots=True, kw_only=True)
class AnsatzSection:
    D: int = 2
    seed: int | None = None
    init: Literal["random", "warm-start"] = "random"
    warm_start_path: Path | None = None

    def __attrs_post_init__(self) -> None:
        if self.D < 1:
            raise ConfigurationError(f"'ansatz.D' must be at least 1, got {self.D}", key="ansatz.D")
        if self.init not in ("random", "warm-start"):
            raise ConfigurationError(f"Unknown 'ansatz.init' {self.init!r}", key="ansatz.init")
        if self.init == "warm-start" and self.warm_start_path is None:
            raise ConfigurationError(
                "'ansatz.init = \"warm-start\"' needs 'ansatz.warm_start_path'", key="ansatz.init"
            )


@attrs.define(frozen=True, slots=True, kw_only=True)
class OutputsSection:
    dir: Path | None = None
    formats: tuple[str, ...] = ("csv", "json")
    checkpoint: bool = True

    def __attrs_post_init__(self) -> None:
        unknown = [fmt for fmt in self.formats if fmt not in OUTPUT_FORMATS]
        if unknown:
            raise ConfigurationError(f"Unknown output format {unknown[0]!r}", key="outputs.formats")


@attrs.define(frozen=True, slots=True, kw_only=True)
class ExperimentSection:
    name: str = "ground"
    omega_min: float = 0.0
    omega_max: float = 1.0
    omega_points: int = 21
    n_points: int = 512
    bond_dims: tuple[int, ...] = ()
    eps_values: tuple[float, ...] = (1e-3, 2.5e-3, 5e-3, 7.5e-3, 1e-2)
    particle_numbers: tuple[float, ...] = ()
    gamma_values: tuple[float, ...] = ()
    oracle_dim: int = 3
    oracle_seed: int = 0

    def __attrs_post_init__(self) -> None:
        if self.name not in EXPERIMENTS:
            raise ConfigurationError(
                f"Unknown experiment {self.name!r}; expected one of {', '.join(EXPERIMENTS)}",
                key="experiment.name",
            )
        if self.omega_points < 2:
            raise _invalid("experiment", "omega_points", "must be at least 2")
        if self.n_points < 2:
            raise _invalid("experiment", "n_points", "must be at least 2")
        if self.name == "width-scan" and not self.particle_numbers:
            raise ConfigurationError(
                "width-scan needs 'experiment.particle_numbers'", key="experiment.particle_numbers"
            )


@attrs.define(frozen=True, slots=True, kw_only=True)
class RunConfig:
    """A parsed experiment file."""

    model: ModelSection
    ansatz: AnsatzSection
    solver: OptimizerOptions
    outputs: OutputsSection
    experiment: ExperimentSection
    source: Path | None = None

    @property
    def params(self) -> HamiltonianParams:
        return self.model.params()

    def resolved(self) -> dict[str, Any]:
        """Model parameters for the manifest, including the dimensionless ones when determinable."""
        params = self.params
        out: dict[str, Any] = {
            "c": params.c,
            "mu": params.mu,
            "U0": params.U0,
            "Omega": params.Omega,
            "eps": params.eps,
            "L": params.L,
            "barrier_lambda": params.barrier_lambda,
        }
        rho = self.model.density()
        if rho:
            out["gamma"] = params.gamma(rho)
            out["healing_length"] = params.healing_length(rho)
        if self.model.N:
            out["Lambda"] = params.barrier_Lambda(self.model.N)
        return out


def _check_keys(section: str, table: dict[str, Any]) -> None:
    allowed = _SECTION_KEYS[section]
    for key in table:
        if key not in allowed:
            dotted = f"{section}.{key}" if section else key
            raise ConfigurationError(f"Unknown configuration key '{dotted}'", key=dotted)


def _table(data: dict[str, Any], section: str, name: str) -> dict[str, Any]:
    value = data.get(name, {})
    dotted = f"{section}.{name}" if section else name
    if not isinstance(value, dict):
        raise ConfigurationError(f"'{dotted}' must be a table", key=dotted)
    _check_keys(dotted, value)
    return value


def _number(section: str, key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, int | float) or not math.isfinite(value):
        raise _invalid(section, key, f"must be a finite number, got {value!r}")
    return float(value)


def _integer(section: str, key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _invalid(section, key, f"must be an integer, got {value!r}")
    return value


def _numbers(section: str, key: str, value: Any) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise _invalid(section, key, "must be a list")
    return tuple(_number(section, key, item) for item in value)


_INTEGER_KEYS = frozenset(
    {
        "D",
        "seed",
        "max_iters",
        "restart_period",
        "max_halvings",
        "max_expansions",
        "omega_points",
        "n_points",
        "oracle_dim",
        "oracle_seed",
    }
)
_STRING_KEYS = frozenset({"mode", "init", "name"})
_BOOL_KEYS = frozenset({"cg", "checkpoint"})


def _convert(section: str, table: dict[str, Any]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in table.items():
        if isinstance(value, dict):
            continue
        if key in _INTEGER_KEYS:
            out[key] = _integer(section, key, value)
        elif key in _STRING_KEYS:
            if not isinstance(value, str):
                raise _invalid(section, key, "must be a string")
            out[key] = value
        elif key in _BOOL_KEYS:
            if not isinstance(value, bool):
                raise _invalid(section, key, "must be true or false")
            out[key] = value
        elif key == "bond_dims":
            if not isinstance(value, list):
                raise _invalid(section, key, "must be a list")
            out[key] = tuple(_integer(section, key, item) for item in value)
        elif key == "formats":
            if not isinstance(value, list) or not all(isinstance(item, str) for item in value):
                raise _invalid(section, key, "must be a list of strings")
            out[key] = tuple(value)
        elif key in ("dir", "warm_start_path"):
            out[key] = Path(str(value))
        elif key in ("eps_values", "particle_numbers", "gamma_values"):
            out[key] = _numbers(section, key, value)
        else:
            out[key] = _number(section, key, value)
    return out


def _build(section: str, factory: Any, values: dict[str, Any]) -> Any:
    try:
        return factory(**values)
    except ConfigurationError as e:
        if e.key is not None and "." not in e.key:
            raise ConfigurationError(str(e), key=f"{section}.{e.key}") from e
        raise
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"Invalid [{section}] section: {e}", key=section) from e


def parse_run_config(data: dict[str, Any], *, source: Path | None = None) -> RunConfig:
    """Validate a decoded TOML document.

    Raises:
        ConfigurationError: Naming the offending key.
    """
    _check_keys("", data)
    model_table = _table(data, "", "model")
    if "L" not in model_table:
        raise ConfigurationError("'model.L' is required", key="model.L")
    solver_table = _table(data, "", "solver")
    line_search = _convert("solver.line_search", _table(solver_table, "solver", "line_search"))
    target_table = _table(solver_table, "solver", "target")
    solver_values = _convert("solver", solver_table)
    solver_values["line_search"] = _build("solver.line_search", LineSearchOptions, line_search)
    if target_table:
        target = _convert("solver.target", target_table)
        solver_values["target"] = _build("solver.target", TargetOptions, target)

    config = RunConfig(
        model=_build("model", ModelSection, _convert("model", model_table)),
        ansatz=_build("ansatz", AnsatzSection, _convert("ansatz", _table(data, "", "ansatz"))),
        solver=_build("solver", OptimizerOptions, solver_values),
        outputs=_build("outputs", OutputsSection, _convert("outputs", _table(data, "", "outputs"))),
        experiment=_build(
            "experiment", ExperimentSection, _convert("experiment", _table(data, "", "experiment"))
        ),
        source=source,
    )
    # resolving the couplings runs the Hamiltonian validators
    try:
        params = config.params
    except ConfigurationError as e:
        raise ConfigurationError(str(e), key=f"model.{e.key}") from e
    logger.debug("config.parsed", c=params.c, mu=params.mu, U0=params.U0, L=params.L)
    return config


def load_run_config(path: Path) -> RunConfig:
    """Read and validate an experiment file.

    Raises:
        ConfigurationError: If the file cannot be read, is not TOML, or fails validation.
    """
    try:
        with path.open("rb") as handle:
            data = tomllib.load(handle)
    except OSError as e:
        raise ConfigurationError(f"Cannot read configuration {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"Malformed TOML in {path}: {e}") from e
    config = parse_run_config(data, source=path)
    logger.debug("config.loaded", path=str(path), experiment=config.experiment.name, bond_dim=config.ansatz.D)
    return config


# 🐝📁🔚
