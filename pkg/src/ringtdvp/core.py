#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#

"""Core orchestration of the experiments a run file can ask for."""

from __future__ import annotations

from collections.abc import Callable
import math
from pathlib import Path
from typing import Any

import attrs
import numpy as np
from provide.foundation import logger
from provide.foundation.context import CLIContext

from ringtdvp.config import RunConfig, RuntimeConfig
from ringtdvp.errors import (
    CheckpointError,
    NoDepletionError,
    NumericsError,
    OracleError,
    SolverError,
    StagnationError,
)
from ringtdvp.evolution import OptimizerTrace, TargetOptions, cg_ground_state, tune_mu
from ringtdvp.hamiltonian import MASS, HamiltonianParams, boundary_residual, energy, energy_split
from ringtdvp.observables import (
    ObservableSeries,
    current_sweep,
    density_profile,
    depletion_width,
    linear_fit,
    particle_number,
    power_law_fit,
)
from ringtdvp.oracle import OracleReport, oracle_check, require_pass
from ringtdvp.output import (
    DENSITY_HEADER,
    EPS_HEADER,
    SWEEP_HEADER,
    TRACE_HEADER,
    WIDTH_HEADER,
    ResultWriter,
    RunManifest,
)
from ringtdvp.progress import ProgressReporter
from ringtdvp.spectral import spectral_decompose
from ringtdvp.state import CHECKPOINT_SUFFIX, CmpsState, load_state, make_state, save_state


@attrs.define(slots=True, kw_only=True)
class RunContext:
    """Everything a driver needs while it runs."""

    config: RunConfig
    runtime: RuntimeConfig
    writer: ResultWriter
    manifest: RunManifest
    progress: ProgressReporter
    resume: Path | None = None

    @property
    def L(self) -> float:
        return self.config.model.L


@attrs.define(frozen=True, slots=True, kw_only=True)
class RunResult:
    directory: Path
    manifest: RunManifest
    summary: dict[str, Any]


@attrs.define(frozen=True, slots=True, kw_only=True)
class Solution:
    """A converged (or best-effort) ground state with its couplings."""

    state: CmpsState
    params: HamiltonianParams
    trace: OptimizerTrace


def initial_state(ctx: RunContext, D: int) -> CmpsState:
    """Starting state of bond dimension ``D``.

    A ``--resume`` checkpoint wins over the ansatz section; smaller stored
    states are padded up to ``D``.

    Raises:
        CheckpointError: If a checkpoint cannot be read or belongs to another ring.
    """
    ansatz = ctx.config.ansatz
    base: CmpsState | None = None
    if ctx.resume is not None:
        base = load_state(ctx.resume)
    elif ansatz.init == "warm-start" and ansatz.warm_start_path is not None:
        base = load_state(ansatz.warm_start_path)
    if base is None:
        return make_state(D, ctx.L, "random", ansatz.seed)
    if not math.isclose(base.L, ctx.L, rel_tol=1e-12):
        raise CheckpointError(f"Checkpoint ring length {base.L} does not match model.L = {ctx.L}")
    if base.dim > D:
        logger.warning("run.resume.larger_state", stored=base.dim, bond_dim=D)
        return base
    return make_state(D, ctx.L, "warm-start", ansatz.seed, base=base)


def _default_target(N: float, template: TargetOptions | None) -> TargetOptions:
    if template is None:
        return TargetOptions(N=N)
    return attrs.evolve(template, N=N)


def solve_ground(
    ctx: RunContext,
    state0: CmpsState,
    params: HamiltonianParams,
    *,
    label: str,
    target: TargetOptions | None = None,
) -> Solution:
    """One ground-state search, tuning μ first when a particle-number target is set.

    A stagnating optimizer leaves its trace and best state on disk before the
    error propagates.
    """
    opts = ctx.config.solver
    target = target if target is not None else opts.target
    ctx.progress.operation_start(label)
    try:
        with ctx.manifest.phase("solve"):
            if target is not None:
                mu, state, trace = tune_mu(params, target, opts, state0)
                params = params.with_mu(mu)
            else:
                state, trace = cg_ground_state(state0, params, opts, on_iteration=ctx.progress.iteration)
    except StagnationError as e:
        if isinstance(e.trace, OptimizerTrace):
            _write_trace(ctx, label, e.trace)
        if isinstance(e.state, CmpsState):
            _checkpoint(ctx, label, e.state)
        raise
    ctx.progress.operation_end(label, len(trace.records) - 1)
    if not trace.converged:
        logger.warning("run.solve.unconverged", label=label, stop_reason=trace.stop_reason)
    _write_trace(ctx, label, trace)
    _checkpoint(ctx, label, state)
    return Solution(state=state, params=params, trace=trace)


def _slug(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label).strip("_")


def _write_trace(ctx: RunContext, label: str, trace: OptimizerTrace) -> None:
    with ctx.manifest.phase("write"):
        ctx.writer.csv(f"trace_{_slug(label)}", TRACE_HEADER, (record.as_row() for record in trace.records))


def _checkpoint(ctx: RunContext, label: str, state: CmpsState) -> None:
    if not ctx.config.outputs.checkpoint:
        return
    path = ctx.writer.directory / f"{_slug(label)}{CHECKPOINT_SUFFIX}"
    path.parent.mkdir(parents=True, exist_ok=True)
    ctx.writer.track(save_state(state, path))


def _measure(ctx: RunContext, solution: Solution) -> dict[str, Any]:
    """Energies, particle number and boundary residual of a solution."""
    with ctx.manifest.phase("observables"):
        spec = spectral_decompose(solution.state, ctx.config.solver.spectral_tol)
        breakdown = energy(solution.state, spec, solution.params)
        residual = boundary_residual(solution.state, spec, solution.params.Omega)
    final = solution.trace.final
    return {
        "bond_dim": solution.state.dim,
        "energy_total": breakdown.total,
        "energy_bulk": breakdown.bulk,
        "energy_boundary": breakdown.boundary,
        "bulk_energy_density": breakdown.canonical_bulk_density,
        "particle_number": breakdown.particle_number,
        "density": breakdown.density,
        "mu": solution.params.mu,
        "boundary_residual": residual,
        "iterations": 0 if final is None else final.iteration,
        "converged": solution.trace.converged,
    }


def _dimensionless(params: HamiltonianParams, N: float) -> dict[str, float]:
    if N <= 0:
        return {}
    rho = N / params.L
    return {
        "gamma": params.gamma(rho),
        "healing_length": params.healing_length(rho),
        "Lambda": params.barrier_Lambda(N),
        "barrier_lambda": params.barrier_lambda,
    }


def run_ground(ctx: RunContext) -> dict[str, Any]:
    D = ctx.config.ansatz.D
    solution = solve_ground(ctx, initial_state(ctx, D), ctx.config.params, label=f"ground_D{D}")
    measured = _measure(ctx, solution)
    measured.update(_dimensionless(solution.params, measured["particle_number"]))
    with ctx.manifest.phase("write"):
        ctx.writer.json("energy", measured)
    return measured


def _omega_grid(ctx: RunContext) -> np.ndarray:
    experiment = ctx.config.experiment
    return np.linspace(experiment.omega_min, experiment.omega_max, experiment.omega_points)


def _sweep(ctx: RunContext, params: HamiltonianParams, state0: CmpsState, name: str) -> ObservableSeries:
    omegas = _omega_grid(ctx)
    opts = ctx.config.solver
    if opts.target is not None:
        tuned = solve_ground(ctx, state0, params.with_omega(float(omegas[0])), label=f"{name}_mu")
        params, state0 = tuned.params, tuned.state
    ctx.progress.operation_start(f"Sweep {name}")
    with ctx.manifest.phase("solve"):
        series, _ = current_sweep(params, omegas, opts, state0, threads=ctx.runtime.threads)
    assert series.valid is not None and series.currents is not None
    for omega, ok in zip(omegas, series.valid, strict=True):
        ctx.progress.point(f"Ω={omega:.4f}", "converged" if ok else "failed")
    ctx.progress.operation_end(f"Sweep {name}", int(omegas.size))

    shift = series.energy_shift
    assert shift is not None
    with ctx.manifest.phase("write"):
        rows = zip(omegas, shift, series.currents, series.valid, strict=True)
        ctx.writer.csv(name, SWEEP_HEADER, rows)
        ctx.writer.plot(
            name,
            omegas.tolist(),
            {"I/I0": series.currents.tolist()},
            xlabel="Ω",
            ylabel="I / I₀",
        )
    if not np.all(series.valid):
        # excised points stay in the file as valid=false
        logger.warning("run.sweep.invalid_points", name=name, invalid=int(np.count_nonzero(~series.valid)))
    return series


def run_sweep_omega(ctx: RunContext) -> dict[str, Any]:
    """Persistent current I(Ω); one sweep per Lieb parameter when ``gamma_values`` is set."""
    experiment = ctx.config.experiment
    state0 = initial_state(ctx, ctx.config.ansatz.D)
    if not experiment.gamma_values:
        series = _sweep(ctx, ctx.config.params, state0, "sweep")
        return {"alpha": series.alpha, "valid_points": int(np.count_nonzero(series.valid))}

    alphas: list[float | None] = []
    for gamma in experiment.gamma_values:
        model = attrs.evolve(ctx.config.model, c=None, gamma=gamma)
        series = _sweep(ctx, model.params(), state0, f"sweep_gamma{gamma:g}")
        alphas.append(series.alpha)
    finite = [alpha for alpha in alphas if alpha is not None]
    interior = len(finite) == len(alphas) >= 3 and 0 < int(np.argmax(finite)) < len(finite) - 1
    summary = {"gamma_values": list(experiment.gamma_values), "alpha": alphas, "interior_maximum": interior}
    with ctx.manifest.phase("write"):
        ctx.writer.json("alpha", summary)
    return summary


def run_density(ctx: RunContext) -> dict[str, Any]:
    """Density profiles for an increasing list of bond dimensions, each warm-started from the last."""
    dims = sorted(ctx.config.experiment.bond_dims or (ctx.config.ansatz.D,))
    n_points = ctx.config.experiment.n_points
    state = initial_state(ctx, dims[0])
    profiles: dict[str, list[float]] = {}
    x_grid: list[float] = []
    per_dim: list[dict[str, Any]] = []
    for D in dims:
        if state.dim < D:
            state = make_state(D, ctx.L, "warm-start", ctx.config.ansatz.seed, base=state)
        solution = solve_ground(ctx, state, ctx.config.params, label=f"density_D{D}")
        state = solution.state
        with ctx.manifest.phase("observables"):
            spec = spectral_decompose(state, ctx.config.solver.spectral_tol)
            series = density_profile(state, spec, n_points)
            number = particle_number(state, spec)
        assert series.x_grid is not None and series.density is not None
        try:
            sigma: float | None = depletion_width(series.x_grid, series.density, ctx.L)
        except NoDepletionError as e:
            logger.info("run.density.no_depletion", bond_dim=D, reason=str(e))
            sigma = None
        with ctx.manifest.phase("write"):
            ctx.writer.csv(f"density_D{D}", DENSITY_HEADER, zip(series.x_grid, series.density, strict=True))
        x_grid = series.x_grid.tolist()
        profiles[f"D={D}"] = series.density.tolist()
        per_dim.append({"bond_dim": D, "particle_number": number, "sigma": sigma})
    with ctx.manifest.phase("write"):
        ctx.writer.plot("density", x_grid, profiles, xlabel="x", ylabel="ρ(x)")
    return {"profiles": per_dim}


def run_width_scan(ctx: RunContext) -> dict[str, Any]:
    """Depletion width σ(N) at fixed γ and Λ, with a power-law fit."""
    model = ctx.config.model
    state = initial_state(ctx, ctx.config.ansatz.D)
    rows: list[tuple[float, float, float]] = []
    for N in ctx.config.experiment.particle_numbers:
        params = model.params(N=N)
        # uniform mean-field estimate of μ at this density as the bracket centre
        mu0 = 2.0 * params.c * N / params.L + params.U0 / params.L
        target = _default_target(N, ctx.config.solver.target)
        solution = solve_ground(ctx, state, params.with_mu(mu0), label=f"width_N{N:g}", target=target)
        state = solution.state
        with ctx.manifest.phase("observables"):
            spec = spectral_decompose(state, ctx.config.solver.spectral_tol)
            series = density_profile(state, spec, ctx.config.experiment.n_points)
        assert series.x_grid is not None and series.density is not None
        try:
            sigma = depletion_width(series.x_grid, series.density, ctx.L)
            ctx.progress.point(f"N={N:g}", "converged", f"σ={sigma:.4g}")
        except NoDepletionError as e:
            logger.warning("run.width.no_depletion", N=N, reason=str(e))
            ctx.progress.point(f"N={N:g}", "skipped", "no depletion")
            sigma = math.nan
        rows.append((N, sigma, params.healing_length(N / params.L)))

    with ctx.manifest.phase("write"):
        ctx.writer.csv("width", WIDTH_HEADER, rows)
    usable = [(N, sigma) for N, sigma, _ in rows if math.isfinite(sigma) and sigma > 0]
    summary: dict[str, Any] = {"points": len(rows), "usable_points": len(usable)}
    if len(usable) >= 2:
        exponent, amplitude, r_squared = power_law_fit([N for N, _ in usable], [s for _, s in usable])
        summary.update(exponent=exponent, amplitude=amplitude, r_squared=r_squared)
    return summary


def run_eps_scan(ctx: RunContext) -> dict[str, Any]:
    """Boundary energy and boundary residual against the penalty width ε, with linear fits."""
    eps_values = sorted(ctx.config.experiment.eps_values)
    state = initial_state(ctx, ctx.config.ansatz.D)
    rows: list[tuple[float, float, float, float]] = []
    splits: dict[str, dict[str, float]] = {}
    for eps in eps_values:
        params = ctx.config.model.params(eps=eps)
        solution = solve_ground(ctx, state, params, label=f"eps_{eps:g}")
        state = solution.state
        with ctx.manifest.phase("observables"):
            spec = spectral_decompose(state, ctx.config.solver.spectral_tol)
            breakdown = energy(state, spec, solution.params)
            residual = boundary_residual(state, spec, solution.params.Omega)
            splits[f"{eps:g}"] = energy_split(state, spec, solution.params)
        rows.append((eps, breakdown.bulk, breakdown.boundary, residual))

    with ctx.manifest.phase("write"):
        ctx.writer.csv("eps_scan", EPS_HEADER, rows)
        ctx.writer.json("eps_split", {"splits": splits})
        ctx.writer.plot(
            "eps_scan",
            [row[0] for row in rows],
            {"E_boundary": [row[2] for row in rows], "residual": [row[3] for row in rows]},
            xlabel="ε",
            ylabel="value",
        )
    summary: dict[str, Any] = {"points": len(rows)}
    if len(rows) >= 2:
        eps = [row[0] for row in rows]
        for key, column in (("boundary_fit", 2), ("residual_fit", 3)):
            slope, intercept, r_squared = linear_fit(eps, [row[column] for row in rows])
            summary[key] = {"slope": slope, "intercept": intercept, "r_squared": r_squared}
    return summary


def oracle_summary(report: OracleReport) -> dict[str, Any]:
    return {
        "bond_dim": report.dim,
        "seed": report.seed,
        "L": report.L,
        "threshold": report.threshold,
        "passed": report.passed,
        "worst_row": report.worst_row,
        "rows": [
            {"quantity": row.quantity, "error": row.error, "passed": row.passed, "worst_row": row.worst_row}
            for row in report.rows
        ],
        "certification": report.certification,
    }


def run_oracle(ctx: RunContext) -> dict[str, Any]:
    experiment = ctx.config.experiment
    with ctx.manifest.phase("oracle"):
        report = oracle_check(experiment.oracle_dim, experiment.oracle_seed, L=ctx.L)
    summary = oracle_summary(report)
    with ctx.manifest.phase("write"):
        ctx.writer.json("oracle", summary)
    require_pass(report)
    return summary


EXPERIMENT_DRIVERS: dict[str, Callable[[RunContext], dict[str, Any]]] = {
    "ground": run_ground,
    "sweep-omega": run_sweep_omega,
    "density": run_density,
    "width-scan": run_width_scan,
    "eps-scan": run_eps_scan,
    "oracle-check": run_oracle,
}


def run_experiment(
    config: RunConfig,
    runtime: RuntimeConfig,
    *,
    directory: Path,
    resume: Path | None = None,
    cli_context: CLIContext | None = None,
) -> RunResult:
    """Run the configured experiment and leave its files plus ``manifest.json`` in ``directory``.

    On a solver failure the files written so far get a ``.partial`` suffix and the
    manifest records status ``partial`` (or ``failed`` when nothing was written)
    before the error propagates.
    """
    name = config.experiment.name
    seeds: dict[str, int | None] = {"ansatz": config.ansatz.seed}
    if name == "oracle-check":
        seeds["oracle"] = config.experiment.oracle_seed
    manifest = RunManifest(experiment=name, parameters={**config.resolved(), "mass": MASS}, seeds=seeds)
    writer = ResultWriter(directory, config.outputs.formats, plots=runtime.plots)
    ctx = RunContext(
        config=config,
        runtime=runtime,
        writer=writer,
        manifest=manifest,
        progress=ProgressReporter(enabled=runtime.show_progress, cli_context=cli_context),
        resume=resume,
    )
    logger.info(
        "run.experiment.start",
        experiment=name,
        bond_dim=config.ansatz.D,
        directory=str(directory),
        threads=runtime.threads,
    )
    try:
        summary = EXPERIMENT_DRIVERS[name](ctx)
    except OracleError as e:
        # the report is complete; only the verdict failed
        manifest.error = str(e)
        manifest.status = "failed"
        writer.finish(manifest)
        logger.error("run.experiment.failed", experiment=name, status="failed", error=str(e))
        raise
    except (SolverError, NumericsError) as e:
        manifest.error = str(e)
        manifest.status = "partial" if writer.written else "failed"
        if writer.written:
            writer.mark_partial()
        writer.finish(manifest)
        logger.error("run.experiment.failed", experiment=name, status=manifest.status, error=str(e))
        raise
    with manifest.phase("write"):
        writer.json("summary", summary)
    writer.finish(manifest)
    logger.info("run.experiment.complete", experiment=name, files=len(writer.written), wall=manifest.phases)
    return RunResult(directory=directory, manifest=manifest, summary=summary)


# 🐝📁🔚
