"""Implicit-Euler evolution, mass ledger, and contraction/accretivity checks.

Each time step solves the resolvent with parameter dt and the previous
interior field as data, so the discrete scheme satisfies

    (u^k - u^(k-1)) / dt_k = div u^k   on the working set,
    flux(u^k) = phi                    on the boundary,

exactly to solver tolerance.  Summing the interior relation against the node
measure and applying the divergence identity telescopes the mass drift to
t_k * sum_B phi nu, which is what the ledger checks.  Contraction of the
positive part between two trajectories and the probe pairings below are the
numerically checkable shadows of the operator's complete accretivity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ._assembly import ClosureSystem
from .calculus import Field, check_variant, compose_closure_field, m_divergence, smoothed_ramp
from .elliptic import (
    DEFAULT_OPTIONS,
    SolveReport,
    SolverOptions,
    _check_map_structure,
    _solve_on_system,
    extend_boundary_drov,
    extend_boundary_gl,
)
from .errors import ConstructionError, SolverError
from .leray_lions import LerayLionsMap
from .space import Domain, Space


@dataclass(frozen=True, eq=False)
class EvolutionProblem:
    space: Space
    domain: Domain
    map: LerayLionsMap
    variant: str
    u0: Field
    flux: Field
    dt: float
    horizon: float

    def validate(self) -> None:
        check_variant(self.variant)
        if not (self.dt > 0.0) or not (self.horizon > 0.0):
            raise ConstructionError("dt and horizon must be positive")
        if self.dt > self.horizon * (1.0 + 1e-12):
            raise ConstructionError("dt must not exceed the horizon")
        self.u0.values_on(self.domain.omega)
        self.flux.values_on(self.domain.boundary)


@dataclass(frozen=True, eq=False)
class Trajectory:
    problem: EvolutionProblem
    times: np.ndarray
    fields: tuple[Field, ...]
    boundary_traces: tuple[Field, ...]
    masses: np.ndarray
    step_reports: tuple[SolveReport, ...]


@dataclass(frozen=True, eq=False)
class MassLedger:
    times: np.ndarray
    masses: np.ndarray
    gaps: np.ndarray
    max_gap: float


@dataclass(frozen=True, eq=False)
class ContractionReport:
    times: np.ndarray
    norms: np.ndarray
    max_increase: float


def _time_grid(dt: float, horizon: float) -> np.ndarray:
    n_full = int(np.floor(horizon / dt + 1e-12))
    times = dt * np.arange(n_full + 1)
    if horizon - times[-1] > 1e-12 * max(dt, 1.0):
        times = np.append(times, horizon)
    return times


def evolve(problem: EvolutionProblem, options: SolverOptions | None = None) -> Trajectory:
    """Implicit Euler over [0, horizon] with uniform dt (last step may be
    short).  Aborts with the partial trajectory attached to the error if any
    step fails to converge."""
    options = options or DEFAULT_OPTIONS
    problem.validate()
    if options.check_structure:
        _check_map_structure(problem.map, problem.space)
        options = replace(options, check_structure=False)
    cs = ClosureSystem(problem.space, problem.domain)
    domain = problem.domain
    nu_omega = problem.space.nu[domain.omega]
    flux_loc = problem.flux.values_on(domain.boundary)

    times = _time_grid(problem.dt, problem.horizon)
    u_now = problem.u0.values_on(domain.omega)
    fields = [Field(domain.omega, u_now)]
    masses = [float(np.dot(u_now, nu_omega))]
    traces: list[Field] = []
    reports: list[SolveReport] = []
    for k in range(1, times.size):
        dt_k = float(times[k] - times[k - 1])
        u_loc, res, iters, ok = _solve_on_system(
            cs, problem.map, dt_k, u_now, flux_loc, problem.variant, options
        )
        report = SolveReport(
            u=Field(domain.closure, u_loc),
            residual_inf=res,
            iterations=iters,
            converged=ok,
        )
        if not ok:
            partial = Trajectory(
                problem, times[:k + 1].copy(), tuple(fields),
                tuple(traces), np.asarray(masses), tuple(reports) + (report,),
            )
            err = SolverError(
                f"time step {k} (t = {times[k]:.6g}) did not converge "
                f"(residual {res:.3e})"
            )
            err.partial_trajectory = partial
            raise err
        u_now = report.u.values_on(domain.omega)
        fields.append(Field(domain.omega, u_now))
        traces.append(report.u.restrict(domain.boundary))
        masses.append(float(np.dot(u_now, nu_omega)))
        reports.append(report)
    return Trajectory(
        problem, times, tuple(fields), tuple(traces), np.asarray(masses), tuple(reports)
    )


def mass_ledger(trajectory: Trajectory, flux: Field, space: Space, domain: Domain) -> MassLedger:
    """Per-time drift gaps |(mass_k - mass_0) - t_k * sum_B flux nu|."""
    outflow = float(np.dot(flux.values_on(domain.boundary), space.nu[domain.boundary]))
    drift = trajectory.masses - trajectory.masses[0]
    gaps = np.abs(drift - trajectory.times * outflow)
    return MassLedger(trajectory.times, trajectory.masses, gaps, float(gaps.max()))


def _positive_part_norm(diff: np.ndarray, nu: np.ndarray, q: float) -> float:
    pos = np.maximum(diff, 0.0)
    if np.isinf(q):
        return float(pos.max()) if pos.size else 0.0
    return float(np.dot(pos ** q, nu) ** (1.0 / q))


def contraction_gap(traj_a: Trajectory, traj_b: Trajectory, q: float) -> ContractionReport:
    """Norm sequence of the positive part of the difference and its largest
    step-to-step increase (nonpositive up to solver tolerance)."""
    if traj_a.times.shape != traj_b.times.shape or not np.array_equal(
        traj_a.times, traj_b.times
    ):
        raise ConstructionError("trajectories live on different time grids")
    domain = traj_a.problem.domain
    nu = traj_a.problem.space.nu[domain.omega]
    norms = np.array(
        [
            _positive_part_norm(
                fa.values_on(domain.omega) - fb.values_on(domain.omega), nu, q
            )
            for fa, fb in zip(traj_a.fields, traj_b.fields)
        ]
    )
    max_inc = float(np.max(np.diff(norms))) if norms.size > 1 else 0.0
    return ContractionReport(traj_a.times, norms, max_inc)


def accretivity_probe(
    space: Space,
    domain: Domain,
    map_: LerayLionsMap,
    flux: Field,
    variant: str,
    pairs: Sequence[tuple[Field, Field]],
    eps: Sequence[float] = (1e-3, 1e-1),
    cap: Sequence[float] = (1.0, 10.0),
) -> float:
    """Minimum probe pairing sum_O (v1 - v2) q(u1 - u2) nu over the given
    interior field pairs and the ramp family q over eps x cap.

    Each field is extended to the boundary consistently with the (shared)
    flux condition, v_i = -div u_i; the minimum is nonnegative up to
    roundoff because equal boundary fluxes kill the boundary term in the
    integration by parts.
    """
    check_variant(variant)
    probes = [smoothed_ramp(e, m) for e in eps for m in cap if e < m]
    if not probes:
        raise ValueError("empty probe family (need eps < cap)")
    nu_omega = space.nu[domain.omega]
    best = np.inf
    for u1, u2 in pairs:
        full = []
        for u in (u1, u2):
            if variant == "gl":
                bnd = extend_boundary_gl(space, domain, map_, u, flux)
            else:
                bnd = extend_boundary_drov(space, domain, map_, u, flux)
            full.append(compose_closure_field(domain, u, bnd))
        v1 = -m_divergence(space, domain, map_, full[0]).values
        v2 = -m_divergence(space, domain, map_, full[1]).values
        du = full[0].values_on(domain.omega) - full[1].values_on(domain.omega)
        for q in probes:
            pairing = float(np.dot((v1 - v2) * q(du), nu_omega))
            best = min(best, pairing)
    return best
