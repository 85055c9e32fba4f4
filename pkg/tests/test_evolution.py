import numpy as np
import pytest

from mrws import (
    ConstructionError,
    EvolutionProblem,
    Field,
    SolverError,
    SolverOptions,
    accretivity_probe,
    build_graph_space,
    contraction_gap,
    evolve,
    m_boundary,
    make_plaplacian,
    mass_identity_gap,
    mass_ledger,
)
from conftest import random_interior_field, random_space_domain

TWO_NODE = build_graph_space([(0, 1, 1.0)])
TWO_DOM = m_boundary(TWO_NODE, [0])


def make_problem(space, domain, map_, u0, flux, dt, horizon, variant="gl"):
    return EvolutionProblem(
        space=space, domain=domain, map=map_, variant=variant,
        u0=u0, flux=flux, dt=dt, horizon=horizon,
    )


def test_constant_equilibrium(rng):
    space, domain = random_space_domain(rng)
    problem = make_problem(
        space, domain, make_plaplacian(3.0),
        Field.constant(domain.omega, 1.2), Field.constant(domain.boundary, 0.0),
        dt=0.1, horizon=0.5,
    )
    traj = evolve(problem)
    for field in traj.fields:
        assert np.allclose(field.values, 1.2, atol=1e-13)


def test_two_node_single_step():
    problem = make_problem(
        TWO_NODE, TWO_DOM, make_plaplacian(2.0),
        Field.constant(TWO_DOM.omega, 0.0), Field.constant(TWO_DOM.boundary, 0.5),
        dt=0.1, horizon=0.1,
    )
    traj = evolve(problem)
    assert traj.fields[1].values == pytest.approx([0.05], abs=1e-14)


def test_time_grid_short_last_step():
    problem = make_problem(
        TWO_NODE, TWO_DOM, make_plaplacian(2.0),
        Field.constant(TWO_DOM.omega, 0.0), Field.constant(TWO_DOM.boundary, 0.5),
        dt=0.4, horizon=1.0,
    )
    traj = evolve(problem)
    assert traj.times == pytest.approx([0.0, 0.4, 0.8, 1.0])
    assert all(r.converged for r in traj.step_reports)


def test_per_step_implicit_relation(rng):
    from mrws import m_divergence

    space, domain = random_space_domain(rng)
    p = float(rng.choice([1.5, 2.0, 3.0]))
    map_ = make_plaplacian(p)
    problem = make_problem(
        space, domain, map_, random_interior_field(rng, domain),
        Field.constant(domain.boundary, 0.2), dt=0.05, horizon=0.2,
    )
    opts = SolverOptions(tol_newton=1e-13)
    traj = evolve(problem, opts)
    for k, report in enumerate(traj.step_reports, start=1):
        dt_k = traj.times[k] - traj.times[k - 1]
        div = m_divergence(space, domain, map_, report.u)
        lhs = (traj.fields[k].values - traj.fields[k - 1].values) / dt_k
        scale = 1.0 + np.max(np.abs(traj.fields[k - 1].values)) / dt_k
        assert np.max(np.abs(lhs - div.values)) <= 10 * opts.tol_newton * scale


def test_mass_conservation_zero_flux(rng):
    space, domain = random_space_domain(rng)
    problem = make_problem(
        space, domain, make_plaplacian(3.0), random_interior_field(rng, domain),
        Field.constant(domain.boundary, 0.0), dt=0.1, horizon=1.0,
    )
    traj = evolve(problem)
    ledger = mass_ledger(traj, problem.flux, space, domain)
    scale = 1.0 + np.max(np.abs(traj.masses))
    assert ledger.max_gap <= 1e-12 * scale


def test_mass_ledger_with_flux(rng):
    space, domain = random_space_domain(rng)
    flux = Field(domain.boundary, rng.uniform(-0.5, 0.5, domain.boundary.size))
    problem = make_problem(
        space, domain, make_plaplacian(2.0), random_interior_field(rng, domain),
        flux, dt=0.1, horizon=1.0,
    )
    traj = evolve(problem)
    ledger = mass_ledger(traj, flux, space, domain)
    scale = 1.0 + np.max(np.abs(traj.masses))
    assert ledger.max_gap <= 1e-10 * scale


def test_single_step_ledger_is_resolvent_identity():
    from mrws import EllipticProblem

    flux = Field.constant(TWO_DOM.boundary, 0.7)
    problem = make_problem(
        TWO_NODE, TWO_DOM, make_plaplacian(2.0),
        Field.constant(TWO_DOM.omega, 0.3), flux, dt=0.25, horizon=0.25,
    )
    traj = evolve(problem)
    ledger = mass_ledger(traj, flux, TWO_NODE, TWO_DOM)
    elliptic = EllipticProblem(
        space=TWO_NODE, domain=TWO_DOM, map=problem.map, variant="gl",
        lam=0.25, z=problem.u0, flux=flux,
    )
    assert ledger.gaps[-1] == pytest.approx(
        mass_identity_gap(elliptic, traj.step_reports[0].u), abs=1e-15
    )


def test_contraction_identical_data(rng):
    space, domain = random_space_domain(rng)
    u0 = random_interior_field(rng, domain)
    flux = Field.constant(domain.boundary, 0.1)
    problem = make_problem(space, domain, make_plaplacian(2.0), u0, flux, 0.1, 0.5)
    traj = evolve(problem)
    report = contraction_gap(traj, traj, 2.0)
    assert np.all(report.norms == 0.0)


def test_comparison_principle_ordered_data(rng):
    space, domain = random_space_domain(rng)
    flux = Field(domain.boundary, rng.uniform(-0.3, 0.3, domain.boundary.size))
    base = rng.uniform(-1, 1, domain.omega.size)
    lift = rng.uniform(0.0, 1.0, domain.omega.size)
    pa = make_problem(space, domain, make_plaplacian(3.0),
                      Field(domain.omega, base + lift), flux, 0.1, 0.5)
    pb = make_problem(space, domain, make_plaplacian(3.0),
                      Field(domain.omega, base), flux, 0.1, 0.5)
    ta, tb = evolve(pa), evolve(pb)
    for fa, fb in zip(ta.fields, tb.fields):
        assert np.max(fb.values - fa.values) <= 1e-12


@pytest.mark.parametrize("q", [1.5, 2.0, np.inf])
def test_contraction_norms_nonincreasing(rng, q):
    for _ in range(5):
        space, domain = random_space_domain(rng)
        flux = Field(domain.boundary, rng.uniform(-0.3, 0.3, domain.boundary.size))
        p = float(rng.choice([1.5, 2.0, 3.0]))
        pa = make_problem(space, domain, make_plaplacian(p),
                          random_interior_field(rng, domain), flux, 0.1, 0.5)
        pb = make_problem(space, domain, make_plaplacian(p),
                          random_interior_field(rng, domain), flux, 0.1, 0.5)
        report = contraction_gap(evolve(pa), evolve(pb), q)
        assert report.max_increase <= 1e-9 * (1.0 + report.norms[0])


def test_contraction_rejects_mismatched_grids(rng):
    space, domain = random_space_domain(rng)
    flux = Field.constant(domain.boundary, 0.0)
    u0 = random_interior_field(rng, domain)
    ta = evolve(make_problem(space, domain, make_plaplacian(2.0), u0, flux, 0.1, 0.5))
    tb = evolve(make_problem(space, domain, make_plaplacian(2.0), u0, flux, 0.05, 0.5))
    with pytest.raises(ConstructionError, match="grid"):
        contraction_gap(ta, tb, 2.0)


def test_accretivity_probe_identical_fields(rng):
    space, domain = random_space_domain(rng)
    flux = Field.constant(domain.boundary, 0.2)
    u = random_interior_field(rng, domain)
    val = accretivity_probe(space, domain, make_plaplacian(2.0), flux, "gl", [(u, u)])
    assert val == 0.0


@pytest.mark.parametrize("variant", ["gl", "drov"])
def test_accretivity_probe_random_pairs(rng, variant):
    for p in (1.5, 3.0):
        space, domain = random_space_domain(rng, n_max=10)
        flux = Field(domain.boundary, rng.uniform(-0.5, 0.5, domain.boundary.size))
        pairs = [
            (random_interior_field(rng, domain), random_interior_field(rng, domain))
            for _ in range(10)
        ]
        val = accretivity_probe(space, domain, make_plaplacian(p), flux, variant, pairs)
        assert val >= -1e-12


def test_evolve_aborts_with_partial_trajectory(rng):
    space, domain = random_space_domain(rng)
    problem = make_problem(
        space, domain, make_plaplacian(4.0),
        Field(domain.omega, 5.0 * rng.uniform(1.0, 2.0, domain.omega.size)),
        Field(domain.boundary, 5.0 * rng.uniform(1.0, 2.0, domain.boundary.size)),
        dt=0.5, horizon=2.0,
    )
    with pytest.raises(SolverError) as err:
        evolve(problem, SolverOptions(max_iter=0, tol_newton=1e-16))
    partial = err.value.partial_trajectory
    assert partial.times.size >= 1
    assert not partial.step_reports[-1].converged


def test_evolution_problem_validation():
    with pytest.raises(ConstructionError):
        EvolutionProblem(
            space=TWO_NODE, domain=TWO_DOM, map=make_plaplacian(2.0), variant="gl",
            u0=Field.constant(TWO_DOM.omega, 0.0),
            flux=Field.constant(TWO_DOM.boundary, 0.0),
            dt=1.0, horizon=0.5,
        ).validate()
