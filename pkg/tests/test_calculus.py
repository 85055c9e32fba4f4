import numpy as np
import pytest

from mrws import (
    ConstructionError,
    Field,
    build_graph_space,
    check_greens_identities,
    dirichlet_energy,
    m_boundary,
    m_divergence,
    make_plaplacian,
    make_weighted_plaplacian,
    neumann_flux,
    nonlocal_gradient,
    pair_integral,
    smoothed_ramp,
)
from conftest import random_closure_field, random_space_domain

TWO_NODE = build_graph_space([(0, 1, 1.0)])
TWO_DOM = m_boundary(TWO_NODE, [0])


def test_field_validation():
    with pytest.raises(ConstructionError):
        Field(np.array([1, 0]), np.array([0.0, 1.0]))
    with pytest.raises(ConstructionError):
        Field(np.array([0, 0]), np.array([0.0, 1.0]))
    with pytest.raises(ConstructionError):
        Field(np.array([0, 1]), np.array([0.0, np.nan]))


def test_field_lookup_errors_outside_support():
    u = Field(np.array([0, 2]), np.array([1.0, 2.0]))
    assert u.value_at(2) == 2.0
    with pytest.raises(KeyError):
        u.value_at(1)
    with pytest.raises(KeyError):
        u.values_on([0, 3])


def test_nonlocal_gradient():
    u = Field(np.array([0, 1, 2]), np.array([2.0, 5.0, 7.0]))
    assert nonlocal_gradient(u, 0, 2) == 5.0
    assert nonlocal_gradient(u, 2, 0) == -5.0
    const = Field.constant([0, 1, 2], 3.3)
    for x in range(3):
        for y in range(3):
            assert nonlocal_gradient(const, x, y) == 0.0


def test_divergence_constant_field_is_zero(rng):
    space, domain = random_space_domain(rng)
    for p in (1.5, 2.0, 3.0):
        div = m_divergence(space, domain, make_plaplacian(p), Field.constant(domain.closure, 2.5))
        assert np.all(div.values == 0.0)


def test_divergence_two_node_examples():
    u = Field(np.array([0, 1]), np.array([0.0, 1.0]))
    div = m_divergence(TWO_NODE, TWO_DOM, make_plaplacian(2.0), u)
    assert div.values.tolist() == [1.0]
    u2 = Field(np.array([0, 1]), np.array([0.0, 2.0]))
    div3 = m_divergence(TWO_NODE, TWO_DOM, make_plaplacian(3.0), u2)
    assert div3.values.tolist() == [4.0]


def test_divergence_requires_full_closure():
    u = Field(np.array([0]), np.array([0.0]))
    with pytest.raises(KeyError):
        m_divergence(TWO_NODE, TWO_DOM, make_plaplacian(2.0), u)


def test_divergence_at_must_be_interior():
    u = Field(np.array([0, 1]), np.array([0.0, 1.0]))
    with pytest.raises(ConstructionError):
        m_divergence(TWO_NODE, TWO_DOM, make_plaplacian(2.0), u, at=[1])


def test_divergence_equals_symmetric_half_form(rng):
    # one-sided row sums agree with the antisymmetrized two-point definition
    for _ in range(10):
        space, domain = random_space_domain(rng)
        p = float(rng.choice([1.5, 2.0, 3.0]))
        map_ = make_plaplacian(p)
        u = random_closure_field(rng, domain)
        div = m_divergence(space, domain, map_, u)
        u_dense = u.dense(space.node_count)
        for node, one_sided in zip(div.support, div.values):
            targets, probs = space.row(node)
            keep = domain.in_closure[targets]
            t, w = targets[keep], probs[keep]
            xs = np.full(t.shape, node, dtype=np.int64)
            forward = np.asarray(map_.eval(xs, t, u_dense[t] - u_dense[node]))
            backward = np.asarray(map_.eval(t, xs, u_dense[node] - u_dense[t]))
            half_form = 0.5 * float(np.dot(forward - backward, w))
            assert abs(half_form - one_sided) <= 1e-13 * (1.0 + abs(one_sided))


def test_map_integrand_vanishes_over_closure_block(rng):
    # a(x, y, u(y) - u(x)) is antisymmetric under the pair swap, so its
    # closure-block integral vanishes by reversibility
    for _ in range(10):
        space, domain = random_space_domain(rng)
        p = float(rng.choice([1.5, 2.0, 3.0]))
        map_ = make_plaplacian(p)
        u_dense = random_closure_field(rng, domain).dense(space.node_count)

        def integrand(xs, ys):
            return np.asarray(map_.eval(xs, ys, u_dense[ys] - u_dense[xs]))

        total = pair_integral(space, domain, "Q1", integrand)
        scale = pair_integral(space, domain, "Q1", lambda xs, ys: np.abs(integrand(xs, ys)))
        assert abs(total) <= 1e-12 * (1.0 + scale)


def test_flux_constant_field_is_zero():
    const = Field.constant([0, 1], 4.0)
    for variant in ("gl", "drov"):
        flux = neumann_flux(TWO_NODE, TWO_DOM, make_plaplacian(3.0), const, variant)
        assert np.all(flux.values == 0.0)


def test_flux_two_node_both_variants():
    u = Field(np.array([0, 1]), np.array([0.0, 1.0]))
    for variant in ("gl", "drov"):
        flux = neumann_flux(TWO_NODE, TWO_DOM, make_plaplacian(2.0), u, variant)
        assert flux.support.tolist() == [1]
        assert flux.values.tolist() == [1.0]


def test_flux_on_truncated_star():
    from mrws import build_counterexample

    N, p = 20, 3.0
    space, omega, u, _, flux = build_counterexample(N, p)
    domain = m_boundary(space, omega)
    for variant in ("gl", "drov"):
        computed = neumann_flux(space, domain, make_plaplacian(p), u, variant)
        assert np.array_equal(computed.values, flux.values)
    # infinite-graph target (6/7)^n, truncation only perturbs the hub row
    target = (6.0 / 7.0) ** np.arange(1, N + 1)
    assert np.max(np.abs(flux.values - target) / target) <= 1e-12


def test_greens_identities_random_instances(rng):
    for _ in range(20):
        space, domain = random_space_domain(rng)
        p = float(rng.choice([1.5, 2.0, 3.0, 4.0]))
        map_ = make_plaplacian(p)
        u = random_closure_field(rng, domain)
        w = random_closure_field(rng, domain)
        for variant in ("gl", "drov"):
            ibp, div = check_greens_identities(space, domain, map_, u, w, variant)
            assert ibp.abs_gap <= 1e-12 * (1.0 + abs(ibp.lhs))
            assert div.abs_gap <= 1e-12 * (1.0 + abs(div.lhs))


def test_greens_constant_w_reduces_to_divergence(rng):
    space, domain = random_space_domain(rng)
    map_ = make_plaplacian(3.0)
    u = random_closure_field(rng, domain)
    w = Field.constant(domain.closure, 1.0)
    ibp, div = check_greens_identities(space, domain, map_, u, w, "gl")
    assert ibp.lhs == pytest.approx(-div.lhs + div.rhs, abs=1e-14)
    assert abs(ibp.rhs) <= 1e-13


def test_greens_constant_u_all_zero(rng):
    space, domain = random_space_domain(rng)
    map_ = make_plaplacian(2.0)
    u = Field.constant(domain.closure, 5.0)
    w = random_closure_field(rng, domain)
    ibp, div = check_greens_identities(space, domain, map_, u, w, "drov")
    assert ibp.lhs == 0.0 and ibp.rhs == 0.0
    assert div.lhs == 0.0 and div.rhs == 0.0


def test_dirichlet_energy_examples():
    u = Field(np.array([0, 1]), np.array([0.0, 1.0]))
    assert dirichlet_energy(TWO_NODE, TWO_DOM, u, 2.0, "gl") == pytest.approx(0.5)
    assert dirichlet_energy(TWO_NODE, TWO_DOM, Field.constant([0, 1], 3.0), 2.0, "gl") == 0.0


def test_dirichlet_energy_scaling(rng):
    space, domain = random_space_domain(rng)
    u = random_closure_field(rng, domain)
    for p in (1.5, 2.0, 3.0):
        base = dirichlet_energy(space, domain, u, p, "gl")
        scaled = dirichlet_energy(space, domain, Field(u.support, 2.0 * u.values), p, "gl")
        assert scaled == pytest.approx(2.0 ** p * base, rel=1e-12)


def test_energy_first_variation_matches_operators(rng):
    # d/dh E(u + h e_x) reproduces -div (interior) and the flux (boundary)
    space, domain = random_space_domain(rng, n_min=5, n_max=9)
    p = 3.0
    map_ = make_plaplacian(p)
    u = random_closure_field(rng, domain)
    div = m_divergence(space, domain, map_, u)
    flux = neumann_flux(space, domain, map_, u, "gl")
    h = 1e-7
    for node in domain.closure:
        bump = u.values.copy()
        bump[u.support == node] += h
        up = Field(u.support, bump)
        bump2 = u.values.copy()
        bump2[u.support == node] -= h
        um = Field(u.support, bump2)
        fd = (
            dirichlet_energy(space, domain, up, p, "gl")
            - dirichlet_energy(space, domain, um, p, "gl")
        ) / (2 * h)
        nu_x = space.nu[node]
        if domain.in_omega[node]:
            assert fd == pytest.approx(-nu_x * div.value_at(node), abs=1e-5)
        else:
            assert fd == pytest.approx(nu_x * flux.value_at(node), abs=1e-5)


def test_monotone_pairing_nonnegative(rng):
    ramp = smoothed_ramp(1e-3, 1.0)
    for _ in range(20):
        space, domain = random_space_domain(rng)
        p = float(rng.choice([1.5, 2.0, 3.0]))
        map_ = make_plaplacian(p)
        u1 = random_closure_field(rng, domain)
        u2 = random_closure_field(rng, domain)
        d1, d2 = u1.dense(space.node_count), u2.dense(space.node_count)
        t = ramp(np.nan_to_num(d1 - d2))

        def integrand(xs, ys):
            a1 = np.asarray(map_.eval(xs, ys, d1[ys] - d1[xs]))
            a2 = np.asarray(map_.eval(xs, ys, d2[ys] - d2[xs]))
            return (a1 - a2) * (t[ys] - t[xs])

        for variant, region in (("gl", "Q1"), ("drov", "Q2")):
            val = 0.5 * pair_integral(space, domain, region, integrand)
            assert val >= -1e-12


def test_smoothed_ramp_shape():
    q = smoothed_ramp(0.1, 2.0)
    r = np.linspace(-5, 5, 2001)
    vals = q(r)
    assert np.all(vals[np.abs(r) <= 0.1] == 0.0)
    # odd, flat beyond the cap, slope bounded by 1
    assert np.allclose(vals, -q(-r))
    assert np.all(vals[r >= 2.0] == vals[r >= 2.0][0])
    slopes = np.diff(vals) / np.diff(r)
    assert np.max(np.abs(slopes)) <= 1.0 + 1e-9
    with pytest.raises(ValueError):
        smoothed_ramp(2.0, 1.0)


def test_weighted_map_in_identities(rng):
    space, domain = random_space_domain(rng)
    phi = rng.uniform(0.5, 2.0, space.node_count)
    map_ = make_weighted_plaplacian(2.5, phi)
    u = random_closure_field(rng, domain)
    w = random_closure_field(rng, domain)
    ibp, div = check_greens_identities(space, domain, map_, u, w, "gl")
    assert ibp.abs_gap <= 1e-12 * (1.0 + abs(ibp.lhs))
    assert div.abs_gap <= 1e-12 * (1.0 + abs(div.lhs))
