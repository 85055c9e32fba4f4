"""Agreement between the compiled kernel core and the numpy fallback."""

import numpy as np
import pytest

from mrws import _core
from mrws._core import _ref

compiled = pytest.importorskip("mrws._core._kernels")


@pytest.fixture
def edge_data(rng):
    n_nodes, n_edges = 50, 400
    u = rng.standard_normal(n_nodes)
    src = rng.integers(0, n_nodes, n_edges).astype(np.int64)
    dst = rng.integers(0, n_nodes, n_edges).astype(np.int64)
    w = rng.uniform(0.1, 1.0, n_edges)
    return u, src, dst, w


@pytest.mark.parametrize("q", [0.5, 1.0, 1.7, 3.0])
def test_signed_pow_agreement(rng, q):
    # libm pow and numpy power may round the last ulp differently; each
    # backend is self-consistent, agreement is to a few ulp
    r = np.concatenate([rng.standard_normal(512) * 10.0 ** rng.integers(-6, 4, 512), [0.0]])
    a = compiled.signed_pow(r, q)
    b = _ref.signed_pow(r, q)
    assert np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)) <= 1e-15
    assert np.array_equal(np.sign(a), np.sign(b))
    assert a[-1] == b[-1] == 0.0


@pytest.mark.parametrize("q", [0.5, 1.0, 3.0])
def test_signed_pow_deriv_agreement(rng, q):
    r = rng.standard_normal(512)
    a = compiled.signed_pow_deriv(r, q, 1e-12)
    b = _ref.signed_pow_deriv(r, q, 1e-12)
    assert np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)) <= 1e-15


def test_gather_scatter_agreement(rng, edge_data):
    u, src, dst, w = edge_data
    assert np.array_equal(compiled.gather_diff(u, src, dst), _ref.gather_diff(u, src, dst))
    vals = rng.standard_normal(src.size)
    assert np.allclose(
        compiled.scatter_sum(vals, src, u.size), _ref.scatter_sum(vals, src, u.size),
        rtol=0, atol=1e-14,
    )


@pytest.mark.parametrize("with_factor", [False, True])
def test_fused_row_sums_agreement(rng, edge_data, with_factor):
    u, src, dst, w = edge_data
    factor = rng.uniform(0.5, 2.0, src.size) if with_factor else None
    pm1 = 2.0
    a = compiled.plap_row_sums(u, src, dst, w, factor, pm1, u.size)
    b = _ref.plap_row_sums(u, src, dst, w, factor, pm1, u.size)
    assert np.allclose(a, b, rtol=0, atol=1e-13)
    # fused kernel vs composition of the primitives
    diffs = _ref.gather_diff(u, src, dst)
    vals = _ref.signed_pow(diffs, pm1) * w
    if factor is not None:
        vals = vals * factor
    composed = _ref.scatter_sum(vals, src, u.size)
    assert np.allclose(a, composed, rtol=0, atol=1e-13)


def test_read_only_inputs_accepted(edge_data):
    u, src, dst, w = edge_data
    for arr in (u, src, dst, w):
        arr.setflags(write=False)
    compiled.plap_row_sums(u, src, dst, w, None, 1.5, u.size)
    compiled.gather_diff(u, src, dst)


def test_backend_switching(rng):
    original = _core.BACKEND
    try:
        _core.set_backend("numpy")
        assert _core.active() is _ref
        _core.set_backend("compiled")
        assert _core.active() is compiled
        with pytest.raises(ValueError):
            _core.set_backend("fortran")
    finally:
        _core.set_backend(original)


def test_solver_results_backend_independent(rng):
    from mrws import EllipticProblem, Field, make_plaplacian, solve_resolvent
    from conftest import random_interior_field, random_space_domain

    space, domain = random_space_domain(rng)
    z = random_interior_field(rng, domain)
    flux = Field(domain.boundary, rng.uniform(-0.5, 0.5, domain.boundary.size))
    problem = EllipticProblem(
        space=space, domain=domain, map=make_plaplacian(3.0), variant="gl",
        lam=1.0, z=z, flux=flux,
    )
    original = _core.BACKEND
    try:
        _core.set_backend("compiled")
        a = solve_resolvent(problem).u.values
        _core.set_backend("numpy")
        b = solve_resolvent(problem).u.values
    finally:
        _core.set_backend(original)
    assert np.max(np.abs(a - b)) <= 1e-13
