import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrws import (
    ConstructionError,
    LerayLionsMap,
    build_graph_space,
    make_plaplacian,
    make_weighted_plaplacian,
    verify_structure,
)
from mrws.leray_lions import signed_power

TWO_NODE = build_graph_space([(0, 1, 1.0)])

R_GRID = np.concatenate([[0.0], 10.0 ** np.arange(-6.0, 4.0), -(10.0 ** np.arange(-6.0, 4.0))])


def test_plaplacian_values():
    m3 = make_plaplacian(3.0)
    assert m3.eval(0, 1, 2.0) == pytest.approx(4.0)
    assert m3.eval(0, 1, -2.0) == pytest.approx(-4.0)
    m2 = make_plaplacian(2.0)
    for r in (-3.0, -0.5, 0.0, 0.25, 7.0):
        assert m2.eval(0, 1, r) == r
    assert make_plaplacian(1.5).eval(0, 1, 4.0) == pytest.approx(2.0)


def test_plaplacian_rejects_bad_exponent():
    with pytest.raises(ConstructionError):
        make_plaplacian(1.0)
    with pytest.raises(ConstructionError):
        make_plaplacian(0.5)


def test_weighted_reduces_to_plaplacian():
    p = 2.7
    plain = make_plaplacian(p)
    weighted = make_weighted_plaplacian(p, np.ones(2))
    x = np.zeros(R_GRID.size, dtype=np.int64)
    y = np.ones(R_GRID.size, dtype=np.int64)
    assert np.array_equal(weighted.eval(x, y, R_GRID), plain.eval(x, y, R_GRID))


def test_weighted_average_and_symmetry():
    weighted = make_weighted_plaplacian(2.0, np.array([1.0, 3.0]))
    assert weighted.eval(0, 1, 1.0) == pytest.approx(2.0)
    for r in (-2.0, 0.3, 5.0):
        assert weighted.eval(0, 1, r) == weighted.eval(1, 0, r)
    assert weighted.c == 1.0 and weighted.C == 3.0


def test_weighted_rejects_bad_phi():
    with pytest.raises(ConstructionError):
        make_weighted_plaplacian(2.0, np.array([1.0, 0.0]))
    with pytest.raises(ConstructionError):
        make_weighted_plaplacian(2.0, np.array([1.0, -1.0]))


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_structure_zero_defects_plaplacian(p):
    report = verify_structure(make_plaplacian(p), TWO_NODE, 10_000, rng_seed=1)
    assert report.antisymmetry_violation == 0.0
    assert report.monotonicity_violation == 0.0
    assert report.growth_violation == 0.0
    assert report.coercivity_violation == 0.0
    assert report.samples_used == 10_000


def test_structure_zero_defects_weighted(rng):
    phi = rng.uniform(0.5, 2.0, TWO_NODE.node_count)
    report = verify_structure(make_weighted_plaplacian(3.0, phi), TWO_NODE, 10_000, rng_seed=2)
    assert report.max_violation() == 0.0


def test_structure_flags_adversarial_map():
    # eval = r + 1 breaks antisymmetry at r = 0 by exactly 2
    bad = LerayLionsMap(
        p=2.0, c=1.0, C=2.0,
        eval=lambda x, y, r: np.asarray(r, dtype=np.float64) + 1.0,
    )
    report = verify_structure(bad, TWO_NODE, 5_000, rng_seed=3)
    assert report.antisymmetry_violation >= 2.0


def test_structure_deterministic_given_seed():
    a = verify_structure(make_plaplacian(2.5), TWO_NODE, 500, rng_seed=11)
    b = verify_structure(make_plaplacian(2.5), TWO_NODE, 500, rng_seed=11)
    assert a == b


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_coercivity_exact_on_grid(p):
    # eval(x,y,r) * r >= c |r|^p exactly when both sides share the power
    for map_ in (make_plaplacian(p), make_weighted_plaplacian(p, np.array([1.0, 2.0]))):
        vals = np.asarray(map_.eval(0, 1, R_GRID))
        ref = (map_.c * np.abs(signed_power(R_GRID, p - 1.0))) * np.abs(R_GRID)
        assert np.all(vals * R_GRID - ref >= 0.0)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_deriv_matches_central_differences(p):
    map_ = make_plaplacian(p)
    r = np.concatenate([10.0 ** np.linspace(-3, 3, 25), -(10.0 ** np.linspace(-3, 3, 25))])
    h = 1e-7 * np.abs(r)
    x = np.zeros(r.size, dtype=np.int64)
    y = np.ones(r.size, dtype=np.int64)
    fd = (np.asarray(map_.eval(x, y, r + h)) - np.asarray(map_.eval(x, y, r - h))) / (2 * h)
    an = np.asarray(map_.deriv_r(x, y, r))
    assert np.max(np.abs(fd - an) / np.abs(an)) <= 1e-6


@pytest.mark.parametrize("lam", [0.5, 2.0, 10.0])
@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_positive_homogeneity(lam, p):
    map_ = make_plaplacian(p)
    assert map_.positively_homogeneous
    r = np.array([-5.0, -0.1, 0.2, 3.0])
    x = np.zeros(4, dtype=np.int64)
    y = np.ones(4, dtype=np.int64)
    lhs = np.asarray(map_.eval(x, y, lam * r))
    rhs = lam ** (p - 1.0) * np.asarray(map_.eval(x, y, r))
    assert np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(
    r=st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
    s=st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
    p=st.floats(min_value=1.1, max_value=5.0),
)
def test_plaplacian_scalar_properties(r, s, p):
    map_ = make_plaplacian(p)
    a_r = map_.eval(0, 1, r)
    assert map_.eval(0, 1, 0.0) == 0.0
    # sign is preserved except when the power underflows to zero
    assert a_r == 0.0 or np.sign(a_r) == np.sign(r)
    # antisymmetry and monotonicity
    assert a_r == -map_.eval(1, 0, -r)
    if r != s:
        assert (a_r - map_.eval(0, 1, s)) * (r - s) >= 0.0
