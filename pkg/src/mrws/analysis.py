"""Poincare constants, the unbounded-solution star graph, and the quadratic
energy/boundary identities.

The quadratic Poincare constant is the square root of the largest
generalized eigenvalue of the mean-centered squared norm against the
two-point seminorm, both restricted to the complement of constants (where
the seminorm is definite when the closure is connected through the walk).
The general-p estimator is a ratio maximizer: whatever field it returns is
a witness, so the reported value is always a valid lower bound.

The star construction attaches level nodes to a hub with geometrically
decaying weights and self-loops chosen so that the level measure decays like
3^-n while the flux-to-mass ratio at level n grows like 2^n: bounded data
with unbounded solution, the canonical example of a space without a
quadratic-seminorm Poincare inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .calculus import (
    Field,
    compose_closure_field,
    dirichlet_energy,
    m_divergence,
    neumann_flux,
)
from .elliptic import extend_boundary_gl
from .errors import ConstructionError
from .leray_lions import make_plaplacian, signed_power
from .space import (
    Domain,
    EPS_BOUNDARY,
    Space,
    boundary_mass_into_omega,
    build_graph_space,
    m_boundary,
)

_PRECONDITION_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PoincareReport:
    p: float
    lambda_best: float
    extremal: Field
    exact: bool


def _pair_weights(space: Space, nodes: np.ndarray):
    """Edges of the stored walk with both endpoints in ``nodes``, localized,
    weighted by nu(x) m_x({y})."""
    loc = np.full(space.node_count, -1, dtype=np.int64)
    loc[nodes] = np.arange(nodes.size)
    x, y, p = space.entry_arrays()
    keep = (loc[x] >= 0) & (loc[y] >= 0)
    x, y, p = x[keep], y[keep], p[keep]
    return loc[x], loc[y], space.nu[x] * p


def _rayleigh_forms(space: Space, nodes: np.ndarray, mean_nodes: np.ndarray):
    """Dense forms of ||u - mean||^2 (norm over ``nodes``, nu-mean over
    ``mean_nodes``) and of the two-point seminorm squared."""
    m = nodes.size
    nu = space.nu[nodes]
    loc = np.full(space.node_count, -1, dtype=np.int64)
    loc[nodes] = np.arange(m)
    mvec = np.zeros(m)
    mean_pos = loc[mean_nodes]
    mvec[mean_pos] = space.nu[mean_nodes]
    mvec /= mvec.sum()
    centering = np.eye(m) - np.outer(np.ones(m), mvec)
    A = centering.T @ (nu[:, None] * centering)

    src, dst, w = _pair_weights(space, nodes)
    L = np.zeros((m, m))
    np.add.at(L, (src, src), w)
    np.add.at(L, (dst, dst), w)
    np.add.at(L, (src, dst), -w)
    np.add.at(L, (dst, src), -w)
    return 0.5 * (A + A.T), 0.5 * (L + L.T)


def _exact_quadratic_constant(space, nodes, mean_nodes, p_tag):
    if nodes.size == 1:
        return PoincareReport(p_tag, 0.0, Field(nodes, np.zeros(1)), True)
    A, L = _rayleigh_forms(space, nodes, mean_nodes)
    V = scipy.linalg.null_space(np.ones((1, nodes.size)))
    At = V.T @ A @ V
    Lt = V.T @ L @ V
    Lt = 0.5 * (Lt + Lt.T)
    spectrum = scipy.linalg.eigvalsh(Lt)
    if spectrum[0] <= 1e-12 * max(spectrum[-1], 1.0):
        raise ConstructionError(
            "two-point seminorm is degenerate (node set not connected through the walk)"
        )
    vals, vecs = scipy.linalg.eigh(0.5 * (At + At.T), Lt)
    lam2 = float(vals[-1])
    extremal = V @ vecs[:, -1]
    return PoincareReport(
        p_tag, math.sqrt(max(lam2, 0.0)), Field(nodes, extremal), True
    )


def poincare_p2(space: Space, domain: Domain) -> PoincareReport:
    """Exact quadratic constant: norm over the closure, mean over omega."""
    return _exact_quadratic_constant(space, domain.closure, domain.omega, 2.0)


def boundary_poincare_p2(space: Space, domain: Domain) -> PoincareReport:
    """Exact quadratic constant of the boundary block (norm, mean and
    seminorm all over the boundary)."""
    if domain.boundary.size == 0:
        raise ConstructionError("domain has no boundary nodes")
    return _exact_quadratic_constant(space, domain.boundary, domain.boundary, 2.0)


def poincare_ratio(space: Space, domain: Domain, u: Field, p: float) -> float:
    """||u - mean_omega u||_p(closure) / seminorm_p(u); the quantity the
    probe maximizes and the exact solver bounds."""
    vals = u.values_on(domain.closure)
    nu = space.nu[domain.closure]
    nu_om = space.nu[domain.omega]
    mean = float(np.dot(u.values_on(domain.omega), nu_om) / nu_om.sum())
    num = float(np.dot(np.abs(vals - mean) ** p, nu)) ** (1.0 / p)
    src, dst, w = _pair_weights(space, domain.closure)
    den = float(np.dot(np.abs(vals[dst] - vals[src]) ** p, w)) ** (1.0 / p)
    if den == 0.0:
        raise ConstructionError("seminorm vanishes (constant field)")
    return num / den


def poincare_probe(
    space: Space,
    domain: Domain,
    p: float,
    iterations: int = 500,
    seed: int = 0,
    restarts: int = 20,
) -> PoincareReport:
    """Certified lower bound on the p-Poincare constant by projected ratio
    ascent from random starts; the extremal field witnesses the bound."""
    if p <= 1.0:
        raise ValueError("p must exceed 1")
    rng = np.random.default_rng(seed)
    nodes = domain.closure
    m = nodes.size
    nu = space.nu[nodes]
    nu_om = space.nu[domain.omega]
    loc = np.full(space.node_count, -1, dtype=np.int64)
    loc[nodes] = np.arange(m)
    om_pos = loc[domain.omega]
    src, dst, w = _pair_weights(space, nodes)
    if src.size == 0:
        raise ConstructionError("closure carries no walk edges")
    mean_w = np.zeros(m)
    mean_w[om_pos] = nu_om
    mean_w /= mean_w.sum()

    def center(u):
        return u - float(np.dot(mean_w, u))

    def parts(u):
        cu = center(u)
        num = float(np.dot(np.abs(cu) ** p, nu))
        den = float(np.dot(np.abs(u[dst] - u[src]) ** p, w))
        return cu, num, den

    def log_ratio(u):
        _, num, den = parts(u)
        if num <= 0.0 or den <= 0.0:
            return -np.inf
        return math.log(num) - math.log(den)

    def gradient(u):
        cu, num, den = parts(u)
        gn = nu * signed_power(cu, p - 1.0)
        gn = gn - mean_w * float(gn.sum())
        edge = w * signed_power(u[dst] - u[src], p - 1.0)
        gd = np.zeros(m)
        np.add.at(gd, dst, edge)
        np.add.at(gd, src, -edge)
        return gn / num - gd / den

    starts = [rng.standard_normal(m) for _ in range(max(1, restarts))]
    # concentration witnesses: single-node indicators reach ratios that random
    # starts miss on strongly inhomogeneous spaces
    if m <= 40:
        indicator_pos = range(m)
    else:
        indicator_pos = rng.choice(m, size=40, replace=False)
    for j in indicator_pos:
        e = np.zeros(m)
        e[j] = 1.0
        starts.append(e)

    best_val = -np.inf
    best_u = None
    for u in starts:
        f = log_ratio(u)
        if not np.isfinite(f):
            continue
        step = 0.1
        for _ in range(iterations):
            g = gradient(u)
            gg = float(np.max(np.abs(g)))
            if gg < 1e-14:
                break
            moved = False
            for _ in range(40):
                trial = center(u + step * g)
                norm = float(np.max(np.abs(trial)))
                if norm > 0:
                    trial = trial / norm
                ft = log_ratio(trial)
                if ft > f:
                    u, f = trial, ft
                    step *= 1.3
                    moved = True
                    break
                step *= 0.5
            if not moved:
                break
        if f > best_val:
            best_val = f
            best_u = u.copy()
    if best_u is None:
        raise ConstructionError("every probe start had a vanishing seminorm")
    ratio = math.exp(best_val / p)
    return PoincareReport(p, ratio, Field(nodes, best_u), False)


def build_counterexample(levels: int, p: float):
    """Truncated star with hub weights 7^-n and self-loops 3^-n - 7^-n.

    Returns (space, omega, u, v, flux) where u vanishes at the hub and grows
    like 2^(n/(p-1)) on the levels, flux is the exact boundary flux of u read
    off the constructed rows (its infinite-graph value is (6/7)^n), and v is
    the exact negative divergence at the hub, whose closed form is
    -(12/5)(1 - (2/7)^N) / (1 - 7^-N).
    """
    if levels < 1:
        raise ConstructionError("need at least one level")
    if p <= 1.0:
        raise ConstructionError("exponent p must exceed 1")
    edges = []
    labels = ["x0"]
    for n in range(1, levels + 1):
        edges.append((0, n, 7.0 ** -n))
        edges.append((n, n, 3.0 ** -n - 7.0 ** -n))
        labels.append(f"x{n}")
    space = build_graph_space(edges, labels)
    omega = np.array([0], dtype=np.int64)
    domain = m_boundary(space, omega)

    n_arr = np.arange(1, levels + 1)
    u_vals = np.concatenate([[0.0], 2.0 ** (n_arr / (p - 1.0))])
    u = Field(np.arange(levels + 1, dtype=np.int64), u_vals)

    powers = signed_power(u_vals[1:], p - 1.0)
    hub_targets, hub_probs = space.row(0)
    v0 = -float(np.dot(powers[hub_targets - 1], hub_probs))
    v = Field(omega, np.array([v0]))

    flux_vals = np.empty(levels)
    for i, x in enumerate(domain.boundary):
        targets, probs = space.row(x)
        to_hub = probs[targets == 0][0]
        flux_vals[i] = powers[x - 1] * to_hub
    flux = Field(domain.boundary, flux_vals)
    return space, omega, u, v, flux


def counterexample_truncated_hub_value(levels: int) -> float:
    """Closed form of the hub divergence datum of the truncated star."""
    return -(12.0 / 5.0) * (1.0 - (2.0 / 7.0) ** levels) / (1.0 - 7.0 ** -levels)


def subdifferential_gap_p2(
    space: Space,
    domain: Domain,
    u: Field,
    v: Field,
    w_samples: Sequence[Field],
) -> float:
    """Minimum of F(w) - F(u) - sum_O v (w - u) nu over the samples, where F
    is the quadratic "gl" energy and every sample is extended to the boundary
    by its own homogeneous flux equations.

    (u, v) must satisfy the quadratic homogeneous system; nonnegativity of
    the minimum is the subgradient inequality for F at u.
    """
    map2 = make_plaplacian(2.0)
    scale = 1.0 + float(np.max(np.abs(u.values_on(domain.closure))))
    div = m_divergence(space, domain, map2, u)
    if float(np.max(np.abs(v.values_on(domain.omega) + div.values))) > _PRECONDITION_TOL * scale:
        raise ConstructionError("(u, v) does not satisfy v = -div u on omega")
    bnd_res = neumann_flux(space, domain, map2, u, "gl").values
    if bnd_res.size and float(np.max(np.abs(bnd_res))) > _PRECONDITION_TOL * scale:
        raise ConstructionError("u does not satisfy the homogeneous boundary relation")

    zero_flux = Field.constant(domain.boundary, 0.0)
    nu_om = space.nu[domain.omega]
    f_u = dirichlet_energy(space, domain, u, 2.0, "gl")
    u_om = u.values_on(domain.omega)
    v_om = v.values_on(domain.omega)
    best = np.inf
    for w in w_samples:
        w_int = w.restrict(domain.omega)
        w_bnd = extend_boundary_gl(space, domain, map2, w_int, zero_flux)
        w_full = compose_closure_field(domain, w_int, w_bnd)
        f_w = dirichlet_energy(space, domain, w_full, 2.0, "gl")
        pairing = float(np.dot(v_om * (w_int.values - u_om), nu_om))
        best = min(best, f_w - f_u - pairing)
    return best


def boundary_contraction_check(
    space: Space,
    domain: Domain,
    u1: Field,
    u2: Field,
) -> float:
    """Slack of the quadratic boundary contraction inequality

        sum_O d^2 nu - [ sum_B m_x(omega) d^2 nu
                         + sum_{B x B} (d(y) - d(x))^2 nu(x) m_x({y}) ] >= 0

    for d = u1 - u2, both fields satisfying the homogeneous quadratic
    boundary relation."""
    map2 = make_plaplacian(2.0)
    for u in (u1, u2):
        scale = 1.0 + float(np.max(np.abs(u.values_on(domain.closure))))
        res = neumann_flux(space, domain, map2, u, "gl").values
        if res.size and float(np.max(np.abs(res))) > _PRECONDITION_TOL * scale:
            raise ConstructionError("field does not satisfy the homogeneous boundary relation")
    d_closure = u1.values_on(domain.closure) - u2.values_on(domain.closure)
    d = Field(domain.closure, d_closure)
    nu = space.nu
    lhs = float(np.dot(d.values_on(domain.omega) ** 2, nu[domain.omega]))
    mass = boundary_mass_into_omega(space, domain)
    d_bnd = d.values_on(domain.boundary)
    rhs = float(np.dot(mass * d_bnd ** 2, nu[domain.boundary]))
    src, dst, w = _pair_weights(space, domain.boundary)
    if src.size:
        rhs += float(np.dot((d_bnd[dst] - d_bnd[src]) ** 2, w))
    return lhs - rhs


def lm_infinity_norm(space: Space, domain: Domain, flux: Field) -> float:
    """max |flux| / m_x(omega) over flux-carrying boundary nodes; +inf when
    such a node has (numerically) no one-step mass into omega."""
    vals = np.abs(flux.values_on(domain.boundary))
    active = vals > 0.0
    if not np.any(active):
        return 0.0
    mass = boundary_mass_into_omega(space, domain)[active]
    if np.any(mass <= EPS_BOUNDARY):
        return math.inf
    return float(np.max(vals[active] / mass))
