"""Nonlocal differential operators and their Green-type identities.

For fields on the closure of a domain, the two-point gradient is
u(y) - u(x), the divergence of a map a at an interior node is

    div u(x) = sum_{y in closure} a(x, y, u(y) - u(x)) m_x({y}),

and the boundary flux at a boundary node is the negative of the same sum,
taken over the closure ("gl" variant) or over the working set only ("drov"
variant).  Reversibility of the node measure makes the discrete integration
by parts and divergence identities exact up to roundoff:

    -sum_O div u w nu + sum_B flux(u) w nu
        = 1/2 sum_{(x,y) in Q} a(x, y, u(y)-u(x)) (w(y)-w(x)) nu(x) m_x({y})

with Q the closure product for "gl" and the same set minus the boundary
block for "drov".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConstructionError
from .leray_lions import LerayLionsMap
from .space import Domain, Space, pair_integral

VARIANTS = ("gl", "drov")


def check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    return variant


def variant_region(variant: str) -> str:
    """Pair region carrying the integration-by-parts identity of a variant."""
    return "Q1" if check_variant(variant) == "gl" else "Q2"


@dataclass(frozen=True, eq=False)
class Field:
    """Real values on a sorted node subset; access outside it is an error."""

    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        support = np.ascontiguousarray(self.support, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if support.ndim != 1 or values.shape != support.shape:
            raise ConstructionError("field support and values must be parallel vectors")
        if support.size and np.any(np.diff(support) <= 0):
            raise ConstructionError("field support must be sorted and duplicate-free")
        if not np.all(np.isfinite(values)):
            raise ConstructionError("field values must be finite")
        support.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, nodes: Sequence[int], value: float) -> "Field":
        nodes = np.asarray(nodes, dtype=np.int64)
        return cls(nodes, np.full(nodes.shape, float(value)))

    def _positions(self, nodes) -> np.ndarray:
        nodes = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
        pos = np.searchsorted(self.support, nodes)
        bad = (pos >= self.support.size) | (self.support[np.minimum(pos, self.support.size - 1)] != nodes)
        if np.any(bad):
            missing = nodes[bad]
            raise KeyError(f"field not defined on node(s) {missing.tolist()}")
        return pos

    def value_at(self, node: int) -> float:
        return float(self.values[self._positions(node)[0]])

    def values_on(self, nodes) -> np.ndarray:
        return self.values[self._positions(nodes)]

    def restrict(self, nodes) -> "Field":
        nodes = np.asarray(nodes, dtype=np.int64)
        return Field(nodes, self.values_on(nodes))

    def dense(self, node_count: int) -> np.ndarray:
        """Dense vector with NaN off the support (poisons silent misuse)."""
        out = np.full(node_count, np.nan)
        out[self.support] = self.values
        return out


@dataclass(frozen=True)
class IdentityReport:
    lhs: float
    rhs: float
    abs_gap: float

    @classmethod
    def compare(cls, lhs: float, rhs: float) -> "IdentityReport":
        return cls(float(lhs), float(rhs), abs(float(lhs) - float(rhs)))


def nonlocal_gradient(u: Field, x: int, y: int) -> float:
    """u(y) - u(x); antisymmetric in the node pair."""
    return u.value_at(y) - u.value_at(x)


def compose_closure_field(domain: Domain, interior: Field, boundary: Field) -> Field:
    """Field on the closure from its interior and boundary pieces."""
    vals = np.empty(domain.closure.size)
    pos_omega = np.searchsorted(domain.closure, domain.omega)
    pos_bnd = np.searchsorted(domain.closure, domain.boundary)
    vals[pos_omega] = interior.values_on(domain.omega)
    vals[pos_bnd] = boundary.values_on(domain.boundary)
    return Field(domain.closure, vals)


def _row_pairs(space: Space, sources: np.ndarray, target_mask: np.ndarray):
    """Concatenated (src, dst, prob) triplets of the rows of ``sources``,
    keeping targets selected by ``target_mask``."""
    counts = (space.row_ptr[sources + 1] - space.row_ptr[sources]).astype(np.int64)
    take = np.concatenate(
        [np.arange(space.row_ptr[s], space.row_ptr[s + 1]) for s in sources]
    ) if sources.size else np.empty(0, dtype=np.int64)
    src = np.repeat(sources, counts)
    dst = space.row_idx[take]
    prob = space.row_p[take]
    keep = target_mask[dst]
    return src[keep], dst[keep], prob[keep]


def _row_sums(space, map_, sources, target_mask, u_dense):
    src, dst, prob = _row_pairs(space, sources, target_mask)
    sums = np.zeros(sources.size)
    if src.size == 0:
        return sums
    vals = np.asarray(map_.eval(src, dst, u_dense[dst] - u_dense[src]), dtype=np.float64)
    local = np.searchsorted(sources, src)
    np.add.at(sums, local, vals * prob)
    return sums


def m_divergence(
    space: Space,
    domain: Domain,
    map_: LerayLionsMap,
    u: Field,
    at: Sequence[int] | None = None,
) -> Field:
    """Divergence of the map along u at interior nodes.

    ``u`` must cover the whole closure; ``at`` defaults to the working set
    and must be contained in it.
    """
    u.values_on(domain.closure)
    if at is None:
        nodes = domain.omega
    else:
        nodes = np.unique(np.asarray(at, dtype=np.int64))
        if not np.all(domain.in_omega[nodes]):
            raise ConstructionError("divergence nodes must lie in omega")
    sums = _row_sums(space, map_, nodes, domain.in_closure, u.dense(space.node_count))
    return Field(nodes, sums)


def neumann_flux(
    space: Space,
    domain: Domain,
    map_: LerayLionsMap,
    u: Field,
    variant: str,
) -> Field:
    """Boundary flux of u: the "gl" variant integrates the nonlinearity over
    the whole closure, "drov" over the working set only."""
    check_variant(variant)
    u.values_on(domain.closure)
    mask = domain.in_closure if variant == "gl" else domain.in_omega
    sums = _row_sums(space, map_, domain.boundary, mask, u.dense(space.node_count))
    return Field(domain.boundary, -sums)


def check_greens_identities(
    space: Space,
    domain: Domain,
    map_: LerayLionsMap,
    u: Field,
    w: Field,
    variant: str,
) -> tuple[IdentityReport, IdentityReport]:
    """Integration-by-parts and divergence-theorem reports for (u, w)."""
    check_variant(variant)
    div = m_divergence(space, domain, map_, u)
    flux = neumann_flux(space, domain, map_, u, variant)
    nu = space.nu
    w_omega = w.values_on(domain.omega)
    w_bnd = w.values_on(domain.boundary)

    ibp_lhs = (
        -float(np.dot(div.values * nu[domain.omega], w_omega))
        + float(np.dot(flux.values * nu[domain.boundary], w_bnd))
    )
    u_dense = u.dense(space.node_count)
    w_dense = w.dense(space.node_count)

    def integrand(xs, ys):
        vals = np.asarray(map_.eval(xs, ys, u_dense[ys] - u_dense[xs]), dtype=np.float64)
        return vals * (w_dense[ys] - w_dense[xs])

    ibp_rhs = 0.5 * pair_integral(space, domain, variant_region(variant), integrand)

    div_lhs = float(np.dot(div.values, nu[domain.omega]))
    div_rhs = float(np.dot(flux.values, nu[domain.boundary]))
    return IdentityReport.compare(ibp_lhs, ibp_rhs), IdentityReport.compare(div_lhs, div_rhs)


def dirichlet_energy(
    space: Space,
    domain: Domain,
    u: Field,
    p: float,
    variant: str,
) -> float:
    """(1 / 2p) * sum over the variant region of |u(y) - u(x)|^p.

    For p = 2 and the "gl" variant this is the quadratic boundary-respecting
    energy whose subdifferential is the homogeneous Neumann operator; the
    1/(2p) normalization makes the first variation reproduce the divergence
    and flux operators for every p.
    """
    if p <= 1.0:
        raise ValueError("p must exceed 1")
    u.values_on(domain.closure)
    u_dense = u.dense(space.node_count)

    def integrand(xs, ys):
        return np.abs(u_dense[ys] - u_dense[xs]) ** p

    return pair_integral(space, domain, variant_region(variant), integrand) / (2.0 * p)


def smoothed_ramp(eps: float, cap: float):
    """Odd C^1 ramp: zero on [-eps, eps], slope at most 3/4, flat beyond cap.

    The family over (eps, cap) plays the role of smooth nondecreasing probe
    functions vanishing near zero with compactly supported derivative.
    """
    if not (0.0 <= eps < cap):
        raise ValueError("need 0 <= eps < cap")
    span = cap - eps

    def q(r):
        r = np.asarray(r, dtype=np.float64)
        s = np.clip((np.abs(r) - eps) / span, 0.0, 1.0)
        return np.sign(r) * (span * 0.5 * s * s * (3.0 - 2.0 * s))

    return q
