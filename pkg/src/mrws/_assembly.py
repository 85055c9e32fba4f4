"""Precomputed local index structures for solves over one (space, domain).

Unknowns live on the closure in sorted order; edges are the stored row
entries with both endpoints in the closure.  The "gl" variant keeps every
edge in boundary rows, "drov" drops boundary-to-boundary edges there (an
interior source never forms a boundary-boundary pair, so interior rows are
identical under both masks).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import _core
from .calculus import check_variant
from .leray_lions import LerayLionsMap
from .space import Domain, Space


class ClosureSystem:
    def __init__(self, space: Space, domain: Domain):
        self.space = space
        self.domain = domain
        nodes = domain.closure
        self.nodes = nodes
        self.size = nodes.size
        loc = np.full(space.node_count, -1, dtype=np.int64)
        loc[nodes] = np.arange(self.size, dtype=np.int64)
        self.loc = loc
        self.interior = domain.in_omega[nodes]
        self.nu = space.nu[nodes].astype(np.float64)

        x, y, p = space.entry_arrays()
        keep = domain.in_closure[x] & domain.in_closure[y]
        src_g, dst_g, prob = x[keep], y[keep], p[keep]
        q2 = domain.in_omega[src_g] | domain.in_omega[dst_g]

        self._edges = {}
        for variant, mask in (("gl", slice(None)), ("drov", q2)):
            sg, dg, pr = src_g[mask], dst_g[mask], prob[mask]
            self._edges[variant] = {
                "src_g": sg,
                "dst_g": dg,
                "src": loc[sg],
                "dst": loc[dg],
                "prob": pr.astype(np.float64),
            }

    def edges(self, variant: str) -> dict:
        return self._edges[check_variant(variant)]

    def row_sums(self, map_: LerayLionsMap, u_loc: np.ndarray, variant: str) -> np.ndarray:
        """S(x) = sum over kept edges of a(x, y, u(y) - u(x)) m_x({y})."""
        e = self.edges(variant)
        if map_.kind in ("plaplacian", "weighted"):
            factor = map_.edge_factor(e["src_g"], e["dst_g"])
            return _core.active().plap_row_sums(
                u_loc, e["src"], e["dst"], e["prob"], factor, map_.p - 1.0, self.size
            )
        diffs = u_loc[e["dst"]] - u_loc[e["src"]]
        vals = np.asarray(map_.eval(e["src_g"], e["dst_g"], diffs), dtype=np.float64)
        return _core.active().scatter_sum(vals * e["prob"], e["src"], self.size)

    def edge_derivs(self, map_: LerayLionsMap, u_loc: np.ndarray, variant: str) -> np.ndarray:
        """a'(x, y, u(y) - u(x)) per kept edge; central differences with step
        1e-6 * (1 + |r|) when the map carries no derivative."""
        e = self.edges(variant)
        diffs = u_loc[e["dst"]] - u_loc[e["src"]]
        if map_.deriv_r is not None:
            return np.asarray(map_.deriv_r(e["src_g"], e["dst_g"], diffs), dtype=np.float64)
        h = 1e-6 * (1.0 + np.abs(diffs))
        hi = np.asarray(map_.eval(e["src_g"], e["dst_g"], diffs + h), dtype=np.float64)
        lo = np.asarray(map_.eval(e["src_g"], e["dst_g"], diffs - h), dtype=np.float64)
        return (hi - lo) / (2.0 * h)

    def row_sums_jacobian(self, map_: LerayLionsMap, u_loc: np.ndarray, variant: str) -> sp.csr_matrix:
        """dS/du as a sparse matrix (self-loop contributions cancel exactly)."""
        e = self.edges(variant)
        d = self.edge_derivs(map_, u_loc, variant) * e["prob"]
        rows = np.concatenate([e["src"], e["src"]])
        cols = np.concatenate([e["dst"], e["src"]])
        data = np.concatenate([d, -d])
        return sp.coo_matrix((data, (rows, cols)), shape=(self.size, self.size)).tocsr()

    def pack_rhs(self, z_loc_interior: np.ndarray, flux_loc_boundary: np.ndarray) -> np.ndarray:
        rhs = np.empty(self.size)
        rhs[self.interior] = z_loc_interior
        rhs[~self.interior] = flux_loc_boundary
        return rhs

    def potential_energy(self, map_: LerayLionsMap, u_loc: np.ndarray, variant: str) -> float:
        """(1/2) sum over kept edges of factor * |du|^p / p * nu(x) m_x({y});
        its first variation is minus the nu-weighted row sums."""
        if map_.kind not in ("plaplacian", "weighted"):
            raise ValueError("potential energy requires a built-in power-law map")
        e = self.edges(variant)
        diffs = u_loc[e["dst"]] - u_loc[e["src"]]
        vals = np.abs(diffs) ** map_.p / map_.p
        factor = map_.edge_factor(e["src_g"], e["dst_g"])
        if factor is not None:
            vals = vals * factor
        w = self.nu[e["src"]] * e["prob"]
        return 0.5 * float(np.dot(vals, w))
