"""Finite spaces carrying a random walk with a reversible measure.

A space is a finite node set together with a positive node measure ``nu`` and
one sparse probability row per node (the one-step jump law of the node).  The
graph and kernel constructors both produce rows of the form w_xy / d_x with
symmetric weights, for which

    nu(x) * m_x({y}) = w_xy = w_yx = nu(y) * m_y({x}),

i.e. detailed balance holds up to floating-point roundoff, and invariance of
``nu`` under the walk follows.  A domain splits the nodes into a working set,
the set of outside nodes reachable from it in one step, and their union.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConstructionError
from .runtime import blocked_sum

#: Floating-point proxy for "m_x(omega) > 0" when classifying boundary nodes.
EPS_BOUNDARY = 1e-15

_ROW_SUM_TOL = 1e-12

REGIONS = ("Q1", "Q2", "ALL")


@dataclass(frozen=True, eq=False)
class Space:
    """Finite node set with measure ``nu`` and sparse probability rows (CSR)."""

    nu: np.ndarray
    row_ptr: np.ndarray
    row_idx: np.ndarray
    row_p: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        nu = np.ascontiguousarray(self.nu, dtype=np.float64)
        ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        idx = np.ascontiguousarray(self.row_idx, dtype=np.int64)
        prob = np.ascontiguousarray(self.row_p, dtype=np.float64)
        n = nu.shape[0]
        if n == 0:
            raise ConstructionError("space must have at least one node")
        if ptr.shape[0] != n + 1 or idx.shape[0] != prob.shape[0]:
            raise ConstructionError("inconsistent row structure")
        if not np.all(nu > 0.0):
            raise ConstructionError("nu must be strictly positive on every node")
        if np.any(prob < 0.0):
            raise ConstructionError("negative probability entry")
        sums = np.add.reduceat(prob, ptr[:-1]) if prob.size else np.zeros(n)
        sums[np.diff(ptr) == 0] = 0.0
        if np.any(np.abs(sums - 1.0) > _ROW_SUM_TOL):
            raise ConstructionError("every row must sum to 1 within 1e-12")
        for x in range(n):
            row = idx[ptr[x]:ptr[x + 1]]
            if row.size != np.unique(row).size:
                raise ConstructionError(f"duplicate target in row of node {x}")
            if row.size and (row.min() < 0 or row.max() >= n):
                raise ConstructionError(f"target out of range in row of node {x}")
        if self.labels is not None and len(self.labels) != n:
            raise ConstructionError("labels must match node count")
        for arr in (nu, ptr, idx, prob):
            arr.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "row_ptr", ptr)
        object.__setattr__(self, "row_idx", idx)
        object.__setattr__(self, "row_p", prob)

    @property
    def node_count(self) -> int:
        return self.nu.shape[0]

    def row(self, x: int) -> tuple[np.ndarray, np.ndarray]:
        """Targets and probabilities of the jump law at node x."""
        lo, hi = self.row_ptr[x], self.row_ptr[x + 1]
        return self.row_idx[lo:hi], self.row_p[lo:hi]

    def entry_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All stored (x, y, m_x({y})) triplets as parallel arrays."""
        x = np.repeat(np.arange(self.node_count, dtype=np.int64), np.diff(self.row_ptr))
        return x, self.row_idx, self.row_p

    def transition_matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.row_p, self.row_idx, self.row_ptr),
            shape=(self.node_count, self.node_count),
        )

    def label_of(self, x: int) -> str:
        return self.labels[x] if self.labels is not None else str(x)


@dataclass(frozen=True, eq=False)
class Domain:
    """A node subset, the nodes feeding into it, and their union.

    ``interior_leak`` is the largest one-step probability of jumping from the
    working set to a node outside the union; operators restrict all sums to
    the union, so the leak quantifies the restriction error on spaces where
    it is not exactly zero.
    """

    node_count: int
    omega: np.ndarray
    boundary: np.ndarray
    closure: np.ndarray
    interior_leak: float

    @cached_property
    def in_omega(self) -> np.ndarray:
        mask = np.zeros(self.node_count, dtype=bool)
        mask[self.omega] = True
        return mask

    @cached_property
    def in_boundary(self) -> np.ndarray:
        mask = np.zeros(self.node_count, dtype=bool)
        mask[self.boundary] = True
        return mask

    @cached_property
    def in_closure(self) -> np.ndarray:
        mask = np.zeros(self.node_count, dtype=bool)
        mask[self.closure] = True
        return mask


@dataclass(frozen=True)
class BalanceReport:
    max_reversibility_violation: float
    max_invariance_violation: float


@dataclass(frozen=True)
class GridSpec:
    """Uniform 1-D or 2-D grid: origin, spacing and points per axis."""

    dim: int
    shape: tuple[int, ...]
    h: float
    origin: tuple[float, ...] | None = None

    def points(self) -> np.ndarray:
        if self.dim not in (1, 2):
            raise ConstructionError("grid dim must be 1 or 2")
        if len(self.shape) != self.dim or any(s < 1 for s in self.shape):
            raise ConstructionError("grid shape must give a positive extent per axis")
        if self.h <= 0:
            raise ConstructionError("grid spacing must be positive")
        origin = self.origin if self.origin is not None else (0.0,) * self.dim
        axes = [origin[d] + self.h * np.arange(self.shape[d]) for d in range(self.dim)]
        if self.dim == 1:
            return axes[0][:, None]
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])


def build_graph_space(
    edges: Sequence[tuple[int, int, float]],
    labels: Sequence[str] | None = None,
) -> Space:
    """Space of a weighted undirected graph: nu(x) = d_x, rows w_xy / d_x.

    Each undirected edge is listed once; self-loops (x, x, w) are allowed and
    contribute w to d_x once.
    """
    if not edges:
        raise ConstructionError("edge list is empty")
    n = 0
    for i, j, _ in edges:
        n = max(n, int(i) + 1, int(j) + 1)
    adj: list[dict[int, float]] = [dict() for _ in range(n)]
    seen = set()
    for i, j, w in edges:
        i, j, w = int(i), int(j), float(w)
        if w <= 0.0 or not np.isfinite(w):
            raise ConstructionError(f"nonpositive weight on edge ({i}, {j})")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ConstructionError(f"edge ({i}, {j}) listed more than once")
        seen.add(key)
        adj[i][j] = w
        if i != j:
            adj[j][i] = w

    degree = np.array([sum(row.values()) for row in adj])
    if np.any(degree <= 0.0):
        isolated = int(np.argmin(degree))
        raise ConstructionError(f"isolated node {isolated} (zero incident weight)")

    # connectivity through non-loop edges
    visited = np.zeros(n, dtype=bool)
    stack = [0]
    visited[0] = True
    while stack:
        x = stack.pop()
        for y in adj[x]:
            if not visited[y]:
                visited[y] = True
                stack.append(y)
    if not visited.all():
        raise ConstructionError("graph is not connected")

    ptr = np.zeros(n + 1, dtype=np.int64)
    idx_parts, p_parts = [], []
    for x in range(n):
        targets = np.array(sorted(adj[x]), dtype=np.int64)
        weights = np.array([adj[x][t] for t in targets])
        idx_parts.append(targets)
        p_parts.append(weights / degree[x])
        ptr[x + 1] = ptr[x] + targets.size
    return Space(
        nu=degree,
        row_ptr=ptr,
        row_idx=np.concatenate(idx_parts),
        row_p=np.concatenate(p_parts),
        labels=tuple(labels) if labels is not None else None,
    )


def build_kernel_space(
    grid: GridSpec,
    J: Callable[[np.ndarray], np.ndarray],
    support_radius: float,
) -> Space:
    """Space discretizing a radial-kernel walk on a uniform grid.

    Midpoint quadrature turns the kernel into symmetric weights
    w_xy = J(|x - y|) * h^dim for grid points within ``support_radius``;
    the result is then built exactly like a weighted graph, so reversibility
    is exact by construction.  The diagonal point r = 0 is excluded (its
    contribution to every operator vanishes anyway).
    """
    if support_radius <= grid.h:
        raise ConstructionError("support radius must exceed the grid spacing")
    pts = grid.points()
    n = pts.shape[0]
    cell = grid.h ** grid.dim
    edges: list[tuple[int, int, float]] = []
    for i in range(n):
        diff = pts[i + 1:] - pts[i]
        dist = np.sqrt((diff * diff).sum(axis=1))
        near = np.nonzero(dist <= support_radius)[0]
        if near.size == 0:
            continue
        vals = np.asarray(J(dist[near]), dtype=np.float64)
        if np.any(vals < 0.0):
            raise ConstructionError("kernel evaluates negative inside its support")
        for k, v in zip(near, vals):
            if v > 0.0:
                edges.append((i, i + 1 + int(k), float(v * cell)))
    if not edges:
        raise ConstructionError("empty support: no positive-weight neighbor pairs")
    covered = np.zeros(n, dtype=bool)
    for i, j, _ in edges:
        covered[i] = covered[j] = True
    if not covered.all():
        raise ConstructionError("empty support at some grid point")
    return build_graph_space(edges)


def check_balance(space: Space) -> BalanceReport:
    """Exact maxima of the detailed-balance and invariance residuals."""
    P = space.transition_matrix()
    weighted = P.multiply(space.nu[:, None]).tocsr()
    skew = (weighted - weighted.T).tocoo()
    rev = float(np.max(np.abs(skew.data))) if skew.nnz else 0.0
    inv = float(np.max(np.abs(space.nu - P.T @ space.nu)))
    return BalanceReport(rev, inv)


def m_boundary(
    space: Space,
    omega: Sequence[int],
    eps_boundary: float = EPS_BOUNDARY,
    max_interior_leak: float | None = None,
) -> Domain:
    """Split nodes into omega, the nodes jumping into it, and their union."""
    omega = np.unique(np.asarray(omega, dtype=np.int64))
    if omega.size == 0:
        raise ConstructionError("omega is empty")
    if omega[0] < 0 or omega[-1] >= space.node_count:
        raise ConstructionError("omega contains node indices out of range")
    n = space.node_count
    chi = np.zeros(n)
    chi[omega] = 1.0
    mass_into_omega = space.transition_matrix() @ chi

    outside = np.ones(n, dtype=bool)
    outside[omega] = False
    boundary = np.nonzero(outside & (mass_into_omega > eps_boundary))[0]
    closure = np.union1d(omega, boundary)

    chi_out = np.ones(n)
    chi_out[closure] = 0.0
    leak_per_node = space.transition_matrix() @ chi_out
    interior_leak = float(np.max(leak_per_node[omega]))
    if max_interior_leak is not None and interior_leak > max_interior_leak:
        raise ConstructionError(
            f"interior leak {interior_leak:.3e} exceeds allowed {max_interior_leak:.3e}"
        )
    return Domain(
        node_count=n,
        omega=omega,
        boundary=boundary.astype(np.int64),
        closure=closure.astype(np.int64),
        interior_leak=interior_leak,
    )


def boundary_mass_into_omega(space: Space, domain: Domain) -> np.ndarray:
    """m_x(omega) for each boundary node x, in boundary order."""
    chi = np.zeros(space.node_count)
    chi[domain.omega] = 1.0
    return (space.transition_matrix() @ chi)[domain.boundary]


def pair_integral(
    space: Space,
    domain: Domain,
    region: str,
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> float:
    """Sum of g(x, y) * nu(x) * m_x({y}) over the product region.

    ``region`` is "Q1" (closure x closure), "Q2" (Q1 minus boundary x
    boundary) or "ALL".  ``integrand`` receives parallel node-index arrays
    and must evaluate elementwise.
    """
    if region not in REGIONS:
        raise ValueError(f"region must be one of {REGIONS}")
    x, y, p = space.entry_arrays()
    if region != "ALL":
        keep = domain.in_closure[x] & domain.in_closure[y]
        if region == "Q2":
            keep &= ~(domain.in_boundary[x] & domain.in_boundary[y])
        x, y, p = x[keep], y[keep], p[keep]
    if x.size == 0:
        return 0.0
    vals = np.asarray(integrand(x, y), dtype=np.float64) * space.nu[x] * p
    return blocked_sum(vals)
