"""Two-point nonlinearities and verification of their structural conditions.

A map carries an exponent p > 1 and an evaluation (x, y, r) -> value that
must be antisymmetric under (x, y, r) -> (y, x, -r), strictly increasing in
r, bounded by C(1 + |r|^(p-1)) and coercive against c|r|^p.  User-supplied
maps go through the same interface; ``verify_structure`` is the gate, not
the type system.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _core
from .errors import ConstructionError
from .space import Space

#: Regularization width used inside derivative evaluation only (p < 2 has an
#: unbounded derivative at r = 0; residuals are never regularized).
DERIV_DELTA = 1e-12


def _to_edge_array(r):
    return np.ascontiguousarray(np.atleast_1d(r), dtype=np.float64)


def _scalar_like(template, out):
    return float(out[0]) if np.ndim(template) == 0 else out


def signed_power(r, q):
    """|r|^q * sign(r), vectorized through the active kernel backend."""
    out = _core.active().signed_pow(_to_edge_array(r), float(q))
    return _scalar_like(r, out)


def signed_power_deriv(r, q, delta=DERIV_DELTA):
    out = _core.active().signed_pow_deriv(_to_edge_array(r), float(q), float(delta))
    return _scalar_like(r, out)


@dataclass(frozen=True)
class LerayLionsMap:
    """Integrand a(x, y, r) with exponent, growth and coercivity constants.

    ``eval`` and ``deriv_r`` accept node-index arrays (or scalars) for x, y
    and a broadcast-compatible r.  ``kind`` tags the built-in constructions
    ("plaplacian", "weighted"); solvers that need the convex potential of the
    map only accept those.
    """

    p: float
    c: float
    C: float
    eval: Callable
    deriv_r: Callable | None = None
    positively_homogeneous: bool = False
    kind: str = "custom"
    phi: np.ndarray | None = None

    def edge_factor(self, x, y):
        """Multiplier in front of |r|^(p-2) r for the built-in kinds."""
        if self.kind == "plaplacian":
            return None
        if self.kind == "weighted":
            return 0.5 * (self.phi[x] + self.phi[y])
        raise ValueError("edge_factor is only defined for built-in maps")


@dataclass(frozen=True)
class StructureReport:
    antisymmetry_violation: float
    monotonicity_violation: float
    growth_violation: float
    coercivity_violation: float
    samples_used: int

    def max_violation(self) -> float:
        return max(
            self.antisymmetry_violation,
            self.monotonicity_violation,
            self.growth_violation,
            self.coercivity_violation,
        )


def make_plaplacian(p: float) -> LerayLionsMap:
    """The power nonlinearity |r|^(p-2) r, independent of the node pair."""
    if p <= 1.0:
        raise ConstructionError("exponent p must exceed 1")
    q = p - 1.0

    def _eval(x, y, r):
        return signed_power(r, q)

    def _deriv(x, y, r):
        return signed_power_deriv(r, q)

    return LerayLionsMap(
        p=p, c=1.0, C=1.0, eval=_eval, deriv_r=_deriv,
        positively_homogeneous=True, kind="plaplacian",
    )


def make_weighted_plaplacian(p: float, phi) -> LerayLionsMap:
    """((phi(x) + phi(y)) / 2) |r|^(p-2) r with node weights 0 < c <= phi <= C."""
    if p <= 1.0:
        raise ConstructionError("exponent p must exceed 1")
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    if phi.ndim != 1 or phi.size == 0:
        raise ConstructionError("phi must be a per-node vector")
    if not np.all(np.isfinite(phi)) or np.any(phi <= 0.0):
        raise ConstructionError("phi must be finite and strictly positive")
    q = p - 1.0

    def _eval(x, y, r):
        fac = 0.5 * (phi[x] + phi[y])
        out = signed_power(r, q)
        return fac * out

    def _deriv(x, y, r):
        fac = 0.5 * (phi[x] + phi[y])
        return fac * signed_power_deriv(r, q)

    return LerayLionsMap(
        p=p, c=float(phi.min()), C=float(phi.max()),
        eval=_eval, deriv_r=_deriv,
        positively_homogeneous=True, kind="weighted", phi=phi,
    )


def _sample_values(rng, size):
    """Log-uniform magnitudes over ten decades, both signs, a few exact zeros."""
    vals = 10.0 ** rng.uniform(-6.0, 3.0, size) * rng.choice([-1.0, 1.0], size)
    vals[rng.random(size) < 0.05] = 0.0
    return vals


def verify_structure(
    ap: LerayLionsMap,
    space: Space,
    n_samples: int,
    rng_seed: int,
) -> StructureReport:
    """Max residuals of the four structural conditions over random samples.

    Samples are drawn from the stored entry pairs of the space and from a
    heavy-tailed value distribution including exact zeros.  Deterministic
    given the seed.  Reference powers are computed through the same kernel
    backend as the built-in maps, so exact maps report exactly zero.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(rng_seed)
    ex, ey, _ = space.entry_arrays()
    pick = rng.integers(0, ex.size, n_samples)
    x, y = ex[pick], ey[pick]
    r = _sample_values(rng, n_samples)
    s = _sample_values(rng, n_samples)

    a_r = np.asarray(ap.eval(x, y, r), dtype=np.float64)
    a_s = np.asarray(ap.eval(x, y, s), dtype=np.float64)
    a_rev = np.asarray(ap.eval(y, x, -r), dtype=np.float64)

    anti = np.abs(a_r + a_rev)

    ne = r != s
    mono = np.zeros(n_samples)
    mono[ne] = np.maximum(0.0, -(a_r[ne] - a_s[ne]) * (r[ne] - s[ne]))

    pow_r = np.abs(signed_power(r, ap.p - 1.0))
    growth = np.maximum(0.0, np.abs(a_r) - ap.C * (1.0 + pow_r))
    coercive = np.maximum(0.0, (ap.c * pow_r) * np.abs(r) - a_r * r)

    return StructureReport(
        antisymmetry_violation=float(anti.max()),
        monotonicity_violation=float(mono.max()),
        growth_violation=float(growth.max()),
        coercivity_violation=float(coercive.max()),
        samples_used=n_samples,
    )
