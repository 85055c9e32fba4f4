"""Numpy reference implementations of the hot edge kernels.

Same contract as the compiled module ``_kernels``; one of the two is selected
at import time by :mod:`mrws._core`.
"""

from __future__ import annotations

import numpy as np


def signed_pow(r, q):
    """|r|^q * sign(r), elementwise, with 0 mapped to 0 (q > 0)."""
    r = np.asarray(r, dtype=np.float64)
    a = np.abs(r)
    out = np.power(a, q, where=a > 0.0, out=np.zeros_like(a))
    return out * np.sign(r)


def signed_pow_deriv(r, q, delta):
    """d/dr of signed_pow, regularized: q*(r^2 + delta^2)^((q-1)/2)."""
    r = np.asarray(r, dtype=np.float64)
    return q * np.power(r * r + delta * delta, 0.5 * (q - 1.0))


def gather_diff(u, src, dst):
    """Per-edge difference u[dst] - u[src]."""
    return u[dst] - u[src]


def scatter_sum(vals, idx, size):
    """out[i] = sum of vals over edges with idx == i."""
    return np.bincount(idx, weights=vals, minlength=size)


def plap_row_sums(u, src, dst, w, factor, pm1, size):
    """Fused row sums out[x] = sum_e factor_e * |du_e|^(pm1-1) * du_e * w_e.

    ``factor`` may be None (taken as 1).  This is the assembly kernel for the
    built-in power-law nonlinearities.
    """
    d = u[dst] - u[src]
    vals = signed_pow(d, pm1) * w
    if factor is not None:
        vals = vals * factor
    return np.bincount(src, weights=vals, minlength=size)
