import math

import numpy as np
import pytest
import scipy.linalg

from mrws import Field, build_graph_space, m_boundary


def random_graph_space(rng, n_min=4, n_max=12, self_loop_prob=0.15):
    """Connected weighted graph: random attachment tree plus extra edges."""
    n = int(rng.integers(n_min, n_max + 1))
    edges = [(i, int(rng.integers(0, i)), float(rng.uniform(0.5, 2.0))) for i in range(1, n)]
    seen = {(min(i, j), max(i, j)) for i, j, _ in edges}
    for _ in range(int(rng.integers(0, n))):
        i, j = int(rng.integers(0, n)), int(rng.integers(0, n))
        key = (min(i, j), max(i, j))
        if i == j or key in seen:
            continue
        seen.add(key)
        edges.append((i, j, float(rng.uniform(0.5, 2.0))))
    for i in range(n):
        if (i, i) not in seen and rng.random() < self_loop_prob:
            seen.add((i, i))
            edges.append((i, i, float(rng.uniform(0.2, 1.0))))
    return build_graph_space(edges)


def random_space_domain(rng, n_min=4, n_max=12, self_loop_prob=0.15):
    """Space plus a domain with a nonempty boundary."""
    space = random_graph_space(rng, n_min, n_max, self_loop_prob)
    n = space.node_count
    while True:
        size = int(rng.integers(1, n))
        omega = np.sort(rng.choice(n, size=size, replace=False))
        domain = m_boundary(space, omega)
        if domain.boundary.size > 0:
            return space, domain


def random_closure_field(rng, domain, lo=-1.0, hi=1.0):
    return Field(domain.closure, rng.uniform(lo, hi, domain.closure.size))


def random_interior_field(rng, domain, lo=-1.0, hi=1.0):
    return Field(domain.omega, rng.uniform(lo, hi, domain.omega.size))


def dense_eigen_oracle(space, nodes, mean_nodes):
    """Independent Rayleigh-quotient maximum: both quadratic forms assembled
    by explicit loops, then a dense generalized eigensolve on the complement
    of constants."""
    m = nodes.size
    loc = {int(n): i for i, n in enumerate(nodes)}
    mean_weights = np.zeros(m)
    for n in mean_nodes:
        mean_weights[loc[int(n)]] = space.nu[int(n)]
    mean_weights /= mean_weights.sum()
    A = np.zeros((m, m))
    for x in nodes:
        i = loc[int(x)]
        e = np.zeros(m)
        e[i] = 1.0
        row = e - mean_weights
        A += space.nu[int(x)] * np.outer(row, row)
    L = np.zeros((m, m))
    for x in nodes:
        targets, probs = space.row(int(x))
        for t, w in zip(targets, probs):
            if int(t) not in loc:
                continue
            i, j = loc[int(x)], loc[int(t)]
            d = np.zeros(m)
            d[j] += 1.0
            d[i] -= 1.0
            L += space.nu[int(x)] * w * np.outer(d, d)
    V = scipy.linalg.null_space(np.ones((1, m)))
    vals = scipy.linalg.eigh(V.T @ A @ V, V.T @ L @ V, eigvals_only=True)
    return math.sqrt(max(float(vals[-1]), 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
