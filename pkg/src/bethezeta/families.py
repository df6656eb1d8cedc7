"""Built-in graph families used by the CLI and the test suites.

Random families draw log-potentials ``W`` from a standard normal and use
tables ``exp(beta * W)``, so ``beta`` plays the role of an inverse
temperature everywhere.
"""

from __future__ import annotations

import numpy as np

from .errors import GraphError
from .factor_graph import FactorGraph, ising_graph

__all__ = [
    "ising_cycle",
    "ising_torus",
    "ising_theta",
    "random_cycle",
    "random_tree",
    "random_pairwise",
    "two_triangles",
]


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def ising_cycle(length: int, beta: float, J=1.0, h=None) -> FactorGraph:
    if length < 3:
        raise GraphError("an Ising cycle needs at least 3 spins")
    pairs = [(k, (k + 1) % length) for k in range(length)]
    return ising_graph(pairs, J=J, h=h, beta=beta, num_vars=length)


def ising_torus(width: int, height: int, beta: float, J=1.0, h=None) -> FactorGraph:
    """Periodic ``width x height`` square lattice (both sides >= 3)."""
    if width < 3 or height < 3:
        raise GraphError("torus sides must be >= 3 to avoid parallel bonds")
    pairs = []
    for r in range(height):
        for c in range(width):
            v = r * width + c
            pairs.append((v, r * width + (c + 1) % width))
            pairs.append((v, ((r + 1) % height) * width + c))
    return ising_graph(pairs, J=J, h=h, beta=beta, num_vars=width * height)


def ising_theta(lengths=(1, 2, 3), beta: float = 1.0, J=1.0, h=None) -> FactorGraph:
    """Two hub spins joined by three paths of the given bond counts."""
    if len(lengths) != 3 or min(lengths) < 1 or sorted(lengths)[1] < 2:
        raise GraphError("theta needs three paths, at most one of length 1")
    pairs = []
    n = 2
    for ell in lengths:
        prev = 0
        for _ in range(ell - 1):
            pairs.append((prev, n))
            prev = n
            n += 1
        pairs.append((prev, 1))
    return ising_graph(pairs, J=J, h=h, beta=beta, num_vars=n)


def random_cycle(length: int, q: int, beta: float, seed=None, fields: bool = False
                 ) -> FactorGraph:
    """Single cycle of ``length`` pairwise factors; ``length=2`` gives a double edge."""
    if length < 2:
        raise GraphError("a cycle needs at least two variables")
    rng = _rng(seed)
    neighbors = [(k, (k + 1) % length) for k in range(length)]
    tables = [np.exp(beta * rng.standard_normal((q, q))) for _ in neighbors]
    if fields:
        for i in range(length):
            neighbors.append((i,))
            tables.append(np.exp(beta * rng.standard_normal(q)))
    return FactorGraph(q, length, neighbors, tables)


def random_tree(num_vars: int, q: int, beta: float = 1.0, seed=None,
                field_prob: float = 0.5, triple_prob: float = 0.2) -> FactorGraph:
    """Random acyclic factor graph.

    Variables attach one at a time to a random earlier variable through a
    pairwise factor, or (with ``triple_prob``) two at a time through a
    degree-3 factor. Each variable gets a unary factor with ``field_prob``.
    """
    rng = _rng(seed)
    neighbors: list[tuple[int, ...]] = []
    tables = []
    n = 1
    while n < num_vars:
        parent = int(rng.integers(n))
        if n + 1 < num_vars and rng.random() < triple_prob:
            neighbors.append((parent, n, n + 1))
            tables.append(np.exp(beta * rng.standard_normal((q, q, q))))
            n += 2
        else:
            nb = (parent, n) if rng.random() < 0.5 else (n, parent)
            neighbors.append(nb)
            tables.append(np.exp(beta * rng.standard_normal((q, q))))
            n += 1
    for i in range(num_vars):
        if rng.random() < field_prob:
            neighbors.append((i,))
            tables.append(np.exp(beta * rng.standard_normal(q)))
    return FactorGraph(q, num_vars, neighbors, tables)


def random_pairwise(num_vars: int, q: int, density: float, beta: float = 1.0, seed=None,
                    fields: bool = True, max_edges: int | None = None) -> FactorGraph:
    """Erdos-Renyi pairwise model with Gaussian log-potentials.

    ``max_edges`` caps the number of factor-graph edges (incidences),
    dropping the latest pairs first.
    """
    if not 0 <= density <= 1:
        raise GraphError("density must lie in [0, 1]")
    rng = _rng(seed)
    neighbors: list[tuple[int, ...]] = []
    for i in range(num_vars):
        for j in range(i + 1, num_vars):
            if rng.random() < density:
                neighbors.append((i, j))
    unary = []
    if fields:
        unary = [(i,) for i in range(num_vars) if rng.random() < 0.5]
    if max_edges is not None:
        while neighbors and 2 * len(neighbors) + len(unary) > max_edges:
            neighbors.pop()
        while unary and 2 * len(neighbors) + len(unary) > max_edges:
            unary.pop()
    neighbors += unary
    tables = [np.exp(beta * rng.standard_normal((q,) * len(nb))) for nb in neighbors]
    return FactorGraph(q, num_vars, neighbors, tables)


def two_triangles(beta: float = 1.0, J=1.0) -> FactorGraph:
    """Two Ising triangles sharing spin 0."""
    pairs = [(0, 1), (1, 2), (2, 0), (0, 3), (3, 4), (4, 0)]
    return ising_graph(pairs, J=J, beta=beta)
