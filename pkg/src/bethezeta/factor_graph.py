"""Factor graphs over a common finite alphabet {0, ..., q-1}.

A graph holds ``num_vars`` variables and a list of factors; factor ``a`` has
an ordered neighbour list and a dense nonnegative table of shape
``(q,) * len(neighbors)``. Tables are row-major with the last neighbour
varying fastest, which is also the on-disk layout.

Ising models use the fixed spin encoding ``0 <-> +1`` and ``1 <-> -1``.
"""

from __future__ import annotations

import json
from functools import cached_property
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import GraphError

__all__ = [
    "FactorGraph",
    "build_graph",
    "ising_graph",
    "save_graph",
    "load_graph",
    "read_graph",
    "write_graph",
    "spin",
]

SPINS = np.array([1.0, -1.0])


def spin(x):
    """Map alphabet symbols {0, 1} to Ising spins {+1, -1}."""
    return 1 - 2 * np.asarray(x)


class FactorGraph:
    """Immutable bipartite factor graph.

    Edges are indexed in factor order: edge ``e`` is the incidence of
    factor ``edge_factor[e]`` with variable ``edge_var[e]`` at position
    ``edge_pos[e]`` in that factor's neighbour list.
    """

    def __init__(self, q: int, num_vars: int, neighbors: Sequence[Sequence[int]],
                 tables: Sequence[Any]):
        if int(q) != q or q < 2:
            raise GraphError(f"alphabet size must be an integer >= 2, got {q!r}")
        if int(num_vars) != num_vars or num_vars < 0:
            raise GraphError(f"num_vars must be a nonnegative integer, got {num_vars!r}")
        if len(neighbors) != len(tables):
            raise GraphError("neighbors and tables must have the same length")
        q, num_vars = int(q), int(num_vars)
        nbrs = []
        tabs = []
        for a, (nb, tab) in enumerate(zip(neighbors, tables)):
            nb = tuple(int(i) for i in nb)
            if not nb:
                raise GraphError(f"factor {a}: empty neighbor list")
            if len(set(nb)) != len(nb):
                raise GraphError(f"factor {a}: repeated neighbor in {nb}")
            for i in nb:
                if not 0 <= i < num_vars:
                    raise GraphError(f"factor {a}: neighbor index {i} out of range")
            arr = np.array(tab, dtype=float)
            if arr.size != q ** len(nb):
                raise GraphError(
                    f"factor {a}: table length {arr.size} != q^d = {q ** len(nb)}")
            arr = arr.reshape((q,) * len(nb))
            if not np.all(np.isfinite(arr)):
                raise GraphError(f"factor {a}: non-finite table entry")
            if np.any(arr < 0):
                raise GraphError(f"factor {a}: negative table entry")
            if not np.any(arr > 0):
                raise GraphError(f"factor {a}: table has no positive entry")
            arr.setflags(write=False)
            nbrs.append(nb)
            tabs.append(arr)
        self.q = q
        self.num_vars = num_vars
        self.neighbors = tuple(nbrs)
        self.tables = tuple(tabs)

    # -- structure -----------------------------------------------------

    @property
    def num_factors(self) -> int:
        return len(self.neighbors)

    @cached_property
    def edges(self) -> tuple[tuple[int, int], ...]:
        """Incidences ``(i, a)`` in factor order."""
        return tuple((i, a) for a, nb in enumerate(self.neighbors) for i in nb)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_var(self) -> np.ndarray:
        return np.array([i for i, _ in self.edges], dtype=int)

    @cached_property
    def edge_factor(self) -> np.ndarray:
        return np.array([a for _, a in self.edges], dtype=int)

    @cached_property
    def edge_pos(self) -> np.ndarray:
        return np.array([k for nb in self.neighbors for k in range(len(nb))], dtype=int)

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {ia: e for e, ia in enumerate(self.edges)}

    @cached_property
    def factor_edges(self) -> tuple[tuple[int, ...], ...]:
        """Edge indices of each factor, in neighbour order."""
        out, e = [], 0
        for nb in self.neighbors:
            out.append(tuple(range(e, e + len(nb))))
            e += len(nb)
        return tuple(out)

    @cached_property
    def var_edges(self) -> tuple[tuple[int, ...], ...]:
        """Edge indices incident to each variable, in edge order."""
        out: list[list[int]] = [[] for _ in range(self.num_vars)]
        for e, (i, _) in enumerate(self.edges):
            out[i].append(e)
        return tuple(tuple(x) for x in out)

    @cached_property
    def var_degrees(self) -> np.ndarray:
        return np.array([len(x) for x in self.var_edges], dtype=int)

    @cached_property
    def factor_degrees(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbors], dtype=int)

    @cached_property
    def num_components(self) -> int:
        parent = list(range(self.num_vars + self.num_factors))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i, a in self.edges:
            ri, ra = find(i), find(self.num_vars + a)
            if ri != ra:
                parent[ri] = ra
        return len({find(x) for x in range(len(parent))})

    @property
    def cyclomatic_number(self) -> int:
        """Number of independent cycles of the bipartite graph."""
        return self.num_edges - (self.num_vars + self.num_factors) + self.num_components

    def is_tree(self) -> bool:
        """True if the bipartite graph is acyclic (a forest)."""
        return self.cyclomatic_number == 0

    # -- derived graphs ------------------------------------------------

    def tempered(self, beta: float) -> "FactorGraph":
        """Graph with every table raised to the power ``beta``.

        For a graph built at inverse temperature 1 this is the same model at
        inverse temperature ``beta``. Zero entries stay zero for ``beta > 0``.
        """
        if beta < 0:
            raise GraphError(f"beta must be nonnegative, got {beta}")
        if beta == 0:
            tabs = [np.where(t > 0, 1.0, 0.0) for t in self.tables]
        else:
            tabs = [t ** beta for t in self.tables]
        return FactorGraph(self.q, self.num_vars, self.neighbors, tabs)

    def with_tables(self, tables: Sequence[Any]) -> "FactorGraph":
        return FactorGraph(self.q, self.num_vars, self.neighbors, tables)

    # -- comparison ----------------------------------------------------

    def __eq__(self, other):
        if not isinstance(other, FactorGraph):
            return NotImplemented
        return (self.q == other.q and self.num_vars == other.num_vars
                and self.neighbors == other.neighbors
                and all(np.array_equal(s, o) for s, o in zip(self.tables, other.tables)))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self):
        return (f"FactorGraph(q={self.q}, num_vars={self.num_vars}, "
                f"num_factors={self.num_factors}, num_edges={self.num_edges})")

    def to_description(self) -> dict:
        return {
            "q": self.q,
            "num_vars": self.num_vars,
            "factors": [{"neighbors": list(nb), "table": t.ravel().tolist()}
                        for nb, t in zip(self.neighbors, self.tables)],
        }


def build_graph(description: dict) -> FactorGraph:
    """Build a validated graph from ``{"q", "num_vars", "factors"}``.

    Each factor is ``{"neighbors": [...], "table": [...]}`` with a flat
    row-major table of length ``q ** len(neighbors)``.
    """
    try:
        q = description["q"]
        n = description["num_vars"]
        factors = description.get("factors", [])
        neighbors = [f["neighbors"] for f in factors]
        tables = [f["table"] for f in factors]
    except (KeyError, TypeError, AttributeError) as exc:
        raise GraphError(f"malformed graph description: {exc!r}") from exc
    if not isinstance(q, int) or not isinstance(n, int):
        raise GraphError("q and num_vars must be integers")
    for t in tables:
        if not isinstance(t, (list, tuple)) or any(
                isinstance(v, bool) or not isinstance(v, (int, float)) for v in t):
            raise GraphError("factor tables must be flat lists of numbers")
    return FactorGraph(q, n, neighbors, tables)


def save_graph(graph: FactorGraph) -> str:
    """Serialize to the JSON text format read by :func:`load_graph`."""
    return json.dumps(graph.to_description(), indent=1)


def load_graph(text: str) -> FactorGraph:
    try:
        desc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"cannot parse graph file: {exc}") from exc
    if not isinstance(desc, dict):
        raise GraphError("graph file must contain a JSON object")
    return build_graph(desc)


def write_graph(graph: FactorGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(save_graph(graph))


def read_graph(path) -> FactorGraph:
    with open(path, encoding="utf-8") as fh:
        return load_graph(fh.read())


def _per_item(value, count: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(count, float(arr))
    if arr.shape != (count,):
        raise GraphError(f"{name} must be a scalar or have length {count}")
    return arr


def ising_graph(edge_list: Iterable[tuple[int, int]], J=1.0, h=None, beta: float = 1.0,
                num_vars: int | None = None) -> FactorGraph:
    """Ising model ``exp(beta * (sum J_ij s_i s_j + sum h_i s_i))`` as a factor graph.

    One pair factor per entry of ``edge_list`` followed by one degree-1
    factor per variable with a nonzero field. With ``h`` zero (or None) the
    field factors are omitted entirely.
    """
    pairs = [tuple(int(v) for v in p) for p in edge_list]
    if beta < 0:
        raise GraphError(f"beta must be nonnegative, got {beta}")
    seen = set()
    for p in pairs:
        if len(p) != 2 or p[0] == p[1]:
            raise GraphError(f"invalid pair {p}")
        key = frozenset(p)
        if key in seen:
            raise GraphError(f"duplicate pair entry {p}")
        seen.add(key)
    if num_vars is None:
        num_vars = 1 + max((max(p) for p in pairs), default=-1)
    couplings = _per_item(J, len(pairs), "J")
    fields = _per_item(0.0 if h is None else h, num_vars, "h")

    neighbors: list[tuple[int, ...]] = []
    tables: list[np.ndarray] = []
    ss = np.outer(SPINS, SPINS)
    for p, j in zip(pairs, couplings):
        neighbors.append(p)
        tables.append(np.exp(beta * j * ss))
    for i, hi in enumerate(fields):
        if hi != 0.0:
            neighbors.append((i,))
            tables.append(np.exp(beta * hi * SPINS))
    return FactorGraph(2, num_vars, neighbors, tables)
