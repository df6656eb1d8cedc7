"""Generalized loops and the loop-series expansion of Z / Z_Bethe.

A generalized loop is an edge subset in which no variable or factor has
induced degree exactly one. Loops are stored as sorted tuples of edge
indices (see ``FactorGraph.edges``).

Two term evaluators are provided: the binary one, built from standardized
spins ``(x - m_i) / sigma_i``, and the general-alphabet one, which sums over
non-reference symbols on every loop edge with the multinomial derivatives

    d log b_i(x) / d theta_y = [x = y] - b_i(y)
    d log b_i(x) / d eta_y   = [x = y] / b_i(y)   (x != 0),   -1 / b_i(0)   (x = 0)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bp import BeliefSet, MessageSet, find_minima
from .errors import EnumerationBoundError, NumericalError, SingularVarianceError
from .exact import brute_force_z
from .factor_graph import FactorGraph
from .zeta import build_edge_weights, correlation_matrix, zeta_bass

__all__ = [
    "GeneralizedLoop",
    "enumerate_generalized_loops",
    "enumerate_simple_loops",
    "loop_cycle_order",
    "loop_term_binary",
    "loop_term_nonbinary",
    "loop_term_trace",
    "theta_derivative",
    "eta_derivative",
    "bethe_transform",
    "orthogonality_check",
    "transform_residual",
    "loop_series_sum",
    "loop_dominance_report",
    "MAX_LOOP_EDGES",
    "MAX_SIMPLE_LOOPS",
]

MAX_LOOP_EDGES = 24
MAX_SIMPLE_LOOPS = 1_000_000


@dataclass(frozen=True)
class GeneralizedLoop:
    edges: tuple[int, ...]
    var_degrees: tuple[int, ...]
    factor_degrees: tuple[int, ...]

    @classmethod
    def from_edges(cls, graph: FactorGraph, edges) -> "GeneralizedLoop":
        edges = tuple(sorted(int(e) for e in edges))
        dv = [0] * graph.num_vars
        df = [0] * graph.num_factors
        for e in edges:
            i, a = graph.edges[e]
            dv[i] += 1
            df[a] += 1
        return cls(edges, tuple(dv), tuple(df))

    def __len__(self):
        return len(self.edges)

    @property
    def is_generalized(self) -> bool:
        return 1 not in self.var_degrees and 1 not in self.factor_degrees

    def is_simple(self, graph: FactorGraph) -> bool:
        """Connected with every induced degree 0 or 2 (the empty set counts)."""
        if any(d not in (0, 2) for d in self.var_degrees + self.factor_degrees):
            return False
        return _connected(graph, self.edges)


def _connected(graph: FactorGraph, edges) -> bool:
    if not edges:
        return True
    parent: dict[tuple[str, int], tuple[str, int]] = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in edges:
        i, a = graph.edges[e]
        ri, ra = find(("v", i)), find(("f", a))
        if ri != ra:
            parent[ri] = ra
    return len({find(x) for x in list(parent)}) == 1


def enumerate_generalized_loops(graph: FactorGraph, max_edges: int = MAX_LOOP_EDGES
                                ) -> list[GeneralizedLoop]:
    """All edge subsets without induced degree-1 nodes, the empty set first.

    Edges are decided in index order; a node whose last incident edge has
    been decided with degree 1 prunes the branch.
    """
    n = graph.num_edges
    if n > max_edges:
        raise EnumerationBoundError(f"|E| = {n} exceeds the loop enumeration bound {max_edges}")
    last_var = {i: max(es) for i, es in enumerate(graph.var_edges) if es}
    last_fac = {a: max(es) for a, es in enumerate(graph.factor_edges)}
    closes: list[list[tuple[str, int]]] = [[] for _ in range(n)]
    for i, e in last_var.items():
        closes[e].append(("v", i))
    for a, e in last_fac.items():
        closes[e].append(("f", a))
    dv = [0] * graph.num_vars
    df = [0] * graph.num_factors
    chosen: list[int] = []
    out: list[GeneralizedLoop] = []

    def ok(e):
        return all((dv[k] if kind == "v" else df[k]) != 1 for kind, k in closes[e])

    def rec(e):
        if e == n:
            out.append(GeneralizedLoop(tuple(chosen), tuple(dv), tuple(df)))
            return
        i, a = graph.edges[e]
        if ok(e):
            rec(e + 1)
        dv[i] += 1
        df[a] += 1
        chosen.append(e)
        if ok(e):
            rec(e + 1)
        chosen.pop()
        dv[i] -= 1
        df[a] -= 1

    rec(0)
    return out


def enumerate_simple_loops(graph: FactorGraph, include_empty: bool = True,
                           max_loops: int = MAX_SIMPLE_LOOPS) -> list[GeneralizedLoop]:
    """Connected loops with all induced degrees in {0, 2}, i.e. simple cycles.

    Cycles are found directly by path search (not by filtering subsets), so
    graphs beyond the subset bound are fine. Each cycle is rooted at its
    smallest edge ``(i0, a0)`` and grown from ``a0`` through larger edges back
    to ``i0``. Output is ordered by length, then by edge tuple.
    """
    adj: dict[tuple[str, int], list[tuple[int, tuple[str, int]]]] = {}
    for e, (i, a) in enumerate(graph.edges):
        adj.setdefault(("v", i), []).append((e, ("f", a)))
        adj.setdefault(("f", a), []).append((e, ("v", i)))
    found: list[tuple[int, ...]] = []
    for e0, (i0, a0) in enumerate(graph.edges):
        target = ("v", i0)
        path = [e0]
        visited = {target, ("f", a0)}

        def rec(node):
            for e, nxt in adj[node]:
                if e <= e0 or e == path[-1]:
                    continue
                if nxt == target:
                    found.append(tuple(sorted(path + [e])))
                    if len(found) > max_loops:
                        raise EnumerationBoundError(f"more than {max_loops} simple loops")
                    continue
                if nxt in visited:
                    continue
                visited.add(nxt)
                path.append(e)
                rec(nxt)
                path.pop()
                visited.discard(nxt)

        rec(("f", a0))
    found.sort(key=lambda t: (len(t), t))
    loops = [GeneralizedLoop.from_edges(graph, t) for t in found]
    if include_empty:
        loops.insert(0, GeneralizedLoop.from_edges(graph, ()))
    return loops


def loop_cycle_order(graph: FactorGraph, loop: GeneralizedLoop):
    """Walk a simple loop: returns ``[(v0, a0), (v1, a1), ...]`` with ``a_k`` joining
    ``v_k`` and ``v_{k+1}``."""
    if not loop.edges:
        return []
    by_var: dict[int, list[int]] = {}
    by_fac: dict[int, list[int]] = {}
    for e in loop.edges:
        i, a = graph.edges[e]
        by_var.setdefault(i, []).append(a)
        by_fac.setdefault(a, []).append(i)
    v0, a0 = graph.edges[loop.edges[0]]
    steps = []
    v, a = v0, a0
    while True:
        steps.append((v, a))
        v = next(x for x in by_fac[a] if x != v)
        a = next(f for f in by_var[v] if f != a)
        if v == v0:
            break
    return steps


def theta_derivative(b: np.ndarray) -> np.ndarray:
    """``h[x, y-1] = d log b(x) / d theta_y`` for ``y = 1..q-1``."""
    q = len(b)
    return np.eye(q)[:, 1:] - b[1:][None, :]


def eta_derivative(b: np.ndarray) -> np.ndarray:
    """``g[x, y-1] = d log b(x) / d eta_y`` for ``y = 1..q-1``."""
    q = len(b)
    if np.any(b <= 0):
        raise NumericalError("belief has a zero entry")
    g = np.eye(q)[:, 1:] / b[1:][None, :]
    g[0, :] = -1.0 / b[0]
    return g


def _assert_degree(loop: GeneralizedLoop, graph: FactorGraph):
    if len(loop.var_degrees) != graph.num_vars:
        raise ValueError("loop does not belong to this graph")


def loop_term_binary(graph: FactorGraph, beliefs: BeliefSet, loop: GeneralizedLoop) -> float:
    """Binary loop term from standardized spins ``(X_i - m_i) / sigma_i``."""
    if graph.q != 2:
        raise ValueError("binary loop terms need q = 2")
    _assert_degree(loop, graph)
    xs = np.array([0.0, 1.0])
    term = 1.0
    z = {}
    for i, d in enumerate(loop.var_degrees):
        if d == 0:
            continue
        b = beliefs.var[i]
        m = b[1]
        var = float(b @ (xs - m) ** 2)
        if var <= 0:
            raise SingularVarianceError(f"variable {i} has zero variance")
        z[i] = (xs - m) / math.sqrt(var)
        term *= float(b @ z[i] ** d)
    in_loop = set(loop.edges)
    for a, d in enumerate(loop.factor_degrees):
        if d == 0:
            continue
        nb = graph.neighbors[a]
        operands = [np.asarray(beliefs.factor[a]), list(range(len(nb)))]
        for k, e in enumerate(graph.factor_edges[a]):
            if e in in_loop:
                operands += [z[nb[k]], [k]]
        term *= float(np.einsum(*operands, []))
    return term


def loop_term_nonbinary(graph: FactorGraph, beliefs: BeliefSet, loop: GeneralizedLoop) -> float:
    """General-alphabet loop term: sum over ``y`` in ``(X \\ 0)^{E'}`` of products of
    variable expectations of eta-derivatives and factor expectations of theta-derivatives."""
    _assert_degree(loop, graph)
    if not loop.edges:
        return 1.0
    operands: list = []
    in_loop = set(loop.edges)
    for i, d in enumerate(loop.var_degrees):
        if d == 0:
            continue
        b = np.asarray(beliefs.var[i])
        g = eta_derivative(b)
        edges = [e for e in graph.var_edges[i] if e in in_loop]
        sub = [b, [0]]
        for k, _ in enumerate(edges):
            sub += [g, [0, k + 1]]
        operands += [np.einsum(*sub, list(range(1, len(edges) + 1))), edges]
    for a, d in enumerate(loop.factor_degrees):
        if d == 0:
            continue
        nb = graph.neighbors[a]
        ba = np.asarray(beliefs.factor[a])
        sub = [ba, list(range(len(nb)))]
        edges = []
        for k, e in enumerate(graph.factor_edges[a]):
            if e in in_loop:
                edges.append(e)
                sub += [theta_derivative(np.asarray(beliefs.var[nb[k]])), [k, len(nb) + len(edges)]]
        out_axes = list(range(len(nb) + 1, len(nb) + 1 + len(edges)))
        operands += [np.einsum(*sub, out_axes), edges]
    return float(np.einsum(*operands, [], optimize=True))


def loop_term_trace(graph: FactorGraph, beliefs: BeliefSet, loop: GeneralizedLoop) -> float:
    """``tr(Cor_{a0}[t_{v0}, t_{v1}] Cor_{a1}[t_{v1}, t_{v2}] ...)`` around a simple loop."""
    if not loop.edges:
        return 1.0
    if not loop.is_simple(graph):
        raise ValueError("trace formula applies to simple loops only")
    steps = loop_cycle_order(graph, loop)
    prod = np.eye(graph.q - 1)
    for k, (v, a) in enumerate(steps):
        w = steps[(k + 1) % len(steps)][0]
        nb = graph.neighbors[a]
        prod = prod @ correlation_matrix(beliefs.factor[a], beliefs.var[v], beliefs.var[w],
                                         nb.index(v), nb.index(w))
    return float(np.trace(prod))


def bethe_transform(b_i: np.ndarray, fac_to_var: np.ndarray, var_to_fac: np.ndarray):
    """Matrices ``phi[x, y]`` and ``phi_hat[y, x]`` of the Bethe transform on one edge.

    Column/row ``y = 0`` carries the messages; the others carry the eta- and
    theta-derivatives of ``log b_i`` scaled by the messages, with
    ``c * c_hat = 1 / Z_{i,a}`` (here ``c = 1``).
    """
    b_i = np.asarray(b_i, dtype=float)
    z_ia = float(fac_to_var @ var_to_fac)
    phi = np.empty((len(b_i), len(b_i)))
    phi_hat = np.empty_like(phi)
    phi[:, 0] = fac_to_var
    phi[:, 1:] = fac_to_var[:, None] * eta_derivative(b_i)
    phi_hat[0, :] = var_to_fac / z_ia
    phi_hat[1:, :] = (var_to_fac[:, None] * theta_derivative(b_i)).T / z_ia
    return phi, phi_hat


def orthogonality_check(b_i, fac_to_var=None) -> float:
    """Max deviation of ``sum_x phi_hat(y, x) phi(x, w)`` from ``delta(y, w)``.

    The variable-to-factor message is implied by the stationarity relation
    ``b_i ~ m_{a->i} m_{i->a}``; without ``fac_to_var`` the split is
    ``m_{a->i} = b_i`` and a flat ``m_{i->a}``.
    """
    b_i = np.asarray(b_i, dtype=float)
    if np.any(b_i <= 0):
        raise NumericalError("orthogonality check needs a strictly positive belief")
    b_i = b_i / b_i.sum()
    m_in = b_i.copy() if fac_to_var is None else np.asarray(fac_to_var, dtype=float)
    m_out = b_i / m_in
    phi, phi_hat = bethe_transform(b_i, m_in, m_out)
    return float(np.max(np.abs(phi_hat @ phi - np.eye(len(b_i)))))


def transform_residual(graph: FactorGraph, messages: MessageSet) -> float:
    """Largest orthogonality residual over all edges, with ``b_i`` taken from each
    edge's message pair."""
    worst = 0.0
    for e in range(graph.num_edges):
        m_in, m_out = messages.fac_to_var[e], messages.var_to_fac[e]
        b = m_in * m_out
        b = b / b.sum()
        phi, phi_hat = bethe_transform(b, m_in, m_out)
        worst = max(worst, float(np.max(np.abs(phi_hat @ phi - np.eye(graph.q)))))
    return worst


def loop_series_sum(graph: FactorGraph, beliefs: BeliefSet, mode: str = "nonbinary",
                    loops: list[GeneralizedLoop] | None = None) -> float:
    """Sum of loop terms over all generalized loops, in enumeration order."""
    if mode == "binary":
        term = loop_term_binary
    elif mode == "nonbinary":
        term = loop_term_nonbinary
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if loops is None:
        loops = enumerate_generalized_loops(graph)
    total = 0.0
    for lp in loops:
        total += term(graph, beliefs, lp)
    return total


def loop_dominance_report(graph, betas, restarts: int = 5, seed: int = 0,
                          damping: float = 0.5, tol: float = 1e-12) -> list[dict]:
    """Per-beta comparison of ``Z/Z_Bethe - 1``, the simple-loop sum and ``sqrt(zeta) - 1``.

    ``graph`` is either a base graph at inverse temperature 1 (tempered by
    each beta) or a callable ``beta -> FactorGraph``.
    """
    build: Callable[[float], FactorGraph] = graph if callable(graph) else graph.tempered
    rows = []
    for beta in betas:
        g = build(beta)
        minima = find_minima(g, restarts, seed, damping, tol)
        if not minima:
            raise NumericalError(f"BP did not converge at beta={beta}")
        res = minima[0]
        log_z = brute_force_z(g)
        excess = math.expm1(log_z - res.log_z_bethe)
        l2 = sum(loop_term_nonbinary(g, res.beliefs, lp)
                 for lp in enumerate_simple_loops(g, include_empty=False))
        zeta_excess = math.expm1(0.5 * zeta_bass(build_edge_weights(g, res.beliefs)))
        rows.append({
            "beta": beta,
            "excess": excess,
            "l2_sum": l2,
            "sqrt_zeta_excess": zeta_excess,
            "residual_ratio": abs(excess - l2) / abs(l2) if l2 else math.nan,
            "zeta_ratio": zeta_excess / excess if excess else math.nan,
            "minima_count": len(minima),
        })
    return rows
