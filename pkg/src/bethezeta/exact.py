"""Exact partition functions by enumeration, transfer matrices and the
Ising high-temperature (even-subgraph) expansion.

Every partition value is returned as ``log Z``. Enumeration runs over
chunks of at most ``2**CHUNK_LOG2`` configurations in a fixed order, and
chunk sums are merged with a running max shift, so results do not depend on
how the space is split.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import EnumerationBoundError, NotIsingError, NotSingleCycleError, NumericalError
from .factor_graph import FactorGraph

__all__ = [
    "ExactResult",
    "brute_force_z",
    "brute_force_marginals",
    "gibbs_free_energy",
    "log_weights",
    "transfer_matrix_z",
    "transfer_matrix_order",
    "ising_high_temp_z",
    "ising_couplings",
    "MAX_LOG2_STATES",
    "MAX_SUBSET_EDGES",
]

MAX_LOG2_STATES = 30
MAX_SUBSET_EDGES = 24
CHUNK_LOG2 = 20


@dataclass
class ExactResult:
    log_z: float
    marginals: np.ndarray  # (num_vars, q)
    factor_marginals: list[np.ndarray] = field(default_factory=list)


def _check_bound(graph: FactorGraph, max_log2: float = MAX_LOG2_STATES) -> None:
    bits = graph.num_vars * math.log2(graph.q)
    if bits > max_log2 + 1e-9:
        raise EnumerationBoundError(
            f"q^N = {graph.q}^{graph.num_vars} exceeds the enumeration bound 2^{max_log2}")


def _split(graph: FactorGraph) -> int:
    """Number of leading variables enumerated in the outer loop."""
    n, q = graph.num_vars, graph.q
    k = 0
    while (n - k) * math.log2(q) > CHUNK_LOG2:
        k += 1
    return k


def _chunk_log_weights(graph: FactorGraph, prefix: tuple[int, ...]) -> np.ndarray:
    """Log-weights over the trailing variables with the leading ones fixed."""
    k = len(prefix)
    m = graph.num_vars - k
    logw = np.zeros((graph.q,) * m)
    with np.errstate(divide="ignore"):
        for nb, table in zip(graph.neighbors, graph.tables):
            idx = tuple(prefix[v] if v < k else slice(None) for v in nb)
            sub = np.log(table[idx])
            trail = [v - k for v in nb if v >= k]
            order = np.argsort(trail)
            sub = np.transpose(sub, order)
            shape = [1] * m
            for v in trail:
                shape[v] = graph.q
            logw = logw + sub.reshape(shape)
    return logw


def _chunks(graph: FactorGraph):
    k = _split(graph)
    for prefix in itertools.product(range(graph.q), repeat=k):
        yield prefix, _chunk_log_weights(graph, prefix)


def log_weights(graph: FactorGraph) -> np.ndarray:
    """Full array of ``log prod_a f_a(x)`` with one axis per variable."""
    _check_bound(graph, CHUNK_LOG2 + 4)
    return _chunk_log_weights(graph, ())


def brute_force_z(graph: FactorGraph) -> float:
    """``log sum_x prod_a f_a(x)`` by exhaustive enumeration."""
    _check_bound(graph)
    running = -np.inf
    for _, logw in _chunks(graph):
        running = np.logaddexp(running, logsumexp(logw))
    if not np.isfinite(running):
        raise NumericalError("Z = 0: the factor product vanishes everywhere")
    return float(running)


def _accumulate(target, keep, p, prefix):
    k = len(prefix)
    trail = [v - k for v in keep if v >= k]
    s = np.einsum(p, list(range(p.ndim)), trail)
    idx = tuple(prefix[v] if v < k else slice(None) for v in keep)
    target[idx] += s


def brute_force_marginals(graph: FactorGraph) -> ExactResult:
    """Exact variable marginals and per-factor joint marginals."""
    log_z = brute_force_z(graph)
    q = graph.q
    marg = np.zeros((graph.num_vars, q))
    fmarg = [np.zeros((q,) * len(nb)) for nb in graph.neighbors]
    for prefix, logw in _chunks(graph):
        p = np.exp(logw - log_z)
        for i in range(graph.num_vars):
            _accumulate(marg[i], (i,), p, prefix)
        for nb, fm in zip(graph.neighbors, fmarg):
            _accumulate(fm, nb, p, prefix)
    return ExactResult(log_z, marg, fmarg)


def gibbs_free_energy(graph: FactorGraph, q_dist) -> float:
    """Variational free energy ``U(q) - H(q)``; equals ``-log Z`` at the Gibbs measure.

    ``q_dist`` is a distribution over all configurations, either flat
    (row-major, last variable fastest) or shaped ``(q,) * N``. Returns
    ``inf`` if ``q_dist`` puts mass where the factor product vanishes.
    """
    logw = log_weights(graph)
    qd = np.asarray(q_dist, dtype=float).reshape(logw.shape)
    if np.any(qd < 0) or abs(qd.sum() - 1.0) > 1e-9:
        raise ValueError("q_dist must be a probability distribution")
    mass = qd > 0
    if np.any(np.isneginf(logw[mass])):
        return math.inf
    energy = -np.sum(qd[mass] * logw[mass])
    neg_entropy = np.sum(qd[mass] * np.log(qd[mass]))
    return float(energy + neg_entropy)


def transfer_matrix_order(graph: FactorGraph) -> tuple[list[int], list[int]]:
    """Variables and pair factors in cycle order.

    Returns ``(vars, factors)`` with ``factors[k]`` joining ``vars[k]`` and
    ``vars[(k + 1) % N]``. Degree-1 factors are ignored here.
    """
    n = graph.num_vars
    pair_of: list[list[int]] = [[] for _ in range(n)]
    for a, nb in enumerate(graph.neighbors):
        if len(nb) == 2:
            for i in nb:
                pair_of[i].append(a)
        elif len(nb) != 1:
            raise NotSingleCycleError(f"factor {a} has degree {len(nb)}")
    if n < 2 or any(len(fs) != 2 for fs in pair_of):
        raise NotSingleCycleError("every variable must touch exactly two pair factors")
    order_v, order_f = [], []
    cur, prev_f = 0, None
    for _ in range(n):
        fs = pair_of[cur]
        a = fs[0] if prev_f is None or fs[1] == prev_f else fs[1]
        nb = graph.neighbors[a]
        order_v.append(cur)
        order_f.append(a)
        prev_f = a
        cur = nb[1] if nb[0] == cur else nb[0]
    if cur != 0 or len(set(order_v)) != n:
        raise NotSingleCycleError("pair factors do not form a single cycle")
    return order_v, order_f


def transfer_matrix_z(graph: FactorGraph) -> float:
    """``log tr(F1 F2 ... FN)`` for a single cycle of pairwise factors.

    ``F_k[x, x'] = f_k(x_k = x, x_{k+1} = x')`` with unary factors on
    variable ``k`` multiplied into the row index.
    """
    order_v, order_f = transfer_matrix_order(graph)
    unary = np.ones((graph.num_vars, graph.q))
    for nb, t in zip(graph.neighbors, graph.tables):
        if len(nb) == 1:
            unary[nb[0]] *= t
    prod = np.eye(graph.q)
    log_scale = 0.0
    for k, a in enumerate(order_f):
        i = order_v[k]
        t = graph.tables[a]
        mat = t if graph.neighbors[a][0] == i else t.T
        prod = prod @ (unary[i][:, None] * mat)
        s = np.max(np.abs(prod))
        if s == 0:
            raise NumericalError("Z = 0: transfer-matrix product vanishes")
        prod /= s
        log_scale += math.log(s)
    tr = np.trace(prod)
    if tr <= 0:
        raise NumericalError("Z = 0: transfer-matrix trace vanishes")
    return log_scale + math.log(tr)


def ising_couplings(graph: FactorGraph, tol: float = 1e-12):
    """Decompose a zero-field Ising graph.

    Returns ``(pairs, K, log_const)`` where pair factor ``a`` equals
    ``exp(log_const_a) * exp(K_a s_i s_j)`` and ``log_const`` includes the
    constants of any flat unary factors.
    """
    if graph.q != 2:
        raise NotIsingError("Ising graphs need q = 2")
    pairs, ks = [], []
    log_const = 0.0
    for a, (nb, t) in enumerate(zip(graph.neighbors, graph.tables)):
        if len(nb) == 1:
            if abs(t[0] - t[1]) > tol * max(t[0], t[1]) or t[0] <= 0:
                raise NotIsingError(f"nonzero field on factor {a}")
            log_const += math.log(t[0])
        elif len(nb) == 2:
            f00, f01, f10, f11 = t.ravel()
            if min(f00, f01) <= 0 or abs(f00 - f11) > tol * f00 or abs(f01 - f10) > tol * f01:
                raise NotIsingError(f"factor {a} is not of the form c*exp(K s_i s_j)")
            pairs.append(nb)
            ks.append(0.5 * math.log(f00 / f01))
            log_const += 0.5 * math.log(f00 * f01)
        else:
            raise NotIsingError(f"factor {a} has degree {len(nb)}")
    return pairs, np.array(ks), log_const


def ising_high_temp_z(graph: FactorGraph) -> float:
    """``log Z`` of a zero-field Ising graph from the even-subgraph expansion.

    ``Z = 2^N prod cosh(K) sum_{E'} prod_{E'} tanh(K)`` where ``E'`` ranges
    over bond subsets in which every spin has even degree.
    """
    pairs, ks, log_const = ising_couplings(graph)
    m = len(pairs)
    if m > MAX_SUBSET_EDGES:
        raise EnumerationBoundError(f"2^{m} bond subsets exceed the bound 2^{MAX_SUBSET_EDGES}")
    tanh = np.tanh(ks)
    if graph.num_vars > 62:
        raise EnumerationBoundError("too many spins for bitmask parity")
    vmask = [(1 << i) | (1 << j) for i, j in pairs]
    inner = min(m, CHUNK_LOG2)
    outer = m - inner
    # inner block by doubling: parity masks and products of the last `inner` bonds
    par = np.zeros(1, dtype=np.int64)
    prod = np.ones(1)
    for p in range(outer, m):
        par = np.concatenate([par, par ^ vmask[p]])
        prod = np.concatenate([prod, prod * tanh[p]])
    total = 0.0
    for bits in itertools.product((0, 1), repeat=outer):
        pmask, pw = 0, 1.0
        for p, b in enumerate(bits):
            if b:
                pmask ^= vmask[p]
                pw *= tanh[p]
        total += pw * float(prod[par == pmask].sum())
    if total <= 0:
        raise NumericalError("even-subgraph sum is not positive")
    return (log_const + graph.num_vars * math.log(2.0)
            + float(np.sum(np.log(np.cosh(ks)))) + math.log(total))
