"""Graph M-covers: lifting, sampling, and the expected partition function E[Z(M)].

A cover is given by one permutation ``pi_e`` of ``{0..M-1}`` per edge
``e = (i, a)``. In the lift, copy ``m`` of factor ``a`` attaches to copy
``pi_e(m)`` of variable ``i``. Lifted variable ``(i, m)`` has index
``i * M + m`` and lifted factor ``(a, m)`` has index ``a * M + m``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .bp import find_minima
from .errors import EnumerationBoundError, GraphError
from .exact import MAX_LOG2_STATES, brute_force_z
from .factor_graph import FactorGraph
from .zeta import bethe_hessian_analytic, build_edge_weights, zeta_bass

__all__ = [
    "CoverAssignment",
    "CoverEstimate",
    "lift",
    "sample_cover",
    "identity_cover",
    "gauge_edges",
    "enumerate_covers",
    "expected_cover_z",
    "cover_growth_report",
    "MAX_EXACT_COVERS",
    "REPORT_COLUMNS",
]

log = logging.getLogger(__name__)

MAX_EXACT_COVERS = 1_000_000
REPORT_COLUMNS = ["M", "mode", "samples", "log_EZ_over_M", "log_z_bethe", "excess",
                  "log_sum_sqrt_zeta", "verifiable"]


@dataclass(frozen=True, eq=False)
class CoverAssignment:
    M: int
    perms: np.ndarray  # (num_edges, M), row e is pi_e

    def __post_init__(self):
        perms = np.array(self.perms, dtype=np.int64)
        if self.M < 1:
            raise GraphError("cover degree M must be >= 1")
        if perms.ndim != 2 or perms.shape[1] != self.M:
            raise GraphError(f"perms must have shape (num_edges, {self.M})")
        target = np.arange(self.M)
        for e, p in enumerate(perms):
            if not np.array_equal(np.sort(p), target):
                raise GraphError(f"edge {e}: not a permutation of 0..{self.M - 1}")
        perms.setflags(write=False)
        object.__setattr__(self, "perms", perms)

    def __eq__(self, other):
        return (isinstance(other, CoverAssignment) and self.M == other.M
                and np.array_equal(self.perms, other.perms))

    __hash__ = None


def identity_cover(graph: FactorGraph, M: int) -> CoverAssignment:
    return CoverAssignment(M, np.tile(np.arange(M), (graph.num_edges, 1)))


def lift(graph: FactorGraph, cover: CoverAssignment) -> FactorGraph:
    """The M-fold lifted factor graph; tables are copied verbatim."""
    M = cover.M
    if cover.perms.shape[0] != graph.num_edges:
        raise GraphError("cover has the wrong number of edges for this graph")
    neighbors, tables = [], []
    for a, (nb, edges) in enumerate(zip(graph.neighbors, graph.factor_edges)):
        for m in range(M):
            neighbors.append(tuple(i * M + int(cover.perms[e, m]) for i, e in zip(nb, edges)))
            tables.append(graph.tables[a])
    return FactorGraph(graph.q, graph.num_vars * M, neighbors, tables)


def sample_cover(graph: FactorGraph, M: int, seed=None) -> CoverAssignment:
    """Independent uniform permutation per edge (seeded Fisher-Yates shuffles)."""
    if M < 1:
        raise GraphError("cover degree M must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perms = np.array([rng.permutation(M) for _ in range(graph.num_edges)], dtype=np.int64)
    return CoverAssignment(M, perms.reshape(graph.num_edges, M))


def gauge_edges(graph: FactorGraph) -> list[int]:
    """Edges of a spanning forest of the factor graph.

    Relabelling the copies of each node can turn the permutations on these
    edges into identities without changing the law of the remaining ones, so
    expectations over covers only need the other (free) edges.
    """
    parent = list(range(graph.num_vars + graph.num_factors))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree = []
    for e, (i, a) in enumerate(graph.edges):
        ri, ra = find(i), find(graph.num_vars + a)
        if ri != ra:
            parent[ri] = ra
            tree.append(e)
    return tree


def enumerate_covers(graph: FactorGraph, M: int, gauge_fix: bool = True):
    """All covers in lexicographic order of the permutation tuple on the free edges."""
    fixed = set(gauge_edges(graph)) if gauge_fix else set()
    free = [e for e in range(graph.num_edges) if e not in fixed]
    ident = np.arange(M)
    for combo in itertools.product(itertools.permutations(range(M)), repeat=len(free)):
        perms = np.tile(ident, (graph.num_edges, 1))
        for e, p in zip(free, combo):
            perms[e] = p
        yield CoverAssignment(M, perms)


class CoverEstimate(NamedTuple):
    log_mean: float  # log E[Z(M)]
    stderr: float  # standard error of log_mean (0 in exact mode)
    count: int  # covers enumerated or sampled


def _check_lift_bound(graph: FactorGraph, M: int):
    if graph.num_vars * M * math.log2(graph.q) > MAX_LOG2_STATES + 1e-9:
        raise EnumerationBoundError(
            f"lifted graph has {graph.q}^{graph.num_vars * M} states, above 2^{MAX_LOG2_STATES}")


def expected_cover_z(graph: FactorGraph, M: int, mode: str = "exact", samples: int = 1000,
                     seed: int = 0, gauge_fix: bool = True) -> CoverEstimate:
    """``log E[Z(M)]`` over uniformly random M-covers.

    ``exact`` averages ``Z`` over every cover (after gauge fixing, over the
    free edges only). ``mc`` averages ``samples`` covers, sample ``k`` drawn
    with seed ``(seed, k)``; the standard error comes from the sample
    variance of ``Z`` and is mapped to the log scale by the delta method.
    """
    if M < 1:
        raise GraphError("cover degree M must be >= 1")
    _check_lift_bound(graph, M)
    if mode == "exact":
        n_free = graph.num_edges - (len(gauge_edges(graph)) if gauge_fix else 0)
        total = math.factorial(M) ** n_free
        if total > MAX_EXACT_COVERS:
            raise EnumerationBoundError(
                f"(M!)^{n_free} = {total} covers exceed the exact bound {MAX_EXACT_COVERS}")
        logs = np.array([brute_force_z(lift(graph, c))
                         for c in enumerate_covers(graph, M, gauge_fix)])
        return CoverEstimate(float(logsumexp(logs) - math.log(len(logs))), 0.0, len(logs))
    if mode == "mc":
        if samples < 1:
            raise ValueError("samples must be >= 1")
        logs = np.array([
            brute_force_z(lift(graph, sample_cover(graph, M, np.random.SeedSequence([seed, k]))))
            for k in range(samples)])
        shift = logs.max()
        w = np.exp(logs - shift)
        mean = w.mean()
        se = w.std(ddof=1) / math.sqrt(samples) if samples > 1 else math.inf
        return CoverEstimate(float(shift + math.log(mean)), float(se / mean), samples)
    raise ValueError(f"unknown mode {mode!r}")


def _minimum_is_regular(graph: FactorGraph, res, sign: float) -> bool:
    """Positive zeta and, where the Hessian is defined, a positive-definite Hessian."""
    if sign <= 0:
        return False
    try:
        hess = bethe_hessian_analytic(graph, res.beliefs).matrix
    except ValueError:
        return True
    return bool(hess.size == 0 or np.linalg.eigvalsh(hess).min() > 0)


def cover_growth_report(graph: FactorGraph, Ms, mode: str = "exact", samples: int = 1000,
                        seed: int = 0, restarts: int = 10, damping: float = 0.5,
                        tol: float = 1e-12, max_iter: int = 10_000,
                        gauge_fix: bool = True) -> list[dict]:
    """Per-M rows comparing ``log E[Z(M)]`` with ``M log Z_Bethe + log sum sqrt(zeta)``.

    Rows are flagged ``verifiable=False`` when the minima are not regular
    (non-positive zeta, indefinite Hessian) or none were found; the excess
    column is still reported.
    """
    minima = find_minima(graph, restarts, seed, damping, tol, max_iter)
    if minima:
        log_z_bethe = max(r.log_z_bethe for r in minima)
        verifiable = True
        halves = []
        for res in minima:
            lz, sign = zeta_bass(build_edge_weights(graph, res.beliefs), return_sign=True)
            verifiable &= _minimum_is_regular(graph, res, sign)
            if sign > 0:
                halves.append(0.5 * lz)
        log_sum_sqrt_zeta = float(logsumexp(halves)) if verifiable else math.nan
    else:
        log.warning("cover_growth_report: no Bethe minimum found")
        log_z_bethe, verifiable, log_sum_sqrt_zeta = math.nan, False, math.nan
    rows = []
    for M in Ms:
        est = expected_cover_z(graph, M, mode, samples, seed, gauge_fix)
        rows.append({
            "M": M,
            "mode": mode,
            "samples": est.count,
            "log_EZ_over_M": est.log_mean / M,
            "log_z_bethe": log_z_bethe,
            "excess": est.log_mean - M * log_z_bethe,
            "log_sum_sqrt_zeta": log_sum_sqrt_zeta,
            "verifiable": verifiable,
        })
    return rows

