"""Sum-product belief propagation and the Bethe free energy.

Messages live in two ``(num_edges, q)`` arrays indexed like
``FactorGraph.edges``: ``var_to_fac[e]`` is m_{i->a} and ``fac_to_var[e]``
is m_{a->i} for edge ``e = (i, a)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMessageError
from .factor_graph import FactorGraph

__all__ = [
    "MessageSet",
    "BeliefSet",
    "BPResult",
    "uniform_messages",
    "random_messages",
    "bp_step",
    "run_bp",
    "beliefs_from_messages",
    "bethe_free_energy",
    "bethe_free_energy_dual",
    "find_fixed_points",
    "find_minima",
    "DEDUP_TOL",
    "MIN_F_WINDOW",
]

log = logging.getLogger(__name__)

DEDUP_TOL = 1e-6
MIN_F_WINDOW = 1e-9
CLAMP = 1e-300


@dataclass
class MessageSet:
    var_to_fac: np.ndarray
    fac_to_var: np.ndarray

    def copy(self) -> "MessageSet":
        return MessageSet(self.var_to_fac.copy(), self.fac_to_var.copy())

    def distance(self, other: "MessageSet") -> float:
        """L-infinity distance over all message entries."""
        if self.var_to_fac.size == 0:
            return 0.0
        return float(max(np.max(np.abs(self.var_to_fac - other.var_to_fac)),
                         np.max(np.abs(self.fac_to_var - other.fac_to_var))))


@dataclass
class BeliefSet:
    var: np.ndarray  # (num_vars, q)
    factor: list[np.ndarray]  # b_a with shape (q,) * d_a

    def reducibility_error(self, graph: FactorGraph) -> float:
        """Max deviation between factor-belief marginals and variable beliefs."""
        err = 0.0
        for a, nb in enumerate(graph.neighbors):
            ba = self.factor[a]
            for k, i in enumerate(nb):
                axes = tuple(x for x in range(len(nb)) if x != k)
                err = max(err, float(np.max(np.abs(ba.sum(axis=axes) - self.var[i]))))
        return err


@dataclass
class BPResult:
    messages: MessageSet = field(repr=False)
    beliefs: BeliefSet = field(repr=False)
    converged: bool
    iterations: int
    residual: float
    log_z_bethe: float
    f_bethe: float
    seed: int | None = None
    damping: float = 0.5


def _normalize(m: np.ndarray, what: str) -> np.ndarray:
    s = m.sum(axis=-1, keepdims=True)
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise DegenerateMessageError(f"unnormalizable {what} message (incompatible supports)")
    return m / s


def uniform_messages(graph: FactorGraph) -> MessageSet:
    shape = (graph.num_edges, graph.q)
    return MessageSet(np.full(shape, 1.0 / graph.q), np.full(shape, 1.0 / graph.q))


def random_messages(graph: FactorGraph, seed) -> MessageSet:
    rng = np.random.default_rng(seed)
    shape = (graph.num_edges, graph.q)
    v2f = rng.uniform(size=shape)
    f2v = rng.uniform(size=shape)
    return MessageSet(v2f / v2f.sum(axis=1, keepdims=True), f2v / f2v.sum(axis=1, keepdims=True))


def _var_updates(graph: FactorGraph, f2v: np.ndarray) -> np.ndarray:
    """Unnormalized m_{i->a}: product of the other incoming factor messages."""
    out = np.ones_like(f2v)
    for edges in graph.var_edges:
        if len(edges) < 2:
            continue
        incoming = f2v[list(edges)]
        for k, e in enumerate(edges):
            out[e] = np.prod(np.delete(incoming, k, axis=0), axis=0)
    return out


def _factor_updates(graph: FactorGraph, v2f: np.ndarray) -> np.ndarray:
    """Unnormalized m_{a->i}: table times the other incoming variable messages."""
    out = np.empty_like(v2f)
    for a, (nb, edges) in enumerate(zip(graph.neighbors, graph.factor_edges)):
        d = len(nb)
        table = graph.tables[a]
        for k, e in enumerate(edges):
            operands = [table, list(range(d))]
            for j, e2 in enumerate(edges):
                if j != k:
                    operands += [v2f[e2], [j]]
            out[e] = np.einsum(*operands, [k])
    return out


def bp_step(graph: FactorGraph, messages: MessageSet, damping: float = 0.5) -> MessageSet:
    """One flooding update: all m_{i->a} first, then all m_{a->i} from the new ones."""
    if not 0 <= damping < 1:
        raise ValueError("damping must lie in [0, 1)")
    v2f = _normalize(_var_updates(graph, messages.fac_to_var), "variable-to-factor")
    if damping:
        v2f = _normalize((1 - damping) * v2f + damping * messages.var_to_fac,
                         "variable-to-factor")
    f2v = _normalize(_factor_updates(graph, v2f), "factor-to-variable")
    if damping:
        f2v = _normalize((1 - damping) * f2v + damping * messages.fac_to_var,
                         "factor-to-variable")
    return MessageSet(v2f, f2v)


def _normalizers(graph: FactorGraph, messages: MessageSet):
    """Unnormalized beliefs and the log normalizers log Z_i, log Z_a, log Z_{i,a}."""
    v2f, f2v = messages.var_to_fac, messages.fac_to_var
    q = graph.q
    var_un = np.ones((graph.num_vars, q))
    for i, edges in enumerate(graph.var_edges):
        for e in edges:
            var_un[i] = var_un[i] * f2v[e]
    fac_un = []
    for a, (nb, edges) in enumerate(zip(graph.neighbors, graph.factor_edges)):
        operands = [graph.tables[a], list(range(len(nb)))]
        for k, e in enumerate(edges):
            operands += [v2f[e], [k]]
        fac_un.append(np.einsum(*operands, list(range(len(nb)))))
    z_i = var_un.sum(axis=1)
    z_a = np.array([t.sum() for t in fac_un])
    z_ia = np.einsum("eq,eq->e", v2f, f2v)
    if np.any(z_i <= 0) or np.any(z_a <= 0) or np.any(z_ia <= 0):
        raise DegenerateMessageError("zero normalizer: messages have incompatible supports")
    return var_un, fac_un, z_i, z_a, z_ia


def beliefs_from_messages(graph: FactorGraph, messages: MessageSet) -> BeliefSet:
    """b_a proportional to f_a times incoming messages, b_i to the product of factor messages."""
    var_un, fac_un, z_i, z_a, _ = _normalizers(graph, messages)
    return BeliefSet(var_un / z_i[:, None], [t / z for t, z in zip(fac_un, z_a)])


def bethe_free_energy_dual(graph: FactorGraph, messages: MessageSet) -> float:
    """``-sum log Z_i - sum log Z_a + sum log Z_{i,a}``."""
    _, _, z_i, z_a, z_ia = _normalizers(graph, messages)
    return float(-np.sum(np.log(z_i)) - np.sum(np.log(z_a)) + np.sum(np.log(z_ia)))


def _xlogy(x, y):
    """``x * log(y)`` with ``0 * log(anything) = 0``."""
    out = np.zeros_like(x, dtype=float)
    mask = x > 0
    out[mask] = x[mask] * np.log(np.maximum(y[mask], CLAMP))
    return out


def bethe_free_energy(graph: FactorGraph, beliefs: BeliefSet) -> float:
    """``U_Bethe - H_Bethe`` evaluated on beliefs; ``inf`` if b_a > 0 where f_a = 0."""
    energy = 0.0
    entropy = 0.0
    for a, table in enumerate(graph.tables):
        ba = np.asarray(beliefs.factor[a])
        if np.any((ba > 0) & (table == 0)):
            return math.inf
        energy -= float(np.sum(_xlogy(ba, table)))
        entropy -= float(np.sum(_xlogy(ba, ba)))
    for i, d in enumerate(graph.var_degrees):
        bi = beliefs.var[i]
        entropy += (d - 1) * float(np.sum(_xlogy(bi, bi)))
    return energy - entropy


def run_bp(graph: FactorGraph, init="uniform", damping: float = 0.5, tol: float = 1e-10,
           max_iter: int = 10_000, seed: int | None = None) -> BPResult:
    """Iterate :func:`bp_step` until the L-infinity message change is at most ``tol``.

    ``init`` is ``"uniform"``, ``"random"`` (drawn from ``seed``) or a
    :class:`MessageSet`. Non-convergence is reported via ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(init, MessageSet):
        msgs = init.copy()
    elif init == "uniform":
        msgs = uniform_messages(graph)
    elif init == "random":
        msgs = random_messages(graph, seed)
    else:
        raise ValueError(f"unknown init {init!r}")
    residual = math.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = bp_step(graph, msgs, damping)
        residual = new.distance(msgs)
        msgs = new
        if residual <= tol:
            converged = True
            break
    beliefs = beliefs_from_messages(graph, msgs)
    f = bethe_free_energy_dual(graph, msgs)
    return BPResult(msgs, beliefs, converged, it, residual, -f, f, seed, damping)


def find_fixed_points(graph: FactorGraph, restarts: int = 10, seed: int = 0,
                      damping: float = 0.5, tol: float = 1e-10, max_iter: int = 10_000,
                      dedup_tol: float = DEDUP_TOL) -> list[BPResult]:
    """Distinct converged fixed points from a uniform start plus random restarts.

    Random start ``r`` uses seed ``(seed, r)``; results are in discovery order.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    found: list[BPResult] = []
    for r in range(restarts):
        if r == 0:
            res = run_bp(graph, "uniform", damping, tol, max_iter)
        else:
            sub = int(np.random.SeedSequence([seed, r]).generate_state(1)[0])
            res = run_bp(graph, "random", damping, tol, max_iter, seed=sub)
        if not res.converged:
            continue
        if all(res.messages.distance(f.messages) >= dedup_tol for f in found):
            found.append(res)
    return found


def find_minima(graph: FactorGraph, restarts: int = 10, seed: int = 0, damping: float = 0.5,
                tol: float = 1e-10, max_iter: int = 10_000, dedup_tol: float = DEDUP_TOL,
                window: float = MIN_F_WINDOW) -> list[BPResult]:
    """Fixed points attaining the minimum Bethe free energy (within ``window``), sorted by F."""
    points = find_fixed_points(graph, restarts, seed, damping, tol, max_iter, dedup_tol)
    if not points:
        log.warning("find_minima: no BP run converged (%d restarts)", restarts)
        return []
    fmin = min(p.f_bethe for p in points)
    return sorted((p for p in points if p.f_bethe <= fmin + window), key=lambda p: p.f_bethe)
