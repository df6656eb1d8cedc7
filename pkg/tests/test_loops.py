import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bethezeta.bp import find_fixed_points, run_bp
from bethezeta.errors import EnumerationBoundError, NumericalError
from bethezeta.exact import brute_force_z
from bethezeta.families import (ising_cycle, ising_theta, ising_torus, random_cycle,
                                random_pairwise, random_tree, two_triangles)
from bethezeta.loops import (GeneralizedLoop, bethe_transform, enumerate_generalized_loops,
                             enumerate_simple_loops, loop_dominance_report, loop_series_sum,
                             loop_term_binary, loop_term_nonbinary, loop_term_trace,
                             orthogonality_check, transform_residual)


def brute_generalized(g):
    out = []
    for mask in range(1 << g.num_edges):
        lp = GeneralizedLoop.from_edges(g, [e for e in range(g.num_edges) if mask >> e & 1])
        if lp.is_generalized:
            out.append(lp.edges)
    return sorted(out)


@pytest.mark.parametrize("graph", [two_triangles(0.3), ising_theta((1, 2, 3), 0.3),
                                   random_pairwise(5, 2, 0.6, seed=3),
                                   random_tree(6, 2, seed=1)])
def test_enumeration_matches_subset_scan(graph):
    loops = enumerate_generalized_loops(graph)
    assert loops[0].edges == ()
    assert sorted(lp.edges for lp in loops) == brute_generalized(graph)


def test_enumeration_counts():
    assert [lp.edges for lp in enumerate_generalized_loops(random_tree(8, 2, seed=0))] == [()]
    tri = enumerate_generalized_loops(ising_cycle(3, 0.1))
    assert [len(lp) for lp in tri] == [0, 6]
    assert len(enumerate_generalized_loops(two_triangles())) == 4
    assert len(enumerate_simple_loops(two_triangles(), include_empty=False)) == 2
    assert len(enumerate_simple_loops(ising_theta(beta=0.2), include_empty=False)) == 3
    assert len(enumerate_simple_loops(ising_cycle(3, 0.1), include_empty=False)) == 1
    assert enumerate_simple_loops(random_tree(5, 2, seed=0))[0].edges == ()
    with pytest.raises(EnumerationBoundError):
        enumerate_generalized_loops(ising_torus(3, 3, 0.1))


def test_simple_loops_beyond_subset_bound():
    # 3x3 torus: 36 edges, simple cycles found by path search
    loops = enumerate_simple_loops(ising_torus(3, 3, 0.1), include_empty=False)
    assert all(lp.is_simple(ising_torus(3, 3, 0.1)) for lp in loops)
    assert len({lp.edges for lp in loops}) == len(loops)
    assert sum(len(lp) == 6 for lp in loops) == 6  # the three row and three column rings


def test_cycle_series_is_one_plus_trace():
    beta, n = 0.3, 4
    g = ising_cycle(n, beta)
    res = run_bp(g)
    loops = enumerate_generalized_loops(g)
    term = loop_term_binary(g, res.beliefs, loops[1])
    assert term == pytest.approx(math.tanh(beta) ** n, abs=1e-14)
    ratio = math.exp(brute_force_z(g) - res.log_z_bethe)
    assert loop_series_sum(g, res.beliefs, "binary") == pytest.approx(ratio, abs=1e-12)


def test_empty_and_degree_one_terms():
    g = random_pairwise(5, 3, 0.7, 1.0, seed=4)
    res = run_bp(g, tol=1e-13)
    empty = GeneralizedLoop.from_edges(g, ())
    assert loop_term_nonbinary(g, res.beliefs, empty) == 1.0
    # a single edge leaves both endpoints with degree 1: zero at a stationary point
    for e in range(g.num_edges):
        lp = GeneralizedLoop.from_edges(g, [e])
        assert abs(loop_term_nonbinary(g, res.beliefs, lp)) < 1e-10
    # a path of two edges through a factor: degree-1 variables at the ends
    a = next(a for a, nb in enumerate(g.neighbors) if len(nb) == 2)
    lp = GeneralizedLoop.from_edges(g, g.factor_edges[a])
    assert abs(loop_term_nonbinary(g, res.beliefs, lp)) < 1e-10


@pytest.mark.parametrize("q", [2, 3])
def test_series_equals_exact_ratio(q):
    g = random_pairwise(6, q, 0.5, 0.9, seed=10 + q, max_edges=16)
    ratio_log = brute_force_z(g)
    for res in find_fixed_points(g, restarts=4, seed=0, tol=1e-13):
        ratio = math.exp(ratio_log - res.log_z_bethe)
        assert loop_series_sum(g, res.beliefs, "nonbinary") == pytest.approx(ratio, abs=1e-8)
        if q == 2:
            assert loop_series_sum(g, res.beliefs, "binary") == pytest.approx(ratio, abs=1e-8)


def test_binary_and_nonbinary_agree_on_simple_loops():
    g = random_pairwise(6, 2, 0.6, 1.0, seed=1)
    res = run_bp(g, tol=1e-13)
    for lp in enumerate_simple_loops(g):
        a = loop_term_binary(g, res.beliefs, lp)
        assert loop_term_nonbinary(g, res.beliefs, lp) == pytest.approx(a, abs=1e-12)
        assert loop_term_trace(g, res.beliefs, lp) == pytest.approx(a, abs=1e-12)


def test_trace_formula_q3_theta():
    g = random_cycle(3, 3, 1.0, seed=2)
    res = run_bp(g, tol=1e-13)
    for lp in enumerate_simple_loops(g, include_empty=False):
        assert loop_term_nonbinary(g, res.beliefs, lp) == pytest.approx(
            loop_term_trace(g, res.beliefs, lp), abs=1e-10)
    th = ising_theta((2, 2, 3), 0.4)
    res = run_bp(th, tol=1e-13)
    ratio = math.exp(brute_force_z(th) - res.log_z_bethe)
    assert loop_series_sum(th, res.beliefs) == pytest.approx(ratio, abs=1e-8)


def test_orthogonality():
    assert orthogonality_check([0.5, 0.5], [0.5, 0.5]) < 1e-12
    rng = np.random.default_rng(0)
    for q in (2, 3, 4):
        b = rng.dirichlet(np.ones(q))
        m = rng.dirichlet(np.ones(q))
        assert orthogonality_check(b, m) < 1e-12
    g = random_pairwise(5, 4, 0.6, 1.0, seed=6)
    res = run_bp(g, tol=1e-13)
    assert transform_residual(g, res.messages) < 1e-10
    phi, phi_hat = bethe_transform(res.beliefs.var[0], res.messages.fac_to_var[0],
                                   res.messages.var_to_fac[0])
    assert phi.shape == phi_hat.shape == (4, 4)
    with pytest.raises(NumericalError):
        orthogonality_check([1.0, 0.0])


@settings(max_examples=15, deadline=None)
@given(st.integers(3, 5), st.floats(0.4, 1.0), st.floats(0.2, 1.0), st.integers(0, 10**6))
def test_series_identity_property(n, density, beta, seed):
    g = random_pairwise(n, 3, density, beta, seed, max_edges=14)
    res = run_bp(g, tol=1e-13)
    if not res.converged:
        return
    ratio = math.exp(brute_force_z(g) - res.log_z_bethe)
    assert loop_series_sum(g, res.beliefs) == pytest.approx(ratio, abs=1e-8)


def test_dominance_report():
    rows = loop_dominance_report(ising_cycle(3, 1.0), [0.0, 0.1])
    assert rows[0]["excess"] == 0.0 and rows[0]["l2_sum"] == 0.0
    assert rows[0]["sqrt_zeta_excess"] == 0.0
    # single cycle: the simple loop is the whole correction
    assert rows[1]["excess"] == pytest.approx(rows[1]["l2_sum"], abs=1e-12)
    torus = loop_dominance_report(ising_torus(3, 3, 1.0), [0.05, 0.1, 0.15])
    ratios = [r["residual_ratio"] for r in torus]
    assert ratios == sorted(ratios)
    assert abs(torus[1]["zeta_ratio"] - 1) < 0.2
