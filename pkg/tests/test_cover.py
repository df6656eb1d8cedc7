import math
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare

from bethezeta.cover import (CoverAssignment, cover_growth_report, enumerate_covers,
                             expected_cover_z, gauge_edges, identity_cover, lift, sample_cover)
from bethezeta.errors import EnumerationBoundError, GraphError
from bethezeta.exact import brute_force_z
from bethezeta.families import ising_cycle, random_cycle, random_pairwise, random_tree


def cycle_transfer(g):
    t = np.eye(g.q)
    for k in range(g.num_vars):
        t = t @ g.tables[k]
    return t


def test_lift_structure():
    g = random_pairwise(4, 2, 0.7, seed=0)
    c = sample_cover(g, 3, seed=1)
    lifted = lift(g, c)
    assert lifted.num_vars == 12 and lifted.num_factors == 3 * g.num_factors
    assert list(lifted.var_degrees) == list(np.repeat(g.var_degrees, 3))
    for a, nb in enumerate(g.neighbors):
        for m in range(3):
            assert lifted.neighbors[a * 3 + m] == tuple(
                i * 3 + int(c.perms[e, m]) for i, e in zip(nb, g.factor_edges[a]))
    assert lift(g, identity_cover(g, 1)) == g


def test_identity_cover_is_disjoint_copies():
    g = random_cycle(3, 2, 1.0, seed=0)
    assert brute_force_z(lift(g, identity_cover(g, 3))) == pytest.approx(
        3 * brute_force_z(g), abs=1e-10)


def test_invalid_cover():
    with pytest.raises(GraphError):
        CoverAssignment(2, [[0, 0]])
    with pytest.raises(GraphError):
        CoverAssignment(0, np.zeros((1, 0)))
    g = ising_cycle(3, 0.1)
    with pytest.raises(GraphError):
        lift(g, CoverAssignment(2, [[0, 1]]))


def test_sampling_deterministic_and_uniform():
    g = ising_cycle(3, 0.1)
    assert sample_cover(g, 2, seed=7) == sample_cover(g, 2, seed=7)
    assert sample_cover(g, 1, seed=3) == identity_cover(g, 1)
    counts = Counter(tuple(sample_cover(g, 3, seed=k).perms[0]) for k in range(10_000))
    assert len(counts) == 6
    assert chisquare(list(counts.values())).pvalue > 0.01


@pytest.mark.parametrize("seed", range(5))
def test_tree_covers_trivial(seed):
    g = random_tree(5, 2, 1.0, seed=seed)
    z = brute_force_z(g)
    for k in range(4):
        c = sample_cover(g, 3, seed=(seed, k))
        assert brute_force_z(lift(g, c)) == pytest.approx(3 * z, abs=1e-8)
    assert expected_cover_z(g, 3).log_mean == pytest.approx(3 * z, abs=1e-10)
    assert expected_cover_z(g, 3).count == 1  # every edge is gauge-fixed


@pytest.mark.parametrize("length", [2, 3, 4])
def test_two_cover_closed_form(length):
    g = random_cycle(length, 2, 0.8, seed=length)
    t = cycle_transfer(g)
    ref = math.log(0.5 * (np.trace(t) ** 2 + np.trace(t @ t)))
    full = expected_cover_z(g, 2, gauge_fix=False)
    assert full.count == 2 ** (2 * length)
    assert full.log_mean == pytest.approx(ref, abs=1e-10)
    assert expected_cover_z(g, 2).log_mean == pytest.approx(ref, abs=1e-10)


def test_gauge_fixing_preserves_expectation():
    g = random_pairwise(3, 2, 1.0, 1.0, seed=2, fields=False)
    free = g.num_edges - len(gauge_edges(g))
    assert free == g.cyclomatic_number
    a = expected_cover_z(g, 2, gauge_fix=False)
    b = expected_cover_z(g, 2)
    assert b.count == 2 ** free
    assert a.log_mean == pytest.approx(b.log_mean, abs=1e-12)


def test_m1_is_z():
    g = random_pairwise(5, 3, 0.6, seed=1)
    assert expected_cover_z(g, 1).log_mean == pytest.approx(brute_force_z(g), abs=1e-12)


def test_bounds():
    with pytest.raises(EnumerationBoundError):
        expected_cover_z(random_pairwise(6, 2, 1.0, seed=0), 4)
    with pytest.raises(EnumerationBoundError):
        expected_cover_z(random_pairwise(6, 2, 1.0, seed=0), 6, "mc", 2)
    with pytest.raises(ValueError):
        expected_cover_z(ising_cycle(3, 0.1), 2, "bogus")


def test_monte_carlo_agrees_with_exact():
    g = ising_cycle(3, 0.5)
    exact = expected_cover_z(g, 3).log_mean
    mc = expected_cover_z(g, 3, "mc", samples=400, seed=0)
    assert abs(mc.log_mean - exact) < 4 * mc.stderr + 1e-12
    assert mc == expected_cover_z(g, 3, "mc", samples=400, seed=0)


@pytest.mark.parametrize("graph, Ms", [(ising_cycle(3, 0.3), [1, 2, 3, 4]),
                                       (random_cycle(2, 2, 1.0, seed=1), [1, 2, 3, 4, 5])])
def test_growth_gap_decreases(graph, Ms):
    rows = cover_growth_report(graph, Ms)
    assert all(r["verifiable"] for r in rows)
    gaps = [abs(r["excess"] - r["log_sum_sqrt_zeta"]) for r in rows]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))


def test_growth_report_tree():
    g = random_tree(5, 2, seed=4)
    z = brute_force_z(g)
    for r in cover_growth_report(g, [1, 2, 3]):
        assert r["log_EZ_over_M"] == pytest.approx(z, abs=1e-10)
        assert r["log_z_bethe"] == pytest.approx(z, abs=1e-10)
        assert r["log_sum_sqrt_zeta"] == 0.0


def test_enumerate_covers_lexicographic():
    g = ising_cycle(3, 0.1)
    covers = list(enumerate_covers(g, 2))
    free = [e for e in range(g.num_edges) if e not in gauge_edges(g)]
    assert [tuple(c.perms[free[0]]) for c in covers] == [(0, 1), (1, 0)]
