"""Closed-form combinatorics against independent oracles."""

import math
from fractions import Fraction

import mpmath
import pytest

from gwcoupling.combinatorics import (
    OffspringParams,
    companion_pair_laws,
    companion_size_law,
    count_trees,
    min_split_law,
    second_tree_factor,
    size_pmf,
    split_law,
    survival_probability,
)
from gwcoupling.treecore import enumerate_trees


def test_count_small_values():
    assert count_trees(2, 3) == 5
    assert count_trees(2, 2) == 2
    assert count_trees(3, 2) == 3
    assert count_trees(2, 0) == 1
    assert count_trees(2, 1) == 1
    # brute-force value for the spec'd derived example
    assert count_trees(2, 4) == len(enumerate_trees(2, 4)) == 14


@pytest.mark.parametrize("d,kmax", [(2, 10), (3, 8)])
def test_count_matches_enumeration(d, kmax):
    for k in range(kmax + 1):
        assert count_trees(d, k) == len(enumerate_trees(d, k))


def test_catalan_identity():
    for k in range(20):
        assert count_trees(2, k) == math.comb(2 * k, k) // (k + 1)


def test_ratio_monotone_and_limit():
    for d in (2, 3):
        ratios = [Fraction(count_trees(d, k - 1), count_trees(d, k)) for k in range(1, 65)]
        assert all(a > b for a, b in zip(ratios, ratios[1:]))
        limit = Fraction(1, d) * Fraction(d - 1, d) ** (d - 1)
        assert all(r > limit for r in ratios)
        assert abs(float(ratios[-1] - limit)) < 0.01


def test_ratio_lower_bound_inequality():
    # c_{k-l}/c_k >= (p(1-p)^{d-1})^l on a p-grid, all l <= k <= 40
    for d in (2, 3):
        for k in range(1, 41):
            for l in range(k + 1):
                lhs = Fraction(count_trees(d, k - l), count_trees(d, k))
                for p in (Fraction(1, d), Fraction(1, 2), Fraction(3, 4), Fraction(9, 10)):
                    assert lhs >= (p * (1 - p) ** (d - 1)) ** l


def test_size_pmf_base_cases():
    assert size_pmf(OffspringParams(2, Fraction(1, 2)), 0) == Fraction(1, 2)
    assert size_pmf(OffspringParams(2, Fraction(1, 2)), 1) == Fraction(1, 8)
    p = Fraction(1, 3)
    assert size_pmf(OffspringParams(3, p), 2) == 3 * p**2 * (1 - p) ** 5


def brute_force_size_pmf(d, p, k, radius):
    """Sum percolation probabilities over explicit k-vertex clusters with
    their closed outer boundaries, inside the depth-`radius` ball."""
    total = Fraction(0)
    if k == 0:
        return 1 - p
    for t in enumerate_trees(d, k):
        boundary = 0
        for v in t.vertices:
            boundary += sum(1 for i in range(1, d + 1) if v + (i,) not in t.vertices)
        assert t.depth() < radius
        total += p**k * (1 - p) ** boundary
    return total


@pytest.mark.parametrize("d,p", [(2, Fraction(1, 2)), (3, Fraction(1, 3)), (2, Fraction(3, 4))])
def test_size_pmf_matches_percolation_enumeration(d, p):
    for k in range(0, 5):
        assert size_pmf(OffspringParams(d, p), k) == brute_force_size_pmf(d, p, k, 6)


def test_size_pmf_decreasing_in_k():
    for d, p in [(2, Fraction(1, 2)), (2, Fraction(7, 10)), (3, Fraction(1, 3)), (3, Fraction(3, 5))]:
        params = OffspringParams(d, p)
        vals = [size_pmf(params, k) for k in range(40)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_survival_d2():
    assert survival_probability(OffspringParams(2, Fraction(1, 2))) == 0
    assert survival_probability(OffspringParams(2, Fraction(3, 4))) == Fraction(2, 3)
    with pytest.raises(ValueError):
        survival_probability(OffspringParams(2, Fraction(1, 4)))


def bisect_survival(d, p, tol=1e-14):
    """Independent oracle: bisection on s = p(1 - (1-s)^d) for the root in (0, 1]."""
    f = lambda s: p * (1 - (1 - s) ** d) - s
    lo, hi = 1e-9, 1.0
    if f(lo) <= 0:
        return 0.0
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


@pytest.mark.parametrize("d,p", [(3, Fraction(3, 4)), (3, Fraction(1, 2)), (3, 1), (2, Fraction(4, 5))])
def test_survival_fixed_point(d, p):
    params = OffspringParams(d, p)
    s = survival_probability(params)
    sf = float(s)
    assert abs(sf - p * (1 - (1 - sf) ** d)) < 1e-12
    if p > Fraction(1, d):
        assert abs(sf - bisect_survival(d, float(p))) < 1e-9


def test_survival_d3_endpoints():
    assert survival_probability(OffspringParams(3, Fraction(1, 3))) == 0
    assert float(survival_probability(OffspringParams(3, 1))) == pytest.approx(1.0, abs=1e-15)


def test_second_tree_factor_values():
    assert abs(float(second_tree_factor(1)) - (math.sqrt(3) - 1)) < 1e-10
    assert float(second_tree_factor(Fraction(1, 3))) == 1.0
    limit_probe = second_tree_factor(Fraction(1, 3) + Fraction(1, 10**6))
    assert abs(float(limit_probe) - 1.0) <= 1e-3
    mid = float(second_tree_factor(Fraction(1, 2)))
    assert math.sqrt(3) - 1 < mid < 1


def test_second_tree_factor_decreasing():
    grid = [Fraction(1, 3) + Fraction(i, 1500) for i in range(1, 1001)]
    vals = [second_tree_factor(p) for p in grid]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert all(0 <= float(v) <= 1 for v in vals)
    with pytest.raises(ValueError):
        second_tree_factor(Fraction(1, 4))
    with pytest.raises(ValueError):
        second_tree_factor(Fraction(11, 10))


def test_companion_size_law_d2():
    half = companion_size_law(OffspringParams(2, Fraction(1, 2)), K=32)
    assert half.prob(0) == Fraction(1, 2)
    assert half.infinity == 0
    assert half.is_rational() and half.total_mass() == 1

    sure = companion_size_law(OffspringParams(2, 1), K=8)
    assert sure.infinity == 1
    assert sure.tail_finite == 0

    with pytest.raises(ValueError):
        companion_size_law(OffspringParams(3, Fraction(1, 2)))


def test_companion_size_law_cdf_decreasing_in_p():
    # partial sums of the finite part fall as p rises (the shared-uniform
    # coupling of companion sizes rests on exactly this)
    K = 48
    grid = [Fraction(1, 2), Fraction(3, 5), Fraction(7, 10), Fraction(4, 5), Fraction(19, 20)]
    laws = [companion_size_law(OffspringParams(2, p), K=K) for p in grid]
    for a, b in zip(laws, laws[1:]):
        ca = cb = Fraction(0)
        for k in range(K + 1):
            ca += a.prob(k)
            cb += b.prob(k)
            assert cb <= ca


def test_companion_pair_laws_critical():
    laws = companion_pair_laws(OffspringParams(3, Fraction(1, 3)), K=48)
    assert laws.first.infinity == 0
    assert laws.first.is_rational() and laws.first.total_mass() == 1
    assert laws.second_given_infinite.infinity == 0


def test_companion_pair_laws_supercritical():
    laws = companion_pair_laws(OffspringParams(3, Fraction(3, 5)), K=64)
    for law in (laws.first, laws.second_given_finite, laws.second_given_infinite):
        assert abs(float(law.total_mass()) - 1) < 1e-12
    # identity: the infinite atom equals 1 minus the damped finite mass
    p = mpmath.mpf(3) / 5
    surv = survival_probability(OffspringParams(3, Fraction(3, 5)))
    factor = second_tree_factor(Fraction(3, 5))
    fin = mpmath.sqrt(3 * p) * (1 - surv) * factor
    assert abs(float(laws.second_given_infinite.infinity - (1 - fin))) < 1e-12


def test_companion_pair_laws_extremes():
    one = companion_pair_laws(OffspringParams(3, 1), K=8)
    assert float(one.first.infinity) == pytest.approx(1.0, abs=1e-12)
    assert float(one.second_given_infinite.infinity) == pytest.approx(1.0, abs=1e-12)


def test_split_law_examples():
    law = split_law(2, 2)
    assert law.weights[(0, 2)] == Fraction(2, 5)
    assert law.weights[(2, 0)] == Fraction(2, 5)
    assert law.weights[(1, 1)] == Fraction(1, 5)

    mins = min_split_law(2)
    assert mins.weights[0] == Fraction(4, 5)
    assert mins.weights[1] == Fraction(1, 5)

    sym = split_law(2, 1)
    assert sym.weights[(1, 0)] == sym.weights[(0, 1)] == Fraction(1, 2)

    three = split_law(3, 1)
    assert all(three.weights[c] == Fraction(1, 3) for c in [(1, 0, 0), (0, 1, 0), (0, 0, 1)])


def test_split_law_from_enumeration():
    # root-split frequencies of the explicit uniform law over (k+1)-trees
    for d, k in [(2, 4), (3, 3)]:
        law = split_law(d, k)
        counts = {}
        trees = enumerate_trees(d, k + 1)
        for t in trees:
            comp = tuple(len(t.subtree_at((i,))) for i in range(1, d + 1))
            counts[comp] = counts.get(comp, 0) + 1
        for comp, c in counts.items():
            assert law.weights[comp] == Fraction(c, len(trees))
        assert sum(counts.values()) == len(trees)
