"""
Tests for Moser Iteration Bookkeeping
=====================================
Exponent recursion, stopping sets, k-bounds, ladder and exponent budgets
"""

import itertools
import random
from fractions import Fraction

import pytest

from app.errors import EnumerationLimitError, InvalidInputError
from app.exponents import harmonic_mean, serrin_exponent
from app.models import ExponentVector
from app.moser import (
    enumerate_phi, gamma_closed, gamma_next, geometric_weight_sum, k_bounds,
    lambda_ladder, net_exponent_identity, sigma_exponent, stopping_data,
    tau_exponent, truncated_tau_exponent, vanishing_sigma_exponent,
)


# ============================================================================
# TEST FIXTURES
# ============================================================================

@pytest.fixture
def isotropic():
    """n=3, p=(2,2,2)"""
    return ExponentVector(p=(2, 2, 2))


@pytest.fixture
def anisotropic():
    """n=3, p=(3/2,3/2,5)"""
    return ExponentVector(p=("3/2", "3/2", "5"))


def corpus(count, seed=17, max_nodes=3000):
    """
    Random (ev, (I1, I2), gamma, eps) instances small enough to brute force.
    """
    rng = random.Random(seed)
    instances = []
    while len(instances) < count:
        n = rng.randint(2, 4)
        p = tuple(Fraction(rng.randint(11, 40), 10) for _ in range(n))
        if sum(1 / pi for pi in p) <= 1:
            continue
        ev = ExponentVector(p=p)
        indices = list(range(n))
        rng.shuffle(indices)
        split = rng.randint(0, n - 1)
        size = rng.randint(split + 1, n)
        i1, i2 = tuple(sorted(indices[:split])), tuple(sorted(indices[split:size]))
        eps = Fraction(1, rng.choice([2, 3, 5, 10]))
        _, _, threshold = stopping_data(ev, (i1, i2), eps)
        gamma = threshold + Fraction(rng.randint(0, 200), 10)
        p0 = stopping_data(ev, (i1, i2), eps)[0]
        _, kplus = k_bounds(ev, gamma, eps, p0)
        if (len(i1) + len(i2)) ** kplus > max_nodes:
            continue
        instances.append((ev, (i1, i2), gamma, eps))
    return instances


def brute_force_phi(ev, universe, gamma, threshold, depth):
    """Stopping paths found by scanning every sequence up to the given length"""
    found = set()
    for k in range(1, depth + 1):
        for path in itertools.product(universe, repeat=k):
            values = [gamma]
            for i in path:
                values.append(gamma_next(ev, values[-1], i))
            if all(v >= threshold for v in values[1:-1]) and values[-1] < threshold:
                found.add(path)
    return found


# ============================================================================
# EXPONENT RECURSION TESTS
# ============================================================================

def test_gamma_next_isotropic(isotropic):
    """gamma=10 maps to 10/3 for every index"""
    assert all(gamma_next(isotropic, 10, i) == Fraction(10, 3) for i in range(3))
    assert gamma_next(isotropic, 0, 1) == 0


def test_gamma_next_anisotropic(anisotropic):
    """gamma=9, i=3: 9 * 8/23 + 5 - 45/23 = 142/23"""
    assert gamma_next(anisotropic, 9, 2) == Fraction(142, 23)


def test_gamma_closed_examples(isotropic):
    """Empty path leaves gamma; two steps divide by 9"""
    assert gamma_closed(isotropic, 10, ()) == 10
    assert gamma_closed(isotropic, 10, (0, 2)) == Fraction(10, 9)


def test_gamma_closed_matches_iteration():
    """Closed form equals the folded recursion exactly, lengths up to 8"""
    rng = random.Random(1)
    for ev, _, gamma, _ in corpus(20, seed=2):
        for k in range(9):
            for _ in range(25):
                path = tuple(rng.randrange(ev.n) for _ in range(k))
                value = gamma
                for i in path:
                    value = gamma_next(ev, value, i)
                assert gamma_closed(ev, gamma, path) == value


def test_geometric_weight_sum(anisotropic):
    """Closed form of the weights against direct summation"""
    r = (anisotropic.n - harmonic_mean(anisotropic)) / anisotropic.n
    for k in range(8):
        assert geometric_weight_sum(anisotropic, k) == sum(
            (r ** (k - j) for j in range(1, k + 1)), Fraction(0)
        )


# ============================================================================
# STOPPING DATA AND BOUNDS TESTS
# ============================================================================

def test_stopping_data_isotropic(isotropic):
    """p0=4, p_eps=22/5, threshold 18/5"""
    assert stopping_data(isotropic, ((), (0, 1, 2)), "0.1") == (4, Fraction(22, 5), Fraction(18, 5))


def test_stopping_data_anisotropic(anisotropic):
    """Universe {1,2}, eps=1/5: p0 = 15/4, threshold 39/10"""
    p0, p_eps, threshold = stopping_data(anisotropic, ((0,), (1,)), "1/5")
    assert p0 == Fraction(15, 4)
    assert p_eps == Fraction(9, 2)
    assert threshold == Fraction(39, 10)


def test_stopping_data_threshold_above_serrin():
    """threshold > p_* - 1 on the corpus"""
    for ev, subsets, _, eps in corpus(60):
        _, _, threshold = stopping_data(ev, subsets, eps)
        assert threshold > serrin_exponent(ev) - 1


def test_stopping_data_validation(isotropic):
    """Empty I2, eps outside (0,1) and bad indices are rejected"""
    with pytest.raises(InvalidInputError):
        stopping_data(isotropic, ((0,), ()), "0.1")
    with pytest.raises(InvalidInputError):
        stopping_data(isotropic, ((), (0,)), 1)
    with pytest.raises(InvalidInputError):
        stopping_data(isotropic, ((), (3,)), "0.1")


def test_k_bounds_isotropic(isotropic):
    """gamma=10, eps=1/10, p0=4: k- = 1, k+ = 3"""
    assert k_bounds(isotropic, 10, "1/10", 4) == (1, 3)


def test_k_bounds_rejects_small_gamma(isotropic):
    with pytest.raises(InvalidInputError):
        k_bounds(isotropic, 3, "1/10", 4)


def test_kminus_one_at_threshold():
    """gamma equal to the threshold always gives k- = 1"""
    for ev, subsets, _, eps in corpus(60, seed=4):
        p0, _, threshold = stopping_data(ev, subsets, eps)
        assert k_bounds(ev, threshold, eps, p0)[0] == 1


# ============================================================================
# ENUMERATION TESTS
# ============================================================================

def test_enumerate_isotropic(isotropic):
    """Every length-1 path stops at 10/3 < 18/5"""
    trace = enumerate_phi(isotropic, ((), (0, 1, 2)), 10, "0.1")
    assert (trace.kminus, trace.kplus) == (1, 3)
    assert trace.phi[1] == [(0,), (1,), (2,)]
    assert trace.phi[2] == [] and trace.phi[3] == []
    assert trace.path_gammas[1] == [Fraction(10, 3)] * 3
    assert trace.boundary_hits == []
    assert trace.ladder == lambda_ladder(3)


def test_enumerate_boundary_hit(isotropic):
    """gamma = 54/5 lands exactly on the threshold after one step"""
    trace = enumerate_phi(isotropic, ((), (0, 1, 2)), "54/5", "1/10")
    assert trace.kminus == 2
    assert trace.boundary_hits == [(0,), (1,), (2,)]
    assert trace.phi[1] == []
    assert len(trace.phi[2]) == 9


def test_enumerate_corpus():
    """Stopping property, sandwich, count bound and exhaustiveness on 50+ instances"""
    for ev, subsets, gamma, eps in corpus(60):
        trace = enumerate_phi(ev, subsets, gamma, eps)
        threshold = trace.threshold
        universe = trace.index_universe

        for k, paths in trace.phi.items():
            if k < trace.kminus or k > trace.kplus:
                assert paths == []
            for path in paths:
                prefixes = [gamma_closed(ev, gamma, path[:j]) for j in range(1, k)]
                assert all(v >= threshold for v in prefixes)
                assert gamma_closed(ev, gamma, path) < threshold

        for path in itertools.product(universe, repeat=trace.kminus - 1):
            if path:
                assert gamma_closed(ev, gamma, path) >= threshold

        assert trace.path_count() <= len(universe) ** trace.kplus
        listed = {path for paths in trace.phi.values() for path in paths}
        assert listed == brute_force_phi(ev, universe, gamma, threshold, trace.kplus)


def test_enumerate_deterministic_across_workers(anisotropic):
    """Thread count does not change the trace"""
    one = enumerate_phi(anisotropic, ((0, 1), (2,)), 40, "1/2", max_workers=1)
    many = enumerate_phi(anisotropic, ((0, 1), (2,)), 40, "1/2", max_workers=4)
    assert one == many


def test_enumeration_guard(isotropic):
    """3^k+ beyond the node limit is rejected before enumerating"""
    with pytest.raises(EnumerationLimitError, match="limit"):
        enumerate_phi(isotropic, ((), (0, 1, 2)), 10 ** 7, "1/10")


def test_kmax_below_kplus_rejected(isotropic):
    with pytest.raises(InvalidInputError, match="k\\+"):
        enumerate_phi(isotropic, ((), (0, 1, 2)), 10, "0.1", kmax=2)


def test_kmax_above_kplus_pads_phi(isotropic):
    """A larger kmax only adds empty levels"""
    trace = enumerate_phi(isotropic, ((), (0, 1, 2)), 10, "0.1", kmax=5)
    assert sorted(trace.phi) == [1, 2, 3, 4, 5]
    assert trace.phi[4] == [] and trace.phi[5] == []


# ============================================================================
# LADDER TESTS
# ============================================================================

def test_ladder_example():
    """k+ = 3: 0.265625, 0.28125, 0.3125, 0.375"""
    assert [float(v) for v in lambda_ladder(3)] == [0.265625, 0.28125, 0.3125, 0.375]


def test_ladder_properties():
    """Top rung 3/8, values in (1/4, 3/8], differences doubling"""
    for kplus in range(0, 12):
        ladder = lambda_ladder(kplus)
        assert ladder[-1] == Fraction(3, 8)
        assert all(Fraction(1, 4) < v <= Fraction(3, 8) for v in ladder)
        diffs = [b - a for a, b in zip(ladder, ladder[1:])]
        assert all(d > 0 for d in diffs)
        assert all(b == 2 * a for a, b in zip(diffs, diffs[1:]))


def test_ladder_rejects_negative():
    with pytest.raises(InvalidInputError):
        lambda_ladder(-1)


# ============================================================================
# EXPONENT BUDGET TESTS
# ============================================================================

def test_sigma_example(isotropic):
    """q=4, gamma=10, path (1): sigma = 3 * 2 / 40"""
    assert sigma_exponent(isotropic, 4, 10, (0,)) == Fraction(3, 20)
    assert sigma_exponent(isotropic, 4, 10, ()) == 0


def test_sigma_concatenation(anisotropic):
    """sigma over a concatenated path splits with the prefix growth weight"""
    growth = anisotropic.n / (anisotropic.n - harmonic_mean(anisotropic))
    q, gamma = Fraction(6), Fraction(12)
    head, tail = (0, 2), (1, 1, 2)
    whole = sigma_exponent(anisotropic, q, gamma, head + tail)
    split = sigma_exponent(anisotropic, q, gamma, head) + growth ** len(head) * sigma_exponent(
        anisotropic, q, gamma, tail
    )
    assert whole == split


def test_net_identity_example(isotropic):
    """tau = -1/40, sigma = 3/20, both sides -7/40"""
    assert tau_exponent(isotropic, 10, (0,)) == Fraction(-1, 40)
    lhs, rhs = net_exponent_identity(isotropic, 10, (0,))
    assert lhs == rhs == Fraction(-7, 40)


def test_net_identity_random():
    """Both sides agree exactly on random paths and gammas"""
    rng = random.Random(9)
    for ev, _, gamma, _ in corpus(50, seed=6):
        for k in range(1, 7):
            path = tuple(rng.randrange(ev.n) for _ in range(k))
            lhs, rhs = net_exponent_identity(ev, gamma, path)
            assert lhs == rhs


def test_net_identity_large_gamma(isotropic):
    """For large gamma the difference tends to -1/p_*"""
    lhs, _ = net_exponent_identity(isotropic, 10 ** 9, (0, 1))
    assert float(lhs) == pytest.approx(-0.25, abs=1e-8)


def test_vanishing_sigma(anisotropic):
    """The vanishing variant is sigma at q = p_eps divided by eps"""
    eps, p_eps = Fraction(1, 5), Fraction(9, 2)
    value = vanishing_sigma_exponent(anisotropic, 8, eps, p_eps, (0, 1))
    assert value == sigma_exponent(anisotropic, p_eps, 8, (0, 1)) / eps


def test_truncated_tau(anisotropic):
    """Matches the direct formula, is clipped at 0 and scales by 1/eps"""
    q, gamma, nu = Fraction(9, 2), Fraction(8), Fraction(1, 2)
    path = (0,)
    growth = anisotropic.n / (anisotropic.n - harmonic_mean(anisotropic))
    budget = sum((q - anisotropic.p[i]) / anisotropic.p[i] for i in (0, 1))
    factor = 1 - gamma_closed(anisotropic, gamma, path) / (serrin_exponent(anisotropic) - 1 + nu)
    direct = max(Fraction(0), growth * factor * budget / (q * gamma))

    assert truncated_tau_exponent(anisotropic, q, gamma, path, nu, (0, 1)) == direct
    with_eps = truncated_tau_exponent(anisotropic, q, gamma, path, nu, (0, 1), eps="1/4")
    assert with_eps == 4 * direct
    assert truncated_tau_exponent(anisotropic, q, 1000, (), nu, (0, 1)) == 0


def test_truncated_tau_rejects_nu(anisotropic):
    with pytest.raises(InvalidInputError):
        truncated_tau_exponent(anisotropic, 5, 8, (0,), 1, (0,))


# ============================================================================
# RUN TESTS
# ============================================================================

if __name__ == "__main__":
    pytest.main([__file__, "-v"])
