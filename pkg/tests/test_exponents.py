"""
Tests for Exponent Calculus
===========================
Golden values, index sets, q0 and regime classification
"""

import math
import random
from fractions import Fraction

import pytest
from pydantic import ValidationError

from app.errors import InvalidInputError
from app.exponents import (
    _largest_root, analyze, classify_regime, critical_exponent, derive, harmonic_mean,
    p_bar0, parse_exponent_vector, phi_polynomial, phi_value, q0,
    serrin_exponent, serrin_identity_holds, theta_set,
)
from app.models import ExponentVector, Regime


# ============================================================================
# TEST FIXTURES
# ============================================================================

@pytest.fixture
def isotropic():
    """n=3, p=(2,2,2)"""
    return ExponentVector(p=(2, 2, 2))


@pytest.fixture
def anisotropic():
    """n=3, p=(3/2,3/2,5), the vanishing regime example"""
    return ExponentVector(p=("3/2", "3/2", "5"))


def random_vectors(count, seed=7):
    """Valid exponent vectors with n in 2..5 and p_i in (1, 6]"""
    rng = random.Random(seed)
    vectors = []
    while len(vectors) < count:
        n = rng.randint(2, 5)
        p = tuple(Fraction(rng.randint(11, 60), 10) for _ in range(n))
        if sum(1 / pi for pi in p) <= 1:
            continue
        vectors.append(ExponentVector(p=p))
    return vectors


def regime_vectors(count, regimes, seed=13):
    """count valid exponent vectors whose regime is in regimes, by rejection"""
    rng = random.Random(seed)
    vectors = []
    draws = 0
    while len(vectors) < count:
        draws += 1
        assert draws <= 100 * count, "regime too rare for rejection sampling"
        n = rng.randint(2, 5)
        p = tuple(Fraction(rng.randint(11, 60), 10) for _ in range(n))
        if sum(1 / pi for pi in p) <= 1:
            continue
        ev = ExponentVector(p=p)
        if derive(ev).regime in regimes:
            vectors.append(ev)
    return vectors


# ============================================================================
# PARSING AND VALIDATION TESTS
# ============================================================================

def test_parse_formats():
    """Strings, dicts and lists give the same exact vector"""
    a = parse_exponent_vector("3/2,3/2,5")
    b = parse_exponent_vector({"n": 3, "p": ["3/2", "3/2", "5"]})
    c = parse_exponent_vector([Fraction(3, 2), 1.5, 5])
    assert a == b == c
    assert a.p == (Fraction(3, 2), Fraction(3, 2), Fraction(5))


def test_decimal_strings_are_exact():
    """"0.1"-style decimals parse to the exact rational"""
    ev = parse_exponent_vector("2.2,2.2,2.2")
    assert ev.p[0] == Fraction(11, 5)


def test_rejects_small_exponent():
    """p_i <= 1 is rejected with a readable message"""
    with pytest.raises(ValidationError, match="p_i must exceed 1"):
        ExponentVector(p=(1, 2))


def test_rejects_short_vector():
    """n = 1 is rejected"""
    with pytest.raises(ValidationError, match="n must be at least 2"):
        ExponentVector(p=(2,))


def test_rejects_harmonic_mean_above_dimension():
    """sum 1/p_i <= 1 is rejected"""
    with pytest.raises(ValidationError, match="harmonic mean"):
        ExponentVector(p=(3, 3))


def test_rejects_dimension_mismatch():
    """Explicit n must match the length of p"""
    with pytest.raises(ValidationError):
        ExponentVector(n=3, p=(2, 2))


def test_rejects_garbage():
    """Unparseable entries fail validation"""
    with pytest.raises(ValidationError):
        parse_exponent_vector("2,abc")
    with pytest.raises(InvalidInputError):
        parse_exponent_vector(42)


# ============================================================================
# DERIVED EXPONENT TESTS
# ============================================================================

def test_derive_isotropic(isotropic):
    """p=(2,2,2): p=2, p*=6, p_*=4, subserrin"""
    de = derive(isotropic)
    assert de.p_harmonic == 2
    assert de.p_critical == 6
    assert de.p_serrin == 4
    assert de.regime == Regime.SUBSERRIN


def test_derive_anisotropic(anisotropic):
    """p=(3/2,3/2,5): p=45/23, p*=45/8, p_*=15/4, vanishing"""
    de = derive(anisotropic)
    assert de.p_harmonic == Fraction(45, 23)
    assert de.p_critical == Fraction(45, 8)
    assert de.p_serrin == Fraction(15, 4)
    assert de.p_max == 5
    assert de.p_min == Fraction(3, 2)
    assert de.regime == Regime.VANISHING
    assert de.theta is None and de.q0 is None


def test_derive_planar():
    """n=2, p=(3/2,3/2): p=3/2, p*=6, p_*=3"""
    de = derive(ExponentVector(p=("3/2", "3/2")))
    assert (de.p_harmonic, de.p_critical, de.p_serrin) == (Fraction(3, 2), 6, 3)
    assert de.regime == Regime.SUBSERRIN


def test_regime_recomputed_from_vector():
    """p+ = 45/8 changes p itself; the regime follows the new exponents"""
    ev = ExponentVector(p=("3/2", "3/2", "45/8"))
    de = derive(ev)
    assert de.p_critical == critical_exponent(ev)
    assert de.p_critical != Fraction(45, 8)
    expected = (
        Regime.SUPERCRITICAL if Fraction(45, 8) >= de.p_critical
        else Regime.VANISHING if Fraction(45, 8) > de.p_serrin
        else Regime.SUBSERRIN
    )
    assert classify_regime(de) == expected


def test_serrin_limit():
    """p=(3/2,3/2,3): p=9/5 and p_* = 3 = p+"""
    de = derive(ExponentVector(p=("3/2", "3/2", "3")))
    assert de.p_harmonic == Fraction(9, 5)
    assert de.p_serrin == 3
    assert de.regime == Regime.SERRIN_LIMIT


def test_helper_exponents_match_record(anisotropic):
    """Standalone helpers agree with derive()"""
    de = derive(anisotropic)
    assert harmonic_mean(anisotropic) == de.p_harmonic
    assert critical_exponent(anisotropic) == de.p_critical
    assert serrin_exponent(anisotropic) == de.p_serrin


# ============================================================================
# THETA AND VANISHING THRESHOLD TESTS
# ============================================================================

def test_theta_anisotropic(anisotropic):
    """Index 3 fails the Theta inequality"""
    de = derive(anisotropic)
    assert theta_set(anisotropic, de) == (0, 1)
    assert p_bar0(anisotropic, (0, 1)) == Fraction(15, 4)


def test_theta_isotropic(isotropic):
    """Every index qualifies by symmetry; p_bar0 = p_*"""
    de = derive(isotropic)
    assert theta_set(isotropic, de) == (0, 1, 2)
    assert p_bar0(isotropic, (0, 1, 2)) == 4


def test_theta_contains_minimum_index():
    """The index attaining p- is always in Theta"""
    for ev in random_vectors(200, seed=3):
        de = derive(ev)
        members = theta_set(ev, de)
        assert ev.p.index(min(ev.p)) in members


def test_p_bar0_planar():
    """n=2, p=(3/2,3/2): p_bar0 = p_* = 3"""
    ev = ExponentVector(p=("3/2", "3/2"))
    de = derive(ev)
    assert p_bar0(ev, theta_set(ev, de)) == 3


# ============================================================================
# q0 TESTS
# ============================================================================

def test_q0_golden(anisotropic):
    """256 q^2 - 1434 q + 1575 has roots 3/2 and 525/128"""
    de = analyze(anisotropic)
    a2, a1, a0 = phi_polynomial(anisotropic, de, de.p_bar0)
    scale = a2 / 256
    assert (a2 / scale, a1 / scale, a0 / scale) == (256, -1434, 1575)
    assert de.q0_exact == Fraction(525, 128)
    assert de.q0 == 4.1015625
    assert de.i0 == (2,)
    assert de.i0_complement == (0, 1)
    assert q0(anisotropic, de) == (de.q0, (2,))


def test_q0_sign_scan(anisotropic):
    """phi changes sign at 525/128 and is negative beyond it"""
    de = analyze(anisotropic)
    root = Fraction(525, 128)
    step = Fraction(1, 1000)
    assert phi_value(anisotropic, de, de.p_bar0, root) == 0
    assert phi_value(anisotropic, de, de.p_bar0, root - step) > 0
    assert phi_value(anisotropic, de, de.p_bar0, root + step) < 0


def test_irrational_root_with_close_neighbor():
    """Roots 3 +- sqrt(2) 1e-10: the refinement returns the larger one"""
    a0 = -9 + 2 * Fraction(1, 10 ** 20)
    value, exact = _largest_root(Fraction(-1), Fraction(6), a0)
    assert exact is None
    assert value == pytest.approx(3 + math.sqrt(2) * 1e-10, abs=1e-15)
    assert value > 3 + 1e-10


def test_q0_isotropic(isotropic):
    """Isotropic exponents: q0 = p_* = 4 and I0 empty"""
    de = analyze(isotropic)
    assert de.q0_exact == 4
    assert de.i0 == ()


def test_q0_requires_p_bar0(isotropic):
    """q0 needs the vanishing threshold"""
    with pytest.raises(InvalidInputError):
        q0(isotropic, derive(isotropic))


def test_q0_properties_random():
    """q0 >= p_*, phi(q) < 0 past q0, and I0 matches p_bar0"""
    for ev in random_vectors(1000):
        de = analyze(ev)
        assert serrin_identity_holds(ev)
        assert de.q0 >= float(de.p_serrin)
        assert de.i0 == tuple(i for i, pi in enumerate(ev.p) if pi > de.p_bar0)
        assert set(de.i0) | set(de.i0_complement) == set(range(ev.n))

        beyond = Fraction(de.q0) + 1
        assert phi_value(ev, de, de.p_bar0, beyond) < 0

        a2, a1, a0 = phi_polynomial(ev, de, de.p_bar0)
        q = Fraction(7, 3)
        assert (a2 * q + a1) * q + a0 == phi_value(ev, de, de.p_bar0, q)


def test_q0_equals_serrin_exponent_below_limit():
    """p+ <= p_*: I0 is empty, phi(p_*) = 0 exactly and q0 = p_*"""
    vectors = regime_vectors(1000, {Regime.SUBSERRIN, Regime.SERRIN_LIMIT})
    assert len(vectors) >= 1000
    for ev in vectors:
        de = analyze(ev)
        assert de.i0 == ()
        assert phi_value(ev, de, de.p_bar0, de.p_serrin) == 0
        assert de.q0_exact == de.p_serrin
        assert de.q0 == float(de.p_serrin)


def test_q0_below_p_max_when_vanishing():
    """p_* < p+ < p*: q0 < p+"""
    vectors = regime_vectors(1000, {Regime.VANISHING}, seed=17)
    assert len(vectors) >= 1000
    for ev in vectors:
        de = analyze(ev)
        assert float(de.p_serrin) <= de.q0 < float(de.p_max)


def test_permutation_invariance():
    """Permuting p permutes I0 and Theta and leaves the scalars unchanged"""
    for ev in random_vectors(100, seed=11):
        order = tuple(reversed(range(ev.n)))
        base, moved = analyze(ev), analyze(ev.permuted(order))
        assert moved.p_critical == base.p_critical
        assert moved.p_bar0 == base.p_bar0
        assert moved.q0 == base.q0
        assert set(moved.i0) == {order.index(i) for i in base.i0}
        assert set(moved.theta) == {order.index(i) for i in base.theta}


def test_derive_rejects_supercritical_harmonic_mean():
    """derive() guards p < n independently of the model"""
    ev = ExponentVector.model_construct(n=2, p=(Fraction(3), Fraction(3)))
    with pytest.raises(InvalidInputError):
        derive(ev)


# ============================================================================
# RUN TESTS
# ============================================================================

if __name__ == "__main__":
    pytest.main([__file__, "-v"])
