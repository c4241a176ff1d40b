"""
Exponent Calculus
=================
Exact computation of the exponents and index sets attached to an
anisotropy vector p = (p_1, ..., p_n).

This module handles:
1. Harmonic mean, critical and Serrin exponents, p+ and p-
2. The index set Theta and the vanishing threshold p_bar0
3. The decay threshold q0 (largest root of a quadratic) and I0
4. Regime classification

Everything except an irrational q0 is computed in rational arithmetic.
"""

import logging
import math
from fractions import Fraction
from typing import Any, Optional, Sequence, Tuple

import mpmath as mp

from app.config import Q0_PRECISION_BITS, Q0_TOLERANCE
from app.errors import InvalidInputError
from app.models import DerivedExponents, ExponentVector, Regime

logger = logging.getLogger(__name__)


# ============================================================================
# PARSING
# ============================================================================

def parse_exponent_vector(obj: Any) -> ExponentVector:
    """
    Build an ExponentVector from JSON-like input.

    Accepts {"n": 3, "p": ["3/2", "3/2", "5"]}, a bare list of exponents
    or a comma separated string such as "3/2,3/2,5".
    """
    if isinstance(obj, ExponentVector):
        return obj
    if isinstance(obj, str):
        items = [item for item in obj.split(",") if item.strip()]
        return ExponentVector(p=tuple(items))
    if isinstance(obj, dict):
        return ExponentVector.model_validate(obj)
    if isinstance(obj, (list, tuple)):
        return ExponentVector(p=tuple(obj))
    raise InvalidInputError(f"cannot build an exponent vector from {obj!r}")


# ============================================================================
# DEFINITIONAL EXPONENTS
# ============================================================================

def harmonic_mean(ev: ExponentVector) -> Fraction:
    return ev.n / sum(1 / pi for pi in ev.p)


def critical_exponent(ev: ExponentVector) -> Fraction:
    p = harmonic_mean(ev)
    return ev.n * p / (ev.n - p)


def serrin_exponent(ev: ExponentVector) -> Fraction:
    p = harmonic_mean(ev)
    return (ev.n - 1) * p / (ev.n - p)


def derive(ev: ExponentVector) -> DerivedExponents:
    """
    Compute p, p*, p_*, p+, p- and the regime.

    Theta, p_bar0, q0 and I0 are left unset; see analyze() for the full record.

    Args:
        ev: Validated exponent vector

    Returns:
        DerivedExponents with exact rationals
    """
    n = ev.n
    p = harmonic_mean(ev)
    if p >= n:
        raise InvalidInputError("harmonic mean p must be below n")

    p_critical = n * p / (n - p)
    p_serrin = (n - 1) * p / (n - p)

    de = DerivedExponents(
        p_harmonic=p,
        p_critical=p_critical,
        p_serrin=p_serrin,
        p_max=max(ev.p),
        p_min=min(ev.p),
        regime=Regime.SUBSERRIN,
    )
    return de.model_copy(update={"regime": classify_regime(de)})


def classify_regime(de: DerivedExponents) -> Regime:
    """Compare p+ against p_* and p* exactly"""
    if de.p_max < de.p_serrin:
        return Regime.SUBSERRIN
    if de.p_max == de.p_serrin:
        return Regime.SERRIN_LIMIT
    if de.p_max < de.p_critical:
        return Regime.VANISHING
    return Regime.SUPERCRITICAL


def serrin_identity_holds(ev: ExponentVector) -> bool:
    """p_* - 1 = n (p - 1) / (n - p), checked exactly"""
    p = harmonic_mean(ev)
    return serrin_exponent(ev) - 1 == ev.n * (p - 1) / (ev.n - p)


# ============================================================================
# VANISHING THRESHOLD
# ============================================================================

def theta_set(ev: ExponentVector, de: DerivedExponents) -> Tuple[int, ...]:
    """
    Indices i with
    (p_i - p- - (n/p)(p_i - p_*)) * sum_j max((p_i - p_j)/p_j, 0) >= (p_* - 1)(p_i - p-).

    The index attaining p- always qualifies (both sides vanish).
    """
    ratio = ev.n / de.p_harmonic
    members = []
    for i, pi in enumerate(ev.p):
        spread = sum(max((pi - pj) / pj, Fraction(0)) for pj in ev.p)
        lhs = (pi - de.p_min - ratio * (pi - de.p_serrin)) * spread
        rhs = (de.p_serrin - 1) * (pi - de.p_min)
        if lhs >= rhs:
            members.append(i)
    return tuple(members)


def p_bar0(ev: ExponentVector, theta: Sequence[int]) -> Fraction:
    """max(p_*, max{p_i : i in Theta})"""
    candidates = [serrin_exponent(ev)] + [ev.p[i] for i in theta]
    return max(candidates)


# ============================================================================
# DECAY THRESHOLD q0
# ============================================================================

def phi_polynomial(
    ev: ExponentVector, de: DerivedExponents, threshold: Fraction
) -> Tuple[Fraction, Fraction, Fraction]:
    """
    Coefficients (a2, a1, a0) of
    phi(q) = (q - p- - (n/p)(q - p_*)) * sum_{I0^c} (q - p_i)/p_i - (p_* - 1)(q - p-)
    where I0^c = {i : p_i <= threshold}.
    """
    ratio = ev.n / de.p_harmonic
    complement = [pi for pi in ev.p if pi <= threshold]
    alpha = 1 - ratio
    beta = ratio * de.p_serrin - de.p_min
    weight = sum(1 / pi for pi in complement)
    m = len(complement)
    a2 = alpha * weight
    a1 = beta * weight - alpha * m - (de.p_serrin - 1)
    a0 = -beta * m + (de.p_serrin - 1) * de.p_min
    return a2, a1, a0


def phi_value(ev: ExponentVector, de: DerivedExponents, threshold: Fraction, q: Fraction) -> Fraction:
    """phi(q) evaluated from its definition"""
    ratio = ev.n / de.p_harmonic
    spread = sum((q - pi) / pi for pi in ev.p if pi <= threshold)
    return (q - de.p_min - ratio * (q - de.p_serrin)) * spread - (de.p_serrin - 1) * (q - de.p_min)


def _exact_sqrt(value: Fraction) -> Optional[Fraction]:
    """Square root of a nonnegative rational when it is itself rational"""
    num_root = math.isqrt(value.numerator)
    den_root = math.isqrt(value.denominator)
    if num_root * num_root == value.numerator and den_root * den_root == value.denominator:
        return Fraction(num_root, den_root)
    return None


def _mpf_to_fraction(value: mp.mpf) -> Fraction:
    """Exact binary value of an mpf"""
    man, exp = value.man_exp
    return Fraction(int(man)) * Fraction(2) ** int(exp)


def _largest_root(a2: Fraction, a1: Fraction, a0: Fraction) -> Tuple[Optional[float], Optional[Fraction]]:
    """
    Largest real root of a2 q^2 + a1 q + a0 with a2 < 0.

    Returns:
        (float root or None, exact root or None)
    """
    disc = a1 * a1 - 4 * a2 * a0
    if disc < 0:
        return None, None

    root = _exact_sqrt(disc)
    if root is not None:
        exact = (-a1 - root) / (2 * a2)
        return float(exact), exact

    logger.debug("q0 discriminant %s is not a rational square, refining numerically", disc)
    with mp.workprec(Q0_PRECISION_BITS):
        a2m = mp.mpf(a2.numerator) / a2.denominator
        a1m = mp.mpf(a1.numerator) / a1.denominator
        sqrt_disc = mp.sqrt(mp.mpf(disc.numerator) / disc.denominator)
        center = _mpf_to_fraction((-a1m - sqrt_disc) / (2 * a2m))
        separation = _mpf_to_fraction(sqrt_disc / abs(a2m))

    def poly(q: Fraction) -> Fraction:
        return (a2 * q + a1) * q + a0

    # phi > 0 between the roots and < 0 beyond the largest one; the bracket
    # stays within a quarter of the root separation of the estimate
    width = min(separation / 4, Fraction(1, 2 ** (Q0_PRECISION_BITS - 28)) * max(Fraction(1), abs(center)))
    lo, hi = center - width, center + width
    while poly(lo) < 0:
        lo -= width
    while poly(hi) > 0:
        hi += width
    while hi - lo > Q0_TOLERANCE:
        mid = (lo + hi) / 2
        if poly(mid) > 0:
            lo = mid
        else:
            hi = mid
    return float((lo + hi) / 2), None


def q0_details(
    ev: ExponentVector, de: DerivedExponents
) -> Tuple[float, Tuple[int, ...], Optional[Fraction], Optional[float]]:
    """
    Decay threshold q0 and the index set I0, with the audit fields.

    q0 = max(p_*, largest real root of phi); q0 = p_* when phi has no real root.

    Args:
        ev: Exponent vector
        de: Derived exponents with p_bar0 populated

    Returns:
        (q0, I0, exact q0 or None, unclamped largest root or None)
    """
    if de.p_bar0 is None:
        raise InvalidInputError("p_bar0 must be populated before computing q0")

    i0 = tuple(i for i, pi in enumerate(ev.p) if pi > de.p_bar0)
    a2, a1, a0 = phi_polynomial(ev, de, de.p_bar0)
    raw, exact = _largest_root(a2, a1, a0)

    if raw is None:
        logger.debug("phi has no real root, q0 = p_*")
        return float(de.p_serrin), i0, de.p_serrin, None

    if exact is not None:
        if exact >= de.p_serrin:
            return float(exact), i0, exact, raw
        return float(de.p_serrin), i0, de.p_serrin, raw

    if raw >= float(de.p_serrin):
        return raw, i0, None, raw
    return float(de.p_serrin), i0, de.p_serrin, raw


def q0(ev: ExponentVector, de: DerivedExponents) -> Tuple[float, Tuple[int, ...]]:
    """(q0, I0); see q0_details for the exact value and the unclamped root"""
    value, i0, _, _ = q0_details(ev, de)
    return value, i0


# ============================================================================
# CONVENIENCE FUNCTIONS
# ============================================================================

def analyze(ev: ExponentVector) -> DerivedExponents:
    """
    Full exponent record: derive, Theta, p_bar0, q0 and I0.

    Example:
        analyze(ExponentVector(p=("3/2", "3/2", "5"))).q0_exact == Fraction(525, 128)
    """
    de = derive(ev)
    theta = theta_set(ev, de)
    threshold = p_bar0(ev, theta)
    de = de.model_copy(update={"theta": theta, "p_bar0": threshold})

    value, i0, exact, raw = q0_details(ev, de)
    complement = tuple(i for i in range(ev.n) if i not in i0)
    logger.debug("p=%s p_bar0=%s q0=%s I0=%s", de.p_harmonic, threshold, value, i0)
    return de.model_copy(update={
        "q0": value,
        "q0_exact": exact,
        "q0_raw_root": raw,
        "i0": i0,
        "i0_complement": complement,
    })
