"""
Closed Forms
============
Vectorized evaluators for the explicit functions and sets of the theory:
the isotropic extremal, decay envelopes, the anisotropic quasi-distance d_p
and membership in the annular domains Omega_q.

Every evaluator takes one coordinate array per axis (broadcastable, scalars
allowed) and returns an array of values. Specs are validated on
construction, so evaluation never checks exponents again.
"""

from fractions import Fraction
from typing import Callable, Sequence, Tuple

import numpy as np

from app.errors import InvalidInputError
from app.exponents import critical_exponent, derive
from app.models import EnvelopeSpec, ExponentVector, OmegaSpec, Regime, to_fraction
from app.transforms import Evaluator


# ============================================================================
# EXTREMALS AND ENVELOPES
# ============================================================================

def isotropic_extremal(n: int, p, a: float, b: float) -> Evaluator:
    """
    x -> (a + b sum_i |x_i|^{p/(p-1)})^{(p-n)/p}

    Args:
        n: Dimension
        p: Exponent with 1 < p < n
        a, b: Positive shape parameters

    Returns:
        Strictly positive evaluator
    """
    p = to_fraction(p)
    if not (1 < p < n):
        raise InvalidInputError("isotropic extremal needs 1 < p < n")
    if a <= 0 or b <= 0:
        raise InvalidInputError("a and b must be positive")

    power = float(p / (p - 1))
    exponent = float((p - n) / p)
    a, b = float(a), float(b)

    def evaluate(coords: Sequence[np.ndarray]) -> np.ndarray:
        if len(coords) != n:
            raise InvalidInputError("point dimension does not match n")
        total = sum(np.abs(np.asarray(x, dtype=float)) ** power for x in coords)
        return (a + b * total) ** exponent

    return evaluate


def envelope_exponents(spec: EnvelopeSpec) -> Tuple[Fraction, ...]:
    """q p_i / (q - p_i) for each axis in spec.axes"""
    return tuple(spec.q * spec.ev.p[i] / (spec.q - spec.ev.p[i]) for i in spec.axes)


def _inverse_power_sum(axes: Sequence[int], exponents: Sequence[float], c: float) -> Evaluator:
    def evaluate(coords: Sequence[np.ndarray]) -> np.ndarray:
        total = sum(
            np.abs(np.asarray(coords[i], dtype=float)) ** e for i, e in zip(axes, exponents)
        )
        return c / (1.0 + total)

    return evaluate


def decay_envelope(spec: EnvelopeSpec) -> Evaluator:
    """x -> c (1 + sum_{i in axes} |x_i|^{q p_i/(q - p_i)})^{-1}"""
    exponents = [float(e) for e in envelope_exponents(spec)]
    return _inverse_power_sum(spec.axes, exponents, spec.c)


def weak_decay_envelope(ev: ExponentVector, k0: float) -> Evaluator:
    """
    x -> k0 (sum_i |x_i|^{p_i/(p* - p_i)})^{-1}, the preliminary decay shape
    valid while p+ < p*. Infinite at the origin.
    """
    p_critical = critical_exponent(ev)
    if max(ev.p) >= p_critical:
        raise InvalidInputError("weak envelope needs p+ < p*")
    if k0 <= 0:
        raise InvalidInputError("k0 must be positive")
    exponents = [float(pi / (p_critical - pi)) for pi in ev.p]
    k0 = float(k0)

    def evaluate(coords: Sequence[np.ndarray]) -> np.ndarray:
        total = sum(np.abs(np.asarray(x, dtype=float)) ** e for x, e in zip(coords, exponents))
        with np.errstate(divide="ignore"):
            return k0 / total

    return evaluate


# ============================================================================
# ANISOTROPIC DISTANCE
# ============================================================================

def distance_exponents(ev: ExponentVector) -> Tuple[Fraction, ...]:
    """
    delta p_i / (p* - p_i) with delta = (p* - p+)/p+.

    Raises:
        InvalidInputError: when p+ >= p*
    """
    de = derive(ev)
    if de.regime == Regime.SUPERCRITICAL:
        raise InvalidInputError("d_p needs p+ < p*")
    delta = (de.p_critical - de.p_max) / de.p_max
    return tuple(delta * pi / (de.p_critical - pi) for pi in ev.p)


def aniso_distance(ev: ExponentVector) -> Callable[[Sequence[np.ndarray], Sequence[np.ndarray]], np.ndarray]:
    """d_p(x, y) = sum_i |x_i - y_i|^{delta p_i/(p* - p_i)}"""
    exponents = [float(e) for e in distance_exponents(ev)]

    def distance(x: Sequence[np.ndarray], y: Sequence[np.ndarray]) -> np.ndarray:
        if len(x) != ev.n or len(y) != ev.n:
            raise InvalidInputError("point dimension does not match n")
        return sum(
            np.abs(np.asarray(xi, dtype=float) - np.asarray(yi, dtype=float)) ** e
            for xi, yi, e in zip(x, y, exponents)
        )

    return distance


# ============================================================================
# ANNULAR DOMAINS
# ============================================================================

def omega_contains(spec: OmegaSpec, x: Sequence[np.ndarray]) -> np.ndarray:
    """
    sum_{I1} |x_i|^{q_i} < (1 + lam) r1  and  |sum_{I2} |x_i|^{q_i} - r2| < lam r2

    Returns a boolean (array) broadcast over the coordinates.
    """
    def power_sum(indices: Sequence[int]) -> np.ndarray:
        return sum(
            (np.abs(np.asarray(x[i], dtype=float)) ** spec.qweights[i] for i in indices),
            np.zeros(()),
        )

    inner = power_sum(spec.i1) < (1.0 + spec.lam) * spec.r1
    ring = np.abs(power_sum(spec.i2) - spec.r2) < spec.lam * spec.r2
    return np.logical_and(inner, ring)


def vanishing_annulus(ev: ExponentVector, p0, eps, radius: float, lam: float) -> OmegaSpec:
    """
    A_eps(R, lam): ball part over I1 = {p_i < p0} with radius R^{1/eps},
    annulus over I2 = {p_i = p0} with radius R, where p_eps = (1 + eps) p0,
    q_i = p_eps p_i / (p_eps - p_i) on I1 and q_i = p_eps on I2.
    """
    p0, eps = to_fraction(p0), to_fraction(eps)
    if not (0 < eps < 1):
        raise InvalidInputError("eps must lie in (0, 1)")
    if p0 not in ev.p:
        raise InvalidInputError("p0 must be one of the p_i")
    p_eps = (1 + eps) * p0
    i1 = tuple(i for i, pi in enumerate(ev.p) if pi < p0)
    i2 = tuple(i for i, pi in enumerate(ev.p) if pi == p0)
    qweights = {i: float(p_eps * ev.p[i] / (p_eps - ev.p[i])) for i in i1}
    qweights.update({i: float(p_eps) for i in i2})
    return OmegaSpec(
        i1=i1, i2=i2, r1=float(radius) ** (1.0 / float(eps)), r2=float(radius),
        lam=lam, qweights=qweights,
    )


def decay_annulus(ev: ExponentVector, q, axes: Sequence[int], radius: float, lam: float) -> OmegaSpec:
    """
    A_q(R, lam): no ball part, annulus over the given axes with
    q_i = q p_i / (q - p_i).
    """
    q = to_fraction(q)
    if any(q <= ev.p[i] for i in axes):
        raise InvalidInputError("q must exceed p_i on every annulus axis")
    qweights = {i: float(q * ev.p[i] / (q - ev.p[i])) for i in axes}
    return OmegaSpec(i1=(), i2=tuple(axes), r1=1.0, r2=float(radius), lam=lam, qweights=qweights)
