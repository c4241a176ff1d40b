"""
Scaling Transforms
==================
Diagonal coordinate changes that preserve the anisotropic Sobolev quotient.

This module handles:
1. The one-parameter scale family u -> lambda u(lambda^{(p*-p_i)/p_i} x_i)
2. The unit-Jacobian maps tau_theta and sigma_theta(u)
3. The Euler-Lagrange rescaling of a constrained minimizer
4. Unit-mass normalization and the blow-down map used for decay
5. Applying a map to a vectorized evaluator

Maps are built from exact exponents; per-axis factors are computed as
monomials whose exponents are collected per distinct base, so symmetric
inputs give identity maps exactly.
"""

import math
from collections import OrderedDict
from fractions import Fraction
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from app.config import THETA_RELATIVE_TOLERANCE
from app.errors import InvalidInputError
from app.exponents import critical_exponent, harmonic_mean
from app.models import DiagonalMap, ExponentVector, ThetaVector, to_fraction

# An evaluator takes one coordinate array per axis (broadcastable) and
# returns the values at those points.
Evaluator = Callable[[Sequence[np.ndarray]], np.ndarray]


# ============================================================================
# HELPERS
# ============================================================================

def _monomial(terms: Sequence[Tuple[float, Fraction]]) -> float:
    """
    prod base**exponent with exponents summed exactly per distinct base.

    Args:
        terms: (base, exponent) pairs, bases strictly positive

    Returns:
        The product; exactly 1.0 when every collected exponent cancels
    """
    collected: Dict[float, Fraction] = OrderedDict()
    for base, exponent in terms:
        collected[base] = collected.get(base, Fraction(0)) + exponent
    active = [(b, e) for b, e in collected.items() if e != 0]
    if not active:
        return 1.0
    if len(active) == 1:
        base, exponent = active[0]
        return base ** float(exponent)
    logs = [float(e) * math.log(b) for b, e in active]
    return math.exp(math.fsum(logs))


def _check_theta(ev: ExponentVector, theta: ThetaVector) -> None:
    if len(theta.theta) != ev.n:
        raise InvalidInputError(f"theta has {len(theta.theta)} entries but n = {ev.n}")
    target = ev.n / harmonic_mean(ev)
    total = sum(1 / t for t in theta.theta)
    if abs(float(total - target)) > THETA_RELATIVE_TOLERANCE * float(target):
        raise InvalidInputError(
            f"sum of 1/theta_i must equal n/p = {target}, got {float(total)!r}"
        )


def _positive_vector(values: Sequence[float], n: int, name: str) -> List[float]:
    if len(values) != n:
        raise InvalidInputError(f"{name} has {len(values)} entries but n = {n}")
    out = [float(v) for v in values]
    if any(not math.isfinite(v) or v <= 0 for v in out):
        raise InvalidInputError(f"{name} must be strictly positive (degenerate field)")
    return out


# ============================================================================
# SCALE FAMILY
# ============================================================================

def scale_family(ev: ExponentVector, lam: float) -> DiagonalMap:
    """
    Member lambda of the invariance family: amplitude lambda,
    scale_i = lambda^{(p* - p_i)/p_i}.
    """
    lam = float(lam)
    if not math.isfinite(lam) or lam <= 0:
        raise InvalidInputError("lambda must be positive")
    p_critical = critical_exponent(ev)
    scales = tuple(
        _monomial([(lam, (p_critical - pi) / pi)]) for pi in ev.p
    )
    return DiagonalMap(scales=scales, amplitude=lam)


def scale_exponents(ev: ExponentVector) -> Tuple[Fraction, ...]:
    """Exact per-axis exponents (p* - p_i)/p_i of the scale family"""
    p_critical = critical_exponent(ev)
    return tuple((p_critical - pi) / pi for pi in ev.p)


# ============================================================================
# UNIT-JACOBIAN MAPS
# ============================================================================

def tau_theta(ev: ExponentVector, theta: ThetaVector) -> DiagonalMap:
    """
    scale_i = theta_i^{1/theta_i} * prod_j theta_j^{-p/(n theta_i theta_j)}.

    The product of the scales is 1.
    """
    _check_theta(ev, theta)
    n, p = ev.n, harmonic_mean(ev)
    scales = []
    for ti in theta.theta:
        terms = [(float(ti), 1 / ti)]
        terms += [(float(tj), -p / (n * ti * tj)) for tj in theta.theta]
        scales.append(_monomial(terms))
    return DiagonalMap(scales=tuple(scales), amplitude=1.0)


def sigma_theta(ev: ExponentVector, theta: ThetaVector, grad_integrals: Sequence[float]) -> DiagonalMap:
    """
    scale_i = prod_j G_j^{p/(n theta_i p_j)} / G_i^{1/p_i}
    with G_i the integral of |d_i u|^{p_i}.

    The product of the scales is 1.
    """
    _check_theta(ev, theta)
    gradients = _positive_vector(grad_integrals, ev.n, "grad_integrals")
    n, p = ev.n, harmonic_mean(ev)
    scales = []
    for i, ti in enumerate(theta.theta):
        terms = [(gradients[j], p / (n * ti * pj)) for j, pj in enumerate(ev.p)]
        terms.append((gradients[i], -1 / ev.p[i]))
        scales.append(_monomial(terms))
    return DiagonalMap(scales=tuple(scales), amplitude=1.0)


# ============================================================================
# RESCALINGS OF MINIMIZERS
# ============================================================================

def euler_lagrange_rescale(
    ev: ExponentVector, grad_integrals: Sequence[float], mass_integral: float
) -> Tuple[float, DiagonalMap]:
    """
    Rescale a unit-mass minimizer into a solution of the pure-power equation.

    Args:
        ev: Exponent vector
        grad_integrals: G_i = integral of |d_i u|^{p_i}
        mass_integral: integral of |u|^{p*}

    Returns:
        (lambda_u, map) with lambda_u = sum p_i G_i / mass and
        scale_i = (lambda_u / p_i)^{1/p_i}
    """
    mass = float(mass_integral)
    if not math.isfinite(mass) or mass <= 0:
        raise InvalidInputError("mass integral must be positive")
    if len(grad_integrals) != ev.n:
        raise InvalidInputError(f"grad_integrals has {len(grad_integrals)} entries but n = {ev.n}")

    weighted = math.fsum(float(pi) * float(g) for pi, g in zip(ev.p, grad_integrals))
    lambda_u = weighted / mass
    if not math.isfinite(lambda_u) or lambda_u <= 0:
        raise InvalidInputError("gradient integrals vanish (degenerate field)")

    scales = tuple((lambda_u / float(pi)) ** (1.0 / float(pi)) for pi in ev.p)
    return lambda_u, DiagonalMap(scales=scales, amplitude=1.0)


def normalization_map(ev: ExponentVector, mass_integral: float) -> DiagonalMap:
    """
    u -> mu^{-1} u(mu x) with mu = mass^{p/(n p*)}, which has unit p*-mass.
    """
    mass = float(mass_integral)
    if not math.isfinite(mass) or mass <= 0:
        raise InvalidInputError("mass integral must be positive")
    p, p_critical = harmonic_mean(ev), critical_exponent(ev)
    mu = _monomial([(mass, p / (ev.n * p_critical))])
    return DiagonalMap(scales=(mu,) * ev.n, amplitude=1.0 / mu)


def decay_rescale(ev: ExponentVector, q, radius: float) -> DiagonalMap:
    """
    u_R(y) = R^{1/q} u(R^{(q - p_1)/(q p_1)} y_1, ...), for q > p_i on every axis.
    """
    q = to_fraction(q)
    radius = float(radius)
    if not math.isfinite(radius) or radius <= 0:
        raise InvalidInputError("R must be positive")
    if any(q <= pi for pi in ev.p):
        raise InvalidInputError("q must exceed every p_i")
    scales = tuple(_monomial([(radius, (q - pi) / (q * pi))]) for pi in ev.p)
    return DiagonalMap(scales=scales, amplitude=_monomial([(radius, 1 / q)]))


# ============================================================================
# APPLICATION
# ============================================================================

def apply_map(scaling: DiagonalMap, evaluator: Evaluator) -> Evaluator:
    """x -> amplitude * evaluator(mu_1 x_1, ..., mu_n x_n)"""
    if scaling.is_identity():
        return evaluator

    def mapped(coords: Sequence[np.ndarray]) -> np.ndarray:
        if len(coords) != scaling.n:
            raise InvalidInputError("point dimension does not match map")
        moved = [mu * np.asarray(x, dtype=float) for mu, x in zip(scaling.scales, coords)]
        return scaling.amplitude * np.asarray(evaluator(moved), dtype=float)

    return mapped
