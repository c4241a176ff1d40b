"""
Moser Iteration Bookkeeping
===========================
Executable combinatorics of the exponent bootstrap.

This module handles:
1. The gamma recursion and its closed form
2. Stopping data (p0, p_eps, threshold) and the iteration bounds k-/k+
3. Exhaustive enumeration of the stopping sets Phi_k
4. The lambda ladder and the sigma/tau exponent budgets

All arithmetic is exact (fractions.Fraction). Paths are tuples of 0-based
indices.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from app.config import ENUMERATION_LIMIT
from app.errors import AnisoError, EnumerationLimitError, InvalidInputError
from app.exponents import harmonic_mean, serrin_exponent
from app.models import ExponentVector, IterationTrace, to_fraction

logger = logging.getLogger(__name__)

Path = Tuple[int, ...]


# ============================================================================
# EXPONENT RECURSION
# ============================================================================

def _contraction(ev: ExponentVector) -> Fraction:
    """(n - p)/n"""
    return (ev.n - harmonic_mean(ev)) / ev.n


def gamma_next(ev: ExponentVector, gamma, i: int) -> Fraction:
    """((n - p)/n) gamma + p_i - p"""
    return _contraction(ev) * to_fraction(gamma) + ev.p[i] - harmonic_mean(ev)


def gamma_closed(ev: ExponentVector, gamma, path: Sequence[int]) -> Fraction:
    """((n-p)/n)^k gamma + sum_j ((n-p)/n)^{k-j} (p_{i_j} - p)"""
    r, p = _contraction(ev), harmonic_mean(ev)
    k = len(path)
    total = r ** k * to_fraction(gamma)
    for j, i in enumerate(path, start=1):
        total += r ** (k - j) * (ev.p[i] - p)
    return total


def geometric_weight_sum(ev: ExponentVector, k: int) -> Fraction:
    """sum_{j=1}^k ((n-p)/n)^{k-j} = (n/p)(1 - ((n-p)/n)^k)"""
    r = _contraction(ev)
    return ev.n / harmonic_mean(ev) * (1 - r ** k)


# ============================================================================
# STOPPING DATA AND BOUNDS
# ============================================================================

def stopping_data(
    ev: ExponentVector, subsets: Tuple[Sequence[int], Sequence[int]], eps
) -> Tuple[Fraction, Fraction, Fraction]:
    """
    Args:
        ev: Exponent vector
        subsets: (I1, I2), I2 nonempty
        eps: Stopping parameter in (0, 1)

    Returns:
        (p0, p_eps, threshold) with p0 = max(p_*, p_i over I1 and I2),
        p_eps = (1 + eps) p0 and threshold = (n/p)(p_eps - p)
    """
    i1, i2 = subsets
    eps = to_fraction(eps)
    if not i2:
        raise InvalidInputError("I2 must be nonempty")
    if not (0 < eps < 1):
        raise InvalidInputError("eps must lie in (0, 1)")
    universe = set(i1) | set(i2)
    if any(i < 0 or i >= ev.n for i in universe):
        raise InvalidInputError("index out of range")

    p = harmonic_mean(ev)
    p0 = max([serrin_exponent(ev)] + [ev.p[i] for i in universe])
    p_eps = (1 + eps) * p0
    threshold = ev.n / p * (p_eps - p)
    return p0, p_eps, threshold


def k_bounds(ev: ExponentVector, gamma, eps, p0) -> Tuple[int, int]:
    """
    k- = smallest k >= 1 with gamma < (n/p)(n/(n-p))^k (p_eps - p-)
    k+ = largest k >= 1 with (n/p)(n/(n-p))^{k-1} eps p0 < gamma
    """
    gamma, eps, p0 = to_fraction(gamma), to_fraction(eps), to_fraction(p0)
    p = harmonic_mean(ev)
    ratio = ev.n / p
    growth = ev.n / (ev.n - p)
    p_eps = (1 + eps) * p0
    threshold = ratio * (p_eps - p)
    if gamma < threshold:
        raise InvalidInputError(f"gamma must be at least (n/p)(p_eps - p) = {threshold}")

    gap = p_eps - min(ev.p)
    kminus = 1
    while not gamma < ratio * growth ** kminus * gap:
        if gamma == ratio * growth ** kminus * gap:
            logger.info("k- boundary hit: gamma equals the bound at k=%d", kminus)
        kminus += 1

    kplus = 1
    while ratio * growth ** kplus * eps * p0 < gamma:
        kplus += 1
    if ratio * growth ** kplus * eps * p0 == gamma:
        logger.info("k+ boundary hit: gamma equals the bound at k=%d", kplus + 1)
    return kminus, kplus


# ============================================================================
# ENUMERATION
# ============================================================================

def _explore_branch(
    ev: ExponentVector,
    universe: Sequence[int],
    first: int,
    gamma: Fraction,
    threshold: Fraction,
    kmax: int,
) -> Tuple[List[Tuple[Path, Fraction]], List[Path]]:
    """Depth-first walk of every path starting with `first`, pruned at stopping"""
    stopped: List[Tuple[Path, Fraction]] = []
    hits: List[Path] = []
    stack: List[Tuple[Path, Fraction]] = [((first,), gamma_next(ev, gamma, first))]

    while stack:
        path, value = stack.pop()
        if value < threshold:
            stopped.append((path, value))
            continue
        if value == threshold:
            hits.append(path)
        if len(path) >= kmax:
            raise AnisoError(f"path {path} has not stopped after {kmax} steps")
        for i in reversed(universe):
            stack.append((path + (i,), gamma_next(ev, value, i)))

    return stopped, hits


def enumerate_phi(
    ev: ExponentVector,
    subsets: Tuple[Sequence[int], Sequence[int]],
    gamma,
    eps,
    kmax: Optional[int] = None,
    max_workers: Optional[int] = None,
) -> IterationTrace:
    """
    Exhaustive enumeration of the stopping sets Phi_k.

    A path (i_1, ..., i_k) belongs to Phi_k when every proper prefix keeps
    gamma at or above the threshold and the full path drops below it.

    Args:
        ev: Exponent vector
        subsets: (I1, I2); the universe is their union
        gamma: Starting exponent, at least the threshold
        eps: Stopping parameter in (0, 1)
        kmax: Depth cap, defaults to k+ and may not be smaller
        max_workers: Threads used over first-index branches

    Returns:
        IterationTrace with paths sorted by length then lexicographically
    """
    gamma, eps = to_fraction(gamma), to_fraction(eps)
    p0, p_eps, threshold = stopping_data(ev, subsets, eps)
    kminus, kplus = k_bounds(ev, gamma, eps, p0)
    if kmax is None:
        kmax = kplus
    if kmax < kplus:
        raise InvalidInputError(f"kmax must be at least k+ = {kplus}")

    universe = tuple(sorted(set(subsets[0]) | set(subsets[1])))
    size = len(universe) ** kplus
    if size > ENUMERATION_LIMIT:
        raise EnumerationLimitError(
            f"enumeration needs {len(universe)}^{kplus} = {size} nodes, limit is {ENUMERATION_LIMIT}"
        )
    logger.debug("enumerating up to %d nodes over universe %s", size, universe)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        branches = list(pool.map(
            lambda first: _explore_branch(ev, universe, first, gamma, threshold, kmax),
            universe,
        ))

    stopped = sorted(
        (item for branch, _ in branches for item in branch),
        key=lambda item: (len(item[0]), item[0]),
    )
    hits = sorted(
        (path for _, branch_hits in branches for path in branch_hits),
        key=lambda path: (len(path), path),
    )
    if hits:
        logger.info("%d paths land exactly on the threshold %s", len(hits), threshold)

    phi: Dict[int, List[Path]] = {k: [] for k in range(1, kmax + 1)}
    gammas: Dict[int, List[Fraction]] = {k: [] for k in range(1, kmax + 1)}
    for path, value in stopped:
        phi[len(path)].append(path)
        gammas[len(path)].append(value)

    return IterationTrace(
        gamma0=gamma,
        eps=eps,
        p0=p0,
        p_eps=p_eps,
        threshold=threshold,
        index_universe=universe,
        phi=phi,
        path_gammas=gammas,
        kminus=kminus,
        kplus=kplus,
        ladder=lambda_ladder(kplus),
        boundary_hits=hits,
    )


# ============================================================================
# LADDER AND EXPONENT BUDGETS
# ============================================================================

def lambda_ladder(kplus: int) -> List[Fraction]:
    """lambda_k = (1/4)(1 + 2^{k - k+ - 1}) for k = 0..k+"""
    if kplus < 0:
        raise InvalidInputError("k+ must be nonnegative")
    return [Fraction(1, 4) * (1 + Fraction(2) ** (k - kplus - 1)) for k in range(kplus + 1)]


def sigma_exponent(ev: ExponentVector, q, gamma, path: Sequence[int]) -> Fraction:
    """(1/(gamma q)) sum_j (n/(n-p))^j (q - p_{i_j})"""
    q, gamma = to_fraction(q), to_fraction(gamma)
    growth = ev.n / (ev.n - harmonic_mean(ev))
    total = sum(
        (growth ** j * (q - ev.p[i]) for j, i in enumerate(path, start=1)), Fraction(0)
    )
    return total / (gamma * q)


def vanishing_sigma_exponent(ev: ExponentVector, gamma, eps, p_eps, path: Sequence[int]) -> Fraction:
    """(1/(eps gamma p_eps)) sum_j (n/(n-p))^j (p_eps - p_{i_j})"""
    eps = to_fraction(eps)
    return sigma_exponent(ev, p_eps, gamma, path) / eps


def tau_exponent(ev: ExponentVector, gamma, path: Sequence[int]) -> Fraction:
    """(p_* - 1 - gamma_path)/(p_* gamma) (n/(n-p))^k"""
    gamma = to_fraction(gamma)
    p_serrin = serrin_exponent(ev)
    growth = ev.n / (ev.n - harmonic_mean(ev))
    return (p_serrin - 1 - gamma_closed(ev, gamma, path)) / (p_serrin * gamma) * growth ** len(path)


def truncated_tau_exponent(
    ev: ExponentVector,
    q,
    gamma,
    path: Sequence[int],
    nu,
    axes: Sequence[int],
    eps=None,
) -> Fraction:
    """
    max(0, (1/(q gamma)) (n/(n-p))^k (1 - gamma_path/(p_* - 1 + nu)) sum_{axes} (q - p_i)/p_i)

    With eps given, q plays the role of p_eps and the prefactor gains 1/eps.
    """
    q, gamma, nu = to_fraction(q), to_fraction(gamma), to_fraction(nu)
    if not (0 < nu < 1):
        raise InvalidInputError("nu must lie in (0, 1)")
    growth = ev.n / (ev.n - harmonic_mean(ev))
    budget = sum(((q - ev.p[i]) / ev.p[i] for i in axes), Fraction(0))
    factor = 1 - gamma_closed(ev, gamma, path) / (serrin_exponent(ev) - 1 + nu)
    value = growth ** len(path) * factor * budget / (q * gamma)
    if eps is not None:
        value /= to_fraction(eps)
    return max(Fraction(0), value)


def net_exponent_identity(ev: ExponentVector, gamma, path: Sequence[int]) -> Tuple[Fraction, Fraction]:
    """
    (tau - sigma at q = p_*, -(1/p_*)(1 - (p_* - 1)/gamma)), computed independently.
    """
    gamma = to_fraction(gamma)
    p_serrin = serrin_exponent(ev)
    lhs = tau_exponent(ev, gamma, path) - sigma_exponent(ev, p_serrin, gamma, path)
    rhs = -(1 - (p_serrin - 1) / gamma) / p_serrin
    return lhs, rhs
