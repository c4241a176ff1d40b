"""
Decay Analysis
==============
Empirical checks of the decay and vanishing statements on sampled fields
and closed-form evaluators.

This module handles:
1. Log-log tail slope fitting along an axis ray
2. The minimal envelope constant over a region
3. Support extents (vanishing detection)
4. Tail radius r_kappa with respect to the quasi-distance d_p
5. The weak Lebesgue norm diagnostic
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from app.closed_forms import distance_exponents
from app.config import MIN_RAY_SAMPLES, SLOPE_TOLERANCE_CLOSED_FORM
from app.errors import InvalidInputError
from app.exponents import critical_exponent
from app.grid import ScalarField, node_coordinates, partial_diff
from app.models import DecayFitReport, ExponentVector, SupportReport, to_fraction
from app.transforms import Evaluator

logger = logging.getLogger(__name__)

Source = Union[ScalarField, Evaluator]


# ============================================================================
# TAIL SLOPES
# ============================================================================

def predicted_slope(ev: ExponentVector, q, axis: int) -> float:
    """-p_i / (q - p_i), the rate of |u| along axis i implied by the envelope"""
    q = to_fraction(q)
    pi = ev.p[axis]
    if q <= pi:
        raise InvalidInputError("q must exceed p_i on the fitted axis")
    return float(-pi / (q - pi))


def _ray(
    source: Source, axis: int, window: Tuple[float, float], samples: int, n: Optional[int]
) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = float(window[0]), float(window[1])
    if not 0 < lo < hi:
        raise InvalidInputError("window must satisfy 0 < r_lo < r_hi")

    if isinstance(source, ScalarField):
        grid = source.grid
        if not 0 <= axis < grid.n:
            raise InvalidInputError(f"axis {axis} out of range")
        if hi > grid.extents[axis]:
            raise InvalidInputError("window extends beyond the sampled box")
        coords = grid.coordinates(axis)
        selected = np.nonzero((coords >= lo) & (coords <= hi))[0]
        index: List = list(grid.center_index())
        index[axis] = selected
        radii = coords[selected]
        values = source.values[tuple(index)]
    else:
        if samples < MIN_RAY_SAMPLES:
            raise InvalidInputError(f"at least {MIN_RAY_SAMPLES} sample radii are required")
        if n is None:
            raise InvalidInputError("evaluator rays need the dimension n")
        if not 0 <= axis < n:
            raise InvalidInputError(f"axis {axis} out of range")
        radii = np.geomspace(lo, hi, samples)
        coords_list = [radii if i == axis else np.zeros_like(radii) for i in range(n)]
        values = np.broadcast_to(np.asarray(source(coords_list), dtype=float), radii.shape)

    if radii.size < MIN_RAY_SAMPLES:
        raise InvalidInputError(
            f"window holds {radii.size} nodes, at least {MIN_RAY_SAMPLES} are required"
        )
    return radii, np.abs(np.asarray(values, dtype=float))


def fit_tail_slope(
    source: Source,
    axis: int,
    window: Tuple[float, float],
    samples: int = 16,
    predicted: Optional[float] = None,
    tolerance: float = SLOPE_TOLERANCE_CLOSED_FORM,
    n: Optional[int] = None,
) -> DecayFitReport:
    """
    Least-squares slope of log|u| against log r along the positive axis ray.

    Args:
        source: Sampled field (nodes inside the window are used) or evaluator
            (samples log-spaced radii)
        axis: 0-based axis of the ray
        window: (r_lo, r_hi)
        samples: Radii for evaluators
        predicted: Expected slope, typically predicted_slope(ev, q, axis)
        tolerance: Declared absolute slope tolerance
        n: Dimension, required for evaluators

    Returns:
        DecayFitReport; a window meeting nonpositive values is reported as
        vanishing with no slope
    """
    radii, values = _ray(source, axis, window, samples, n)
    window = (float(window[0]), float(window[1]))

    if np.any(values <= 0):
        logger.info("nonpositive values on axis %d inside %s, reporting vanishing", axis, window)
        return DecayFitReport(
            axis=axis, window=window, samples=int(radii.size), predicted_slope=predicted,
            tolerance=tolerance, passed=False, vanishing=True,
        )

    fit = stats.linregress(np.log(radii), np.log(values))
    slope, stderr = float(fit.slope), float(fit.stderr)
    passed = predicted is not None and abs(slope - predicted) <= tolerance
    return DecayFitReport(
        axis=axis,
        window=window,
        samples=int(radii.size),
        fitted_slope=slope,
        slope_stderr=abs(stderr),
        intercept=float(fit.intercept),
        predicted_slope=predicted,
        tolerance=tolerance,
        passed=passed,
    )


def ray_samples(
    source: Source, report: DecayFitReport, n: Optional[int] = None
) -> List[Tuple[float, float, Optional[float]]]:
    """(radius, value, log-log residual) rows for the fitted window"""
    radii, values = _ray(source, report.axis, report.window, report.samples, n)
    rows = []
    for r, v in zip(radii, values):
        residual = None
        if report.fitted_slope is not None and v > 0:
            residual = math.log(v) - (report.intercept + report.fitted_slope * math.log(r))
        rows.append((float(r), float(v), residual))
    return rows


# ============================================================================
# ENVELOPE CONSTANT
# ============================================================================

def default_region(field: ScalarField) -> np.ndarray:
    """Every node except the upper face on each axis (where d_i u sees the zero extension)"""
    mask = np.ones(field.grid.shape, dtype=bool)
    for axis in range(field.grid.n):
        index: List = [slice(None)] * field.grid.n
        index[axis] = -1
        mask[tuple(index)] = False
    return mask


def envelope_density(field: ScalarField, ev: ExponentVector, q, axes: Sequence[int]) -> np.ndarray:
    """(|u|^q + sum_i |d_i u|^{p_i}) (1 + sum_{axes} |x_i|^{q p_i/(q - p_i)}) at every node"""
    q = to_fraction(q)
    if any(q <= ev.p[i] for i in axes):
        raise InvalidInputError("q must exceed p_i for every i in axes")
    if ev.n != field.grid.n:
        raise InvalidInputError("exponent vector does not match grid dimension")

    local = np.abs(field.values) ** float(q)
    for i, pi in enumerate(ev.p):
        local = local + np.abs(partial_diff(field, i).values) ** float(pi)

    mesh = field.grid.mesh()
    weight = 1.0 + sum(
        np.abs(mesh[i]) ** float(q * ev.p[i] / (q - ev.p[i])) for i in axes
    )
    return local * weight


def fit_envelope_constant(
    field: ScalarField,
    ev: ExponentVector,
    q,
    axes: Sequence[int],
    region: Optional[np.ndarray] = None,
) -> float:
    """
    Smallest C with (|u|^q + sum |d_i u|^{p_i}) <= C (1 + sum_{axes} |x_i|^{q p_i/(q-p_i)})^{-1}
    on the region; equality holds at the maximizing node.

    Gradients are forward differences, so C carries an O(h) bias.
    """
    density = envelope_density(field, ev, q, axes)
    mask = default_region(field) if region is None else np.broadcast_to(region, field.grid.shape)
    if not mask.any():
        raise InvalidInputError("region contains no nodes")
    return float(np.max(density[mask]))


# ============================================================================
# SUPPORT
# ============================================================================

def detect_support(field: ScalarField, threshold: float, i0: Sequence[int] = ()) -> SupportReport:
    """
    R_i(u) = max |x_i| over nodes with |u| > threshold.

    Axes whose extent stays below the box half-width (by more than half a
    spacing) are reported as vanishing.
    """
    if threshold <= 0:
        raise InvalidInputError("threshold must be positive")
    grid = field.grid
    if any(i < 0 or i >= grid.n for i in i0):
        raise InvalidInputError("index in i0 out of range")

    above = np.abs(field.values) > threshold
    extents = []
    for axis in range(grid.n):
        other = tuple(j for j in range(grid.n) if j != axis)
        hit = above.any(axis=other) if other else above
        coords = np.abs(grid.coordinates(axis))[hit]
        extents.append(float(coords.max()) if coords.size else 0.0)

    vanishing = tuple(
        axis for axis in range(grid.n)
        if extents[axis] < grid.extents[axis] - 0.5 * grid.spacing[axis]
    )
    r0 = max((extents[i] for i in i0), default=None)
    return SupportReport(
        extents=tuple(extents), threshold=threshold, r0_estimate=r0, vanishing_axes=vanishing,
    )


# ============================================================================
# TAIL RADIUS AND WEAK NORM
# ============================================================================

def _sorted_shells(field: ScalarField, ev: ExponentVector) -> Tuple[np.ndarray, np.ndarray, float]:
    """Node distances d_p(0, x) sorted ascending, matching |u|^{p*} vol, and the box diameter"""
    exponents = [float(e) for e in distance_exponents(ev)]
    coords = node_coordinates(field.grid)
    distance = sum(np.abs(x) ** e for x, e in zip(coords, exponents)).ravel()
    p_critical = float(critical_exponent(ev))
    weights = (np.abs(field.values) ** p_critical).ravel() * field.grid.cell_volume
    order = np.argsort(distance, kind="stable")
    diameter = math.fsum((2.0 * L) ** e for L, e in zip(field.grid.extents, exponents))
    return distance[order], weights[order], diameter


def tail_radius(field: ScalarField, ev: ExponentVector, kappa: float) -> float:
    """
    Smallest grid-representable r with ||u||_{L^{p*}} outside B_p(0, r) below kappa.

    Candidate radii are 0, the node distances and the box diameter; the
    outside of the ball is {d_p(0, x) >= r}. Bisection over the candidates.
    """
    if kappa <= 0:
        raise InvalidInputError("kappa must be positive")
    if ev.n != field.grid.n:
        raise InvalidInputError("exponent vector does not match grid dimension")

    distance, weights, diameter = _sorted_shells(field, ev)
    p_critical = float(critical_exponent(ev))
    # suffix[j] = mass of nodes j.. (distance >= distance[j])
    suffix = np.concatenate([np.cumsum(weights[::-1])[::-1], [0.0]])
    candidates = np.concatenate([[0.0], np.unique(distance), [diameter]])

    def outside_norm(r: float) -> float:
        start = int(np.searchsorted(distance, r, side="left"))
        return float(suffix[start]) ** (1.0 / p_critical)

    if outside_norm(0.0) < kappa:
        return 0.0

    lo, hi = 0, candidates.size - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if outside_norm(float(candidates[mid])) < kappa:
            hi = mid
        else:
            lo = mid
    if hi == candidates.size - 1:
        logger.debug("tail radius never reached below the box diameter")
    return float(candidates[hi])


def weak_lebesgue_norm(field: ScalarField, s: float) -> float:
    """sup_h h * meas{|u| > h}^{1/s}, exact over the sampled level jumps"""
    if s <= 0:
        raise InvalidInputError("s must be positive")
    magnitudes = np.sort(np.abs(field.flat))[::-1]
    magnitudes = magnitudes[magnitudes > 0]
    if magnitudes.size == 0:
        return 0.0
    counts = np.arange(1, magnitudes.size + 1, dtype=float)
    return float(np.max(magnitudes * (counts * field.grid.cell_volume) ** (1.0 / s)))
