"""
Grid Fields
===========
Tensor-grid discretization of functions on an axis-aligned box.

This module handles:
1. Sampling evaluators on a TensorGrid
2. Forward differences with zero extension outside the box
3. Rectangle-rule power integrals, gradient integrals and Sobolev quotients
4. The constrained energy of the minimization problem
5. Spectral inverse of the difference Laplacian
6. Binary field container and CSV slices

Fields are immutable. Reductions use numpy's pairwise summation on
C-contiguous arrays, so results are reproducible for a given grid.
"""

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.fft import dstn, idstn

from app.errors import InvalidInputError, NumericalFailure
from app.exponents import critical_exponent, harmonic_mean
from app.models import ExponentVector, TensorGrid, ThetaVector
from app.transforms import Evaluator

PathLike = Union[str, Path]


# ============================================================================
# FIELD CONTAINER
# ============================================================================

@dataclass(frozen=True, eq=False)
class ScalarField:
    """Values of u at the nodes of a grid, stored with shape grid.counts"""
    grid: TensorGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, order="C")
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise InvalidInputError(
                    f"field has {values.size} values, grid needs {self.grid.size}"
                )
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise NumericalFailure("field contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def flat(self) -> np.ndarray:
        """Row-major flat view"""
        return self.values.ravel()

    def scaled(self, factor: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * factor)

    def center_value(self) -> float:
        return float(self.values[self.grid.center_index()])


def _reduce(values: np.ndarray) -> float:
    return float(np.sum(values))


# ============================================================================
# SAMPLING AND DIFFERENCES
# ============================================================================

def sample(grid: TensorGrid, evaluator: Evaluator) -> ScalarField:
    """
    Evaluate at every node.

    Raises:
        NumericalFailure: a sample is not finite (message names the node)
    """
    raw = np.asarray(evaluator(grid.mesh()), dtype=np.float64)
    values = np.array(np.broadcast_to(raw, grid.shape), dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        index = tuple(int(k) for k in np.argwhere(bad)[0])
        point = tuple(float(grid.coordinates(i)[k]) for i, k in enumerate(index))
        raise NumericalFailure(f"non-finite sample at node {point}")
    return ScalarField(grid, values)


def cell_differences(field: ScalarField, axis: int) -> np.ndarray:
    """
    Differences over all m_i + 1 cells along an axis, with u = 0 beyond
    both faces of the box.
    """
    if not 0 <= axis < field.grid.n:
        raise InvalidInputError(f"axis {axis} out of range")
    pad = [(0, 0)] * field.grid.n
    pad[axis] = (1, 1)
    padded = np.pad(field.values, pad)
    return np.diff(padded, axis=axis) / field.grid.spacing[axis]


def partial_diff(field: ScalarField, axis: int) -> ScalarField:
    """Forward difference (u[k + e_i] - u[k]) / h_i at every node"""
    diffs = cell_differences(field, axis)
    upper = [slice(None)] * field.grid.n
    upper[axis] = slice(1, None)
    return ScalarField(field.grid, diffs[tuple(upper)])


# ============================================================================
# INTEGRALS
# ============================================================================

def integrate_pow(field: ScalarField, exponent: float) -> float:
    """Rectangle rule for the integral of |u|^e"""
    exponent = float(exponent)
    if exponent <= 0:
        raise InvalidInputError("exponent must be positive")
    return _reduce(np.abs(field.values) ** exponent) * field.grid.cell_volume


def gradient_integrals(field: ScalarField, ev: ExponentVector) -> Tuple[float, ...]:
    """G_i = integral of |d_i u|^{p_i}, summed over every cell"""
    if ev.n != field.grid.n:
        raise InvalidInputError("exponent vector does not match grid dimension")
    vol = field.grid.cell_volume
    return tuple(
        _reduce(np.abs(cell_differences(field, i)) ** float(pi)) * vol
        for i, pi in enumerate(ev.p)
    )


def constrained_energy(field: ScalarField, ev: ExponentVector) -> Tuple[float, float]:
    """(sum_i (1/p_i) G_i, integral of |u|^{p*})"""
    gradients = gradient_integrals(field, ev)
    energy = math.fsum(g / float(pi) for g, pi in zip(gradients, ev.p))
    mass = integrate_pow(field, float(critical_exponent(ev)))
    return energy, mass


def _nonzero_mass(field: ScalarField, ev: ExponentVector) -> float:
    mass = integrate_pow(field, float(critical_exponent(ev)))
    if mass == 0:
        raise InvalidInputError("field is identically zero")
    return mass


def sobolev_quotient(field: ScalarField, ev: ExponentVector) -> float:
    """(sum_i G_i)^{p*/p} / integral of |u|^{p*}"""
    mass = _nonzero_mass(field, ev)
    ratio = float(critical_exponent(ev) / harmonic_mean(ev))
    return math.fsum(gradient_integrals(field, ev)) ** ratio / mass


def product_quotient(field: ScalarField, ev: ExponentVector) -> float:
    """(integral |u|^{p*})^{n/p*} / prod_i G_i^{1/p_i}"""
    mass = _nonzero_mass(field, ev)
    gradients = gradient_integrals(field, ev)
    if any(g <= 0 for g in gradients):
        raise InvalidInputError("a partial derivative vanishes identically")
    log_denominator = math.fsum(math.log(g) / float(pi) for g, pi in zip(gradients, ev.p))
    return math.exp(ev.n / float(critical_exponent(ev)) * math.log(mass) - log_denominator)


def theta_quotient(field: ScalarField, ev: ExponentVector, theta: ThetaVector) -> float:
    """(integral |u|^{p*})^{p/p*} / sum_i G_i^{theta_i/p_i}"""
    mass = _nonzero_mass(field, ev)
    gradients = gradient_integrals(field, ev)
    denominator = math.fsum(
        g ** float(t / pi) for g, t, pi in zip(gradients, theta.theta, ev.p)
    )
    p_over_crit = float(harmonic_mean(ev) / critical_exponent(ev))
    return mass ** p_over_crit / denominator


def richardson_estimate(coarse: float, fine: float, ratio: float = 2.0, order: int = 1) -> float:
    """Two-grid extrapolation fine + (fine - coarse)/(ratio^order - 1)"""
    return fine + (fine - coarse) / (ratio ** order - 1.0)


# ============================================================================
# DIRICHLET LAPLACIAN
# ============================================================================

def laplacian_symbol(grid: TensorGrid) -> np.ndarray:
    """
    Eigenvalues of sum_i D_i^T D_i (forward differences, zero extension)
    on the type-I sine basis, one entry per node.
    """
    symbol = np.zeros(grid.shape)
    for i, (m, h) in enumerate(zip(grid.counts, grid.spacing)):
        k = np.arange(1, m + 1)
        axis_values = (2.0 / h * np.sin(np.pi * k / (2 * (m + 1)))) ** 2
        shape = [1] * grid.n
        shape[i] = m
        symbol = symbol + axis_values.reshape(shape)
    return symbol


def solve_dirichlet_laplacian(
    values: np.ndarray, grid: TensorGrid, symbol: Optional[np.ndarray] = None
) -> np.ndarray:
    """w with sum_i D_i^T D_i w = values, diagonalized by the type-I DST"""
    if symbol is None:
        symbol = laplacian_symbol(grid)
    return idstn(dstn(values, type=1) / symbol, type=1)


# ============================================================================
# PERSISTENCE
# ============================================================================

_INT = "<q"


def save_field(path: PathLike, field: ScalarField) -> None:
    """
    Binary container: int64 n, int64 counts[n], float64 extents[n],
    then the values as little-endian float64 in row-major order.
    """
    grid = field.grid
    with open(path, "wb") as handle:
        handle.write(struct.pack(_INT, grid.n))
        handle.write(struct.pack(f"<{grid.n}q", *grid.counts))
        handle.write(struct.pack(f"<{grid.n}d", *grid.extents))
        handle.write(field.flat.astype("<f8").tobytes())


def load_field(path: PathLike) -> ScalarField:
    """Read a field written by save_field"""
    with open(path, "rb") as handle:
        data = handle.read()
    try:
        (n,) = struct.unpack_from(_INT, data, 0)
        if not 1 <= n <= 64:
            raise InvalidInputError(f"{path}: implausible dimension {n}")
        counts = struct.unpack_from(f"<{n}q", data, 8)
        extents = struct.unpack_from(f"<{n}d", data, 8 + 8 * n)
    except struct.error as exc:
        raise InvalidInputError(f"{path}: truncated field header ({exc})")

    grid = TensorGrid(n=n, extents=extents, counts=counts)
    offset = 8 + 16 * n
    expected = offset + 8 * grid.size
    if len(data) != expected:
        raise InvalidInputError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f8", offset=offset).astype(np.float64)
    return ScalarField(grid, values.reshape(grid.shape))


def axis_slice(field: ScalarField, axis: int) -> Tuple[np.ndarray, np.ndarray]:
    """(coordinates, values) along an axis through the center node"""
    index: List = list(field.grid.center_index())
    index[axis] = slice(None)
    return field.grid.coordinates(axis), field.values[tuple(index)]


def export_axis_slice_csv(path: PathLike, field: ScalarField, axis: int) -> None:
    coords, values = axis_slice(field, axis)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "value"])
        for x, v in zip(coords, values):
            writer.writerow([repr(float(x)), repr(float(v))])


def node_coordinates(grid: TensorGrid) -> Sequence[np.ndarray]:
    """Dense coordinate arrays, one per axis"""
    return np.meshgrid(*(grid.coordinates(i) for i in range(grid.n)), indexing="ij")
