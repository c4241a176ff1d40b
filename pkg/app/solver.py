"""
Extremal Solver
===============
Discrete extremal functions of the anisotropic Sobolev inequality.

Minimizes E(u) = sum_i (1/p_i) integral |d_i u|^{p_i} under the constraint
integral |u|^{p*} = 1 by normalized projected gradient descent:

1. Smooth |t|^{p_i} as (t^2 + eps^2)^{p_i/2} over a decreasing eps schedule
2. Precondition the gradient with the inverse difference Laplacian and
   project it onto the tangent space of the constraints
3. Step, renormalize to unit mass, backtrack until the energy does not grow

On a box the unconstrained discrete minimizer shrinks toward the grid
spacing. By default the concentration ratio of the initializer is held
fixed as a second constraint, which selects one member of the scale
family and keeps the minimizer stable under refinement.

The optimizer owns the iterate; helper computations only read it.
"""

import logging
import math
from dataclasses import dataclass, field as dataclass_field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import least_squares

from app.closed_forms import isotropic_extremal
from app.config import ARMIJO_FRACTION, MASS_TOLERANCE, MAX_HALVINGS
from app.errors import InvalidInputError, NumericalFailure
from app.exponents import critical_exponent, derive, harmonic_mean
from app.grid import (
    ScalarField, constrained_energy, gradient_integrals, laplacian_symbol, load_field, sample,
    solve_dirichlet_laplacian,
)
from app.models import (
    DiagonalMap, ExponentVector, Regime, SolverConfig, StageSummary, TensorGrid,
)
from app.transforms import Evaluator, euler_lagrange_rescale

logger = logging.getLogger(__name__)

# Relative energy increase still treated as stationarity once backtracking is exhausted
STATIONARY_INCREASE = 1e-12


# ============================================================================
# REPORT
# ============================================================================

@dataclass(frozen=True, eq=False)
class SolverReport:
    """Outcome of a minimization run"""
    field: ScalarField
    energy: float
    mass: float
    lambda_u: float
    iterations: int
    converged: bool
    residual: float
    gradient_integrals: Tuple[float, ...]
    concentration: float
    stages: List[StageSummary] = dataclass_field(default_factory=list)
    energy_history: List[Tuple[int, float]] = dataclass_field(default_factory=list)

    def summary(self) -> Dict[str, object]:
        """JSON-ready view without the field values"""
        return {
            "energy": self.energy,
            "mass": self.mass,
            "lambda_u": self.lambda_u,
            "iterations": self.iterations,
            "converged": self.converged,
            "residual": self.residual,
            "gradient_integrals": list(self.gradient_integrals),
            "concentration_ratio": self.concentration,
            "stages": [stage.model_dump() for stage in self.stages],
        }


# ============================================================================
# REGULARIZED ENERGY
# ============================================================================

def _padded_diff(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    pad = [(0, 0)] * values.ndim
    pad[axis] = (1, 1)
    return np.diff(np.pad(values, pad), axis=axis) / h


def regularized_energy(values: np.ndarray, grid: TensorGrid, ev: ExponentVector, eps_reg: float) -> float:
    """sum_i (1/p_i) sum_cells (D_i u^2 + eps^2)^{p_i/2} vol"""
    vol = grid.cell_volume
    terms = []
    for i, pi in enumerate(ev.p):
        d = _padded_diff(values, i, grid.spacing[i])
        power = float(pi)
        terms.append(float(np.sum((d * d + eps_reg * eps_reg) ** (power / 2.0))) * vol / power)
    return math.fsum(terms)


def regularized_energy_and_gradient(
    values: np.ndarray, grid: TensorGrid, ev: ExponentVector, eps_reg: float
) -> Tuple[float, np.ndarray]:
    """
    Regularized energy and its exact gradient with respect to the node values.

    Per cell F = (D^2 + eps^2)^{p/2 - 1} D; node k receives (vol/h)(F_k - F_{k+1}).
    """
    vol = grid.cell_volume
    terms = []
    gradient = np.zeros(grid.shape)
    for i, pi in enumerate(ev.p):
        h = grid.spacing[i]
        d = _padded_diff(values, i, h)
        power = float(pi)
        s = d * d + eps_reg * eps_reg
        terms.append(float(np.sum(s ** (power / 2.0))) * vol / power)
        flux = s ** (power / 2.0 - 1.0) * d
        gradient -= np.diff(flux, axis=i) * (vol / h)
    return math.fsum(terms), gradient


def _mass(values: np.ndarray, vol: float, p_critical: float) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sum(np.abs(values) ** p_critical)) * vol


# ============================================================================
# CONCENTRATION
# ============================================================================

def concentration_weight(grid: TensorGrid) -> np.ndarray:
    """1 / (1 + |x|^2) at every node"""
    return np.ones(grid.shape) / (1.0 + sum(x ** 2 for x in grid.mesh()))


def concentration_ratio(field: ScalarField, ev: ExponentVector) -> float:
    """integral of w |u|^{p*} over integral of |u|^{p*}, w = 1 / (1 + |x|^2)"""
    power = np.abs(field.values) ** float(critical_exponent(ev))
    total = float(np.sum(power))
    if total == 0:
        raise InvalidInputError("field is identically zero")
    return float(np.sum(concentration_weight(field.grid) * power)) / total


# ============================================================================
# SOLVER ENGINE
# ============================================================================

class ExtremalSolver:
    """
    Normalized projected gradient descent on the unit p*-mass sphere.

    Directions are preconditioned by the inverse difference Laplacian. With
    pin_scale the concentration ratio of the initializer is held fixed, which
    removes the scale family from the descent.
    """

    def __init__(self, config: SolverConfig):
        de = derive(config.ev)
        if de.regime == Regime.SUPERCRITICAL:
            raise InvalidInputError("extremals need p+ < p*")
        self.config = config
        self.ev = config.ev
        self.grid = config.grid
        self.vol = config.grid.cell_volume
        self.p_critical = float(critical_exponent(config.ev))
        self.symbol = laplacian_symbol(config.grid)
        self.weight = concentration_weight(config.grid) if config.pin_scale else None
        self.target_ratio: Optional[float] = None

    # ------------------------------------------------------------------
    # Initialization
    # ------------------------------------------------------------------

    def initial_values(self) -> np.ndarray:
        """
        Isotropic bump with the harmonic-mean exponent, lowered by its value
        on the inscribed sphere and cut at zero so the zero extension has no
        jump; or a loaded field as is.
        """
        config = self.config
        if config.init_field:
            start = load_field(config.init_field)
            if start.grid != self.grid:
                raise InvalidInputError("initial field grid does not match the config grid")
            values = np.array(start.values)
        else:
            bump = isotropic_extremal(self.ev.n, harmonic_mean(self.ev), 1.0, 1.0)
            edge = [np.full((), min(self.grid.extents))] + [np.zeros(())] * (self.ev.n - 1)
            level = float(bump(edge))
            values = np.maximum(sample(self.grid, bump).values - level, 0.0)

        if config.init_noise > 0:
            rng = np.random.default_rng(config.seed)
            values *= 1.0 + config.init_noise * rng.standard_normal(self.grid.shape)
        return self._normalize(values)

    def _normalize(self, values: np.ndarray) -> np.ndarray:
        mass = _mass(values, self.vol, self.p_critical)
        if not math.isfinite(mass) or mass <= 0:
            raise NumericalFailure(f"cannot normalize a field with mass {mass!r}")
        return values / mass ** (1.0 / self.p_critical)

    # ------------------------------------------------------------------
    # Constraints
    # ------------------------------------------------------------------

    def _precondition(self, values: np.ndarray) -> np.ndarray:
        return solve_dirichlet_laplacian(values, self.grid, self.symbol)

    def _mass_normal(self, values: np.ndarray) -> np.ndarray:
        return np.abs(values) ** (self.p_critical - 2.0) * values

    def _ratio(self, values: np.ndarray) -> float:
        power = np.abs(values) ** self.p_critical
        return float(np.sum(self.weight * power)) / float(np.sum(power))

    def _ratio_gradient(self, values: np.ndarray) -> np.ndarray:
        """Gradient of the concentration ratio with respect to the node values"""
        power_sum = float(np.sum(np.abs(values) ** self.p_critical))
        return (
            self.p_critical * self._mass_normal(values)
            * (self.weight - self._ratio(values)) / power_sum
        )

    def _constraint_normals(self, values: np.ndarray) -> List[np.ndarray]:
        normals = [self._mass_normal(values)]
        if self.weight is not None:
            normals.append(self._ratio_gradient(values))
        return normals

    def _tangent(self, vector: np.ndarray, normals: List[np.ndarray]) -> np.ndarray:
        """
        Preconditioned vector with the constraint normals removed, orthogonal
        to every normal in the Euclidean product.
        """
        pv = self._precondition(vector)
        pn = [self._precondition(normal) for normal in normals]
        gram = np.array([[float(np.vdot(a, b)) for b in pn] for a in normals])
        rhs = np.array([float(np.vdot(a, pv)) for a in normals])
        coefficients = np.linalg.lstsq(gram, rhs, rcond=None)[0]
        for c, b in zip(coefficients, pn):
            pv = pv - c * b
        return pv

    def _restore_ratio(self, values: np.ndarray) -> np.ndarray:
        """One Newton step on the concentration ratio, tangent to the mass constraint"""
        gradient = self._ratio_gradient(values)
        correction = self._tangent(gradient, [self._mass_normal(values)])
        slope = float(np.vdot(gradient, correction))
        if not slope > 0:
            return values
        return values + ((self.target_ratio - self._ratio(values)) / slope) * correction

    def _unit_mass(self, values: np.ndarray) -> Optional[np.ndarray]:
        if not np.all(np.isfinite(values)):
            return None
        mass = _mass(values, self.vol, self.p_critical)
        if not math.isfinite(mass) or mass <= 0:
            return None
        return values / mass ** (1.0 / self.p_critical)

    def _retract(self, values: np.ndarray) -> Optional[np.ndarray]:
        """Back onto the constraint set; None when the trial has left finite range"""
        values = self._unit_mass(values)
        if values is not None and self.weight is not None:
            values = self._unit_mass(self._restore_ratio(values))
        return values

    # ------------------------------------------------------------------
    # Descent
    # ------------------------------------------------------------------

    def _direction(self, values: np.ndarray, gradient: np.ndarray) -> Tuple[np.ndarray, float]:
        """Preconditioned projected gradient and its norm"""
        g = gradient / self.vol
        direction = self._tangent(g, self._constraint_normals(values))
        residual = math.sqrt(max(float(np.vdot(g, direction)), 0.0) * self.vol)
        return direction, residual

    def _run_stage(
        self, values: np.ndarray, eps_reg: float, stage: int, budget: int,
        step: float, history: List[Tuple[int, float]],
    ) -> Tuple[np.ndarray, int, bool, float, float, float]:
        energy, gradient = regularized_energy_and_gradient(values, self.grid, self.ev, eps_reg)
        if not math.isfinite(energy):
            raise NumericalFailure(f"energy is not finite at stage eps={eps_reg}")

        iterations = 0
        residual = 0.0
        while iterations < budget:
            direction, residual = self._direction(values, gradient)
            if residual == 0.0:
                return values, iterations, True, energy, step, residual

            trial_energy = math.inf
            accepted = False
            slope = residual * residual
            for _ in range(MAX_HALVINGS + 1):
                trial = self._retract(values - step * direction)
                if trial is not None:
                    trial_energy = regularized_energy(trial, self.grid, self.ev, eps_reg)
                    if math.isnan(trial_energy):
                        raise NumericalFailure(f"energy became NaN (step {step})")
                    if trial_energy <= energy - ARMIJO_FRACTION * step * slope:
                        accepted = True
                        break
                step /= 2.0
            iterations += 1

            if not accepted:
                increase = trial_energy - energy
                if increase <= STATIONARY_INCREASE * abs(energy):
                    logger.debug("stage eps=%g stationary after %d iterations", eps_reg, iterations)
                    return values, iterations, True, energy, step, residual
                raise NumericalFailure(
                    f"energy increased by {increase:.3e} after {MAX_HALVINGS} halvings "
                    f"(stage eps={eps_reg}, iteration {iterations})"
                )

            change = (energy - trial_energy) / abs(energy) if energy != 0 else 0.0
            values = trial
            energy, gradient = regularized_energy_and_gradient(values, self.grid, self.ev, eps_reg)
            history.append((stage, energy))
            step *= 2.0
            if change < self.config.tol:
                return values, iterations, True, energy, step, residual

        return values, iterations, False, energy, step, residual

    def run(self) -> "SolverReport":
        """
        Minimize over the whole eps schedule.

        Returns:
            SolverReport with a unit-mass field

        Raises:
            NumericalFailure: divergence, non-finite energy or lost normalization
        """
        config = self.config
        values = self.initial_values()
        if self.weight is not None:
            self.target_ratio = self._ratio(values)
        step = config.step0
        total = 0
        residual = math.inf
        stages: List[StageSummary] = []
        history: List[Tuple[int, float]] = []

        for index, eps_reg in enumerate(config.eps_schedule):
            budget = config.max_iters - total
            if budget <= 0:
                break
            values, used, converged, energy, step, residual = self._run_stage(
                values, eps_reg, index, budget, step, history
            )
            total += used
            stages.append(StageSummary(
                eps_reg=eps_reg, iterations=used, energy=energy, converged=converged
            ))
            logger.info(
                "stage eps=%g: %d iterations, energy %.10g, converged=%s",
                eps_reg, used, energy, converged,
            )

        field = ScalarField(self.grid, values)
        energy, mass = constrained_energy(field, self.ev)
        if abs(mass - 1.0) > MASS_TOLERANCE:
            raise NumericalFailure(f"unit mass lost: {mass!r}")

        gradients = gradient_integrals(field, self.ev)
        lambda_u, _ = euler_lagrange_rescale(self.ev, gradients, mass)
        converged = len(stages) == len(config.eps_schedule) and all(s.converged for s in stages)
        return SolverReport(
            field=field,
            energy=energy,
            mass=mass,
            lambda_u=lambda_u,
            iterations=total,
            converged=converged,
            residual=residual,
            gradient_integrals=gradients,
            concentration=concentration_ratio(field, self.ev),
            stages=stages,
            energy_history=history,
        )


# ============================================================================
# CONVENIENCE FUNCTIONS
# ============================================================================

def minimize(config: SolverConfig) -> SolverReport:
    """Run the extremal solver for a validated config"""
    return ExtremalSolver(config).run()


def initial_field(config: SolverConfig) -> ScalarField:
    """Unit-mass initializer used by minimize()"""
    return ScalarField(config.grid, ExtremalSolver(config).initial_values())


def report_euler_lagrange(report: SolverReport, ev: ExponentVector) -> Tuple[float, DiagonalMap]:
    """lambda(u) and the rescaling turning the minimizer into a solution"""
    return euler_lagrange_rescale(ev, report.gradient_integrals, report.mass)


def fit_isotropic_extremal(
    field: ScalarField, n: int, p, radius: Optional[float] = None
) -> Tuple[float, float]:
    """
    Least-squares fit of u_{a,b} on the center slice spanned by the first
    two axes.

    Args:
        field: Field to fit
        n: Dimension
        p: Exponent of the isotropic extremal
        radius: Only use slice nodes with Euclidean norm <= radius

    Returns:
        (a, b)
    """
    if field.grid.n != n:
        raise InvalidInputError("field dimension does not match n")
    center = field.center_value()
    if center <= 0:
        raise InvalidInputError("center value must be positive to fit u_{a,b}")

    index: List = list(field.grid.center_index())
    index[0] = slice(None)
    index[1] = slice(None)
    data = field.values[tuple(index)]
    x0 = field.grid.coordinates(0)[:, None]
    x1 = field.grid.coordinates(1)[None, :]
    mask = np.ones(data.shape, dtype=bool)
    if radius is not None:
        mask = x0 ** 2 + x1 ** 2 <= radius ** 2

    exponent_p = float(p)
    a_start = center ** (exponent_p / (exponent_p - n))
    zeros = [np.zeros(()) for _ in range(n - 2)]

    def residuals(params: np.ndarray) -> np.ndarray:
        model = isotropic_extremal(n, p, math.exp(params[0]), math.exp(params[1]))
        values = np.broadcast_to(model([x0, x1, *zeros]), data.shape)
        return (values - data)[mask]

    fit = least_squares(residuals, x0=np.array([math.log(a_start), math.log(a_start)]))
    return math.exp(fit.x[0]), math.exp(fit.x[1])


def interior_relative_error(field: ScalarField, evaluator: Evaluator, radius: float) -> float:
    """Relative L2 error of the field against evaluator over |x| <= radius"""
    reference = sample(field.grid, evaluator).values
    mesh = field.grid.mesh()
    mask = sum(x ** 2 for x in mesh) <= radius ** 2
    mask = np.broadcast_to(mask, field.grid.shape)
    diff = float(np.sum((field.values - reference)[mask] ** 2))
    norm = float(np.sum(reference[mask] ** 2))
    if norm == 0:
        raise InvalidInputError("reference vanishes on the interior region")
    return math.sqrt(diff / norm)
