"""
Pydantic Models for the Anisotropic Exponent Toolkit
====================================================
Type-safe models for exponent data, coordinate maps, domains, grids,
solver configuration and the reports written by the command line.

Exact quantities are carried as fractions.Fraction; they parse from
integers, "num/den" strings and decimal strings ("0.1" is exactly 1/10).
Index sets are 0-based inside the library.
"""

import math
from datetime import datetime
from enum import Enum
from fractions import Fraction
from typing import Annotated, Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    field_validator,
    model_validator,
)

from app.config import (
    DEFAULT_EPS_SCHEDULE,
    DEFAULT_MAX_ITERS,
    DEFAULT_STEP0,
    DEFAULT_TOL,
    MAX_GRID_POINTS,
    SCHEMA_VERSION,
)


# ============================================================================
# EXACT RATIONALS
# ============================================================================

def to_fraction(value: Any) -> Fraction:
    """
    Convert user input into an exact rational.

    Args:
        value: int, Fraction, "a/b" or decimal string, or float

    Returns:
        Fraction equal to the input (floats go through their shortest repr)
    """
    if isinstance(value, bool):
        raise ValueError(f"expected a rational number, got {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(float(value)):
            raise ValueError(f"expected a finite number, got {value!r}")
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        text = value.strip()
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"cannot parse {value!r} as a rational number")
    raise ValueError(f"expected a rational number, got {value!r}")


Rational = Annotated[
    Fraction,
    BeforeValidator(to_fraction),
    PlainSerializer(str, return_type=str, when_used="json"),
]


# ============================================================================
# ENUMS
# ============================================================================

class Regime(str, Enum):
    """Position of p+ relative to the Serrin and critical exponents"""
    SUBSERRIN = "SUBSERRIN"  # p+ < p_*
    SERRIN_LIMIT = "SERRIN_LIMIT"  # p+ = p_*
    VANISHING = "VANISHING"  # p_* < p+ < p*
    SUPERCRITICAL = "SUPERCRITICAL"  # p+ >= p*, outside the decay theorems


class Command(str, Enum):
    """Command line subcommands"""
    EXPONENTS = "exponents"
    TRANSFORM = "transform"
    MOSER = "moser"
    SOLVE = "solve"
    FIT = "fit"
    SUPPORT = "support"


# ============================================================================
# EXPONENT DATA
# ============================================================================

class ExponentVector(BaseModel):
    """Anisotropy data p = (p_1, ..., p_n)"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int = Field(..., description="Space dimension")
    p: Tuple[Rational, ...] = Field(..., description="Per-axis exponents p_i")

    @model_validator(mode="before")
    @classmethod
    def fill_dimension(cls, data: Any) -> Any:
        # n defaults to the length of p
        if isinstance(data, dict) and data.get("n") is None and "p" in data:
            data = dict(data)
            data["n"] = len(data["p"])
        return data

    @model_validator(mode="after")
    def check_exponents(self) -> "ExponentVector":
        if len(self.p) != self.n:
            raise ValueError(f"p has {len(self.p)} entries but n = {self.n}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if any(pi <= 1 for pi in self.p):
            raise ValueError("p_i must exceed 1")
        if sum(1 / pi for pi in self.p) <= 1:
            raise ValueError("sum of 1/p_i must exceed 1 (harmonic mean p < n)")
        return self

    def permuted(self, order: Tuple[int, ...]) -> "ExponentVector":
        """Exponent vector with axes reordered as order[0], order[1], ..."""
        return ExponentVector(n=self.n, p=tuple(self.p[i] for i in order))


class DerivedExponents(BaseModel):
    """Every exponent and index set computed from an ExponentVector"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    p_harmonic: Rational = Field(..., description="Harmonic mean p")
    p_critical: Rational = Field(..., description="Critical Sobolev exponent p*")
    p_serrin: Rational = Field(..., description="Serrin exponent p_*")
    p_max: Rational = Field(..., description="Largest exponent p+")
    p_min: Rational = Field(..., description="Smallest exponent p-")
    theta: Optional[Tuple[int, ...]] = Field(default=None, description="Index set Theta")
    p_bar0: Optional[Rational] = Field(default=None, description="Vanishing threshold")
    q0: Optional[float] = Field(default=None, description="Decay threshold q0 >= p_*")
    q0_exact: Optional[Rational] = Field(default=None, description="q0 when it is rational")
    q0_raw_root: Optional[float] = Field(
        default=None, description="Largest real root before clamping at p_*"
    )
    i0: Optional[Tuple[int, ...]] = Field(default=None, description="Indices with p_i > p_bar0")
    i0_complement: Optional[Tuple[int, ...]] = Field(default=None, description="Complement of i0")
    regime: Regime = Field(..., description="Regime of p+")

    def decimals(self) -> Dict[str, Optional[float]]:
        """Decimal view of the exact fields"""
        return {
            "p_harmonic": float(self.p_harmonic),
            "p_critical": float(self.p_critical),
            "p_serrin": float(self.p_serrin),
            "p_max": float(self.p_max),
            "p_min": float(self.p_min),
            "p_bar0": float(self.p_bar0) if self.p_bar0 is not None else None,
            "q0": self.q0,
        }


# ============================================================================
# COORDINATE MAPS
# ============================================================================

class DiagonalMap(BaseModel):
    """x -> amplitude * u(mu_1 x_1, ..., mu_n x_n)"""
    model_config = ConfigDict(frozen=True)

    scales: Tuple[float, ...] = Field(..., description="Per-axis scales mu_i")
    amplitude: float = Field(default=1.0, description="Prefactor applied to the value")

    @field_validator("scales")
    @classmethod
    def check_scales(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if not v:
            raise ValueError("scales must be nonempty")
        if any(not math.isfinite(s) or s <= 0 for s in v):
            raise ValueError("scales must be strictly positive and finite")
        return v

    @field_validator("amplitude")
    @classmethod
    def check_amplitude(cls, v: float) -> float:
        if not math.isfinite(v) or v <= 0:
            raise ValueError("amplitude must be strictly positive and finite")
        return v

    @property
    def n(self) -> int:
        return len(self.scales)

    def compose(self, other: "DiagonalMap") -> "DiagonalMap":
        """Map equal to applying other first, then self"""
        if other.n != self.n:
            raise ValueError("cannot compose maps of different dimension")
        return DiagonalMap(
            scales=tuple(a * b for a, b in zip(self.scales, other.scales)),
            amplitude=self.amplitude * other.amplitude,
        )

    def inverse(self) -> "DiagonalMap":
        return DiagonalMap(
            scales=tuple(1.0 / s for s in self.scales),
            amplitude=1.0 / self.amplitude,
        )

    def jacobian(self) -> float:
        return math.prod(self.scales)

    def is_identity(self) -> bool:
        return self.amplitude == 1.0 and all(s == 1.0 for s in self.scales)


class ThetaVector(BaseModel):
    """Weights theta_i of the additive Sobolev inequality"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    theta: Tuple[Rational, ...] = Field(..., description="Positive weights theta_i")

    @field_validator("theta")
    @classmethod
    def check_positive(cls, v: Tuple[Fraction, ...]) -> Tuple[Fraction, ...]:
        if not v:
            raise ValueError("theta must be nonempty")
        if any(t <= 0 for t in v):
            raise ValueError("theta_i must be positive")
        return v


# ============================================================================
# CLOSED-FORM SPECIFICATIONS
# ============================================================================

class EnvelopeSpec(BaseModel):
    """c * (1 + sum_{i in axes} |x_i|^{q p_i / (q - p_i)})^{-1}"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    ev: ExponentVector
    q: Rational = Field(..., description="Decay parameter")
    axes: Tuple[int, ...] = Field(..., description="Indices the sum runs over")
    c: float = Field(default=1.0, description="Envelope constant")

    @model_validator(mode="after")
    def check_spec(self) -> "EnvelopeSpec":
        if not self.axes:
            raise ValueError("axes must be nonempty")
        if any(i < 0 or i >= self.ev.n for i in self.axes):
            raise ValueError("axis index out of range")
        if any(self.q <= self.ev.p[i] for i in self.axes):
            raise ValueError("q must exceed p_i for every i in axes")
        if not math.isfinite(self.c) or self.c <= 0:
            raise ValueError("c must be positive")
        return self


class OmegaSpec(BaseModel):
    """Annular domain built from two index sets"""
    model_config = ConfigDict(frozen=True)

    i1: Tuple[int, ...] = Field(default=(), description="Indices of the ball part")
    i2: Tuple[int, ...] = Field(..., description="Indices of the annulus part")
    r1: float = Field(..., description="Radius of the ball part")
    r2: float = Field(..., description="Radius of the annulus part")
    lam: float = Field(..., description="Relative annulus width in (0, 1)")
    qweights: Dict[int, float] = Field(..., description="Exponent q_i per index")

    @model_validator(mode="after")
    def check_spec(self) -> "OmegaSpec":
        if not self.i2:
            raise ValueError("i2 must be nonempty")
        if set(self.i1) & set(self.i2):
            raise ValueError("i1 and i2 must be disjoint")
        if not (0 < self.lam < 1):
            raise ValueError("lam must lie in (0, 1)")
        if self.r1 <= 0 or self.r2 <= 0:
            raise ValueError("r1 and r2 must be positive")
        missing = [i for i in (*self.i1, *self.i2) if i not in self.qweights]
        if missing:
            raise ValueError(f"qweights missing for indices {missing}")
        if any(self.qweights[i] <= 1 for i in (*self.i1, *self.i2)):
            raise ValueError("all q_i must exceed 1")
        return self


# ============================================================================
# GRIDS
# ============================================================================

class TensorGrid(BaseModel):
    """Axis-aligned box [-L_1, L_1] x ... x [-L_n, L_n] with odd point counts"""
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., description="Dimension")
    extents: Tuple[float, ...] = Field(..., description="Half-widths L_i")
    counts: Tuple[int, ...] = Field(..., description="Points per axis m_i")

    @model_validator(mode="before")
    @classmethod
    def fill_dimension(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("n") is None and "counts" in data:
            data = dict(data)
            data["n"] = len(data["counts"])
        return data

    @model_validator(mode="after")
    def check_grid(self) -> "TensorGrid":
        if len(self.extents) != self.n or len(self.counts) != self.n:
            raise ValueError("extents and counts must have n entries")
        if any(m < 3 or m % 2 == 0 for m in self.counts):
            raise ValueError("point counts must be odd and at least 3")
        if any(not math.isfinite(L) or L <= 0 for L in self.extents):
            raise ValueError("extents must be positive")
        if math.prod(self.counts) > MAX_GRID_POINTS:
            raise ValueError(f"grid exceeds {MAX_GRID_POINTS} points")
        return self

    @classmethod
    def cube(cls, n: int, extent: float, count: int) -> "TensorGrid":
        return cls(n=n, extents=(extent,) * n, counts=(count,) * n)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.counts

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(2.0 * L / (m - 1) for L, m in zip(self.extents, self.counts))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def size(self) -> int:
        return math.prod(self.counts)

    def center_index(self) -> Tuple[int, ...]:
        return tuple(m // 2 for m in self.counts)

    def coordinates(self, axis: int) -> np.ndarray:
        """Node coordinates along one axis"""
        L, m = self.extents[axis], self.counts[axis]
        return np.linspace(-L, L, m)

    def mesh(self) -> List[np.ndarray]:
        """Sparse open mesh, one broadcastable array per axis"""
        return np.meshgrid(
            *(self.coordinates(i) for i in range(self.n)), indexing="ij", sparse=True
        )

    def pullback(self, scaling: "DiagonalMap") -> "TensorGrid":
        """
        Grid whose nodes map onto this grid's nodes under x -> (mu_i x_i).

        Sampling apply_map(scaling, f) on the pullback reproduces the
        samples of f on this grid up to the amplitude.
        """
        if scaling.n != self.n:
            raise ValueError("map dimension does not match grid")
        return TensorGrid(
            n=self.n,
            extents=tuple(L / mu for L, mu in zip(self.extents, scaling.scales)),
            counts=self.counts,
        )

    def permuted(self, order: Tuple[int, ...]) -> "TensorGrid":
        return TensorGrid(
            n=self.n,
            extents=tuple(self.extents[i] for i in order),
            counts=tuple(self.counts[i] for i in order),
        )


# ============================================================================
# MOSER ITERATION
# ============================================================================

class IterationTrace(BaseModel):
    """Exponent paths, stopping sets, k-bounds and the lambda ladder"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    gamma0: Rational = Field(..., description="Starting exponent gamma")
    eps: Rational = Field(..., description="Stopping parameter in (0, 1)")
    p0: Rational = Field(..., description="max(p_*, p_i over the universe)")
    p_eps: Rational = Field(..., description="(1 + eps) p0")
    threshold: Rational = Field(..., description="(n/p)(p_eps - p)")
    index_universe: Tuple[int, ...] = Field(..., description="I1 union I2")
    phi: Dict[int, List[Tuple[int, ...]]] = Field(..., description="Stopping paths per length")
    path_gammas: Dict[int, List[Rational]] = Field(..., description="Final gamma of each path")
    kminus: int = Field(..., description="Lower iteration bound")
    kplus: int = Field(..., description="Upper iteration bound")
    ladder: List[Rational] = Field(..., description="lambda_k for k = 0..kplus")
    boundary_hits: List[Tuple[int, ...]] = Field(
        default_factory=list, description="Paths whose gamma equals the threshold"
    )

    def path_count(self) -> int:
        return sum(len(paths) for paths in self.phi.values())


# ============================================================================
# SOLVER
# ============================================================================

class SolverConfig(BaseModel):
    """Configuration of the constrained energy minimization"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    ev: ExponentVector
    grid: TensorGrid
    lambda_growth: float = Field(default=1.0, description="Growth constant, reporting only")
    eps_schedule: Tuple[float, ...] = Field(
        default=DEFAULT_EPS_SCHEDULE, description="Decreasing regularization parameters"
    )
    step0: float = Field(default=DEFAULT_STEP0, description="Initial step")
    tol: float = Field(default=DEFAULT_TOL, description="Relative energy-change tolerance")
    max_iters: int = Field(default=DEFAULT_MAX_ITERS, description="Iteration cap over all stages")
    seed: int = Field(default=0, description="Seed for the initial noise")
    init_noise: float = Field(default=0.0, description="Relative noise added to the initializer")
    init_field: Optional[str] = Field(default=None, description="Field file used as initializer")
    pin_scale: bool = Field(
        default=True, description="Hold the concentration ratio of the initializer fixed"
    )

    @model_validator(mode="after")
    def check_config(self) -> "SolverConfig":
        if self.grid.n != self.ev.n:
            raise ValueError("grid dimension must match n")
        schedule = self.eps_schedule
        if not schedule or any(e <= 0 for e in schedule):
            raise ValueError("eps_schedule must be positive")
        if any(b >= a for a, b in zip(schedule, schedule[1:])):
            raise ValueError("eps_schedule must be strictly decreasing")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.step0 <= 0:
            raise ValueError("step0 must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.lambda_growth <= 0:
            raise ValueError("lambda_growth must be positive")
        if self.init_noise < 0:
            raise ValueError("init_noise must be nonnegative")
        return self


class StageSummary(BaseModel):
    """Outcome of one regularization stage"""
    eps_reg: float
    iterations: int
    energy: float
    converged: bool


# ============================================================================
# DECAY ANALYSIS
# ============================================================================

class DecayFitReport(BaseModel):
    """Log-log tail fit along one axis ray"""
    model_config = ConfigDict(populate_by_name=True)

    axis: int = Field(..., description="Axis of the ray")
    window: Tuple[float, float] = Field(..., description="Radii (r_lo, r_hi)")
    samples: int = Field(..., description="Number of radii used")
    fitted_slope: Optional[float] = Field(default=None, description="Least-squares slope")
    slope_stderr: Optional[float] = Field(default=None, description="Standard error")
    intercept: Optional[float] = Field(default=None, description="Least-squares intercept")
    predicted_slope: Optional[float] = Field(default=None, description="-p_i / (q - p_i)")
    fitted_c: Optional[float] = Field(default=None, description="Minimal envelope constant")
    tolerance: float = Field(..., description="Declared slope tolerance")
    passed: bool = Field(default=False, alias="pass", description="Slope within tolerance")
    vanishing: bool = Field(default=False, description="Nonpositive values met in the window")

    @model_validator(mode="after")
    def check_window(self) -> "DecayFitReport":
        if not self.window[0] < self.window[1]:
            raise ValueError("window must satisfy r_lo < r_hi")
        return self


class SupportReport(BaseModel):
    """Per-axis extents of the above-threshold set"""
    extents: Tuple[float, ...] = Field(..., description="R_i(u) per axis")
    threshold: float = Field(..., description="Detection threshold")
    r0_estimate: Optional[float] = Field(default=None, description="Max extent over i0")
    vanishing_axes: Tuple[int, ...] = Field(
        default=(), description="Axes whose extent stays inside the box"
    )


# ============================================================================
# COMMAND LINE
# ============================================================================

class RunConfig(BaseModel):
    """Resolved command line invocation"""
    command: Command
    out_dir: str = Field(default=".", description="Output directory")
    threads: Optional[int] = Field(default=None, description="Worker cap")
    verbose: bool = False

    @field_validator("threads")
    @classmethod
    def check_threads(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError("threads must be at least 1")
        return v


class ErrorResponse(BaseModel):
    """Standard error response"""
    error: str
    detail: Optional[str] = None
    schema_version: str = SCHEMA_VERSION
    timestamp: datetime = Field(default_factory=datetime.now)
