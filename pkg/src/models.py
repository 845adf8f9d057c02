"""
Core data models for the partial-Legendre LMA toolkit.
Array carriers are dataclasses; reports and run state are pydantic models.
"""

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src import grid_ops


class StageStatus(str, Enum):
    """Pipeline stage lifecycle states"""
    PENDING = "pending"
    RUNNING = "running"
    PASSED = "passed"
    FAILED = "failed"
    SKIPPED = "skipped"


class PotentialFamily(str, Enum):
    """Built-in convex potential families"""
    ISOTROPIC = "isotropic"
    DIAGONAL = "diagonal"
    SKEW = "skew"
    PERTURBED = "perturbed"
    PINCHED = "pinched"
    GRIDTXT = "gridtxt"


class FluxKind(str, Enum):
    ZERO = "zero"
    CONSTANT = "constant"
    CRITICAL = "critical"
    WEIGHTED = "weighted"


class SourceKind(str, Enum):
    ZERO = "zero"
    CONSTANT = "constant"
    SINGULAR = "singular"


class DomainShape(str, Enum):
    SQUARE = "square"
    DISK = "disk"


class ManufacturedKind(str, Enum):
    NONE = "none"
    SINE = "sine"
    CUBIC = "cubic"


class DerivativeScheme(str, Enum):
    """How first derivatives are taken inside energy quadratures"""
    CENTRAL = "central"
    SPECTRAL = "spectral"


@dataclass
class GridFunction2D:
    """Scalar field on a uniform rectangular grid; values[i, j] sits at origin + (i*dx, j*dy)"""
    values: np.ndarray
    origin: Tuple[float, float] = (0.0, 0.0)
    spacing: Tuple[float, float] = (1.0, 1.0)
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError(f"GridFunction2D needs a 2D array, got shape {self.values.shape}")
        self.origin = (float(self.origin[0]), float(self.origin[1]))
        self.spacing = (float(self.spacing[0]), float(self.spacing[1]))
        if min(self.spacing) <= 0:
            raise ValueError(f"spacing must be strictly positive, got {self.spacing}")
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.values.shape:
                raise ValueError(f"mask shape {self.mask.shape} != values shape {self.values.shape}")
        if not np.all(np.isfinite(self.values[self.mask])):
            raise ValueError("values must be finite at every masked node")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def nx(self) -> int:
        return self.values.shape[0]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @property
    def cell_area(self) -> float:
        return self.spacing[0] * self.spacing[1]

    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        return (self.origin[0] + self.spacing[0] * np.arange(self.nx),
                self.origin[1] + self.spacing[1] * np.arange(self.ny))

    def coords(self) -> Tuple[np.ndarray, np.ndarray]:
        a1, a2 = self.axes()
        return np.meshgrid(a1, a2, indexing="ij")

    def measure(self) -> float:
        """Area of the masked region by node counting"""
        return float(self.mask.sum()) * self.cell_area

    def is_connected(self) -> bool:
        return grid_ops.is_connected(self.mask)

    def with_values(self, values: np.ndarray, mask: Optional[np.ndarray] = None) -> "GridFunction2D":
        """Same geometry, new values; the mask defaults to ours restricted to finite values"""
        values = np.asarray(values, dtype=float)
        base = self.mask if mask is None else np.asarray(mask, dtype=bool)
        base = base & np.isfinite(values)
        return GridFunction2D(np.where(base, values, 0.0), self.origin, self.spacing, base)

    def interpolate(self, x1, x2) -> np.ndarray:
        return grid_ops.bilinear(self.values, self.mask, self.origin, self.spacing, x1, x2)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], shape: Tuple[int, int],
                      origin: Tuple[float, float], spacing: Tuple[float, float],
                      mask: Optional[np.ndarray] = None) -> "GridFunction2D":
        a1 = origin[0] + spacing[0] * np.arange(shape[0])
        a2 = origin[1] + spacing[1] * np.arange(shape[1])
        x1, x2 = np.meshgrid(a1, a2, indexing="ij")
        values = np.broadcast_to(np.asarray(fn(x1, x2), dtype=float), shape).copy()
        if mask is None:
            mask = np.isfinite(values)
        return cls(np.where(mask, values, 0.0), origin, spacing, mask)

    @classmethod
    def square(cls, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], n: int, extent: float = 1.0,
               mask: Optional[np.ndarray] = None) -> "GridFunction2D":
        """Sample fn on the n x n grid covering [-extent, extent]^2"""
        h = 2.0 * extent / (n - 1)
        return cls.from_function(fn, (n, n), (-extent, -extent), (h, h), mask)


@dataclass
class VectorField2D:
    """Two node-wise components sharing the geometry of some GridFunction2D"""
    c1: np.ndarray
    c2: np.ndarray

    def __post_init__(self):
        self.c1 = np.asarray(self.c1, dtype=float)
        self.c2 = np.asarray(self.c2, dtype=float)
        if self.c1.shape != self.c2.shape:
            raise ValueError("vector field components must share a shape")

    @classmethod
    def constant(cls, shape: Tuple[int, int], a: float, b: float) -> "VectorField2D":
        return cls(np.full(shape, float(a)), np.full(shape, float(b)))

    @classmethod
    def zeros(cls, shape: Tuple[int, int]) -> "VectorField2D":
        return cls.constant(shape, 0.0, 0.0)

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.c1, self.c2)


class PotentialReport(BaseModel):
    """Outcome of determinant-bound and convexity validation"""
    lambda_lo: float
    lambda_hi: float
    tol: float
    det_min: float
    det_max: float
    min_eigenvalue: float
    interior_nodes: int
    out_of_bounds: List[Tuple[int, int]] = Field(default_factory=list)
    midpoint_pairs: int = 0
    midpoint_failures: int = 0
    connected: bool = True
    accepted: bool = True


@dataclass
class ConvexPotential:
    """A validated convex potential with its derivative fields"""
    phi: GridFunction2D
    grad1: np.ndarray
    grad2: np.ndarray
    hxx: np.ndarray
    hxy: np.ndarray
    hyy: np.ndarray
    det: np.ndarray
    lambda_lo: float
    lambda_hi: float
    interior: np.ndarray
    report: Optional[PotentialReport] = None
    name: str = "potential"


@dataclass
class CofactorField:
    """Per-node 2x2 symmetric matrix [[c11, c12], [c12, c22]]"""
    c11: np.ndarray
    c12: np.ndarray
    c22: np.ndarray
    mask: np.ndarray
    spacing: Tuple[float, float] = (1.0, 1.0)

    def quadratic_form(self, g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
        return self.c11 * g1 * g1 + 2.0 * self.c12 * g1 * g2 + self.c22 * g2 * g2

    @classmethod
    def identity(cls, like: GridFunction2D) -> "CofactorField":
        shape = like.shape
        return cls(np.ones(shape), np.zeros(shape), np.ones(shape), like.mask.copy(), like.spacing)


@dataclass
class SectionMask:
    """S(x0, h) = {y : phi(y) < phi(x0) + Dphi(x0).(y - x0) + h} on the grid"""
    center: Tuple[float, float]
    height: float
    mask: np.ndarray
    volume: float
    compact: bool = True

    @property
    def nodes(self) -> int:
        return int(self.mask.sum())


@dataclass
class ModulusProfile:
    ts: np.ndarray
    ms: np.ndarray
    pairs_used: List[int] = field(default_factory=list)


@dataclass
class PLTMap:
    """Forward map P(x1, x2) = (phi_x1, x2) with its slice-wise inverse on the target grid"""
    potential: ConvexPotential
    xi: np.ndarray
    jacobian: np.ndarray
    image_bbox: Tuple[float, float, float, float]
    target_origin: Tuple[float, float]
    target_spacing: Tuple[float, float]
    inverse_x1: np.ndarray
    inverse_mask: np.ndarray

    @property
    def target_shape(self) -> Tuple[int, int]:
        return self.inverse_x1.shape

    def target_coords(self) -> Tuple[np.ndarray, np.ndarray]:
        nx, ny = self.target_shape
        a1 = self.target_origin[0] + self.target_spacing[0] * np.arange(nx)
        a2 = self.target_origin[1] + self.target_spacing[1] * np.arange(ny)
        return np.meshgrid(a1, a2, indexing="ij")

    def target_grid(self, values: Optional[np.ndarray] = None,
                    mask: Optional[np.ndarray] = None) -> GridFunction2D:
        if values is None:
            values = np.zeros(self.target_shape)
        base = self.inverse_mask if mask is None else mask
        base = base & np.isfinite(values)
        return GridFunction2D(np.where(base, values, 0.0), self.target_origin, self.target_spacing, base)

    def forward(self, x1, x2) -> Tuple[np.ndarray, np.ndarray]:
        """(xi, eta) at arbitrary source points by bilinear interpolation of phi_x1"""
        phi = self.potential.phi
        valid = phi.mask & np.isfinite(self.xi)
        xi = grid_ops.bilinear(self.xi, valid, phi.origin, phi.spacing, x1, x2)
        return xi, np.asarray(x2, dtype=float) + np.zeros_like(xi)


@dataclass
class TransformedPotential:
    """phi* on the (xi, eta) target grid plus its derivative fields from the composed identities"""
    phistar: GridFunction2D
    d_xi: np.ndarray
    d_eta: np.ndarray
    d_xixi: np.ndarray
    d_xieta: np.ndarray
    d_etaeta: np.ndarray
    det: np.ndarray
    crosscheck: Dict[str, float] = field(default_factory=dict)


@dataclass
class TransformedProblem:
    """D_xi(a u_xi) + u_etaeta = div G + g on the inscribed region of the image"""
    a: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    g: np.ndarray
    mask: np.ndarray
    origin: Tuple[float, float]
    spacing: Tuple[float, float]
    lambda_lo: float
    lambda_hi: float


@dataclass
class EllipticProblem:
    """
    D_j(a^{ij} D_i u) = div G + g on the unknown nodes in `mask`, with `dirichlet`
    read on the 8-neighbour ring around the mask.
    """
    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    g: np.ndarray
    dirichlet: np.ndarray
    mask: np.ndarray
    origin: Tuple[float, float]
    spacing: Tuple[float, float]
    ell_lo: float = 0.0
    ell_hi: float = np.inf

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape

    @property
    def cell_area(self) -> float:
        return self.spacing[0] * self.spacing[1]

    def coords(self) -> Tuple[np.ndarray, np.ndarray]:
        nx, ny = self.shape
        a1 = self.origin[0] + self.spacing[0] * np.arange(nx)
        a2 = self.origin[1] + self.spacing[1] * np.arange(ny)
        return np.meshgrid(a1, a2, indexing="ij")

    def transposed(self) -> "EllipticProblem":
        """Same problem with the coefficient matrix transposed (identical for symmetric a)"""
        return EllipticProblem(self.a11.copy(), self.a12.copy(), self.a22.copy(), self.G1, self.G2, self.g,
                               self.dirichlet, self.mask, self.origin, self.spacing, self.ell_lo, self.ell_hi)


@dataclass
class SolveResult:
    u: GridFunction2D
    iterations: int
    residual: float
    wall_time: float = 0.0
    flags: Dict[str, Any] = field(default_factory=dict)


@dataclass
class LevelProfile:
    """omega(k) = |{u > k}| on an increasing ladder of levels"""
    ks: np.ndarray
    omegas: np.ndarray
    k0: float


@dataclass
class IterationParams:
    """Constants (C, alpha, beta) of the level-set recursion"""
    C: float
    alpha: float
    beta: float

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


class MaxPrincipleReport(BaseModel):
    sup_u: float
    boundary_sup_plus: float
    Fphi_norm: float
    f_norm: float
    omega_measure: float
    q: float
    q_star: float
    bound_rhs: float
    constant_needed: float
    degenerate: bool = False
    n: int = 2


class SectionBoundReport(BaseModel):
    """sup|u| against h on zero-Dirichlet sections"""
    center: Tuple[float, float]
    q: float
    heights: List[float]
    sup_abs: List[float]
    expected_exponent: float
    fitted_exponent: float
    prefactor: float


class EnergyChainReport(BaseModel):
    """Per-level check of the truncation energy inequality"""
    levels: List[float]
    energies: List[float]
    bounds: List[float]
    F0: float
    sobolev_constant: float
    holds: bool


class InequalityReport(BaseModel):
    energy: float
    lhs: float
    rhs_bound: float
    ratio: float
    params: Dict[str, float] = Field(default_factory=dict)
    saturated: bool = False


class TransformCheck(BaseModel):
    """Identity residuals of a transformed potential"""
    sup_formula_vs_identities: float
    first_derivative_error: float
    dual_residual: float
    area_identity_error: float


class PathComparison(BaseModel):
    """Direct solve against transform-solve-pullback on a region"""
    max_discrepancy: float
    l2_discrepancy: float
    region_nodes: int
    direct_iterations: int
    transformed_iterations: int
    max_error_direct: Optional[float] = None
    max_error_transformed: Optional[float] = None


class HolderReport(BaseModel):
    x0: Tuple[float, float]
    heights: List[float]
    oscillations: List[float]
    gamma0: float
    prefactor: float
    theta: float
    K: float
    q: float
    two_scale_holds: bool
    dropped: int = 0
    inputs_summary: Dict[str, Any] = Field(default_factory=dict)


class HarnackReport(BaseModel):
    x0: Tuple[float, float]
    inner_height: float
    outer_height: float
    sup_inner: float
    inf_inner: float
    ratio: float
    iterations: int = 0


class RunState(BaseModel):
    """Stage bookkeeping for one pipeline run"""
    stage_states: Dict[str, StageStatus] = Field(default_factory=dict)
    results: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    assertions: Dict[str, bool] = Field(default_factory=dict)
    last_updated: datetime = Field(default_factory=datetime.now)

    def update_timestamp(self):
        """Update the last modified timestamp"""
        self.last_updated = datetime.now()
