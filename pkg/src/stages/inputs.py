"""
Turn an ExperimentConfig into the potential, flux, source and boundary data of a run.
"""

from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from src.convex_core import build_potential
from src.degiorgi import weighted_flux
from src.field_store import load_grid_function
from src.models import (ConvexPotential, FluxKind, GridFunction2D, ManufacturedKind, PotentialFamily, SourceKind,
                        VectorField2D)
from src.sample_fields import (constant_flux, constant_source, critical_flux, family_potential, random_family,
                               singular_source)

FAMILY_PARAMS = {
    PotentialFamily.ISOTROPIC: (),
    PotentialFamily.DIAGONAL: ("a", "b"),
    PotentialFamily.SKEW: ("eps",),
    PotentialFamily.PERTURBED: ("amplitude",),
    PotentialFamily.PINCHED: ("kappa", "width"),
}

CENTER = (0.0, 0.0)
FAMILY_GRID = 65
FAMILY_BOUNDS = (0.5, 2.0)
FAMILY_SOURCE = -1.0


def family_params(cfg) -> Dict[str, float]:
    return {name: getattr(cfg, name) for name in FAMILY_PARAMS.get(cfg.potential, ())}


def potential_from_config(cfg) -> ConvexPotential:
    if cfg.potential == PotentialFamily.GRIDTXT:
        phi = load_grid_function(cfg.potential_path, cfg.mask_path)
        return build_potential(phi, cfg.lambda_lo, cfg.lambda_hi, seed=cfg.seed, name="gridtxt")
    bounds = (cfg.lambda_lo, cfg.lambda_hi) if cfg.lambda_lo is not None and cfg.lambda_hi is not None else None
    return family_potential(cfg.potential.value, cfg.grid, cfg.extent, cfg.domain.value, bounds=bounds,
                            seed=cfg.seed, **family_params(cfg))


def flux_from_config(cfg, p: ConvexPotential) -> Optional[VectorField2D]:
    kind = cfg.flux
    if kind == FluxKind.ZERO:
        return None
    if kind == FluxKind.CONSTANT:
        return constant_flux(p.phi, cfg.flux_x, cfg.flux_y)
    if kind == FluxKind.CRITICAL:
        return critical_flux(p.phi, CENTER, cfg.q, direction=(cfg.flux_x, cfg.flux_y))
    target = VectorField2D.constant(p.phi.shape, cfg.flux_x, cfg.flux_y)
    return weighted_flux(p, target)


def source_from_config(cfg, p: ConvexPotential) -> Optional[GridFunction2D]:
    if cfg.source == SourceKind.ZERO:
        return None
    if cfg.source == SourceKind.CONSTANT:
        return constant_source(p.phi, cfg.source_value)
    return singular_source(p.phi, CENTER, cfg.source_exponent)


def manufactured_solution(kind: ManufacturedKind, extent: float) -> Optional[Callable]:
    if kind == ManufacturedKind.SINE:
        k = np.pi / extent
        return lambda x1, x2: np.sin(k * x1) * np.sin(k * x2)
    if kind == ManufacturedKind.CUBIC:
        return lambda x1, x2: x1 ** 3 - 3.0 * x1 * x2 ** 2 + 0.5 * x2
    return None


def linear_boundary_data(p: ConvexPotential) -> np.ndarray:
    """u = x1 on every node; linear functions solve the homogeneous equation for any potential"""
    x1, _ = p.phi.coords()
    return x1.copy()


def comparison_family(cfg, p: ConvexPotential) -> Tuple[Tuple[float, float], List[ConvexPotential]]:
    """Random potentials sharing determinant bounds that cover both p and FAMILY_BOUNDS"""
    lo, hi = min(p.lambda_lo, FAMILY_BOUNDS[0]), max(p.lambda_hi, FAMILY_BOUNDS[1])
    return (lo, hi), random_family(cfg.seed, cfg.family_size, min(cfg.grid, FAMILY_GRID), lo, hi, cfg.extent)


def family_data(cfg) -> Callable[[ConvexPotential], Tuple[Optional[VectorField2D], Optional[GridFunction2D]]]:
    """The run's flux and source on each family member; a negative unit source when both vanish"""
    def data(member: ConvexPotential):
        F, f = flux_from_config(cfg, member), source_from_config(cfg, member)
        if F is None and f is None:
            f = constant_source(member.phi, FAMILY_SOURCE)
        return F, f
    return data
