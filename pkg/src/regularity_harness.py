"""
Regularity measurements on sections: oscillation decay (Holder scans), Harnack ratios of
nonnegative homogeneous solutions, and the end-to-end pipeline entry point.
"""

from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from src import grid_ops
from src.convex_core import section
from src.elliptic_solver import DEFAULT_TOL, direct_problem, solve
from src.errors import EmptySection, FitIllConditioned, NonPositiveSolution, node_list
from src.models import ConvexPotential, GridFunction2D, HarnackReport, HolderReport

MIN_FIT_HEIGHTS = 4
MIN_SECTION_NODES = 50
POSITIVITY_TOL = 1e-12

BoundaryData = Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def oscillation(u: GridFunction2D, region: np.ndarray) -> float:
    """max - min of u over the masked nodes of `region`"""
    nodes = region & u.mask
    if not nodes.any():
        raise EmptySection("oscillation over an empty node set")
    values = u.values[nodes]
    return float(values.max() - values.min())


def _log_fit(heights: Sequence[float], oscs: Sequence[float]) -> Tuple[float, float]:
    slope, intercept = np.polyfit(np.log(heights), np.log(oscs), 1)
    return float(slope), float(np.exp(intercept))


def holder_scan(u: GridFunction2D, p: ConvexPotential, x0: Sequence[float], heights: Sequence[float],
                q: float = 4.0) -> HolderReport:
    """
    Fit osc_{S(x0,h)} u ~ prefactor * h^gamma0 over a height ladder and measure the two-scale
    decay osc(h/2) <= theta osc(h) + K h^{1/2 - 1/q} with theta = 2^{-gamma0}.

    The two smallest heights are dropped when the smallest section has fewer than 50 nodes.

    Raises:
        EmptySection: a section holds no node of u
        FitIllConditioned: fewer than four heights remain for the fit
    """
    hs = sorted((float(h) for h in heights), reverse=True)
    sections = [section(p, x0, h) for h in hs]
    dropped = 0
    if len(hs) >= 2 and sections[-1].nodes < MIN_SECTION_NODES:
        logger.warning(f"Smallest section has {sections[-1].nodes} nodes, dropping the two smallest heights")
        hs, sections, dropped = hs[:-2], sections[:-2], 2
    if len(hs) < MIN_FIT_HEIGHTS:
        raise FitIllConditioned(f"need {MIN_FIT_HEIGHTS} heights for the oscillation fit, have {len(hs)}",
                                details={"heights": hs, "dropped": dropped})

    oscs = [oscillation(u, s.mask) for s in sections]
    halves = [oscillation(u, section(p, x0, 0.5 * h).mask) for h in hs]
    positive = [(h, o) for h, o in zip(hs, oscs) if o > 0.0]
    if not positive:
        gamma0, prefactor = 1.0, 0.0
    elif len(positive) < MIN_FIT_HEIGHTS:
        raise FitIllConditioned(f"only {len(positive)} heights have positive oscillation")
    else:
        gamma0, prefactor = _log_fit(*zip(*positive))

    theta = 2.0 ** -gamma0
    rate = 0.5 - 1.0 / q
    K = max(0.0, max((half - theta * full) / h ** rate for h, full, half in zip(hs, oscs, halves)))
    report = HolderReport(
        x0=(float(x0[0]), float(x0[1])), heights=hs, oscillations=oscs, gamma0=gamma0, prefactor=prefactor,
        theta=theta, K=K, q=q, two_scale_holds=bool(theta < 1.0 and np.isfinite(K)), dropped=dropped,
        inputs_summary={"potential": p.name, "lambda": p.lambda_lo, "Lambda": p.lambda_hi,
                        "grid": list(u.shape), "half_oscillations": halves},
    )
    logger.info(f"Holder scan at {tuple(x0)}: gamma0={gamma0:.4f}, theta={theta:.4f}, K={K:.4g}")
    return report


def _boundary_values(p: ConvexPotential, data: BoundaryData) -> np.ndarray:
    if callable(data):
        x1, x2 = p.phi.coords()
        return np.broadcast_to(np.asarray(data(x1, x2), dtype=float), p.phi.shape).copy()
    return np.asarray(data, dtype=float)


def harnack_ratio(p: ConvexPotential, x0: Sequence[float], h: float, boundary_data: BoundaryData,
                  tol: float = DEFAULT_TOL) -> HarnackReport:
    """
    Solve D_j(Phi^{ij} D_i u) = 0 on S(x0, 2h) with the given nonnegative boundary data and
    return sup/inf of u over S(x0, h).

    Raises:
        ValueError: boundary data negative somewhere or identically zero on the section ring
        NonPositiveSolution: the discrete solution is not positive on the section
    """
    outer = section(p, x0, 2.0 * h, require_compact=True)
    inner = section(p, x0, h)
    boundary = grid_ops.ring(outer.mask)
    data = _boundary_values(p, boundary_data)
    ring_values = data[boundary]
    if np.any(ring_values < 0.0) or not np.any(ring_values > 0.0):
        raise ValueError("boundary data must be nonnegative and not identically zero on the section ring")

    result = solve(direct_problem(p, dirichlet=np.where(boundary, data, 0.0), unknowns=outer.mask), tol)
    values = result.u.values
    negative = outer.mask & (values < -POSITIVITY_TOL)
    if negative.any():
        raise NonPositiveSolution(f"homogeneous solution negative at {int(negative.sum())} nodes",
                                  nodes=node_list(negative), count=int(negative.sum()))
    inner_values = values[inner.mask]
    sup_inner, inf_inner = float(inner_values.max()), float(inner_values.min())
    if inf_inner <= 0.0:
        zero = inner.mask & (values <= 0.0)
        raise NonPositiveSolution("solution vanishes on the inner section", nodes=node_list(zero),
                                  count=int(zero.sum()))
    ratio = sup_inner / inf_inner
    logger.info(f"Harnack ratio at {tuple(x0)}, h={h}: {ratio:.6f}")
    return HarnackReport(x0=(float(x0[0]), float(x0[1])), inner_height=h, outer_height=2.0 * h,
                         sup_inner=sup_inner, inf_inner=inf_inner, ratio=ratio, iterations=result.iterations)


def harnack_family(potentials: Sequence[ConvexPotential], x0: Sequence[float], h: float,
                   boundary_data: BoundaryData) -> List[HarnackReport]:
    return [harnack_ratio(p, x0, h, boundary_data) for p in potentials]


def run_pipeline(cfg, stages: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    """Run the configured experiment end to end and write its report bundle"""
    from src.pipeline_system import PipelineSystem

    system = PipelineSystem(cfg)
    return system.run(stages)
