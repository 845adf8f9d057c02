"""
Discretized convex potentials: Hessians, cofactor fields, determinant-bound validation,
sections, section volumes and the modulus of convexity.
"""

from typing import List, Sequence, Tuple

import numpy as np
from loguru import logger

from src import grid_ops
from src.errors import DetOutOfBounds, EmptySection, NonConvex, SectionNotCompact, node_list
from src.models import (CofactorField, ConvexPotential, GridFunction2D, ModulusProfile, PotentialReport,
                        SectionMask)

CONVEXITY_TOL = 1e-9
DET_TOL = 1e-8
MIDPOINT_PAIRS = 1000
MAX_MODULUS_PAIRS = 1_000_000


def _min_eigenvalue(hxx: np.ndarray, hxy: np.ndarray, hyy: np.ndarray) -> np.ndarray:
    half_trace = 0.5 * (hxx + hyy)
    return half_trace - np.sqrt(0.25 * (hxx - hyy) ** 2 + hxy ** 2)


def _midpoint_check(phi: GridFunction2D, pairs: int, tol: float, seed: int) -> Tuple[int, int]:
    """Sample node pairs whose midpoint is a node and test phi(mid) <= average"""
    idx = np.argwhere(phi.mask)
    if len(idx) < 2:
        return 0, 0
    rng = np.random.default_rng(seed)
    a = idx[rng.integers(0, len(idx), size=8 * pairs)]
    b = idx[rng.integers(0, len(idx), size=8 * pairs)]
    keep = np.all((a + b) % 2 == 0, axis=1) & np.any(a != b, axis=1)
    a, b = a[keep], b[keep]
    mid = (a + b) // 2
    inside = phi.mask[mid[:, 0], mid[:, 1]]
    a, b, mid = a[inside][:pairs], b[inside][:pairs], mid[inside][:pairs]
    v = phi.values
    va, vb, vm = v[a[:, 0], a[:, 1]], v[b[:, 0], b[:, 1]], v[mid[:, 0], mid[:, 1]]
    scale = 1.0 + np.maximum(np.abs(va), np.abs(vb))
    failures = int(np.sum(vm > 0.5 * (va + vb) + tol * scale))
    return len(a), failures


def build_potential(phi: GridFunction2D, lambda_lo: float, lambda_hi: float, tol: float = CONVEXITY_TOL,
                    det_tol: float = DET_TOL, seed: int = 0, name: str = "potential") -> ConvexPotential:
    """
    Difference a sampled potential and validate it.

    Args:
        phi: sampled potential with its domain mask
        lambda_lo: lower determinant bound, must be positive
        lambda_hi: upper determinant bound
        tol: eigenvalue and midpoint-convexity tolerance
        det_tol: slack on the determinant bounds
        seed: seed for the midpoint pair sample

    Returns:
        ConvexPotential carrying its validation report

    Raises:
        NonConvex: indefinite Hessian on interior nodes, failed midpoint test or disconnected mask
        DetOutOfBounds: det D^2 phi outside [lambda_lo - det_tol, lambda_hi + det_tol]
    """
    if lambda_lo <= 0 or lambda_lo > lambda_hi:
        raise ValueError(f"need 0 < lambda_lo <= lambda_hi, got ({lambda_lo}, {lambda_hi})")

    grad1, grad2 = grid_ops.gradient(phi.values, phi.mask, phi.spacing)
    hxx, hxy, hyy = grid_ops.hessian(phi.values, phi.mask, phi.spacing)
    det = hxx * hyy - hxy ** 2
    finite = np.isfinite(hxx) & np.isfinite(hxy) & np.isfinite(hyy)
    interior = grid_ops.interior(phi.mask) & finite

    if not phi.is_connected():
        raise NonConvex("domain mask is not connected")
    if not interior.any():
        raise NonConvex("potential has no interior nodes to validate")

    min_eig = _min_eigenvalue(hxx, hxy, hyy)
    indefinite = interior & (min_eig < -tol)
    if indefinite.any():
        raise NonConvex(f"discrete Hessian indefinite at {int(indefinite.sum())} interior nodes",
                        nodes=node_list(indefinite), count=int(indefinite.sum()))

    pairs, failures = _midpoint_check(phi, MIDPOINT_PAIRS, tol, seed)
    if failures:
        raise NonConvex(f"midpoint convexity failed on {failures} of {pairs} sampled pairs",
                        details={"pairs": pairs, "failures": failures})

    bad = interior & ((det < lambda_lo - det_tol) | (det > lambda_hi + det_tol))
    det_in = det[interior]
    report = PotentialReport(
        lambda_lo=lambda_lo, lambda_hi=lambda_hi, tol=det_tol,
        det_min=float(det_in.min()), det_max=float(det_in.max()),
        min_eigenvalue=float(min_eig[interior].min()), interior_nodes=int(interior.sum()),
        out_of_bounds=node_list(bad), midpoint_pairs=pairs, midpoint_failures=failures,
        connected=True, accepted=not bad.any(),
    )
    if bad.any():
        raise DetOutOfBounds(
            f"det D^2 phi in [{report.det_min:.6g}, {report.det_max:.6g}] leaves [{lambda_lo}, {lambda_hi}]",
            nodes=node_list(bad), count=int(bad.sum()),
            details={"det_min": report.det_min, "det_max": report.det_max},
        )

    logger.debug(f"{name}: det in [{report.det_min:.6g}, {report.det_max:.6g}] on {report.interior_nodes} nodes")
    return ConvexPotential(phi=phi, grad1=grad1, grad2=grad2, hxx=hxx, hxy=hxy, hyy=hyy, det=det,
                           lambda_lo=lambda_lo, lambda_hi=lambda_hi, interior=interior, report=report, name=name)


def cofactor(p: ConvexPotential) -> CofactorField:
    """Closed-form 2D cofactor [[phi_22, -phi_12], [-phi_12, phi_11]]"""
    mask = p.phi.mask & np.isfinite(p.hxx) & np.isfinite(p.hxy) & np.isfinite(p.hyy)
    return CofactorField(c11=p.hyy.copy(), c12=-p.hxy, c22=p.hxx.copy(), mask=mask, spacing=p.phi.spacing)


def divergence_free_residual(c: CofactorField) -> float:
    """Max over rows and doubly-interior nodes of |sum_j D_j Phi^{ij}|"""
    dx, dy = c.spacing
    row1 = grid_ops.d1(c.c11, c.mask, dx, 0) + grid_ops.d1(c.c12, c.mask, dy, 1)
    row2 = grid_ops.d1(c.c12, c.mask, dx, 0) + grid_ops.d1(c.c22, c.mask, dy, 1)
    inner = grid_ops.interior(c.mask, 2)
    if not inner.any():
        return 0.0
    return float(max(np.nanmax(np.abs(row1[inner])), np.nanmax(np.abs(row2[inner]))))


def supporting_plane(p: ConvexPotential, x0: Sequence[float]) -> Tuple[float, float, float]:
    """phi(x0) and Dphi(x0) by bilinear interpolation"""
    phi = p.phi
    x1, x2 = float(x0[0]), float(x0[1])
    value = float(phi.interpolate(x1, x2))
    valid = phi.mask & np.isfinite(p.grad1) & np.isfinite(p.grad2)
    g1 = float(grid_ops.bilinear(p.grad1, valid, phi.origin, phi.spacing, x1, x2))
    g2 = float(grid_ops.bilinear(p.grad2, valid, phi.origin, phi.spacing, x1, x2))
    if not np.isfinite([value, g1, g2]).all():
        raise EmptySection(f"center {x0} is outside the potential's domain", details={"x0": [x1, x2]})
    return value, g1, g2


def section_gap(p: ConvexPotential, x0: Sequence[float]) -> np.ndarray:
    """phi(y) - phi(x0) - Dphi(x0).(y - x0) at every node, NaN off the mask"""
    value, g1, g2 = supporting_plane(p, x0)
    y1, y2 = p.phi.coords()
    gap = p.phi.values - value - g1 * (y1 - x0[0]) - g2 * (y2 - x0[1])
    return np.where(p.phi.mask, gap, np.nan)


def section(p: ConvexPotential, x0: Sequence[float], h: float, require_compact: bool = False) -> SectionMask:
    """
    Node scan of S(x0, h).

    Raises:
        EmptySection: no node qualifies
        SectionNotCompact: the section reaches the boundary band and require_compact is set
    """
    if h <= 0:
        raise ValueError(f"section height must be positive, got {h}")
    gap = section_gap(p, x0)
    mask = np.nan_to_num(gap, nan=np.inf) < h
    if not mask.any():
        raise EmptySection(f"no node below height {h} at {tuple(x0)}", details={"x0": list(x0), "h": h})

    compact = not (mask & ~grid_ops.interior(p.phi.mask)).any()
    if not compact:
        if require_compact:
            raise SectionNotCompact(f"section S({tuple(x0)}, {h}) reaches the domain boundary",
                                    details={"x0": list(x0), "h": h})
        logger.warning(f"Section S({tuple(x0)}, {h:.4g}) touches the boundary band")
    volume = float(mask.sum()) * p.phi.cell_area
    return SectionMask(center=(float(x0[0]), float(x0[1])), height=float(h), mask=mask,
                       volume=volume, compact=compact)


def section_ladder(p: ConvexPotential, x0: Sequence[float], heights: Sequence[float],
                   require_compact: bool = True) -> List[SectionMask]:
    return [section(p, x0, h, require_compact=require_compact) for h in heights]


def section_volume_fit(p: ConvexPotential, x0: Sequence[float], heights: Sequence[float]) -> Tuple[float, float]:
    """(inf, sup) over the ladder of |S(x0, h)| / h^{n/2} with n = 2"""
    ratios = [s.volume / s.height for s in section_ladder(p, x0, heights)]
    return float(min(ratios)), float(max(ratios))


def _shell(t: float, spacing: Tuple[float, float], width: float) -> List[Tuple[int, int]]:
    dx, dy = spacing
    reach_i = int(np.ceil((t + width) / dx))
    reach_j = int(np.ceil((t + width) / dy))
    di, dj = np.meshgrid(np.arange(-reach_i, reach_i + 1), np.arange(-reach_j, reach_j + 1), indexing="ij")
    r = np.hypot(di * dx, dj * dy)
    sel = (r > t) & (r <= t + width)
    return [(int(a), int(b)) for a, b in zip(di[sel], dj[sel])]


def _shifted_pairs(shape: Tuple[int, int], di: int, dj: int) -> Tuple[Tuple[slice, slice], Tuple[slice, slice]]:
    nx, ny = shape
    zs = (slice(max(0, -di), max(0, min(nx, nx - di))), slice(max(0, -dj), max(0, min(ny, ny - dj))))
    xs = (slice(min(nx, max(0, di)), max(0, min(nx, nx + di))), slice(min(ny, max(0, dj)), max(0, min(ny, ny + dj))))
    return zs, xs


def modulus_of_convexity(p: ConvexPotential, ts: Sequence[float], max_pairs: int = MAX_MODULUS_PAIRS,
                         seed: int = 0) -> ModulusProfile:
    """
    m(t) = min over node pairs (x, z) with |x - z| > t of phi(x) - phi(z) - Dphi(z).(x - z).

    Displacements are scanned on the shell t < |d| <= t + 2 max(dx, dy); pairs beyond
    max_pairs are subsampled with a seeded generator. A shell without pairs repeats the
    previous level, or is NaN when no level before it had pairs.
    """
    phi = p.phi
    ts = np.sort(np.asarray(ts, dtype=float))
    if np.any(ts <= 0):
        raise ValueError("modulus levels must be positive")
    width = 2.0 * max(phi.spacing)
    valid = phi.mask & np.isfinite(p.grad1) & np.isfinite(p.grad2)
    rng = np.random.default_rng(seed)
    ms, used = [], []

    for t in ts:
        shell = _shell(float(t), phi.spacing, width)
        budget = max(1, max_pairs // max(1, len(shell)))
        best, count = np.inf, 0
        for di, dj in shell:
            zs, xs = _shifted_pairs(phi.shape, di, dj)
            both = valid[zs] & phi.mask[xs]
            if not both.any():
                continue
            gap = (phi.values[xs] - phi.values[zs]
                   - p.grad1[zs] * di * phi.spacing[0] - p.grad2[zs] * dj * phi.spacing[1])[both]
            if gap.size > budget:
                gap = gap[np.sort(rng.choice(gap.size, size=budget, replace=False))]
            count += gap.size
            best = min(best, float(gap.min()))
        if count == 0:
            logger.warning(f"No node pairs farther apart than t={t:.4g}")
            best = np.nan
        ms.append(best)
        used.append(count)

    # empty shells carry the last measured value forward
    return ModulusProfile(ts=ts, ms=np.fmax.accumulate(np.asarray(ms)), pairs_used=used)
