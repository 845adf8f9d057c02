"""
Partial Legendre transform in two dimensions.

The map P(x1, x2) = (phi_x1, x2) is inverted slice by slice: every target eta-line is a
source x2-line, so the inverse is a one-dimensional monotone root solve.
"""

from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.interpolate import CubicHermiteSpline

from src import grid_ops
from src.errors import DegenerateImage, EllipticityViolated, NotMonotone, OutsideImage, node_list
from src.models import (CofactorField, ConvexPotential, DerivativeScheme, GridFunction2D, PLTMap,
                        TransformedPotential, TransformedProblem, VectorField2D)

BISECTION_TOL = 1e-12
MAX_BISECTIONS = 200
ELLIPTICITY_TOL = 1e-8

SourceField = Union[GridFunction2D, np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def _slice_nodes(p: ConvexPotential, j: int) -> np.ndarray:
    """Masked node indices of the x2-slice j where phi_x1 is known"""
    ok = p.phi.mask[:, j] & np.isfinite(p.grad1[:, j])
    return np.flatnonzero(ok)


def _bisect_slice(x1s: np.ndarray, xis: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, int]:
    """Solve interp(x1, x1s, xis) = target for every target by vectorized bisection"""
    lo = np.full(targets.shape, x1s[0])
    hi = np.full(targets.shape, x1s[-1])
    scale = np.maximum(1.0, np.abs(targets))
    iterations = 0
    for iterations in range(1, MAX_BISECTIONS + 1):
        mid = 0.5 * (lo + hi)
        value = np.interp(mid, x1s, xis)
        below = value < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(np.abs(np.interp(0.5 * (lo + hi), x1s, xis) - targets) <= BISECTION_TOL * scale) and \
                np.all(hi - lo <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(hi))):
            break
    return 0.5 * (lo + hi), iterations


def forward_map(p: ConvexPotential, target_nx: Optional[int] = None) -> PLTMap:
    """
    Build P and its inverse samples on the (xi, eta) target grid.

    Raises:
        NotMonotone: phi_x1 fails to increase strictly along some slice, or phi_x1x1 <= 0 inside
    """
    phi = p.phi
    nx, ny = phi.shape
    target_nx = target_nx or nx
    x1_axis, x2_axis = phi.axes()
    xi = np.where(phi.mask, p.grad1, np.nan)

    bad = np.zeros(phi.shape, dtype=bool)
    for j in range(ny):
        idx = _slice_nodes(p, j)
        if len(idx) < 2:
            continue
        steps = np.diff(xi[idx, j])
        bad[idx[1:][steps <= 0], j] = True
    bad |= p.interior & ~(p.hxx > 0)
    if bad.any():
        raise NotMonotone(f"phi_x1 not strictly increasing at {int(bad.sum())} nodes",
                          nodes=node_list(bad), count=int(bad.sum()))

    xi_min, xi_max = float(np.nanmin(xi)), float(np.nanmax(xi))
    rows = np.flatnonzero(phi.mask.any(axis=0))
    bbox = (xi_min, xi_max, float(x2_axis[rows[0]]), float(x2_axis[rows[-1]]))
    dxi = (xi_max - xi_min) / (target_nx - 1)
    targets = xi_min + dxi * np.arange(target_nx)

    inverse = np.full((target_nx, ny), np.nan)
    total_iterations = 0
    for j in range(ny):
        idx = _slice_nodes(p, j)
        if len(idx) < 2:
            continue
        x1s, xis = x1_axis[idx], xi[idx, j]
        inside = (targets >= xis[0]) & (targets <= xis[-1])
        if not inside.any():
            continue
        roots, its = _bisect_slice(x1s, xis, targets[inside])
        inverse[inside, j] = roots
        total_iterations = max(total_iterations, its)
    logger.debug(f"Inverse map: {int(np.isfinite(inverse).sum())} target nodes, {total_iterations} bisection steps")

    return PLTMap(potential=p, xi=xi, jacobian=p.hxx.copy(), image_bbox=bbox,
                  target_origin=(xi_min, phi.origin[1]), target_spacing=(dxi, phi.spacing[1]),
                  inverse_x1=inverse, inverse_mask=np.isfinite(inverse))


def push_forward(pmap: PLTMap, field: SourceField) -> np.ndarray:
    """
    Sample a source field at the preimages of the target nodes.

    Callables are evaluated exactly at (x1*, eta); arrays and grid functions are
    interpolated linearly along the slice. NaN where no preimage exists.
    """
    _, eta_t = pmap.target_coords()
    x1s = pmap.inverse_x1
    if callable(field):
        values = np.asarray(field(np.where(pmap.inverse_mask, x1s, 0.0), eta_t), dtype=float)
        return np.where(pmap.inverse_mask, values, np.nan)

    phi = pmap.potential.phi
    if isinstance(field, GridFunction2D):
        values, valid = field.values, field.mask
    else:
        values = np.asarray(field, dtype=float)
        valid = phi.mask & np.isfinite(values)
    x1_axis, _ = phi.axes()
    out = np.full(pmap.target_shape, np.nan)
    for j in range(phi.ny):
        idx = np.flatnonzero(valid[:, j])
        rows = pmap.inverse_mask[:, j]
        if len(idx) < 2 or not rows.any():
            continue
        out[rows, j] = np.interp(x1s[rows, j], x1_axis[idx], values[idx, j], left=np.nan, right=np.nan)
    return out


def inscribed_disk(p: ConvexPotential, R: float, center: Sequence[float] = (0.0, 0.0),
                   pmap: Optional[PLTMap] = None) -> float:
    """
    Largest delta with B_delta(P(center)) inside the rasterized image P(B_R(center)).

    Raises:
        DegenerateImage: delta is below one target grid cell
    """
    pmap = pmap or forward_map(p)
    xi_t, eta_t = pmap.target_coords()
    x1s = pmap.inverse_x1
    image = pmap.inverse_mask & ((np.where(pmap.inverse_mask, x1s, np.inf) - center[0]) ** 2
                                 + (eta_t - center[1]) ** 2 < R ** 2)
    xi_c, eta_c = pmap.forward(center[0], center[1])
    xi_c, eta_c = float(xi_c), float(eta_c)
    if not np.isfinite(xi_c):
        raise DegenerateImage(f"center {tuple(center)} has no image", details={"R": R})

    outside = ~image
    dist = np.hypot(xi_t - xi_c, eta_t - eta_c)
    nearest = float(dist[outside].min()) if outside.any() else np.inf
    xi_lo, eta_lo = pmap.target_origin
    nxt, nyt = pmap.target_shape
    xi_hi = xi_lo + (nxt - 1) * pmap.target_spacing[0]
    eta_hi = eta_lo + (nyt - 1) * pmap.target_spacing[1]
    edge = min(xi_c - xi_lo, xi_hi - xi_c, eta_c - eta_lo, eta_hi - eta_c)
    delta = min(nearest, edge)
    cell = max(pmap.target_spacing)
    if delta < cell:
        raise DegenerateImage(f"inscribed disk radius {delta:.3g} below one cell ({cell:.3g})",
                              details={"delta": delta, "cell": cell, "R": R})
    logger.debug(f"Inscribed disk of P(B_{R}) around ({xi_c:.4g}, {eta_c:.4g}): delta={delta:.6g}")
    return delta


def _hermite_phi(pmap: PLTMap) -> np.ndarray:
    """phi(x1*, eta) by cubic Hermite interpolation of (phi, phi_x1) along each slice"""
    p = pmap.potential
    x1_axis, _ = p.phi.axes()
    out = np.full(pmap.target_shape, np.nan)
    for j in range(p.phi.ny):
        idx = _slice_nodes(p, j)
        rows = pmap.inverse_mask[:, j]
        if len(idx) < 2 or not rows.any():
            continue
        spline = CubicHermiteSpline(x1_axis[idx], p.phi.values[idx, j], p.grad1[idx, j])
        out[rows, j] = spline(pmap.inverse_x1[rows, j])
    return out


def _differenced(phistar: GridFunction2D) -> Dict[str, np.ndarray]:
    g1, g2 = grid_ops.gradient(phistar.values, phistar.mask, phistar.spacing)
    hxx, hxy, hyy = grid_ops.hessian(phistar.values, phistar.mask, phistar.spacing)
    return {"d_xi": g1, "d_eta": g2, "d_xixi": hxx, "d_xieta": hxy, "d_etaeta": hyy}


def _max_gap(a: np.ndarray, b: np.ndarray, where: np.ndarray) -> float:
    gap = np.abs(a - b)[where]
    gap = gap[np.isfinite(gap)]
    return float(gap.max()) if gap.size else 0.0


def transform_potential(p: ConvexPotential, pmap: PLTMap,
                        target_mask: Optional[np.ndarray] = None) -> TransformedPotential:
    """
    phi*(xi, eta) = x1* xi - phi(x1*, eta) on the target grid, with derivatives from the
    composed identities and a differenced cross-check.

    Raises:
        OutsideImage: a requested target node has no inverse sample
    """
    if target_mask is not None:
        missing = target_mask & ~pmap.inverse_mask
        if missing.any():
            raise OutsideImage(f"{int(missing.sum())} target nodes have no preimage",
                               nodes=node_list(missing), count=int(missing.sum()))
    mask = pmap.inverse_mask if target_mask is None else target_mask & pmap.inverse_mask
    xi_t, _ = pmap.target_coords()
    x1s = np.where(mask, pmap.inverse_x1, np.nan)

    phi_at = _hermite_phi(pmap)
    hxx = push_forward(pmap, p.hxx)
    hxy = push_forward(pmap, p.hxy)
    det = push_forward(pmap, p.det)
    grad2 = push_forward(pmap, p.grad2)

    values = x1s * xi_t - phi_at
    mask = mask & np.isfinite(values) & np.isfinite(hxx) & np.isfinite(det) & np.isfinite(grad2)
    phistar = GridFunction2D(np.where(mask, values, 0.0), pmap.target_origin, pmap.target_spacing, mask)

    tp = TransformedPotential(
        phistar=phistar,
        d_xi=np.where(mask, x1s, np.nan),
        d_eta=np.where(mask, -grad2, np.nan),
        d_xixi=np.where(mask, 1.0 / hxx, np.nan),
        d_xieta=np.where(mask, -hxy / hxx, np.nan),
        d_etaeta=np.where(mask, -det / hxx, np.nan),
        det=np.where(mask, det, np.nan),
    )
    diff = _differenced(phistar)
    inner = grid_ops.interior(mask)
    tp.crosscheck = {name: _max_gap(diff[name], getattr(tp, name), inner) for name in diff}
    logger.debug(f"phi* cross-check: {', '.join(f'{k}={v:.3e}' for k, v in tp.crosscheck.items())}")
    return tp


def dual_equation_residual(t: TransformedPotential, det_field: Optional[np.ndarray] = None,
                           differenced: bool = True) -> float:
    """max |det phi*_xixi + phi*_etaeta| over interior target nodes"""
    det = t.det if det_field is None else det_field
    mask = t.phistar.mask
    inner = grid_ops.interior(mask)
    if differenced:
        diff = _differenced(t.phistar)
        d_xixi, d_etaeta = diff["d_xixi"], diff["d_etaeta"]
    else:
        d_xixi, d_etaeta = t.d_xixi, t.d_etaeta
    residual = np.abs(det * d_xixi + d_etaeta)[inner]
    residual = residual[np.isfinite(residual)]
    return float(residual.max()) if residual.size else 0.0


def transform_problem(F: VectorField2D, f: Optional[GridFunction2D], t: TransformedPotential, pmap: PLTMap,
                      tol: float = ELLIPTICITY_TOL) -> TransformedProblem:
    """
    Coefficient a = -phi*_etaeta / phi*_xixi, flux G = (F1~ - F2~ phi*_xieta, F2~ phi*_xixi)
    and source g = f~ phi*_xixi on the target grid.

    Raises:
        EllipticityViolated: a leaves [lambda_lo - tol, lambda_hi + tol]
    """
    p = pmap.potential
    mask = t.phistar.mask
    F1 = push_forward(pmap, F.c1)
    F2 = push_forward(pmap, F.c2)
    f_t = push_forward(pmap, f) if f is not None else np.zeros(pmap.target_shape)
    mask = mask & np.isfinite(F1) & np.isfinite(F2) & np.isfinite(f_t)

    a = -t.d_etaeta / t.d_xixi
    G1 = F1 - F2 * t.d_xieta
    G2 = F2 * t.d_xixi
    g = f_t * t.d_xixi

    bad = mask & ((a < p.lambda_lo - tol) | (a > p.lambda_hi + tol))
    if bad.any():
        raise EllipticityViolated(
            f"transformed coefficient leaves [{p.lambda_lo}, {p.lambda_hi}] at {int(bad.sum())} nodes",
            nodes=node_list(bad), count=int(bad.sum()),
            details={"a_min": float(np.nanmin(a[mask])), "a_max": float(np.nanmax(a[mask]))},
        )

    def clean(v):
        return np.where(mask, v, np.nan)

    return TransformedProblem(a=clean(a), G1=clean(G1), G2=clean(G2), g=clean(g), mask=mask,
                              origin=pmap.target_origin, spacing=pmap.target_spacing,
                              lambda_lo=p.lambda_lo, lambda_hi=p.lambda_hi)


def first_derivatives(values: np.ndarray, mask: np.ndarray, spacing: Tuple[float, float],
                      scheme: DerivativeScheme = DerivativeScheme.SPECTRAL) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient of a compactly supported field, zero where no derivative is available"""
    v = np.where(mask, values, 0.0)
    if DerivativeScheme(scheme) == DerivativeScheme.SPECTRAL:
        return grid_ops.spectral_gradient(v, spacing)
    g1, g2 = grid_ops.gradient(v, mask, spacing)
    return np.nan_to_num(g1), np.nan_to_num(g2)


def energy(u: GridFunction2D, F: Optional[VectorField2D], f: Optional[GridFunction2D], c: CofactorField,
           scheme: DerivativeScheme = DerivativeScheme.SPECTRAL) -> float:
    """A(u) = integral of Phi Du.Du - 2 F.Du + 2 f u"""
    g1, g2 = first_derivatives(u.values, u.mask, u.spacing, scheme)
    density = np.nan_to_num(c.quadratic_form(g1, g2))
    if F is not None:
        density = density - 2.0 * (F.c1 * g1 + F.c2 * g2)
    if f is not None:
        density = density + 2.0 * f.values * u.values
    return grid_ops.node_integral(density, u.mask & c.mask, u.cell_area)


def energy_star(utilde: GridFunction2D, problem: TransformedProblem,
                scheme: DerivativeScheme = DerivativeScheme.SPECTRAL) -> float:
    """A*(u~) = integral of a u~_xi^2 + u~_eta^2 - 2 G.Du~ + 2 g u~"""
    g1, g2 = first_derivatives(utilde.values, utilde.mask, utilde.spacing, scheme)
    density = (problem.a * g1 ** 2 + g2 ** 2 - 2.0 * (problem.G1 * g1 + problem.G2 * g2)
               + 2.0 * problem.g * utilde.values)
    return grid_ops.node_integral(density, problem.mask & utilde.mask, utilde.cell_area)


def pullback_solution(utilde: GridFunction2D, pmap: PLTMap, region: Optional[np.ndarray] = None) -> GridFunction2D:
    """
    u(x) = u~(P(x)) by bilinear interpolation at P(x).

    Raises:
        OutsideImage: a node of `region` maps outside the support of u~
    """
    phi = pmap.potential.phi
    x1, x2 = phi.coords()
    values = utilde.interpolate(np.where(phi.mask, pmap.xi, np.nan), x2)
    if region is not None:
        missing = region & ~np.isfinite(values)
        if missing.any():
            raise OutsideImage(f"{int(missing.sum())} region nodes map outside u~",
                               nodes=node_list(missing), count=int(missing.sum()))
        return phi.with_values(values, phi.mask & region)
    return phi.with_values(values, phi.mask)


def integrability_transfer(t: TransformedPotential, p: ConvexPotential, eps: float) -> Tuple[float, float]:
    """
    (integral over the image of phi*_xixi^{2+eps}, lambda^{-(1+eps)} integral of phi_x2x2^{1+eps});
    the first never exceeds the second beyond quadrature error.
    """
    lhs = grid_ops.node_integral(np.nan_to_num(t.d_xixi) ** (2.0 + eps), t.phistar.mask, t.phistar.cell_area)
    hyy = np.where(p.phi.mask, np.clip(np.nan_to_num(p.hyy), 0.0, None), 0.0)
    rhs = p.lambda_lo ** -(1.0 + eps) * grid_ops.node_integral(hyy ** (1.0 + eps), p.phi.mask, p.phi.cell_area)
    return lhs, rhs


def area_identity(t: TransformedPotential, p: ConvexPotential) -> Tuple[float, float]:
    """(integral of phi*_xixi over the image, area of the source domain)"""
    lhs = grid_ops.node_integral(np.nan_to_num(t.d_xixi), t.phistar.mask, t.phistar.cell_area)
    return lhs, p.phi.measure()
