"""
Divergence-form elliptic solver D_j(a^{ij} D_i u) = div G + g with Dirichlet data on masked grids.

The system is the exact gradient of a cell-based discrete energy, so it is symmetric
positive definite and the flux load is the adjoint of the cell-averaged gradient.
"""

import time
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from loguru import logger

from src import grid_ops
from src.convex_core import cofactor
from src.errors import NoConvergence, SingularSystem
from src.models import (CofactorField, ConvexPotential, EllipticProblem, GridFunction2D, PathComparison,
                        SolveResult, TransformedProblem, VectorField2D)
from src.plegendre import forward_map, pullback_solution, transform_potential, transform_problem

DEFAULT_TOL = 1e-10
TRANSFORMED_TOL = 1e-12
ELLIPTICITY_TOL = 1e-8


@dataclass
class LinearSystem:
    """K_II u_I = rhs, plus the full operator and loads for energy evaluation"""
    matrix: sp.csr_matrix
    rhs: np.ndarray
    unknowns: np.ndarray
    boundary: np.ndarray
    full_matrix: sp.csr_matrix
    load: np.ndarray
    shape: Tuple[int, int]


def _cell_mean(field: np.ndarray, allowed: np.ndarray, ci: np.ndarray, cj: np.ndarray) -> np.ndarray:
    total = np.zeros(ci.shape)
    count = np.zeros(ci.shape)
    for di in (0, 1):
        for dj in (0, 1):
            v = field[ci + di, cj + dj]
            ok = allowed[ci + di, cj + dj] & np.isfinite(v)
            total += np.where(ok, v, 0.0)
            count += ok
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1), np.nan)


def _difference(rows: np.ndarray, minus: np.ndarray, plus: np.ndarray, h: float, n: int) -> sp.csr_matrix:
    data = np.concatenate([np.full(rows.size, -1.0 / h), np.full(rows.size, 1.0 / h)])
    return sp.csr_matrix((data, (np.concatenate([rows, rows]), np.concatenate([minus, plus]))),
                         shape=(rows.size, n))


def assemble(p: EllipticProblem) -> LinearSystem:
    """
    Assemble the cell-based energy
    1/2 u'Ku - sum_c w (G1 ux + G2 uy) + sum_nodes w g u
    and restrict its gradient to the unknown nodes.

    Raises:
        SingularSystem: a cell coefficient is undefined, not positive definite or outside [ell_lo, ell_hi]
    """
    mask = np.asarray(p.mask, dtype=bool)
    if grid_ops.touches_edge(mask):
        raise ValueError("unknown mask must stay one node clear of the array edge")
    if not mask.any():
        raise ValueError("problem has no unknown nodes")
    nx, ny = mask.shape
    n = nx * ny
    dx, dy = p.spacing
    w = dx * dy
    allowed = mask | grid_ops.ring(mask)

    touched = np.zeros((nx - 1, ny - 1), dtype=bool)
    for di in (0, 1):
        for dj in (0, 1):
            touched |= mask[di:nx - 1 + di, dj:ny - 1 + dj]
    ci, cj = np.nonzero(touched)

    a11 = _cell_mean(p.a11, allowed, ci, cj)
    a12 = _cell_mean(p.a12, allowed, ci, cj)
    a22 = _cell_mean(p.a22, allowed, ci, cj)
    undefined = ~(np.isfinite(a11) & np.isfinite(a12) & np.isfinite(a22))
    if undefined.any():
        raise SingularSystem(f"coefficient undefined on {int(undefined.sum())} cells next to unknowns")
    det = a11 * a22 - a12 ** 2
    if np.any(a11 <= 0) or np.any(det <= 0):
        bad = int(np.sum((a11 <= 0) | (det <= 0)))
        raise SingularSystem(f"coefficient not positive definite on {bad} cells", details={"cells": bad})
    half_trace = 0.5 * (a11 + a22)
    spread = np.sqrt(0.25 * (a11 - a22) ** 2 + a12 ** 2)
    eig_lo, eig_hi = half_trace - spread, half_trace + spread
    if p.ell_lo > 0 and (eig_lo.min() < p.ell_lo - ELLIPTICITY_TOL or eig_hi.max() > p.ell_hi + ELLIPTICITY_TOL):
        raise SingularSystem(
            f"ellipticity violated: eigenvalues in [{eig_lo.min():.6g}, {eig_hi.max():.6g}] "
            f"vs [{p.ell_lo}, {p.ell_hi}]",
            details={"eig_min": float(eig_lo.min()), "eig_max": float(eig_hi.max())},
        )

    rows = np.arange(ci.size)
    n00 = ci * ny + cj
    n10 = (ci + 1) * ny + cj
    n01 = ci * ny + cj + 1
    n11 = (ci + 1) * ny + cj + 1
    Bx = _difference(rows, n00, n10, dx, n)
    Tx = _difference(rows, n01, n11, dx, n)
    Ly = _difference(rows, n00, n01, dy, n)
    Ry = _difference(rows, n10, n11, dy, n)
    Ux = 0.5 * (Bx + Tx)
    Uy = 0.5 * (Ly + Ry)

    D = sp.diags
    K = w * (Bx.T @ D(0.5 * a11) @ Bx + Tx.T @ D(0.5 * a11) @ Tx
             + Ly.T @ D(0.5 * a22) @ Ly + Ry.T @ D(0.5 * a22) @ Ry
             + Ux.T @ D(a12) @ Uy + Uy.T @ D(a12) @ Ux)
    K = sp.csr_matrix(K)

    G1 = np.nan_to_num(_cell_mean(p.G1, allowed, ci, cj))
    G2 = np.nan_to_num(_cell_mean(p.G2, allowed, ci, cj))
    load_flux = w * (Ux.T @ G1 + Uy.T @ G2)
    load_source = w * np.where(mask, np.nan_to_num(p.g), 0.0).ravel()
    load = load_flux - load_source

    unknowns = np.flatnonzero(mask.ravel())
    boundary = np.flatnonzero(grid_ops.ring(mask).ravel())
    u_d = np.nan_to_num(np.asarray(p.dirichlet, dtype=float).ravel()[boundary])
    K_II = K[unknowns][:, unknowns].tocsr()
    K_ID = K[unknowns][:, boundary].tocsr()
    rhs = load[unknowns] - K_ID @ u_d
    logger.debug(f"Assembled {unknowns.size} unknowns, {ci.size} cells, {K_II.nnz} nonzeros")
    return LinearSystem(matrix=K_II, rhs=rhs, unknowns=unknowns, boundary=boundary,
                        full_matrix=K, load=load, shape=(nx, ny))


def pcg(A: sp.csr_matrix, b: np.ndarray, tol: float = DEFAULT_TOL, max_iter: Optional[int] = None,
        x0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, int, float]:
    """
    Jacobi-preconditioned conjugate gradient to relative residual tol.

    Returns:
        (solution, iterations, relative residual)

    Raises:
        NoConvergence: the iteration cap is reached first
    """
    n = b.size
    max_iter = max_iter or max(100, int(20 * np.sqrt(n)))
    b_norm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if b_norm == 0.0 and x0 is None:
        return x, 0, 0.0
    scale = b_norm if b_norm > 0 else 1.0
    inv_diag = 1.0 / A.diagonal()

    r = b - A @ x
    z = inv_diag * r
    d = z.copy()
    rz = r @ z
    k = 0
    relative = np.linalg.norm(r) / scale
    while relative > tol:
        if k >= max_iter:
            raise NoConvergence(f"CG stopped after {k} iterations at relative residual {relative:.3e}",
                                iterations=k, residual=float(relative))
        Ad = A @ d
        alpha = rz / (d @ Ad)
        x = x + alpha * d
        r = r - alpha * Ad
        z = inv_diag * r
        rz_next = r @ z
        d = z + (rz_next / rz) * d
        rz = rz_next
        k += 1
        relative = np.linalg.norm(r) / scale
        if k % 100 == 0:
            logger.debug(f"CG iteration {k}: relative residual {relative:.3e}")
    return x, k, float(relative)


def solve(p: EllipticProblem, tol: float = DEFAULT_TOL, max_iter: Optional[int] = None) -> SolveResult:
    """Solve the Dirichlet problem; the returned grid function covers the unknowns and their ring"""
    started = time.perf_counter()
    system = assemble(p)
    x, iterations, residual = pcg(system.matrix, system.rhs, tol, max_iter)

    values = np.zeros(system.shape).ravel()
    values[system.boundary] = np.nan_to_num(np.asarray(p.dirichlet, dtype=float).ravel()[system.boundary])
    values[system.unknowns] = x
    support = np.zeros(values.size, dtype=bool)
    support[system.unknowns] = True
    support[system.boundary] = True
    u = GridFunction2D(values.reshape(system.shape), p.origin, p.spacing, support.reshape(system.shape))

    wall = time.perf_counter() - started
    logger.info(f"Solved {system.unknowns.size} unknowns in {iterations} CG iterations "
                f"(residual {residual:.2e}, {wall:.2f}s)")
    return SolveResult(u=u, iterations=iterations, residual=residual, wall_time=wall,
                       flags={"unknowns": int(system.unknowns.size), "converged": True, "tol": tol})


def solver_stats(result: SolveResult) -> Dict[str, float]:
    return {"iterations": result.iterations, "residual": result.residual, "wall_time": result.wall_time,
            "unknowns": result.flags.get("unknowns", 0)}


def discrete_energy(p: EllipticProblem, u: np.ndarray, system: Optional[LinearSystem] = None) -> float:
    """1/2 u'Ku - load'u over every node of the assembled system"""
    system = system or assemble(p)
    v = np.nan_to_num(np.asarray(u, dtype=float)).ravel()
    return float(0.5 * v @ (system.full_matrix @ v) - system.load @ v)


def minimality_check(p: EllipticProblem, result: SolveResult, trials: int = 100, seed: int = 0,
                     scale: float = 1e-3, tol: float = 1e-10) -> Dict[str, float]:
    """E(u + s v) >= E(u) - tol for random v vanishing on the Dirichlet ring"""
    system = assemble(p)
    rng = np.random.default_rng(seed)
    base = discrete_energy(p, result.u.values, system)
    worst = np.inf
    for _ in range(trials):
        v = np.zeros(system.shape).ravel()
        v[system.unknowns] = rng.standard_normal(system.unknowns.size)
        worst = min(worst, discrete_energy(p, result.u.values.ravel() + scale * v, system) - base)
    return {"energy": base, "min_gain": float(worst), "trials": trials, "holds": bool(worst >= -tol)}


def cofactor_problem(c: CofactorField, F: Optional[VectorField2D], f: Optional[GridFunction2D],
                     unknowns: np.ndarray, dirichlet: Optional[np.ndarray], origin: Tuple[float, float],
                     spacing: Tuple[float, float]) -> EllipticProblem:
    """D_j(Phi^{ij} D_i u) = div F + f on `unknowns`"""
    shape = unknowns.shape
    F = F or VectorField2D.zeros(shape)
    g = f.values if f is not None else np.zeros(shape)
    coeff_mask = c.mask
    return EllipticProblem(
        a11=np.where(coeff_mask, c.c11, np.nan), a12=np.where(coeff_mask, c.c12, np.nan),
        a22=np.where(coeff_mask, c.c22, np.nan), G1=F.c1, G2=F.c2, g=g,
        dirichlet=np.zeros(shape) if dirichlet is None else dirichlet,
        mask=unknowns, origin=origin, spacing=spacing,
    )


def direct_problem(p: ConvexPotential, F: Optional[VectorField2D] = None, f: Optional[GridFunction2D] = None,
                   dirichlet: Optional[np.ndarray] = None, unknowns: Optional[np.ndarray] = None) -> EllipticProblem:
    """The LMA equation in original coordinates on the once-eroded domain (or the given unknowns)"""
    unknowns = grid_ops.interior(p.phi.mask) if unknowns is None else unknowns
    return cofactor_problem(cofactor(p), F, f, unknowns, dirichlet, p.phi.origin, p.phi.spacing)


def transformed_elliptic(tp: TransformedProblem, unknowns: np.ndarray,
                         dirichlet: Optional[np.ndarray] = None) -> EllipticProblem:
    """D_xi(a u_xi) + u_etaeta = div G + g as a general EllipticProblem"""
    shape = tp.a.shape
    return EllipticProblem(
        a11=tp.a, a12=np.where(np.isfinite(tp.a), 0.0, np.nan), a22=np.where(np.isfinite(tp.a), 1.0, np.nan),
        G1=tp.G1, G2=tp.G2, g=tp.g, dirichlet=np.zeros(shape) if dirichlet is None else dirichlet,
        mask=unknowns & tp.mask, origin=tp.origin, spacing=tp.spacing,
        ell_lo=min(tp.lambda_lo, 1.0), ell_hi=max(tp.lambda_hi, 1.0),
    )


def manufactured_problem(u_exact: GridFunction2D, p: ConvexPotential,
                         F: Optional[VectorField2D] = None) -> EllipticProblem:
    """
    Problem whose exact solution is u_exact: f = Phi^{ij} D_ij u_exact - div F by differencing,
    unknowns on the once-eroded domain and Dirichlet data from u_exact.
    """
    c = cofactor(p)
    F = F or VectorField2D.zeros(u_exact.shape)
    domain = u_exact.mask & p.phi.mask
    uxx, uxy, uyy = grid_ops.hessian(u_exact.values, domain, u_exact.spacing)
    contraction = c.c11 * uxx + 2.0 * c.c12 * uxy + c.c22 * uyy
    div_f = grid_ops.divergence(F.c1, F.c2, domain, u_exact.spacing)
    f_values = np.where(domain, contraction - div_f, np.nan)
    f = u_exact.with_values(f_values, domain)
    return cofactor_problem(c, F, f, grid_ops.interior(domain), np.where(domain, u_exact.values, 0.0),
                            u_exact.origin, u_exact.spacing)


def direct_vs_transformed(p: ConvexPotential, F: Optional[VectorField2D], f: Optional[GridFunction2D],
                          radius: float, center: Sequence[float] = (0.0, 0.0), inner: float = 0.75,
                          u_exact: Optional[GridFunction2D] = None, tol: float = DEFAULT_TOL) -> PathComparison:
    """
    Solve the LMA problem directly, then solve the transformed problem on the image of
    B(center, radius) with Dirichlet data taken from the direct solution at the preimages,
    pull back and compare on B(center, inner * radius).
    """
    shape = p.phi.shape
    F = F or VectorField2D.zeros(shape)
    if u_exact is not None:
        direct = manufactured_problem(u_exact, p, F)
        f = GridFunction2D(np.nan_to_num(direct.g), p.phi.origin, p.phi.spacing,
                           p.phi.mask & np.isfinite(direct.g))
    else:
        direct = direct_problem(p, F, f)
    direct_result = solve(direct, tol)

    pmap = forward_map(p)
    t = transform_potential(p, pmap)
    tp = transform_problem(F, f, t, pmap)

    _, eta_t = pmap.target_coords()
    x1_pre = np.where(pmap.inverse_mask, pmap.inverse_x1, np.inf)
    unknowns = (x1_pre - center[0]) ** 2 + (eta_t - center[1]) ** 2 < radius ** 2
    unknowns &= tp.mask & ~_edge(unknowns.shape)
    trace = direct_result.u.interpolate(np.where(pmap.inverse_mask, pmap.inverse_x1, np.nan), eta_t)
    ring = grid_ops.ring(unknowns)
    if not np.all(np.isfinite(trace[ring])):
        raise SingularSystem("direct solution does not cover the transformed boundary ring",
                             details={"missing": int(np.sum(ring & ~np.isfinite(trace)))})
    transformed = transformed_elliptic(tp, unknowns, np.nan_to_num(trace))
    transformed_result = solve(transformed, min(tol, TRANSFORMED_TOL))

    x1, x2 = p.phi.coords()
    region = p.phi.mask & ((x1 - center[0]) ** 2 + (x2 - center[1]) ** 2 < (inner * radius) ** 2)
    back = pullback_solution(transformed_result.u, pmap, region)
    gap = (back.values - direct_result.u.values)[region]
    report = PathComparison(
        max_discrepancy=float(np.max(np.abs(gap))),
        l2_discrepancy=float(np.sqrt(np.sum(gap ** 2) * p.phi.cell_area)),
        region_nodes=int(region.sum()),
        direct_iterations=direct_result.iterations,
        transformed_iterations=transformed_result.iterations,
    )
    if u_exact is not None:
        report.max_error_direct = float(np.max(np.abs(direct_result.u.values - u_exact.values)[region]))
        report.max_error_transformed = float(np.max(np.abs(back.values - u_exact.values)[region]))
    logger.info(f"Direct vs transformed on {report.region_nodes} nodes: max {report.max_discrepancy:.3e}, "
                f"L2 {report.l2_discrepancy:.3e}")
    return report


def _edge(shape: Tuple[int, int]) -> np.ndarray:
    edge = np.zeros(shape, dtype=bool)
    edge[0, :] = edge[-1, :] = edge[:, 0] = edge[:, -1] = True
    return edge
