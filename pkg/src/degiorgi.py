"""
Level-set estimate machinery: the weighted field F_phi, level profiles, the De Giorgi
vanishing level, the weak maximum principle and the Dirichlet section bound.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy import ndimage

from src import grid_ops
from src.convex_core import section
from src.elliptic_solver import assemble, direct_problem, solve
from src.errors import (BetaNotAboveOne, DegenerateDenominator, MaxPrincipleViolated, NotSPD,
                        node_list)
from src.models import (ConvexPotential, EllipticProblem, EnergyChainReport, GridFunction2D, IterationParams,
                        LevelProfile, MaxPrincipleReport, SectionBoundReport, SolveResult, VectorField2D)
from src.sample_fields import constant_source, critical_flux

SPD_TOL = 1e-14
MAX_PRINCIPLE_TOL = 1e-8
N_DIM = 2


def symmetric_power(a11: np.ndarray, a12: np.ndarray, a22: np.ndarray, power: float = 0.5,
                    mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Node-wise A^power of symmetric 2x2 matrices by one Jacobi rotation.

    Raises:
        NotSPD: an eigenvalue is not positive at a masked node
    """
    mask = np.ones(a11.shape, dtype=bool) if mask is None else mask
    theta = 0.5 * np.arctan2(2.0 * a12, a11 - a22)
    c, s = np.cos(theta), np.sin(theta)
    l1 = a11 * c * c + 2.0 * a12 * c * s + a22 * s * s
    l2 = a11 * s * s - 2.0 * a12 * c * s + a22 * c * c
    bad = mask & ~((l1 > SPD_TOL) & (l2 > SPD_TOL))
    if bad.any():
        raise NotSPD(f"Hessian not positive definite at {int(bad.sum())} nodes",
                     nodes=node_list(bad), count=int(bad.sum()))
    with np.errstate(invalid="ignore"):
        p1 = np.where(mask, np.abs(l1), 1.0) ** power
        p2 = np.where(mask, np.abs(l2), 1.0) ** power
    return p1 * c * c + p2 * s * s, (p1 - p2) * c * s, p1 * s * s + p2 * c * c


def weighted_field(p: ConvexPotential, F: VectorField2D, mask: Optional[np.ndarray] = None) -> VectorField2D:
    """F_phi = (D^2 phi)^{1/2} F"""
    mask = p.phi.mask & np.isfinite(p.hxx) if mask is None else mask
    s11, s12, s22 = symmetric_power(p.hxx, p.hxy, p.hyy, 0.5, mask)
    return VectorField2D(np.where(mask, s11 * F.c1 + s12 * F.c2, 0.0),
                         np.where(mask, s12 * F.c1 + s22 * F.c2, 0.0))


def weighted_flux(p: ConvexPotential, target: VectorField2D, mask: Optional[np.ndarray] = None) -> VectorField2D:
    """The flux F = (D^2 phi)^{-1/2} F_phi whose weighted field is `target`"""
    mask = p.phi.mask & np.isfinite(p.hxx) if mask is None else mask
    s11, s12, s22 = symmetric_power(p.hxx, p.hxy, p.hyy, -0.5, mask)
    return VectorField2D(np.where(mask, s11 * target.c1 + s12 * target.c2, 0.0),
                         np.where(mask, s12 * target.c1 + s22 * target.c2, 0.0))


def level_profile(u: GridFunction2D, levels: Sequence[float], region: Optional[np.ndarray] = None) -> LevelProfile:
    """omega(k) = |{u > k}| by node counting over the mask (or `region`)"""
    ks = np.sort(np.asarray(levels, dtype=float))
    region = u.mask if region is None else region & u.mask
    values = u.values[region]
    omegas = np.array([np.count_nonzero(values > k) for k in ks], dtype=float) * u.cell_area
    return LevelProfile(ks=ks, omegas=omegas, k0=float(ks[0]) if ks.size else 0.0)


def iteration_vanishing_level(params: IterationParams, omega_k0: float, k0: float = 0.0) -> float:
    """
    d = C^{1/alpha} omega(k0)^{(beta-1)/alpha} 2^{beta/(beta-1)}; omega(k0 + d) = 0 for any
    nonincreasing profile with omega(h) <= C (h - k)^{-alpha} omega(k)^beta.
    """
    if params.beta <= 1:
        raise BetaNotAboveOne(f"beta must exceed 1, got {params.beta}", details={"beta": params.beta})
    if omega_k0 < 0:
        raise ValueError(f"omega(k0) must be nonnegative, got {omega_k0}")
    if omega_k0 == 0:
        return 0.0
    return float(params.C ** (1.0 / params.alpha) * omega_k0 ** ((params.beta - 1.0) / params.alpha)
                 * 2.0 ** (params.beta / (params.beta - 1.0)))


def rollout_recursion(params: IterationParams, omega_k0: float, k0: float, steps: int) -> LevelProfile:
    """
    Profile meeting the recursion with equality on the ladder k_s = k0 + d(1 - 2^{-s}),
    omega_s = omega(k0) 2^{-s alpha/(beta-1)}.
    """
    d = iteration_vanishing_level(params, omega_k0, k0)
    s = np.arange(steps + 1, dtype=float)
    ks = k0 + d * (1.0 - 2.0 ** -s)
    omegas = omega_k0 * 2.0 ** (-s * params.alpha / (params.beta - 1.0))
    return LevelProfile(ks=ks, omegas=omegas, k0=k0)


def recursion_constant(profile: LevelProfile, alpha: float, beta: float) -> float:
    """Smallest C with omega(h) <= C (h - k)^{-alpha} omega(k)^beta over sampled pairs k < h"""
    ks, om = profile.ks, profile.omegas
    k, h = np.meshgrid(ks, ks, indexing="ij")
    wk, wh = np.meshgrid(om, om, indexing="ij")
    pairs = (h > k) & (wk > 0)
    if not pairs.any():
        return 0.0
    return float(np.max(wh[pairs] * (h[pairs] - k[pairs]) ** alpha / wk[pairs] ** beta))


def vanishing_level(profile: LevelProfile) -> float:
    """First sampled level where omega vanishes (inf if it never does)"""
    zero = np.flatnonzero(profile.omegas <= 0.0)
    return float(profile.ks[zero[0]]) if zero.size else np.inf


def q_star(q: float, n: int = N_DIM) -> float:
    return n * q / (n + q)


def _data_norms(p: ConvexPotential, problem: EllipticProblem, q: float) -> Tuple[float, float, float]:
    omega = problem.mask
    area = problem.cell_area
    F = VectorField2D(np.nan_to_num(problem.G1), np.nan_to_num(problem.G2))
    f_phi = weighted_field(p, F, omega)
    fphi_norm = grid_ops.lq_norm(f_phi.magnitude(), omega, area, q)
    f_norm = grid_ops.lq_norm(np.nan_to_num(problem.g), omega, area, q_star(q))
    return fphi_norm, f_norm, float(omega.sum()) * area


def weak_max_check(p: ConvexPotential, problem: EllipticProblem, u: SolveResult, q: float,
                   require_constant: bool = False, tol: float = MAX_PRINCIPLE_TOL) -> MaxPrincipleReport:
    """
    Measure every term of sup u <= sup_bdry u+ + C (|F_phi|_q + |f|_q*) |Omega|^{1/n - 1/q}
    and the smallest constant C this instance needs.

    Raises:
        MaxPrincipleViolated: F = f = 0 and sup u exceeds the boundary bound by more than tol
        DegenerateDenominator: F = f = 0 and require_constant is set
    """
    if q <= N_DIM:
        raise ValueError(f"q must exceed n = {N_DIM}, got {q}")
    omega = problem.mask
    boundary = grid_ops.ring(omega)
    values = u.u.values
    sup_u = float(values[omega].max())
    boundary_sup = max(0.0, float(values[boundary].max()))
    fphi_norm, f_norm, measure = _data_norms(p, problem, q)
    denominator = (fphi_norm + f_norm) * measure ** (1.0 / N_DIM - 1.0 / q)
    excess = sup_u - boundary_sup

    if denominator == 0.0:
        if excess > tol:
            raise MaxPrincipleViolated(f"sup u exceeds the boundary bound by {excess:.3e} with zero data",
                                       details={"sup_u": sup_u, "boundary_sup_plus": boundary_sup})
        if require_constant:
            raise DegenerateDenominator("F and f vanish, no constant can be measured")
        constant = 0.0
    else:
        constant = max(excess, 0.0) / denominator

    report = MaxPrincipleReport(
        sup_u=sup_u, boundary_sup_plus=boundary_sup, Fphi_norm=fphi_norm, f_norm=f_norm,
        omega_measure=measure, q=q, q_star=q_star(q), bound_rhs=boundary_sup + constant * denominator,
        constant_needed=constant, degenerate=denominator == 0.0,
    )
    logger.debug(f"Weak max check: sup u={sup_u:.6g}, boundary={boundary_sup:.6g}, C needed={constant:.4g}")
    return report


FamilyData = Callable[[ConvexPotential], Tuple[Optional[VectorField2D], Optional[GridFunction2D]]]


def unit_sink(p: ConvexPotential) -> Tuple[Optional[VectorField2D], Optional[GridFunction2D]]:
    return None, constant_source(p.phi, -1.0)


def weak_max_family(potentials: Sequence[ConvexPotential], q: float, data: FamilyData = unit_sink,
                    threads: int = 1) -> pd.DataFrame:
    """
    constant_needed of every member, each solved with zero Dirichlet data on its once-eroded
    domain. Rows come back in member order whatever the thread count.
    """
    def measure(p: ConvexPotential) -> dict:
        F, f = data(p)
        problem = direct_problem(p, F, f, np.zeros(p.phi.shape))
        report = weak_max_check(p, problem, solve(problem), q)
        return {"potential": p.name, "sup_u": report.sup_u, "Fphi_norm": report.Fphi_norm,
                "f_norm": report.f_norm, "constant_needed": report.constant_needed,
                "degenerate": report.degenerate}

    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = list(pool.map(measure, potentials))
    table = pd.DataFrame(rows, columns=["potential", "sup_u", "Fphi_norm", "f_norm", "constant_needed",
                                        "degenerate"])
    table.insert(0, "member", range(len(table)))
    logger.info(f"Weak max family of {len(table)} at q={q}: spread {constant_spread(table):.3g}")
    return table


def constant_spread(table: pd.DataFrame) -> float:
    """max / min of the positive constants of a family; NaN when none is positive"""
    constants = table.loc[~table["degenerate"].astype(bool), "constant_needed"]
    constants = constants[constants > 0]
    if constants.empty:
        return float("nan")
    return float(constants.max() / constants.min())


def _fit_power(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float]:
    slope, intercept = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope), float(np.exp(intercept))


def dirichlet_section_bound(p: ConvexPotential, x0: Sequence[float], heights: Sequence[float], q: float,
                            F: Optional[VectorField2D] = None, f: Optional[GridFunction2D] = None,
                            tol: float = 1e-10) -> SectionBoundReport:
    """
    Solve with zero Dirichlet data on each section S(x0, h) and fit sup|u| ~ h^{1/2 - n/(2q)}.
    The flux defaults to the L^q-critical field centred at x0.
    """
    F = critical_flux(p.phi, x0, q) if F is None else F
    sups: List[float] = []
    for h in heights:
        s = section(p, x0, h, require_compact=True)
        result = solve(direct_problem(p, F, f, np.zeros(p.phi.shape), s.mask), tol)
        sups.append(float(np.max(np.abs(result.u.values[s.mask]))))
    expected = 0.5 - N_DIM / (2.0 * q)
    if max(sups) == 0.0:
        exponent, prefactor = float("nan"), 0.0
    else:
        exponent, prefactor = _fit_power(heights, sups)
    logger.info(f"Section bound at {tuple(x0)}, q={q}: exponent {exponent:.4f} (expected {expected:.4f})")
    return SectionBoundReport(center=(float(x0[0]), float(x0[1])), q=q, heights=[float(h) for h in heights],
                              sup_abs=sups, expected_exponent=expected, fitted_exponent=exponent,
                              prefactor=prefactor)


def energy_chain_check(p: ConvexPotential, problem: EllipticProblem, u: SolveResult, q: float,
                       sobolev_constant: float, levels: Optional[Sequence[float]] = None,
                       count: int = 8) -> EnergyChainReport:
    """
    Check int Phi Dv.Dv <= F0^2 |A(k)|^{1 - 2/q} for v = (u - k)+ on a ladder of k >= sup_bdry u+,
    with F0 = lambda^{-1/2} |F_phi|_q + C_Sob |f|_q*. The measure includes the one-cell band
    around A(k).
    """
    omega = problem.mask
    values = u.u.values
    boundary_sup = max(0.0, float(values[grid_ops.ring(omega)].max()))
    sup_u = float(values[omega].max())
    if levels is None:
        levels = np.linspace(boundary_sup, sup_u, count + 1)[:-1] if sup_u > boundary_sup else []
    fphi_norm, f_norm, _ = _data_norms(p, problem, q)
    F0 = p.lambda_lo ** -0.5 * fphi_norm + sobolev_constant * f_norm

    system = assemble(problem)
    support = omega | grid_ops.ring(omega)
    energies, bounds = [], []
    for k in levels:
        v = np.where(omega, np.maximum(values - k, 0.0), 0.0).ravel()
        energies.append(float(v @ (system.full_matrix @ v)))
        level_set = omega & (values > k)
        banded = ndimage.binary_dilation(level_set, structure=grid_ops.NEIGHBOURS) & support
        bounds.append(F0 ** 2 * (float(banded.sum()) * problem.cell_area) ** (1.0 - 2.0 / q))
    holds = all(e <= b * (1.0 + 1e-9) + 1e-14 for e, b in zip(energies, bounds))
    return EnergyChainReport(levels=[float(k) for k in levels], energies=energies, bounds=bounds, F0=F0,
                             sobolev_constant=sobolev_constant, holds=holds)
