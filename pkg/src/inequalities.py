"""
Sobolev and Moser-Trudinger checks for the Phi-Dirichlet energy, plus the empirical
W^{2,1+eps} integrability exponent of a potential.
"""

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy.optimize import minimize

from src import grid_ops
from src.elliptic_solver import assemble, cofactor_problem
from src.errors import ZeroEnergy
from src.models import CofactorField, ConvexPotential, DerivativeScheme, GridFunction2D, InequalityReport
from src.sample_fields import (gaussian_cluster, random_sine_bump, random_smooth_bump, sample_on, sine_bump)

EXP_CAP = 700.0
EPS_LADDER = (0.25, 0.5, 1.0, 2.0, 3.0, 4.0)
BLOWUP_FACTOR = 1e3
DEFAULT_TWO_STAR = 4.0


def phi_energy(u: GridFunction2D, c: CofactorField, scheme: DerivativeScheme = DerivativeScheme.CENTRAL) -> float:
    """|Du|_Phi^2 = integral of Phi^{ij} D_i u D_j u by node quadrature"""
    values = np.where(u.mask, u.values, 0.0)
    if DerivativeScheme(scheme) == DerivativeScheme.CENTRAL:
        g1, g2 = grid_ops.gradient(values, u.mask, u.spacing)
    else:
        g1, g2 = grid_ops.spectral_gradient(values, u.spacing)
    density = np.nan_to_num(c.quadratic_form(np.nan_to_num(g1), np.nan_to_num(g2)))
    return grid_ops.node_integral(density, u.mask & c.mask, u.cell_area)


def _nonzero_energy(u: GridFunction2D, c: CofactorField, scheme: DerivativeScheme) -> float:
    if not np.any(u.values[u.mask]):
        raise ZeroEnergy("test function vanishes identically")
    energy = phi_energy(u, c, scheme)
    if energy <= 0.0:
        raise ZeroEnergy(f"Phi-energy is {energy:.3e}", details={"energy": energy})
    return energy


def sobolev_check(u: GridFunction2D, c: CofactorField, two_star: float = DEFAULT_TWO_STAR,
                  scheme: DerivativeScheme = DerivativeScheme.CENTRAL) -> InequalityReport:
    """Ratio |u|_{2*} / |Du|_Phi for one compactly supported u"""
    if two_star <= 2.0:
        raise ValueError(f"2* must exceed 2 in two dimensions, got {two_star}")
    energy = _nonzero_energy(u, c, scheme)
    lhs = grid_ops.lq_norm(u.values, u.mask, u.cell_area, two_star)
    rhs = float(np.sqrt(energy))
    return InequalityReport(energy=energy, lhs=lhs, rhs_bound=rhs, ratio=lhs / rhs,
                            params={"two_star": two_star})


def random_test_function(rng: np.random.Generator, grid: GridFunction2D) -> GridFunction2D:
    """Compactly supported trial function drawn from the sine, smooth-bump and Gaussian-cluster families"""
    support = grid_ops.interior(grid.mask, 2)
    a1, a2 = grid.axes()
    rows, cols = np.nonzero(support)
    box = (a1[rows.min()], a1[rows.max()], a2[cols.min()], a2[cols.max()])
    width = min(box[1] - box[0], box[3] - box[2])
    kind = rng.integers(3)
    if kind == 0:
        fn = random_sine_bump(rng, box, 0.4 * width)
    elif kind == 1:
        fn = random_smooth_bump(rng, center_box=0.1 * width, radii=(0.25 * width, 0.35 * width))
    else:
        center = (0.5 * (box[0] + box[1]), 0.5 * (box[2] + box[3]))
        fn = gaussian_cluster(rng, center, 0.5 * width)
    return sample_on(grid, fn, support)


def sobolev_family(grid: GridFunction2D, c: CofactorField, trials: int, seed: int = 0,
                   two_star: float = DEFAULT_TWO_STAR, extra: Sequence[GridFunction2D] = ()) -> pd.DataFrame:
    """
    Ratios over a seeded family of trial functions; the column max is the empirical
    lower bound for the Sobolev constant. `extra` functions are appended after the random ones.
    """
    rng = np.random.default_rng(seed)
    rows = []
    functions: List[GridFunction2D] = [random_test_function(rng, grid) for _ in range(trials)] + list(extra)
    for trial, u in enumerate(functions):
        report = sobolev_check(u, c, two_star)
        rows.append({"trial": trial, "ratio": report.ratio, "energy": report.energy, "lq_norm": report.lhs})
    table = pd.DataFrame(rows, columns=["trial", "ratio", "energy", "lq_norm"])
    logger.info(f"Sobolev family: {len(table)} trials, max ratio {table['ratio'].max():.6f}")
    return table


def full_support_sine(grid: GridFunction2D, power: float = 1.0) -> GridFunction2D:
    """(sin sin)^p filling the bounding box of the twice-eroded mask"""
    support = grid_ops.interior(grid.mask, 2)
    a1, a2 = grid.axes()
    rows, cols = np.nonzero(support)
    h1, h2 = grid.spacing
    rect = (a1[rows.min()] - h1, a1[rows.max()] + h1, a2[cols.min()] - h2, a2[cols.max()] + h2)
    return sample_on(grid, sine_bump(rect, power), support)


def classical_sobolev_maximum(grid: GridFunction2D, two_star: float = DEFAULT_TWO_STAR,
                              max_iter: int = 2000) -> Tuple[float, GridFunction2D]:
    """
    Maximise |u|_{2*} / |Du|_2 over functions vanishing on the ring of the once-eroded mask.
    The Dirichlet energy is the assembled identity-coefficient form, independent of phi_energy.
    """
    unknowns = grid_ops.interior(grid.mask)
    problem = cofactor_problem(CofactorField.identity(grid), None, None, unknowns, None, grid.origin, grid.spacing)
    K = assemble(problem).matrix
    w = grid.cell_area
    p = two_star

    def objective(x: np.ndarray) -> Tuple[float, np.ndarray]:
        Kx = K @ x
        E = float(x @ Kx)
        S = float(w * np.sum(np.abs(x) ** p))
        N = S ** (2.0 / p)
        grad_E = 2.0 * Kx
        grad_N = 2.0 * S ** (2.0 / p - 1.0) * w * np.abs(x) ** (p - 1.0) * np.sign(x)
        return E / N, (grad_E * N - E * grad_N) / N ** 2

    start = full_support_sine(grid).values[unknowns]
    start = start / np.max(np.abs(start))
    result = minimize(objective, start, jac=True, method="L-BFGS-B", options={"maxiter": max_iter})
    best = result.x / np.max(np.abs(result.x))
    values = np.zeros(grid.shape)
    values[unknowns] = best
    ratio = float(1.0 / np.sqrt(result.fun))
    logger.info(f"Classical Sobolev maximum ({two_star=}): {ratio:.6f} after {result.nit} iterations")
    return ratio, grid.with_values(values, grid.mask)


def moser_threshold(eps0: float, lambda_lo: float) -> float:
    """4 pi (1 + eps0) / (2 + eps0) min(lambda, 1); tends to 4 pi min(lambda, 1) as eps0 grows"""
    if np.isinf(eps0):
        return 4.0 * np.pi * min(lambda_lo, 1.0)
    return 4.0 * np.pi * (1.0 + eps0) / (2.0 + eps0) * min(lambda_lo, 1.0)


def moser_exponent(u: GridFunction2D, c: CofactorField,
                   scheme: DerivativeScheme = DerivativeScheme.CENTRAL) -> np.ndarray:
    """u^2 / |Du|_Phi^2 node-wise"""
    energy = _nonzero_energy(u, c, scheme)
    return np.where(u.mask, u.values ** 2 / energy, 0.0)


def _moser_integral(u: GridFunction2D, p: ConvexPotential, c: CofactorField, beta: float,
                    scheme: DerivativeScheme) -> Tuple[float, float, bool]:
    """(integral of exp(beta u^2 / |Du|_Phi^2) over the domain, |Du|_Phi^2, saturated)"""
    exponent = beta * moser_exponent(u, c, scheme)
    saturated = bool(np.any(exponent > EXP_CAP))
    if saturated:
        logger.warning(f"Moser-Trudinger exponent saturated at {int(np.sum(exponent > EXP_CAP))} nodes")
    lhs = grid_ops.node_integral(np.exp(np.minimum(exponent, EXP_CAP)), p.phi.mask, p.phi.cell_area)
    return lhs, phi_energy(u, c, scheme), saturated


def _measure_power(p: ConvexPotential, eps0: float) -> float:
    power = 1.0 if np.isinf(eps0) else eps0 / (2.0 + eps0)
    return p.phi.measure() ** power


def estimate_moser_constant(functions: Sequence[GridFunction2D], p: ConvexPotential, c: CofactorField,
                            beta: float, eps0: float,
                            scheme: DerivativeScheme = DerivativeScheme.CENTRAL) -> float:
    """Smallest C with exp-integral <= C |Omega|^{eps0/(2+eps0)} on every trial function"""
    if not functions:
        raise ValueError("at least one trial function is needed to measure C")
    scale = _measure_power(p, eps0)
    return max(_moser_integral(u, p, c, beta, scheme)[0] for u in functions) / scale


def moser_trudinger_check(u: GridFunction2D, p: ConvexPotential, c: CofactorField, beta: float,
                          eps0: Optional[float] = None, C: Optional[float] = None,
                          scheme: DerivativeScheme = DerivativeScheme.CENTRAL) -> InequalityReport:
    """
    Compare the integral of exp(beta u^2 / |Du|_Phi^2) with C |Omega|^{eps0/(2+eps0)}.

    Both eps0 and C are measured when not given: eps0 by estimate_eps0, C from u alone
    (ratio 1). Exponents are capped at 700; a capped node sets the saturated flag.
    """
    eps0 = estimate_eps0(p) if eps0 is None else eps0
    lhs, energy, saturated = _moser_integral(u, p, c, beta, scheme)
    scale = _measure_power(p, eps0)
    C = lhs / scale if C is None else C
    rhs = C * scale
    return InequalityReport(
        energy=energy, lhs=lhs, rhs_bound=rhs, ratio=lhs / rhs, saturated=saturated,
        params={"beta": beta, "eps0": eps0, "C": C, "lambda": p.lambda_lo, "Lambda": p.lambda_hi,
                "threshold": moser_threshold(eps0, p.lambda_lo)},
    )


def moser_family(functions: Sequence[GridFunction2D], p: ConvexPotential, c: CofactorField, beta: float,
                 eps0: Optional[float] = None,
                 scheme: DerivativeScheme = DerivativeScheme.CENTRAL) -> Tuple[pd.DataFrame, float]:
    """Trial table of the family against its own measured constant C, and that C"""
    eps0 = estimate_eps0(p) if eps0 is None else eps0
    C = estimate_moser_constant(functions, p, c, beta, eps0, scheme)
    table = trial_table(functions, lambda u: moser_trudinger_check(u, p, c, beta, eps0, C, scheme))
    logger.info(f"Moser-Trudinger family of {len(functions)}: measured C = {C:.6g} (eps0 = {eps0})")
    return table, C


def estimate_eps0(p: ConvexPotential, eps_ladder: Sequence[float] = EPS_LADDER,
                  blowup_factor: float = BLOWUP_FACTOR) -> float:
    """
    Largest ladder eps with integral of phi_x1x1^{1+eps} below blowup_factor |Omega| Lambda^{1+eps}.
    Returns 0 when no ladder value passes.
    """
    domain = p.phi.mask & np.isfinite(p.hxx)
    hxx = np.clip(np.where(domain, p.hxx, 0.0), 0.0, None)
    measure = p.phi.measure()
    best = 0.0
    for eps in sorted(eps_ladder):
        if not 0.0 < eps <= 4.0:
            raise ValueError(f"eps ladder values must lie in (0, 4], got {eps}")
        integral = grid_ops.node_integral(hxx ** (1.0 + eps), domain, p.phi.cell_area)
        threshold = blowup_factor * measure * p.lambda_hi ** (1.0 + eps)
        if integral >= threshold:
            logger.debug(f"eps0 ladder stops at {eps}: {integral:.4g} >= {threshold:.4g}")
            break
        best = eps
    return best


def trial_table(functions: Sequence[GridFunction2D], check: Callable[[GridFunction2D], InequalityReport]) -> pd.DataFrame:
    """One row per trial function with the report's ratio and saturation flag"""
    rows = []
    for trial, u in enumerate(functions):
        report = check(u)
        rows.append({"trial": trial, "ratio": report.ratio, "lhs": report.lhs, "rhs_bound": report.rhs_bound,
                     "saturated": report.saturated})
    return pd.DataFrame(rows, columns=["trial", "ratio", "lhs", "rhs_bound", "saturated"])
