"""
Built-in potential, flux, source and test-function families used by the tests,
the CLI and the pipeline.
"""

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erf

from src.convex_core import build_potential
from src.models import ConvexPotential, DomainShape, GridFunction2D, PotentialFamily, VectorField2D

Field2D = Callable[[np.ndarray, np.ndarray], np.ndarray]

# non-quadratic families get this relative slack on their analytic det bounds
FD_BOUND_SLACK = 0.02


def isotropic() -> Field2D:
    return lambda x1, x2: 0.5 * (x1 ** 2 + x2 ** 2)


def diagonal(a: float, b: float) -> Field2D:
    return lambda x1, x2: 0.5 * (a * x1 ** 2 + b * x2 ** 2)


def skew(eps: float) -> Field2D:
    return lambda x1, x2: 0.5 * (x1 ** 2 + x2 ** 2) + eps * x1 * x2


def perturbed(amplitude: float) -> Field2D:
    return lambda x1, x2: 0.5 * (x1 ** 2 + x2 ** 2) + amplitude * np.cos(x1) * np.cos(x2)


def rotated_quadratic(e1: float, e2: float, angle: float, shift: Tuple[float, float] = (0.0, 0.0)) -> Field2D:
    c, s = np.cos(angle), np.sin(angle)
    m11 = e1 * c * c + e2 * s * s
    m22 = e1 * s * s + e2 * c * c
    m12 = (e1 - e2) * c * s

    def fn(x1, x2):
        y1, y2 = x1 - shift[0], x2 - shift[1]
        return 0.5 * (m11 * y1 ** 2 + 2.0 * m12 * y1 * y2 + m22 * y2 ** 2)
    return fn


def pinched(kappa: float, width: float, shift: float = 0.0, scale: float = 1.0) -> Field2D:
    """
    psi(x1) + kappa^{-1/2} x2^2 / 2 with psi'' = 1 + (kappa - 1) exp(-x1^2 / (2 w^2)).

    det D^2 phi ranges over [kappa^{-1/2}, kappa^{1/2}] (times scale^2).
    """
    def fn(x1, x2):
        t = (x1 - shift) / width
        bump = t * np.sqrt(np.pi / 2.0) * erf(t / np.sqrt(2.0)) + np.exp(-0.5 * t ** 2)
        psi = 0.5 * x1 ** 2 + (kappa - 1.0) * width ** 2 * bump
        return scale * (psi + 0.5 * x2 ** 2 / np.sqrt(kappa))
    return fn


def potential_function(family: str, a: float = 2.0, b: float = 0.5, eps: float = 0.5,
                       amplitude: float = 0.05, kappa: float = 4.0, width: float = 0.3) -> Field2D:
    family = PotentialFamily(family)
    if family == PotentialFamily.ISOTROPIC:
        return isotropic()
    if family == PotentialFamily.DIAGONAL:
        return diagonal(a, b)
    if family == PotentialFamily.SKEW:
        return skew(eps)
    if family == PotentialFamily.PERTURBED:
        return perturbed(amplitude)
    if family == PotentialFamily.PINCHED:
        return pinched(kappa, width)
    raise ValueError(f"family {family.value} has no closed form")


def potential_bounds(family: str, a: float = 2.0, b: float = 0.5, eps: float = 0.5,
                     amplitude: float = 0.05, kappa: float = 4.0, width: float = 0.3) -> Tuple[float, float]:
    """Analytic det D^2 phi bounds of a built-in family"""
    family = PotentialFamily(family)
    if family == PotentialFamily.ISOTROPIC:
        return 1.0, 1.0
    if family == PotentialFamily.DIAGONAL:
        return a * b, a * b
    if family == PotentialFamily.SKEW:
        return 1.0 - eps ** 2, 1.0 - eps ** 2
    if family == PotentialFamily.PERTURBED:
        lo, hi = (1.0 - amplitude) ** 2, (1.0 + amplitude) ** 2
    elif family == PotentialFamily.PINCHED:
        lo, hi = kappa ** -0.5, kappa ** 0.5
    else:
        raise ValueError(f"family {family.value} has no analytic bounds")
    return lo * (1.0 - FD_BOUND_SLACK), hi * (1.0 + FD_BOUND_SLACK)


def domain_mask(n: int, extent: float = 1.0, domain: str = DomainShape.SQUARE.value) -> np.ndarray:
    """Square domains fill the array; disks stay one cell clear of the array edge"""
    if DomainShape(domain) == DomainShape.SQUARE:
        return np.ones((n, n), dtype=bool)
    h = 2.0 * extent / (n - 1)
    axis = -extent + h * np.arange(n)
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    return np.hypot(x1, x2) <= extent - h


def sample_potential(family: str, n: int, extent: float = 1.0, domain: str = DomainShape.SQUARE.value,
                     **params) -> GridFunction2D:
    return GridFunction2D.square(potential_function(family, **params), n, extent, domain_mask(n, extent, domain))


def family_potential(family: str, n: int, extent: float = 1.0, domain: str = DomainShape.SQUARE.value,
                     bounds: Optional[Tuple[float, float]] = None, seed: int = 0, **params) -> ConvexPotential:
    """Sample a built-in family and validate it against its analytic (or the given) bounds"""
    lo, hi = bounds if bounds is not None else potential_bounds(family, **params)
    phi = sample_potential(family, n, extent, domain, **params)
    return build_potential(phi, lo, hi, seed=seed, name=family)


def random_potential(rng: np.random.Generator, n: int, lambda_lo: float, lambda_hi: float,
                     extent: float = 1.0, domain: str = DomainShape.SQUARE.value) -> ConvexPotential:
    """
    One random potential whose det D^2 phi stays inside [lambda_lo, lambda_hi]: a rotated
    quadratic, a shifted pinched potential or a rotated quadratic with a small cosine ripple.
    """
    kind = int(rng.integers(0, 3))
    mean = np.sqrt(lambda_lo * lambda_hi)
    if kind == 0:
        det = rng.uniform(lambda_lo, lambda_hi)
        e1 = np.sqrt(det) * np.exp(rng.uniform(-0.4, 0.4))
        fn = rotated_quadratic(e1, det / e1, rng.uniform(0.0, np.pi))
        name = "rotated"
    elif kind == 1:
        kappa = rng.uniform(1.1, max(1.1, 0.9 * lambda_hi / lambda_lo))
        fn = pinched(kappa, rng.uniform(0.2, 0.4), shift=rng.uniform(-0.3, 0.3), scale=np.sqrt(mean))
        name = "pinched"
    else:
        e1 = np.sqrt(mean) * np.exp(rng.uniform(-0.3, 0.3))
        e2 = mean / e1
        ripple = 0.02 * min(e1, e2)
        base = rotated_quadratic(e1, e2, rng.uniform(0.0, np.pi))
        fn = lambda x1, x2, base=base, ripple=ripple: base(x1, x2) + ripple * np.cos(x1) * np.cos(x2)
        name = "rippled"
    phi = GridFunction2D.square(fn, n, extent, domain_mask(n, extent, domain))
    return build_potential(phi, lambda_lo, lambda_hi, name=name)


def random_family(seed: int, count: int, n: int, lambda_lo: float, lambda_hi: float,
                  extent: float = 1.0, domain: str = DomainShape.SQUARE.value) -> List[ConvexPotential]:
    rng = np.random.default_rng(seed)
    return [random_potential(rng, n, lambda_lo, lambda_hi, extent, domain) for _ in range(count)]


# Fluxes and sources ---------------------------------------------------------

def regularized_distance(x1: np.ndarray, x2: np.ndarray, x0: Sequence[float], delta: float) -> np.ndarray:
    return np.sqrt((x1 - x0[0]) ** 2 + (x2 - x0[1]) ** 2 + delta ** 2)


def constant_flux(grid: GridFunction2D, a: float, b: float) -> VectorField2D:
    return VectorField2D.constant(grid.shape, a, b)


def critical_flux(grid: GridFunction2D, x0: Sequence[float], q: float, direction: Tuple[float, float] = (1.0, 0.0),
                  delta: Optional[float] = None) -> VectorField2D:
    """F = e |x - x0|_delta^{-2/q}, the L^q-critical field regularised at one grid cell"""
    delta = max(grid.spacing) if delta is None else delta
    x1, x2 = grid.coords()
    weight = regularized_distance(x1, x2, x0, delta) ** (-2.0 / q)
    return VectorField2D(direction[0] * weight, direction[1] * weight)


def constant_source(grid: GridFunction2D, value: float) -> GridFunction2D:
    return grid.with_values(np.full(grid.shape, float(value)))


def singular_source(grid: GridFunction2D, x0: Sequence[float], exponent: float,
                    delta: Optional[float] = None) -> GridFunction2D:
    """|x - x0|_delta^{-s}; lies in L^r for s < 2/r"""
    delta = max(grid.spacing) if delta is None else delta
    x1, x2 = grid.coords()
    return grid.with_values(regularized_distance(x1, x2, x0, delta) ** (-exponent))


# Compactly supported test functions ----------------------------------------

def smooth_bump(x0: Sequence[float], radius: float) -> Field2D:
    """C-infinity bump exp(1 - 1/(1 - r^2)) supported on the open disk"""
    def fn(x1, x2):
        r2 = ((x1 - x0[0]) ** 2 + (x2 - x0[1]) ** 2) / radius ** 2
        inside = r2 < 1.0
        return np.where(inside, np.exp(1.0 - 1.0 / np.where(inside, 1.0 - r2, 1.0)), 0.0)
    return fn


def random_smooth_bump(rng: np.random.Generator, center_box: float = 0.3,
                       radii: Tuple[float, float] = (0.35, 0.5)) -> Field2D:
    """Smooth bump with a random low-frequency modulation"""
    center = rng.uniform(-center_box, center_box, size=2)
    bump = smooth_bump(center, rng.uniform(*radii))
    k = rng.uniform(-3.0, 3.0, size=2)
    amp, phase = rng.uniform(0.0, 0.8), rng.uniform(0.0, 2.0 * np.pi)
    return lambda x1, x2: bump(x1, x2) * (1.0 + amp * np.sin(k[0] * x1 + k[1] * x2 + phase))


def sine_bump(rect: Tuple[float, float, float, float], power: float = 1.0) -> Field2D:
    """(sin sin)^p on the rectangle (a1, b1, a2, b2), zero outside"""
    a1, b1, a2, b2 = rect

    def fn(x1, x2):
        s1 = np.sin(np.pi * np.clip((x1 - a1) / (b1 - a1), 0.0, 1.0))
        s2 = np.sin(np.pi * np.clip((x2 - a2) / (b2 - a2), 0.0, 1.0))
        return np.maximum(s1 * s2, 0.0) ** power
    return fn


def random_sine_bump(rng: np.random.Generator, support: Tuple[float, float, float, float],
                     min_width: float) -> Field2D:
    """Sine-power bump on a random sub-rectangle of `support` with p in [1, 2]"""
    lo1, hi1, lo2, hi2 = support
    w1 = rng.uniform(min_width, hi1 - lo1)
    w2 = rng.uniform(min_width, hi2 - lo2)
    a1 = rng.uniform(lo1, hi1 - w1)
    a2 = rng.uniform(lo2, hi2 - w2)
    return sine_bump((a1, a1 + w1, a2, a2 + w2), rng.uniform(1.0, 2.0))


def gaussian_cluster(rng: np.random.Generator, x0: Sequence[float], radius: float, count: int = 3) -> Field2D:
    """Sum of random Gaussians multiplied by a smooth cutoff on B(x0, radius)"""
    cutoff = smooth_bump(x0, radius)
    centers = np.asarray(x0) + rng.uniform(-0.5 * radius, 0.5 * radius, size=(count, 2))
    widths = rng.uniform(0.15 * radius, 0.4 * radius, size=count)
    weights = rng.uniform(-1.0, 1.0, size=count)

    def fn(x1, x2):
        total = np.zeros(np.broadcast(x1, x2).shape)
        for (c1, c2), w, a in zip(centers, widths, weights):
            total = total + a * np.exp(-((x1 - c1) ** 2 + (x2 - c2) ** 2) / (2.0 * w ** 2))
        return cutoff(x1, x2) * (1.0 + total)
    return fn


def moser_bump(x0: Sequence[float], R: float, r: float) -> Field2D:
    """min(1, log(R/|x - x0|) / log(R/r)) on B(x0, R), zero outside"""
    def fn(x1, x2):
        dist = np.hypot(x1 - x0[0], x2 - x0[1])
        ratio = np.log(R / np.maximum(dist, 1e-300)) / np.log(R / r)
        return np.clip(ratio, 0.0, 1.0)
    return fn


def sample_on(grid: GridFunction2D, fn: Field2D, support: Optional[np.ndarray] = None) -> GridFunction2D:
    """Evaluate fn on grid nodes, zeroed off `support` (defaults to the grid mask)"""
    x1, x2 = grid.coords()
    support = grid.mask if support is None else support
    return grid.with_values(np.where(support, fn(x1, x2), 0.0), grid.mask)