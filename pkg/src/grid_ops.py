"""
Grid helpers shared by every module: mask-aware finite differences, bilinear
interpolation, node quadrature and mask morphology.
"""

from typing import Tuple

import numpy as np
from scipy import ndimage

NEIGHBOURS = np.ones((3, 3), dtype=bool)
WEIGHT_EPS = 1e-14
SNAP_TOL = 1e-9


def shift(a: np.ndarray, k: int, axis: int, fill=np.nan) -> np.ndarray:
    """Return b with b[..., i, ...] = a[..., i + k, ...] along axis, `fill` past the edge"""
    out = np.full_like(a, fill)
    n = a.shape[axis]
    if k == 0:
        return a.copy()
    if abs(k) >= n:
        return out
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if k > 0:
        dst[axis] = slice(0, n - k)
        src[axis] = slice(k, n)
    else:
        dst[axis] = slice(-k, n)
        src[axis] = slice(0, n + k)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _stencil(values: np.ndarray, mask: np.ndarray, axis: int, reach: int):
    v = np.where(mask, values, np.nan)
    m = mask & np.isfinite(v)
    vs = {k: shift(v, k, axis) for k in range(-reach, reach + 1) if k}
    ms = {k: shift(m, k, axis, fill=False) for k in range(-reach, reach + 1) if k}
    vs[0], ms[0] = v, m
    return vs, ms


def d1(values: np.ndarray, mask: np.ndarray, h: float, axis: int) -> np.ndarray:
    """
    Second-order first derivative along `axis`.

    Centered where both neighbours are in the mask, one-sided second order at
    the mask boundary, NaN where no stencil fits.
    """
    v, m = _stencil(values, mask, axis, 2)
    out = np.full(values.shape, np.nan)
    backward = m[0] & m[-1] & m[-2]
    forward = m[0] & m[1] & m[2]
    centered = m[0] & m[1] & m[-1]
    out = np.where(backward, (3.0 * v[0] - 4.0 * v[-1] + v[-2]) / (2.0 * h), out)
    out = np.where(forward, (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h), out)
    out = np.where(centered, (v[1] - v[-1]) / (2.0 * h), out)
    return out


def d2(values: np.ndarray, mask: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second-order second derivative along `axis` with the same fallback rules as d1"""
    v, m = _stencil(values, mask, axis, 3)
    out = np.full(values.shape, np.nan)
    backward = m[0] & m[-1] & m[-2] & m[-3]
    forward = m[0] & m[1] & m[2] & m[3]
    centered = m[0] & m[1] & m[-1]
    out = np.where(backward, (2.0 * v[0] - 5.0 * v[-1] + 4.0 * v[-2] - v[-3]) / h ** 2, out)
    out = np.where(forward, (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h ** 2, out)
    out = np.where(centered, (v[1] - 2.0 * v[0] + v[-1]) / h ** 2, out)
    return out


def gradient(values: np.ndarray, mask: np.ndarray, spacing: Tuple[float, float]) -> Tuple[np.ndarray, np.ndarray]:
    return d1(values, mask, spacing[0], 0), d1(values, mask, spacing[1], 1)


def hessian(values: np.ndarray, mask: np.ndarray,
            spacing: Tuple[float, float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (hxx, hxy, hyy); the mixed term is d1 of d1"""
    dx, dy = spacing
    hxx = d2(values, mask, dx, 0)
    hyy = d2(values, mask, dy, 1)
    g2 = d1(values, mask, dy, 1)
    hxy = d1(g2, mask & np.isfinite(g2), dx, 0)
    return hxx, hxy, hyy


def divergence(f1: np.ndarray, f2: np.ndarray, mask: np.ndarray, spacing: Tuple[float, float]) -> np.ndarray:
    dx, dy = spacing
    return d1(f1, mask & np.isfinite(f1), dx, 0) + d1(f2, mask & np.isfinite(f2), dy, 1)


def interior(mask: np.ndarray, steps: int = 1) -> np.ndarray:
    """Nodes whose whole 3x3 neighbourhood (iterated `steps` times) lies in the mask"""
    if steps <= 0:
        return mask.copy()
    return ndimage.binary_erosion(mask, structure=NEIGHBOURS, iterations=steps, border_value=0)


def ring(mask: np.ndarray) -> np.ndarray:
    """8-neighbour ring just outside the mask"""
    return ndimage.binary_dilation(mask, structure=NEIGHBOURS) & ~mask


def is_connected(mask: np.ndarray) -> bool:
    _, count = ndimage.label(mask, structure=NEIGHBOURS)
    return count <= 1


def touches_edge(mask: np.ndarray) -> bool:
    return bool(mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any())


def bilinear(values: np.ndarray, valid: np.ndarray, origin: Tuple[float, float],
             spacing: Tuple[float, float], x1, x2) -> np.ndarray:
    """
    Bilinear interpolation of a node field at arbitrary points.

    Corners with zero weight are ignored, so points on grid lines only need the
    corners they actually touch. Returns NaN where a weighted corner is invalid
    or the point lies off the grid.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    nx, ny = values.shape
    s = (x1 - origin[0]) / spacing[0]
    t = (x2 - origin[1]) / spacing[1]
    tol = 1e-9
    finite = np.isfinite(s) & np.isfinite(t)
    s = np.where(finite, s, 0.0)
    t = np.where(finite, t, 0.0)
    # snap to grid lines so rounding does not pull in a neighbouring corner
    s = np.where(np.abs(s - np.round(s)) < SNAP_TOL, np.round(s), s)
    t = np.where(np.abs(t - np.round(t)) < SNAP_TOL, np.round(t), t)
    inside = finite & (s >= -tol) & (s <= nx - 1 + tol) & (t >= -tol) & (t <= ny - 1 + tol)

    i0 = np.clip(np.floor(s), 0, max(nx - 2, 0)).astype(int)
    j0 = np.clip(np.floor(t), 0, max(ny - 2, 0)).astype(int)
    fs = np.clip(s - i0, 0.0, 1.0)
    ft = np.clip(t - j0, 0.0, 1.0)

    ok = inside.copy()
    total = np.zeros(np.broadcast(s, t).shape)
    for di, dj, w in ((0, 0, (1 - fs) * (1 - ft)), (1, 0, fs * (1 - ft)),
                      (0, 1, (1 - fs) * ft), (1, 1, fs * ft)):
        ii = np.minimum(i0 + di, nx - 1)
        jj = np.minimum(j0 + dj, ny - 1)
        vv = values[ii, jj]
        good = valid[ii, jj] & np.isfinite(vv)
        need = w > WEIGHT_EPS
        ok &= ~need | good
        total = total + np.where(need & good, w * np.where(good, vv, 0.0), 0.0)
    return np.where(ok, total, np.nan)


def node_integral(values: np.ndarray, mask: np.ndarray, cell_area: float) -> float:
    """Node quadrature: sum over masked nodes times the cell area"""
    return float(np.sum(np.where(mask, values, 0.0)) * cell_area)


def lq_norm(values: np.ndarray, mask: np.ndarray, cell_area: float, q: float) -> float:
    if np.isinf(q):
        return float(np.max(np.abs(values[mask]))) if mask.any() else 0.0
    return node_integral(np.abs(np.where(mask, values, 0.0)) ** q, mask, cell_area) ** (1.0 / q)


def _wavenumbers(n: int, h: float) -> np.ndarray:
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return k


def spectral_gradient(values: np.ndarray, spacing: Tuple[float, float]) -> Tuple[np.ndarray, np.ndarray]:
    """FFT gradient treating the array as periodic; exact for band-limited compactly supported data"""
    v = np.nan_to_num(np.asarray(values, dtype=float))
    nx, ny = v.shape
    spectrum = np.fft.fft2(v)
    k1 = _wavenumbers(nx, spacing[0])[:, None]
    k2 = _wavenumbers(ny, spacing[1])[None, :]
    g1 = np.real(np.fft.ifft2(1j * k1 * spectrum))
    g2 = np.real(np.fft.ifft2(1j * k2 * spectrum))
    return g1, g2


def disk_mask(coords: Tuple[np.ndarray, np.ndarray], center: Tuple[float, float], radius: float) -> np.ndarray:
    x1, x2 = coords
    return (x1 - center[0]) ** 2 + (x2 - center[1]) ** 2 < radius ** 2
