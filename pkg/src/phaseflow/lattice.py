"""Off-node evaluation of sampled functions.

Periodic samples are treated as trigonometric polynomials (band-limited
interpolation); samples on vanishing grids use a cubic spline pinned to zero
at both walls.
"""

import numpy as np
from scipy.interpolate import CubicSpline


def fourier_refine(values, factor):
    """Band-limited upsampling of periodic samples by an integer ``factor``."""
    values = np.asarray(values, dtype=np.complex128)
    if factor == 1:
        return values.copy()
    n = values.shape[-1]
    spec = np.fft.fft(values, axis=-1)
    m = n * factor
    out = np.zeros(values.shape[:-1] + (m,), dtype=np.complex128)
    h = n // 2
    out[..., :h] = spec[..., :h]
    out[..., m - h + 1:] = spec[..., h + 1:]
    # split the Nyquist bin symmetrically so real input stays real
    out[..., h] = 0.5 * spec[..., h]
    out[..., m - h] = 0.5 * spec[..., h]
    return np.fft.ifft(out, axis=-1) * factor


def fourier_eval(values, grid, x):
    """Evaluate the periodic band-limited interpolant of ``values`` at ``x``."""
    values = np.asarray(values, dtype=np.complex128)
    n = grid.n_x
    spec = np.fft.fft(values) / n
    k = np.fft.fftfreq(n, d=grid.dx) * 2.0 * np.pi
    u = np.atleast_1d(np.asarray(x, dtype=float)) - grid.x_min
    phase = np.exp(1j * np.outer(u, k))
    h = n // 2
    # symmetric Nyquist term: cos instead of a one-sided exponential
    phase[:, h] = np.cos(k[h] * u) if n % 2 == 0 else phase[:, h]
    out = phase @ spec
    return out if np.ndim(x) else out[0]


def _spline(values, grid):
    xs = np.append(grid.x, grid.x_max)
    vals = np.append(np.asarray(values, dtype=np.complex128), 0.0)
    vals[0] = 0.0 if not grid.periodic else vals[0]
    return CubicSpline(xs, vals, bc_type="not-a-knot")


def cubic_eval(values, grid, x):
    """Cubic-spline interpolant of samples on a vanishing grid; zero outside the walls."""
    x = np.asarray(x, dtype=float)
    spline = _spline(values, grid)
    inside = (x >= grid.x_min) & (x <= grid.x_max)
    return np.where(inside, spline(np.clip(x, grid.x_min, grid.x_max)), 0.0)


def refine(values, grid, factor):
    """Samples on the lattice ``x_min + j*dx/factor`` for ``j < factor*n_x``."""
    if factor == 1:
        return np.asarray(values, dtype=np.complex128).copy()
    if grid.periodic:
        return fourier_refine(values, factor)
    xs = grid.x_min + (grid.dx / factor) * np.arange(grid.n_x * factor)
    return cubic_eval(values, grid, xs)


def evaluate(values, grid, x):
    """Interpolate samples to arbitrary points using the grid's boundary rule."""
    if grid.periodic:
        return fourier_eval(values, grid, x)
    return cubic_eval(values, grid, x)
