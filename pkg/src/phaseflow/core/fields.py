"""Immutable fields: amplitudes on x, distributions on (x, p), transforms on (x, y)."""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .errors import GridValidationError, NormalizationError
from .grids import PhaseSpaceGrid, SpatialGrid

NORM_TOL = 1e-10
MASS_TOL = 1e-8
IMAG_NEGLIGIBLE = 1e-12


def _frozen(values, dtype, shape):
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.shape != shape:
        raise GridValidationError(f"field has shape {arr.shape}, grid expects {shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Amplitude:
    """Complex amplitude sampled on a :class:`SpatialGrid` at time ``t``."""

    grid: SpatialGrid
    values: np.ndarray = field(repr=False)
    t: float = 0.0
    metadata: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, np.complex128, (self.grid.n_x,)))
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def normalized(cls, grid, values, t=0.0, **metadata):
        v = np.asarray(values, dtype=np.complex128)
        if not grid.periodic:
            v = v.copy()
            v[0] = 0.0
        norm = math.sqrt(float(np.sum(np.abs(v) ** 2)) * grid.dx)
        if not norm > 0:
            raise NormalizationError("cannot normalize a zero amplitude")
        return cls(grid, v / norm, t, dict(metadata))

    def norm2(self):
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dx)

    def require_normalized(self, tol=NORM_TOL):
        n = self.norm2()
        if abs(n - 1.0) > tol:
            raise NormalizationError(f"amplitude norm is {n!r}, expected 1 within {tol}")
        return self

    def density(self):
        return np.abs(self.values) ** 2

    def evolve_to(self, values, t, **metadata):
        meta = dict(self.metadata)
        meta.update(metadata)
        return Amplitude(self.grid, values, t, meta)

    def with_metadata(self, **metadata):
        meta = dict(self.metadata)
        meta.update(metadata)
        return replace(self, metadata=meta)

    def inner(self, other):
        return complex(np.vdot(self.values, other.values) * self.grid.dx)


@dataclass(frozen=True, eq=False)
class PhaseDistribution:
    """Complex samples on a :class:`PhaseSpaceGrid`, shaped ``(n_p, n_x)``.

    Classical densities and quasi-probabilities share this type; realness is
    checked with :meth:`is_real`, not encoded in the dtype.
    """

    grid: PhaseSpaceGrid
    values: np.ndarray = field(repr=False)
    t: float = 0.0
    metadata: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, np.complex128, self.grid.shape))
        object.__setattr__(self, "t", float(self.t))

    @property
    def real(self):
        return self.values.real

    def mass(self):
        return complex(self.values.sum() * self.grid.cell)

    def is_real(self, rtol=IMAG_NEGLIGIBLE):
        scale = float(np.max(np.abs(self.values.real))) if self.values.size else 0.0
        return float(np.max(np.abs(self.values.imag))) <= rtol * scale

    def require_normalized(self, tol=MASS_TOL):
        m = self.mass()
        if abs(m - 1.0) > tol:
            raise NormalizationError(f"distribution mass is {m!r}, expected 1 within {tol}")
        return self

    def x_marginal(self):
        """Integral over p, one value per x node."""
        return self.values.sum(axis=0) * self.grid.dp

    def p_marginal(self):
        return self.values.sum(axis=1) * self.grid.dx

    def with_values(self, values, t=None, **metadata):
        meta = dict(self.metadata)
        meta.update(metadata)
        return PhaseDistribution(self.grid, values, self.t if t is None else t, meta)

    def with_metadata(self, **metadata):
        meta = dict(self.metadata)
        meta.update(metadata)
        return replace(self, metadata=meta)

    def l2_norm(self):
        return math.sqrt(float(np.sum(np.abs(self.values) ** 2)) * self.grid.cell)


@dataclass(frozen=True, eq=False)
class TransformField:
    """T[W](x, y) on the x nodes and the conjugate y samples of ``grid``.

    Rows index y (``grid.y``), columns index x, matching the layout of the
    distribution it came from.
    """

    grid: PhaseSpaceGrid
    values: np.ndarray = field(repr=False)
    t: float = 0.0
    metadata: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, np.complex128, self.grid.shape))
        object.__setattr__(self, "t", float(self.t))

    def diagonal(self):
        """T(x, y=0), the configuration-space density."""
        return self.values[self.grid.n_p // 2]

    def window(self, y_max):
        """Copy with samples ``|y| > y_max`` zeroed (analysis of the small-y regime)."""
        mask = np.abs(self.grid.y) <= y_max
        return TransformField(self.grid, np.where(mask[:, None], self.values, 0.0), self.t,
                              dict(self.metadata, y_window=float(y_max)))


def gaussian_amplitude(grid, x0=0.0, p0=0.0, sigma=1.0, params=None, t=0.0):
    """Normalized Gaussian packet ``exp(-(x-x0)^2/4 sigma^2 + i p0 x / alpha)``.

    ``sigma`` is the standard deviation of ``|psi|^2``.
    """
    alpha = params.alpha if params is not None else 1.0
    x = grid.x
    v = np.exp(-((x - x0) ** 2) / (4.0 * sigma**2) + 1j * p0 * (x - x0) / alpha)
    return Amplitude.normalized(grid, v, t, kind="gaussian", x0=x0, p0=p0, sigma=sigma)


def coherent_state(grid, potential_k, params, x0=0.0, p0=0.0, t=0.0):
    """Minimum-uncertainty packet matched to a harmonic well of stiffness ``potential_k``."""
    omega = math.sqrt(potential_k / params.mass)
    sigma = math.sqrt(params.alpha / (2.0 * params.mass * omega))
    return gaussian_amplitude(grid, x0, p0, sigma, params, t)
