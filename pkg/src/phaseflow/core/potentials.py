"""Potentials V(x) with derivatives up to fifth order and the force F = -V'."""

from dataclasses import dataclass, field
import warnings

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.interpolate import CubicSpline

from .errors import AccuracyWarning, GridValidationError
from .grids import SpatialGrid
from .. import kernels

MAX_DERIVATIVE = 5


class Potential:
    """Interface: ``value``, ``derivative`` (order <= 5), ``force``."""

    exact_derivatives = True

    def value(self, x):
        raise NotImplementedError

    def derivative(self, x, order=1):
        raise NotImplementedError

    def force(self, x):
        return -self.derivative(x, 1)

    def force_encoding(self):
        """``(kind, coeffs, table, x0, h, periodic)`` for :func:`phaseflow.kernels.verlet`."""
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError

    def shifted(self, c):
        """The same potential plus the constant ``c``."""
        raise NotImplementedError


class PolynomialPotential(Potential):
    """Closed-form potentials, all represented by ascending coefficients."""

    @property
    def coeffs(self):
        raise NotImplementedError

    def value(self, x):
        return P.polyval(np.asarray(x, dtype=float), self.coeffs)

    def derivative(self, x, order=1):
        _check_order(order)
        c = P.polyder(self.coeffs, order) if len(self.coeffs) > order else np.zeros(1)
        return P.polyval(np.asarray(x, dtype=float), c)

    def force_encoding(self):
        c = self.coeffs
        fc = -P.polyder(c, 1) if len(c) > 1 else np.zeros(1)
        return kernels.FORCE_POLY, np.ascontiguousarray(fc, dtype=float), np.zeros(2), 0.0, 1.0, False

    @property
    def degree(self):
        c = np.trim_zeros(np.asarray(self.coeffs, dtype=float), "b")
        return max(len(c) - 1, 0)

    def shifted(self, c):
        coeffs = np.array(self.coeffs, dtype=float)
        coeffs[0] += c
        return Polynomial(tuple(coeffs))


@dataclass(frozen=True)
class Harmonic(PolynomialPotential):
    """V = k x^2 / 2."""

    k: float = 1.0

    @property
    def coeffs(self):
        return np.array([0.0, 0.0, 0.5 * self.k])

    def omega(self, mass=1.0):
        return float(np.sqrt(self.k / mass))

    def describe(self):
        return {"form": "harmonic", "k": self.k}


@dataclass(frozen=True)
class Quartic(PolynomialPotential):
    """V = lambda x^4."""

    lam: float = 1.0

    @property
    def coeffs(self):
        return np.array([0.0, 0.0, 0.0, 0.0, self.lam])

    def describe(self):
        return {"form": "quartic", "lambda": self.lam}


@dataclass(frozen=True)
class DoubleWell(PolynomialPotential):
    """V = a x^4 - b x^2 (minima at x = +-sqrt(b / 2a) for a, b > 0)."""

    a: float = 1.0
    b: float = 1.0

    @property
    def coeffs(self):
        return np.array([0.0, 0.0, -self.b, 0.0, self.a])

    def describe(self):
        return {"form": "double_well", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Polynomial(PolynomialPotential):
    """V = sum_k c_k x^k with ascending ``values`` of degree at most 8."""

    values: tuple = (0.0,)

    def __post_init__(self):
        vals = tuple(float(v) for v in np.atleast_1d(self.values))
        if len(vals) == 0 or len(vals) > 9:
            raise GridValidationError("polynomial potential needs 1..9 coefficients (degree <= 8)")
        if not all(np.isfinite(vals)):
            raise GridValidationError("polynomial coefficients must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def coeffs(self):
        return np.array(self.values)

    def describe(self):
        return {"form": "polynomial", "coeffs": list(self.values)}


def free():
    return Polynomial((0.0,))


@dataclass(frozen=True, eq=False)
class Tabulated(Potential):
    """V sampled on a :class:`SpatialGrid`.

    Values between nodes come from a cubic spline. Derivatives are built by
    repeated centred differences on the nodes, so every order is only
    O(dx^2) accurate; orders above two also amplify noise in the table.
    """

    grid: SpatialGrid
    samples: np.ndarray = field(repr=False)

    exact_derivatives = False

    def __post_init__(self):
        v = np.array(self.samples, dtype=float)
        if v.shape != (self.grid.n_x,):
            raise GridValidationError(f"tabulated potential needs {self.grid.n_x} samples, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise GridValidationError("tabulated potential must be finite (V is continuous)")
        v.setflags(write=False)
        object.__setattr__(self, "samples", v)
        xs = np.append(self.grid.x, self.grid.x_max)
        if self.grid.periodic:
            spline = CubicSpline(xs, np.append(v, v[0]), bc_type="periodic")
        else:
            spline = CubicSpline(self.grid.x, v)
        object.__setattr__(self, "_spline", spline)
        derivs = [v]
        for order in range(1, MAX_DERIVATIVE + 1):
            derivs.append(self._d1(derivs[-1]))
        object.__setattr__(self, "_node_derivs", derivs)

    def _d1(self, f):
        h = self.grid.dx
        if self.grid.periodic:
            return (np.roll(f, -1) - np.roll(f, 1)) / (2 * h)
        return np.gradient(f, h, edge_order=2)

    def _on_nodes(self, f, x):
        x = np.asarray(x, dtype=float)
        g = self.grid
        if g.periodic:
            xs = np.append(g.x, g.x_max)
            return np.interp((x - g.x_min) % g.length + g.x_min, xs, np.append(f, f[0]))
        return np.interp(x, g.x, f)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.grid.periodic:
            x = (x - self.grid.x_min) % self.grid.length + self.grid.x_min
        return self._spline(x)

    def derivative(self, x, order=1):
        _check_order(order)
        if order == 0:
            return self.value(x)
        if order > 2:
            warnings.warn(
                f"order-{order} derivative of a tabulated potential is only O(dx^2) accurate",
                AccuracyWarning,
                stacklevel=2,
            )
        return self._on_nodes(self._node_derivs[order], x)

    def force_encoding(self):
        table = np.ascontiguousarray(-self._node_derivs[1])
        return kernels.FORCE_TABLE, np.zeros(1), table, self.grid.x_min, self.grid.dx, self.grid.periodic

    def shifted(self, c):
        return Tabulated(self.grid, self.samples + c)

    def describe(self):
        g = self.grid
        return {"form": "tabulated", "x_min": g.x_min, "x_max": g.x_max, "n_x": g.n_x,
                "boundary": g.boundary}


def _check_order(order):
    if not (isinstance(order, (int, np.integer)) and 0 <= order <= MAX_DERIVATIVE):
        raise ValueError(f"derivative order must be an integer in [0, {MAX_DERIVATIVE}], got {order}")


def from_spec(spec, grid=None):
    """Build a potential from a ``describe()``-style mapping."""
    form = spec.get("form", "harmonic")
    if form == "harmonic":
        return Harmonic(float(spec.get("k", 1.0)))
    if form == "quartic":
        return Quartic(float(spec.get("lambda", 1.0)))
    if form == "double_well":
        return DoubleWell(float(spec.get("a", 1.0)), float(spec.get("b", 1.0)))
    if form == "polynomial":
        return Polynomial(tuple(float(c) for c in spec.get("coeffs", (0.0,))))
    if form == "free":
        return free()
    if form == "tabulated":
        if grid is None:
            raise ValueError("tabulated potential needs a grid")
        return Tabulated(grid, np.asarray(spec["samples"], dtype=float))
    raise ValueError(f"unknown potential form {form!r}")
