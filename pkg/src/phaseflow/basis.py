"""Orthonormal configuration-space bases, projection and synthesis.

Three families are supported: box plane waves ``exp(i n pi x / b)/sqrt(2b)``
on ``[-b, b)``, analytic harmonic-oscillator eigenfunctions, and numerical
eigenfunctions of an arbitrary potential. Plane-wave indices are signed and
stored in the order ``0, 1, -1, 2, -2, ...``; the other families use
``0, 1, 2, ...``. Every vector and matrix carries its index layout.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

from . import lattice
from .core.errors import BasisIndexError, DomainError
from .core.fields import Amplitude
from .core.grids import SpatialGrid, SystemParams

ORTHONORMAL_TOL = 1e-8


@dataclass(frozen=True)
class PlaneWaveBox:
    b: float = 1.0

    signed = True

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"box half-width must be positive, got {self.b}")

    def evaluate(self, n, x):
        x = np.asarray(x, dtype=float)
        return np.exp(1j * n * math.pi * x / self.b) / math.sqrt(2.0 * self.b)

    def check_grid(self, grid):
        if not grid.periodic:
            raise DomainError("plane-wave box basis needs a periodic grid")
        if not (math.isclose(grid.x_min, -self.b, rel_tol=1e-12, abs_tol=1e-12)
                and math.isclose(grid.x_max, self.b, rel_tol=1e-12, abs_tol=1e-12)):
            raise DomainError(f"plane-wave box basis lives on [-{self.b}, {self.b}), "
                              f"grid covers [{grid.x_min}, {grid.x_max})")

    def describe(self):
        return {"family": "plane_wave", "b": self.b}


@dataclass(frozen=True)
class HarmonicEigen:
    mass: float = 1.0
    omega: float = 1.0
    alpha: float = 1.0

    signed = False

    def evaluate(self, n, x):
        x = np.asarray(x, dtype=float)
        xi = x * math.sqrt(self.mass * self.omega / self.alpha)
        prev = np.zeros_like(xi)
        cur = (self.mass * self.omega / (math.pi * self.alpha)) ** 0.25 * np.exp(-0.5 * xi**2)
        for k in range(n):
            prev, cur = cur, math.sqrt(2.0 / (k + 1)) * xi * cur - math.sqrt(k / (k + 1)) * prev
        return cur.astype(np.complex128)

    def energy(self, n):
        return self.alpha * self.omega * (n + 0.5)

    def check_grid(self, grid):
        pass

    def describe(self):
        return {"family": "harmonic", "mass": self.mass, "omega": self.omega, "alpha": self.alpha}


@dataclass(frozen=True, eq=False)
class NumericEigen:
    """Eigenfunctions of ``potential`` on ``grid``, solved once and cached."""

    potential: object
    params: SystemParams
    grid: SpatialGrid
    n_states: int = 16

    signed = False

    @cached_property
    def solution(self):
        from .schrodinger import solve_eigenproblem

        return solve_eigenproblem(self.potential, self.params, self.grid, self.n_states)

    def evaluate(self, n, x):
        if n >= self.n_states:
            raise BasisIndexError(f"numeric basis holds {self.n_states} states, asked for {n}")
        return lattice.evaluate(self.solution.states[n], self.grid, x)

    def nodes(self, n):
        return self.solution.states[n]

    def check_grid(self, grid):
        if not grid.same_as(self.grid):
            raise DomainError("numeric eigenbasis was solved on a different grid")

    def describe(self):
        return {"family": "numeric", "potential": self.potential.describe(),
                "mass": self.params.mass, "alpha": self.params.alpha,
                "x_min": self.grid.x_min, "x_max": self.grid.x_max, "n_x": self.grid.n_x,
                "boundary": self.grid.boundary}


@dataclass(frozen=True, eq=False)
class BasisSet:
    family: object
    n_max: int

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")
        if isinstance(self.family, NumericEigen) and self.n_max >= self.family.n_states:
            raise ValueError(f"numeric basis solved for {self.family.n_states} states, n_max={self.n_max}")

    @property
    def indices(self):
        if self.family.signed:
            out = [0]
            for k in range(1, self.n_max + 1):
                out += [k, -k]
            return np.array(out)
        return np.arange(self.n_max + 1)

    @property
    def size(self):
        return len(self.indices)

    def position(self, n):
        n = int(n)
        if self.family.signed:
            if abs(n) > self.n_max:
                raise BasisIndexError(f"index {n} outside |n| <= {self.n_max}")
            return 0 if n == 0 else 2 * abs(n) - (1 if n > 0 else 0)
        if not 0 <= n <= self.n_max:
            raise BasisIndexError(f"index {n} outside 0..{self.n_max}")
        return n

    def evaluate(self, n, x):
        self.position(n)
        return self.family.evaluate(int(n), x)

    def sample(self, grid, n_max=None):
        """Basis functions on the grid nodes, shaped ``(size, n_x)``."""
        idx = self.indices if n_max is None else self.truncated(n_max).indices
        if isinstance(self.family, NumericEigen):
            self.family.check_grid(grid)
            return np.array([self.family.nodes(n) for n in idx], dtype=np.complex128)
        return np.array([self.family.evaluate(n, grid.x) for n in idx])

    def on_lattice(self, grid, factor):
        """Basis functions on the refined lattice ``x_min + j*dx/factor``."""
        if isinstance(self.family, NumericEigen):
            return np.array([lattice.refine(self.family.nodes(n), grid, factor) for n in self.indices])
        xs = grid.x_min + (grid.dx / factor) * np.arange(grid.n_x * factor)
        return np.array([self.family.evaluate(n, xs) for n in self.indices])

    def truncated(self, n_max):
        if n_max > self.n_max:
            raise BasisIndexError(f"cannot truncate to {n_max} > {self.n_max}")
        return BasisSet(self.family, n_max)

    def check_grid(self, grid):
        self.family.check_grid(grid)

    def describe(self):
        d = dict(self.family.describe())
        d["n_max"] = self.n_max
        d["layout"] = "0,1,-1,2,-2,..." if self.family.signed else "0,1,2,..."
        return d

    def descriptor_text(self, prefix="basis"):
        """``key = value`` lines for experiment configs."""
        lines = []
        for key, val in self.describe().items():
            if isinstance(val, dict):
                for k2, v2 in val.items():
                    lines.append(f"{prefix}.{key}.{k2} = {v2}")
            else:
                lines.append(f"{prefix}.{key} = {val}")
        return "\n".join(lines)


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    values: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    t: float = 0.0
    basis: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.complex128)
        idx = np.array(self.indices, dtype=np.int64)
        if v.shape != idx.shape:
            raise ValueError("coefficient and index arrays differ in length")
        v.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "indices", idx)

    def norm2(self):
        return float(np.sum(np.abs(self.values) ** 2))

    def __getitem__(self, n):
        hits = np.nonzero(self.indices == n)[0]
        if len(hits) == 0:
            raise BasisIndexError(f"no coefficient for index {n}")
        return complex(self.values[hits[0]])

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("n,re,im\n")
            for n, a in zip(self.indices, self.values):
                fh.write(f"{int(n)},{a.real:.17g},{a.imag:.17g}\n")


def eval_basis(basis, n, x):
    """Phi_n(x) for a basis index ``n`` (signed for plane waves)."""
    out = basis.evaluate(n, x)
    return complex(out) if np.ndim(out) == 0 else out


def unit_vector(basis, n, t=0.0):
    v = np.zeros(basis.size, dtype=np.complex128)
    v[basis.position(n)] = 1.0
    return CoefficientVector(v, basis.indices, t, basis.describe())


def project_amplitude(basis, psi):
    """Coefficients ``a_n = sum_i conj(Phi_n(x_i)) psi(x_i) dx``."""
    basis.check_grid(psi.grid)
    phi = basis.sample(psi.grid)
    a = phi.conj() @ psi.values * psi.grid.dx
    return CoefficientVector(a, basis.indices, psi.t, basis.describe())


def synthesize_amplitude(coeffs, basis, grid, renorm_tol=1e-12):
    """``psi(x) = sum_n a_n Phi_n(x)`` on ``grid``.

    The result is rescaled only when its norm drifts from one by more than
    ``renorm_tol``; the applied factor is recorded in ``metadata``.
    """
    basis.check_grid(grid)
    pos = [basis.position(n) for n in coeffs.indices]
    phi = basis.sample(grid)[pos]
    values = coeffs.values @ phi
    norm2 = float(np.sum(np.abs(values) ** 2) * grid.dx)
    meta = {}
    if abs(norm2 - 1.0) > renorm_tol and norm2 > 0:
        scale = 1.0 / math.sqrt(norm2)
        values = values * scale
        meta["renormalized_by"] = scale
    return Amplitude(grid, values, coeffs.t, meta)


def gram_matrix(basis, grid):
    phi = basis.sample(grid)
    return phi.conj() @ phi.T * grid.dx


def orthonormality_defect(basis, grid):
    g = gram_matrix(basis, grid)
    return float(np.max(np.abs(g - np.eye(g.shape[0]))))


def default_test_function(grid):
    """Normalized Gaussian at the box centre with standard deviation L/8."""
    centre = grid.x_min + 0.5 * grid.length
    sigma = grid.length / 8.0
    f = np.exp(-((grid.x - centre) ** 2) / (2.0 * sigma**2))
    return f / math.sqrt(np.sum(f**2) * grid.dx)


def completeness_residual(basis, n_max, grid, f=None):
    """Sup-norm error of the truncated projector ``sum_{|n|<=n_max} Phi_n <Phi_n, f>``.

    ``f`` defaults to :func:`default_test_function`; it may also be an array
    of samples or a callable of x. On a grid the projector converges to the
    identity on band-limited functions; the distributional delta of the
    continuum completeness relation has no grid counterpart.
    """
    basis.check_grid(grid)
    if f is None:
        fv = default_test_function(grid)
    elif callable(f):
        fv = np.asarray(f(grid.x), dtype=np.complex128)
    else:
        fv = np.asarray(f, dtype=np.complex128)
    phi = basis.sample(grid, n_max=n_max)
    approx = phi.T @ (phi.conj() @ fv * grid.dx)
    return float(np.max(np.abs(approx - fv)))
