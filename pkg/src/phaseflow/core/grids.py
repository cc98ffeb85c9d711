"""Physical parameters and uniform grids in x and (x, p)."""

from dataclasses import dataclass
import math

import numpy as np

from .errors import GridValidationError

PERIODIC = "periodic"
VANISHING = "vanishing"
BOUNDARIES = (PERIODIC, VANISHING)


def is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and n > 0 and (int(n) & (int(n) - 1)) == 0


@dataclass(frozen=True)
class SystemParams:
    """Particle mass and the action constant ``alpha`` (natural units by default)."""

    mass: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.mass) and self.mass > 0):
            raise GridValidationError(f"mass must be positive, got {self.mass}")
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise GridValidationError(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform x grid ``x_i = x_min + i*dx`` for ``i < n_x``; ``x_max`` is excluded.

    With ``boundary="vanishing"`` the amplitude is pinned to zero at
    ``x_min`` and at the (unstored) ``x_max``.
    """

    x_min: float
    x_max: float
    n_x: int
    boundary: str = PERIODIC

    def __post_init__(self):
        if not is_power_of_two(self.n_x) or self.n_x < 8:
            raise GridValidationError(f"n_x must be a power of two >= 8, got {self.n_x}")
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)) or self.x_max <= self.x_min:
            raise GridValidationError(f"need x_min < x_max, got [{self.x_min}, {self.x_max})")
        if self.boundary not in BOUNDARIES:
            raise GridValidationError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        object.__setattr__(self, "n_x", int(self.n_x))

    @classmethod
    def centered(cls, length, n_x, boundary=PERIODIC):
        return cls(-0.5 * length, 0.5 * length, n_x, boundary)

    @property
    def length(self):
        return self.x_max - self.x_min

    @property
    def dx(self):
        return self.length / self.n_x

    @property
    def x(self):
        return self.x_min + self.dx * np.arange(self.n_x)

    @property
    def periodic(self):
        return self.boundary == PERIODIC

    def same_as(self, other):
        return (
            self.n_x == other.n_x
            and self.boundary == other.boundary
            and math.isclose(self.x_min, other.x_min, rel_tol=1e-12, abs_tol=1e-12)
            and math.isclose(self.x_max, other.x_max, rel_tol=1e-12, abs_tol=1e-12)
        )


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """(x, p) grid whose momentum axis is conjugate to the half-offset y axis.

    The kernel ``exp(2ipy/alpha)`` fixes ``dp = pi*alpha/L`` with ``L`` the
    box length; the y samples are ``(k - n_p/2)*L/n_p`` and span one box.
    Arrays on this grid are shaped ``(n_p, n_x)``.
    """

    spatial: SpatialGrid
    n_p: int
    alpha: float = 1.0

    def __post_init__(self):
        if not is_power_of_two(self.n_p) or self.n_p < 8:
            raise GridValidationError(f"n_p must be a power of two >= 8, got {self.n_p}")
        if not self.alpha > 0:
            raise GridValidationError(f"alpha must be positive, got {self.alpha}")
        object.__setattr__(self, "n_p", int(self.n_p))

    @classmethod
    def balanced(cls, n, params=None, boundary=VANISHING, n_p=None):
        """Square grid with ``x_max == p_max`` for ``n_p = n_x = n``."""
        alpha = params.alpha if params is not None else 1.0
        n_p = n if n_p is None else n_p
        length = math.sqrt(n_p * math.pi * alpha)
        return cls(SpatialGrid.centered(length, n, boundary), n_p, alpha)

    @property
    def n_x(self):
        return self.spatial.n_x

    @property
    def dx(self):
        return self.spatial.dx

    @property
    def x(self):
        return self.spatial.x

    @property
    def dp(self):
        return math.pi * self.alpha / self.spatial.length

    @property
    def p_max(self):
        return 0.5 * self.n_p * self.dp

    @property
    def p_min(self):
        return -self.p_max

    @property
    def p(self):
        return (np.arange(self.n_p) - self.n_p // 2) * self.dp

    @property
    def dy(self):
        return self.spatial.length / self.n_p

    @property
    def y(self):
        return (np.arange(self.n_p) - self.n_p // 2) * self.dy

    @property
    def shape(self):
        return (self.n_p, self.n_x)

    @property
    def cell(self):
        return self.dx * self.dp

    def mesh(self):
        """``(X, P)`` arrays shaped like a field on this grid."""
        return np.meshgrid(self.x, self.p)

    def check_conjugate(self, alpha, rtol=1e-12):
        if not math.isclose(self.alpha, alpha, rel_tol=rtol):
            raise GridValidationError(
                f"phase-space grid built for alpha={self.alpha} is not conjugate to alpha={alpha}"
            )

    def same_as(self, other):
        return (
            self.spatial.same_as(other.spatial)
            and self.n_p == other.n_p
            and math.isclose(self.alpha, other.alpha, rel_tol=1e-12)
        )
