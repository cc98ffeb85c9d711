"""The alpha-parameterized phase-space transform and the W_mn algebra.

Discrete conventions (``g`` a :class:`PhaseSpaceGrid`, ``L`` the box length):

* y samples ``y_k = (k - n_p/2) L/n_p`` and momenta ``p_l = (l - n_p/2) pi alpha/L``
  form a DFT pair under ``exp(-2ipy/alpha)``.
* ``x_j +- y_k`` fall on a lattice of spacing ``min(dx, dy)``. When
  ``dy < dx`` the amplitude is first interpolated onto that lattice
  (band-limited for periodic grids, cubic spline otherwise).
* Periodic grids wrap ``x +- y`` around the box; vanishing grids treat the
  amplitude as zero outside ``[x_min, x_max)``, which avoids mirror images
  of localized states at ``x + L/2``.

With these choices the p-marginal of the transform reproduces ``|psi|^2``
exactly and ``T[W]`` inverts the forward transform exactly.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np

from . import lattice
from .basis import CoefficientVector
from .core.errors import (
    DegenerateInputError,
    GridValidationError,
    HermiticityError,
)
from .core.fields import Amplitude, PhaseDistribution, TransformField

HERMITICITY_TOL = 1e-8


# ---------------------------------------------------------------------------
# lattice bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Plan:
    factor: int  # refined lattice points per dx
    minus: np.ndarray  # lattice index of x_j - y_k, shape (n_p, n_x)
    plus: np.ndarray
    valid_minus: np.ndarray
    valid_plus: np.ndarray
    n_ref: int


@lru_cache(maxsize=16)
def _plan(grid):
    n_x, n_p = grid.n_x, grid.n_p
    if n_p >= n_x:
        factor, sx, sy = n_p // n_x, n_p // n_x, 1
    else:
        factor, sx, sy = 1, 1, n_x // n_p
    n_ref = n_x * factor
    j = np.arange(n_x) * sx
    k = (np.arange(n_p) - n_p // 2) * sy
    minus = j[None, :] - k[:, None]
    plus = j[None, :] + k[:, None]
    if grid.spatial.periodic:
        minus %= n_ref
        plus %= n_ref
        vm = np.ones_like(minus, dtype=bool)
        vp = vm
    else:
        vm = (minus >= 0) & (minus < n_ref)
        vp = (plus >= 0) & (plus < n_ref)
        minus = np.clip(minus, 0, n_ref - 1)
        plus = np.clip(plus, 0, n_ref - 1)
    for arr in (minus, plus, vm, vp):
        arr.setflags(write=False)
    return _Plan(factor, minus, plus, vm, vp, n_ref)


def _gather(ref, plan):
    """``ref`` (..., n_ref) -> values at x - y and x + y, each (..., n_p, n_x)."""
    vm = np.where(plan.valid_minus, ref[..., plan.minus], 0.0)
    vp = np.where(plan.valid_plus, ref[..., plan.plus], 0.0)
    return vm, vp


def _y_to_p(t_values, grid):
    """(1/pi alpha) sum_k T(x, y_k) exp(-2 i p y_k / alpha) dy."""
    shifted = np.fft.ifftshift(t_values, axes=-2)
    spec = np.fft.fftshift(np.fft.fft(shifted, axis=-2), axes=-2)
    return spec * (grid.dy / (math.pi * grid.alpha))


def _p_to_y(w_values, grid):
    """sum_l W(x, p_l) exp(2 i p_l y / alpha) dp."""
    shifted = np.fft.ifftshift(w_values, axes=-2)
    spec = np.fft.fftshift(np.fft.ifft(shifted, axis=-2), axes=-2)
    return spec * (grid.dp * grid.n_p)


def _check_grid(grid, params):
    grid.check_conjugate(params.alpha)


def _amplitude_lattice(psi, grid):
    if not psi.grid.same_as(grid.spatial):
        raise GridValidationError("amplitude grid differs from the phase-space grid's x axis")
    return lattice.refine(psi.values, grid.spatial, _plan(grid).factor)


# ---------------------------------------------------------------------------
# forward / inverse transforms
# ---------------------------------------------------------------------------


def cross_transform(f_ref, g_ref, grid):
    """conj(f(x - y)) g(x + y) on the (y, x) grid from refined-lattice samples."""
    plan = _plan(grid)
    fm, _ = _gather(f_ref, plan)
    _, gp = _gather(g_ref, plan)
    return np.conj(fm) * gp


def amplitude_product(psi, grid):
    """conj(psi(x - y)) psi(x + y) on the (y, x) samples of ``grid``."""
    ref = _amplitude_lattice(psi, grid)
    return cross_transform(ref, ref, grid)


def wigner_of_amplitude(psi, params, grid, tol=1e-8):
    """Q(x, p) = (1/pi alpha) sum_y conj(psi(x - y)) psi(x + y) exp(-2ipy/alpha) dy."""
    _check_grid(grid, params)
    psi.require_normalized(tol)
    q = _y_to_p(amplitude_product(psi, grid), grid)
    return PhaseDistribution(grid, q, psi.t, {"source": "wigner_of_amplitude"})


def wigner_of_pair(basis, m, n, params, grid):
    """W_mn(x, p) built from basis functions ``Phi_m``, ``Phi_n`` (may be complex or negative)."""
    _check_grid(grid, params)
    basis.check_grid(grid.spatial)
    basis.position(m)
    basis.position(n)
    ref = basis.on_lattice(grid.spatial, _plan(grid).factor)
    fm = ref[basis.position(m)]
    fn = ref[basis.position(n)]
    w = _y_to_p(cross_transform(fm, fn, grid), grid)
    return PhaseDistribution(grid, w, 0.0, {"source": "wigner_of_pair", "m": int(m), "n": int(n)})


def wmn_stack(basis, params, grid):
    """All W_mn as an array shaped ``(K, K, n_p, n_x)`` in basis storage order."""
    _check_grid(grid, params)
    basis.check_grid(grid.spatial)
    plan = _plan(grid)
    ref = basis.on_lattice(grid.spatial, plan.factor)
    am, bp = _gather(ref, plan)
    return _y_to_p(np.conj(am)[:, None] * bp[None, :], grid)


def inverse_transform(w, params):
    """T[W](x, y) = sum_p W(x, p) exp(2ipy/alpha) dp on the conjugate y samples."""
    _check_grid(w.grid, params)
    return TransformField(w.grid, _p_to_y(w.values, w.grid), w.t, {"source": "inverse_transform"})


def forward_transform(t_field):
    """Inverse of :func:`inverse_transform`."""
    return PhaseDistribution(t_field.grid, _y_to_p(t_field.values, t_field.grid), t_field.t)


# ---------------------------------------------------------------------------
# factorization T(x, y) = conj(Psi(x - y)) Psi(x + y)
# ---------------------------------------------------------------------------


def _fourier_shift(u, frac):
    """Band-limited shift of periodic samples by ``frac`` of a sample spacing."""
    m = len(u)
    nu = np.fft.fftfreq(m) * m
    ph = np.exp(2j * math.pi * nu * frac / m)
    if m % 2 == 0:
        ph[m // 2] = math.cos(math.pi * frac)
    return np.fft.ifft(np.fft.fft(u) * ph)


def factorize_amplitude(t_field, density_floor=None):
    """Rebuild Psi from T via ``Psi(x_r + 2y) = T(x_r + y, y) / conj(Psi(x_r))``.

    The anchor ``x_r`` is the density maximum (smallest x on ties) and
    ``Psi(x_r)`` is taken real and positive. On-node pairs only couple nodes
    whose separation is an even multiple of the y stride, so each residue
    class gets its own anchor; classes are then phase-aligned by band-limited
    interpolation of the anchor class. ``residual`` is the largest
    ``|T - conj(Psi(x-y)) Psi(x+y)|`` over node pairs whose densities both
    exceed ``density_floor`` (default ``1e-6 * max density``).
    """
    g = t_field.grid
    n_x, n_p = g.n_x, g.n_p
    periodic = g.spatial.periodic
    tv = t_field.values
    rho = t_field.diagonal().real.copy()
    floor = 1e-6 * float(rho.max()) if density_floor is None else float(density_floor)
    r = int(np.argmax(rho))
    if not rho[r] >= floor or rho[r] <= 0:
        raise DegenerateInputError(f"peak density {rho[r]:.3g} is below the floor {floor:.3g}")

    if n_p >= n_x:
        stride, fy = 1, n_p // n_x
    else:
        stride, fy = n_x // n_p, 1
    period = 2 * stride
    h = n_p // 2

    def y_index(m):
        return h + m * fy

    psi = np.zeros(n_x, dtype=np.complex128)
    nodes = np.arange(n_x)
    anchors = {}
    for q in range(period):
        members = nodes[nodes % period == q]
        a = int(members[np.argmax(rho[members])])
        anchors[q] = a
        if rho[a] <= 0:
            continue
        scale = 1.0 / math.sqrt(rho[a])
        d = members - a
        if periodic:
            d = (d + n_x // 2) % n_x - n_x // 2
        m = d // period
        mid = a + m * stride
        if periodic:
            mid %= n_x
        psi[members] = tv[y_index(m), mid] * scale

    q0 = r % period
    for q in range(period):
        if q == q0 or rho[anchors[q]] <= 0:
            continue
        ref = _fourier_shift(psi[q0::period], (q - q0) / period)
        cur = psi[q::period]
        weight = rho[q::period] > floor
        z = np.vdot(ref[weight], cur[weight]) if weight.any() else np.vdot(ref, cur)
        if abs(z) > 0:
            psi[q::period] = cur * np.exp(-1j * np.angle(z))

    plan = _plan(g)
    f = plan.factor
    on_node = (plan.minus % f == 0) & (plan.plus % f == 0) & plan.valid_minus & plan.valid_plus
    im = plan.minus // f
    ip = plan.plus // f
    model = np.conj(psi[im]) * psi[ip]
    keep = on_node & (rho[im] > floor) & (rho[ip] > floor)
    residual = float(np.max(np.abs(tv - model)[keep])) if keep.any() else 0.0

    amp = Amplitude(g.spatial, psi, t_field.t, {
        "anchor_x": float(g.x[r]), "density_floor": floor, "factorization_residual": residual,
    })
    return amp, residual


# ---------------------------------------------------------------------------
# expansion in W_mn
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    """C_mn over a basis; rows and columns follow ``indices``."""

    values: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    t: float = 0.0
    basis: dict = field(default_factory=dict, repr=False)
    reconstruction_residual: float = float("nan")

    def __post_init__(self):
        v = np.array(self.values, dtype=np.complex128)
        idx = np.array(self.indices, dtype=np.int64)
        if v.shape != (len(idx), len(idx)):
            raise ValueError(f"coefficient matrix shape {v.shape} does not match {len(idx)} indices")
        v.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "indices", idx)

    def trace(self):
        return complex(np.trace(self.values))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("m,n,re,im\n")
            for a, m in enumerate(self.indices):
                for b, n in enumerate(self.indices):
                    c = self.values[a, b]
                    fh.write(f"{int(m)},{int(n)},{c.real:.17g},{c.imag:.17g}\n")

    @classmethod
    def pure(cls, coeffs):
        """C_mn = conj(a_m) a_n from a coefficient vector."""
        a = coeffs.values
        return cls(np.outer(np.conj(a), a), coeffs.indices, coeffs.t, coeffs.basis)


def _pair_stacks(basis, grid):
    plan = _plan(grid)
    ref = basis.on_lattice(grid.spatial, plan.factor)
    return _gather(ref, plan)


def wmn_synthesize(c, basis, params, grid):
    """W = sum_mn C_mn W_mn."""
    _check_grid(grid, params)
    basis.check_grid(grid.spatial)
    am, bp = _pair_stacks(basis, grid)
    pos = [basis.position(n) for n in c.indices]
    am = am[pos].reshape(len(pos), -1)
    bp = bp[pos].reshape(len(pos), -1)
    t = np.sum(np.conj(am) * (c.values @ bp), axis=0).reshape(grid.shape)
    return PhaseDistribution(grid, _y_to_p(t, grid), c.t, {"source": "wmn_synthesize"})


def expand_in_wmn(w, basis, params):
    """C_rs = <W_rs, W> / <W_rs, W_rs> with ``<A, B> = sum conj(A) B dx dp``.

    The W_mn are mutually orthogonal. Their common norm is ``1/(pi alpha)``
    when y spans a full period of a periodic box (each (x - y, x + y) pair is
    reached twice) and ``1/(2 pi alpha)`` for states confined inside the box,
    so dividing by the discrete norm gives coefficients whose synthesis
    reproduces W in both cases. Parseval over p turns both inner products
    into sums over (x, y) against T[W], which avoids building every W_rs.
    """
    grid = w.grid
    _check_grid(grid, params)
    basis.check_grid(grid.spatial)
    am, bp = _pair_stacks(basis, grid)
    k = basis.size
    tw = _p_to_y(w.values, grid)
    am = am.reshape(k, -1)
    bp = bp.reshape(k, -1)
    overlap = (am * tw.reshape(1, -1)) @ np.conj(bp).T
    norms = (np.abs(am) ** 2) @ (np.abs(bp) ** 2).T
    if np.any(norms <= 0):
        raise DegenerateInputError("a basis pair has no support on this grid")
    c = overlap / norms

    t_rec = np.sum(np.conj(am) * (c @ bp), axis=0).reshape(grid.shape)
    w_rec = _y_to_p(t_rec, grid)
    denom = float(np.sqrt(np.sum(np.abs(w.values) ** 2)))
    resid = float(np.sqrt(np.sum(np.abs(w.values - w_rec) ** 2))) / denom if denom > 0 else 0.0
    return CoefficientMatrix(c, basis.indices, w.t, basis.describe(), resid)


def phase_space_inner(w1, w2):
    """sum conj(W1) W2 dx dp on a shared grid."""
    a = w1.values if isinstance(w1, PhaseDistribution) else np.asarray(w1)
    b = w2.values if isinstance(w2, PhaseDistribution) else np.asarray(w2)
    grid = w1.grid if isinstance(w1, PhaseDistribution) else w2.grid
    return complex(np.sum(np.conj(a) * b) * grid.cell)


def hermiticity_residual(c):
    """max |C - C^dagger|."""
    v = c.values if isinstance(c, CoefficientMatrix) else np.asarray(c)
    return float(np.max(np.abs(v - v.conj().T)))


def purity_decomposition(c, tol=HERMITICITY_TOL):
    """Dominant-eigenpair factor ``a`` with ``C ~ conj(a_m) a_n`` and the purity defect.

    ``purity_defect = 1 - lambda_max / Tr C``; it is zero exactly when C has
    rank one. The returned vector is gauge-fixed so its largest component
    is real and positive.
    """
    res = hermiticity_residual(c)
    if res > tol:
        raise HermiticityError(f"coefficient matrix is not Hermitian (residual {res:.3g})")
    v = c.values
    herm = 0.5 * (v + v.conj().T)
    lam, vecs = np.linalg.eigh(herm)
    lam_max = float(lam[-1])
    tr = float(np.real(np.trace(herm)))
    if not tr > 0:
        raise DegenerateInputError(f"coefficient matrix trace {tr:.3g} is not positive")
    a = np.conj(vecs[:, -1]) * math.sqrt(max(lam_max, 0.0))
    big = int(np.argmax(np.abs(a)))
    if abs(a[big]) > 0:
        a = a * np.exp(-1j * np.angle(a[big]))
    defect = min(max(1.0 - lam_max / tr, 0.0), 1.0)
    return CoefficientVector(a, c.indices, c.t, c.basis), defect
