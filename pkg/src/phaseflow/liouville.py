"""Classical phase-space dynamics under ``dW/dt + (p/M) dW/dx + F dW/dp = 0``.

Two independent solvers share the same velocity-Verlet stepper:

* trajectory ensembles that sample W0 and push each point forward;
* a semi-Lagrangian grid solver that traces the characteristic through every
  output node back to t = 0 and reads W0 there with a cubic B-spline.

The grid solver interpolates W0 exactly once per snapshot, however many
steps the characteristic takes, so interpolation error does not accumulate.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
import scipy.linalg
import scipy.ndimage
from scipy.special import ndtri
from scipy.stats import qmc

from . import kernels
from .core.errors import (
    AccuracyWarning,
    DivergenceError,
    DomainError,
    GridValidationError,
    NormalizationError,
)
from .core.fields import PhaseDistribution

DEFAULT_DT = 5e-5
OUT_OF_BOUNDS_WARN = 0.01
OUT_OF_BOUNDS_FAIL = 0.20
MASS_LOSS_FAIL = 0.01
RENORM_TOL = 1e-10
DOMAIN_MASS_TOL = 1e-6
NEGATIVE_MASS_TOL = 1e-6


def _steps(t, dt):
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    n = math.ceil(t / dt - 1e-9) if t > 0 else 0
    return n, (t / n if n else 0.0)


def _run_verlet(x, p, potential, params, h, n):
    kind, coeffs, table, x0, th, tper = potential.force_encoding()
    status = np.full(x.shape[0], -1, dtype=np.int64)
    kernels.verlet(x, p, params.mass, h, n, kind, coeffs, table, x0, th, tper, status)
    return status


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


def integrate_trajectory(x0, p0, potential, params, t, dt=DEFAULT_DT):
    """Velocity-Verlet solution of ``M x'' = F(x)`` at time ``t``.

    The step is shrunk to ``t / ceil(t / dt)`` so the trajectory lands on t.
    """
    n, h = _steps(t, dt)
    x = np.array([float(x0)])
    p = np.array([float(p0)])
    if n == 0:
        return float(x[0]), float(p[0])
    status = _run_verlet(x, p, potential, params, h, n)
    if status[0] >= 0:
        raise DivergenceError(
            f"trajectory from ({x0}, {p0}) became non-finite at step {status[0]}",
            state=(float(x[0]), float(p[0]), status[0] * h),
        )
    return float(x[0]), float(p[0])


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    """Weighted phase points: initial (x0, p0), current (x, p) at time ``t``."""

    x0: np.ndarray = field(repr=False)
    p0: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    potential: object = None
    params: object = None
    t: float = 0.0
    metadata: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name in ("x0", "p0", "weights", "x", "p"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.x0.shape == self.p0.shape == self.weights.shape == self.x.shape == self.p.shape):
            raise ValueError("ensemble arrays differ in length")
        total = float(self.weights.sum())
        if abs(total - 1.0) > 1e-12:
            raise NormalizationError(f"ensemble weights sum to {total!r}, expected 1")

    def __len__(self):
        return self.x.shape[0]

    def energies(self, initial=False):
        x, p = (self.x0, self.p0) if initial else (self.x, self.p)
        return p**2 / (2.0 * self.params.mass) + self.potential.value(x)

    def energy_drift(self):
        """Per-sample ``|E(t) - E(0)| / max(|E(0)|, 1)``."""
        e0 = self.energies(initial=True)
        return np.abs(self.energies() - e0) / np.maximum(np.abs(e0), 1.0)

    def mean(self):
        w = self.weights
        return float(w @ self.x), float(w @ self.p)

    def to_csv(self, path):
        data = np.column_stack([self.x0, self.p0, self.weights, self.x, self.p])
        np.savetxt(path, data, delimiter=",", header="x0,p0,weight,x,p", comments="", fmt="%.17g")


# ---------------------------------------------------------------------------
# samplers of W0
# ---------------------------------------------------------------------------


def _unit_points(n, seed, method):
    if method == "sobol":
        engine = qmc.Sobol(d=2, scramble=True, seed=seed)
        with warnings.catch_warnings():
            # non power-of-two sizes lose the balance property, not correctness
            warnings.simplefilter("ignore", UserWarning)
            u = engine.random(n)
    elif method == "random":
        u = np.random.default_rng(seed).random((n, 2))
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    return np.clip(u, 1e-16, 1.0 - 1e-16)


@dataclass(frozen=True)
class GaussianSampler:
    """Uncorrelated Gaussian W0 mapped from unit points through the inverse normal CDF."""

    x0: float = 0.0
    p0: float = 0.0
    sigma_x: float = 1.0
    sigma_p: float = 1.0
    method: str = "sobol"

    def sample(self, n, seed=0):
        u = _unit_points(n, seed, self.method)
        x = self.x0 + self.sigma_x * ndtri(u[:, 0])
        p = self.p0 + self.sigma_p * ndtri(u[:, 1])
        return x, p, np.full(n, 1.0 / n)

    def density(self, x, p):
        zx = (np.asarray(x) - self.x0) / self.sigma_x
        zp = (np.asarray(p) - self.p0) / self.sigma_p
        return np.exp(-0.5 * (zx**2 + zp**2)) / (2.0 * math.pi * self.sigma_x * self.sigma_p)

    @classmethod
    def coherent(cls, x0, p0, potential_k, params, method="sobol"):
        """The classical density matching a harmonic coherent state's Wigner function."""
        omega = math.sqrt(potential_k / params.mass)
        sx = math.sqrt(params.alpha / (2.0 * params.mass * omega))
        sp = math.sqrt(params.alpha * params.mass * omega / 2.0)
        return cls(x0, p0, sx, sp, method)


@dataclass(frozen=True, eq=False)
class GridSampler:
    """Samples a non-negative gridded W0: a cell by inverse CDF, then a uniform point in it.

    Negative round-off carrying at most ``NEGATIVE_MASS_TOL`` of the total
    mass is clipped; anything larger is a genuine quasi-probability and fails.
    """

    w: PhaseDistribution
    method: str = "sobol"

    def sample(self, n, seed=0):
        vals = self.w.values.real
        neg = float(np.sum(np.clip(-vals, 0.0, None)))
        if neg > NEGATIVE_MASS_TOL * float(np.sum(np.abs(vals))):
            raise DomainError("cannot sample a distribution with negative values")
        prob = np.clip(vals, 0.0, None).ravel()
        cdf = np.cumsum(prob)
        cdf /= cdf[-1]
        u = _unit_points(n, seed, self.method)
        rng = np.random.default_rng(None if seed is None else seed + 1)
        cells = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), prob.size - 1)
        i, j = np.divmod(cells, self.w.grid.n_x)
        g = self.w.grid
        jitter = rng.random((n, 2)) - 0.5
        x = g.x[j] + jitter[:, 0] * g.dx
        p = g.p[i] + jitter[:, 1] * g.dp
        return x, p, np.full(n, 1.0 / n)


@dataclass(frozen=True)
class DeltaSampler:
    """Every sample at the same phase point (a single trajectory when n = 1)."""

    x0: float = 0.0
    p0: float = 0.0

    def sample(self, n, seed=0):
        return np.full(n, float(self.x0)), np.full(n, float(self.p0)), np.full(n, 1.0 / n)


def evolve_ensemble(sampler, n_samples, potential, params, t, dt=DEFAULT_DT, seed=0):
    """Draw ``n_samples`` points from ``sampler`` and advance each to time ``t``."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    x0, p0, w = sampler.sample(int(n_samples), seed)
    w = np.asarray(w, dtype=float)
    w = w / w.sum()
    x = np.array(x0, dtype=float)
    p = np.array(p0, dtype=float)
    n, h = _steps(t, dt)
    if n:
        status = _run_verlet(x, p, potential, params, h, n)
        bad = np.nonzero(status >= 0)[0]
        if bad.size:
            raise DivergenceError(
                f"{bad.size} of {n_samples} trajectories diverged (first index {bad[0]})",
                state={"indices": bad, "steps": status[bad], "x": x, "p": p},
            )
    meta = {"dt": h, "n_steps": n, "n_samples": int(n_samples), "seed": seed,
            "sampler": type(sampler).__name__}
    return TrajectoryEnsemble(x0, p0, w, x, p, potential, params, t, meta)


# ---------------------------------------------------------------------------
# ensemble -> grid
# ---------------------------------------------------------------------------


def scott_bandwidth(n_eff):
    """Scott's rule for a 2-D Gaussian kernel in standardized units."""
    return float(n_eff) ** (-1.0 / 6.0)


def ensemble_to_grid(ensemble, grid, method="histogram", bandwidth=None):
    """Grid density from an ensemble: cell-centred histogram or Gaussian KDE.

    The KDE uses an isotropic kernel of width ``bandwidth`` in coordinates
    standardized by the weighted sample spread; it is evaluated by linear
    binning followed by a Gaussian filter. ``bandwidth`` defaults to Scott's
    rule on the effective sample size.
    """
    g = grid
    x = np.asarray(ensemble.x)
    if g.spatial.periodic:
        x = (x - g.spatial.x_min) % g.spatial.length + g.spatial.x_min
    w = np.asarray(ensemble.weights)
    scheme = "nearest" if method == "histogram" else "linear"
    if method not in ("histogram", "kde"):
        raise ValueError(f"unknown density method {method!r}")
    counts, lost = kernels.bin_particles(x, ensemble.p, w, g.x[0], g.dx, g.n_x, g.p[0], g.dp, g.n_p,
                                         g.spatial.periodic, scheme)
    total = float(w.sum())
    frac = lost / total if total > 0 else 0.0
    if frac > OUT_OF_BOUNDS_FAIL:
        raise DomainError(f"{100 * frac:.1f}% of ensemble weight lies outside the grid")
    meta = {"method": method, "out_of_bounds_fraction": frac, "t": ensemble.t}
    if frac > OUT_OF_BOUNDS_WARN:
        meta["warning"] = f"{100 * frac:.2f}% of ensemble weight outside grid bounds"
    if method == "kde":
        mx, mp = ensemble.mean()
        sx = math.sqrt(max(float(w @ (x - mx) ** 2) / total, 0.0))
        sp = math.sqrt(max(float(w @ (ensemble.p - mp) ** 2) / total, 0.0))
        n_eff = total**2 / float(w @ w)
        h = scott_bandwidth(n_eff) if bandwidth is None else float(bandwidth)
        sigma = (h * sp / g.dp, h * sx / g.dx)
        modes = ("constant", "wrap" if g.spatial.periodic else "constant")
        counts = scipy.ndimage.gaussian_filter(counts, sigma, mode=modes, truncate=5.0)
        meta["bandwidth"] = h
    counts = np.clip(counts, 0.0, None)
    mass = counts.sum()
    if mass <= 0:
        raise DomainError("no ensemble weight landed on the grid")
    return PhaseDistribution(grid, counts / (mass * g.cell), ensemble.t, meta)


# ---------------------------------------------------------------------------
# semi-Lagrangian grid solver
# ---------------------------------------------------------------------------


def _prefilter_zero(values, axis):
    """Cubic B-spline coefficients with zero coefficients beyond both ends."""
    n = values.shape[axis]
    ab = np.empty((3, n))
    ab[0] = 1.0 / 6.0
    ab[1] = 4.0 / 6.0
    ab[2] = 1.0 / 6.0
    moved = np.moveaxis(values, axis, 0)
    out = scipy.linalg.solve_banded((1, 1), ab, moved.reshape(n, -1)).reshape(moved.shape)
    return np.moveaxis(out, 0, axis)


def bspline_coefficients(values, wrap_x):
    """Coefficients for :func:`phaseflow.kernels.bspline3_gather` interpolating ``values``."""
    c = _prefilter_zero(np.asarray(values, dtype=float), 0)
    if wrap_x:
        return scipy.ndimage.spline_filter1d(c, order=3, axis=1, mode="grid-wrap")
    return _prefilter_zero(c, 1)


def energy_ceiling(w0, potential, params, mass_tol=DOMAIN_MASS_TOL):
    """Smallest E such that cells above E hold at most ``mass_tol`` of ``|W0|``."""
    g = w0.grid
    xx, pp = g.mesh()
    e = (pp**2 / (2.0 * params.mass) + potential.value(xx)).ravel()
    a = np.abs(w0.values).ravel()
    order = np.argsort(e)
    cum = np.cumsum(a[order])
    total = cum[-1]
    if total <= 0:
        return float(e.min())
    k = int(np.searchsorted(cum, (1.0 - mass_tol) * total))
    return float(e[order[min(k, e.size - 1)]])


def check_momentum_domain(w0, potential, params, mass_tol=DOMAIN_MASS_TOL):
    """Require ``p_max >= sqrt(2M (E_max - V_min))`` for the energy ceiling of W0."""
    g = w0.grid
    e_max = energy_ceiling(w0, potential, params, mass_tol)
    v_min = float(np.min(potential.value(g.x)))
    need = math.sqrt(max(2.0 * params.mass * (e_max - v_min), 0.0))
    if need > g.p_max:
        raise DomainError(
            f"momentum grid too small: energy ceiling {e_max:.4g} needs |p| up to {need:.4g}, "
            f"grid reaches {g.p_max:.4g}"
        )
    return need


class CharacteristicSolver:
    """Backward characteristics from every grid node, advanced incrementally.

    ``feet`` holds the t = 0 preimage of each node under ``n`` Verlet steps of
    size ``h``; calling :meth:`advance` appends more steps without retracing.
    """

    def __init__(self, w0, potential, params, h, clip=None, renorm_tol=RENORM_TOL):
        g = w0.grid
        if not w0.is_real(1e-10):
            raise DomainError("grid solver needs a real initial distribution")
        self.w0 = w0
        self.grid = g
        self.potential = potential
        self.params = params
        self.h = float(h)
        real = w0.values.real
        self.mass0 = float(real.sum() * g.cell)
        self.clip = bool(np.min(real) >= -1e-12 * np.max(np.abs(real))) if clip is None else bool(clip)
        self.renorm_tol = renorm_tol
        self.coeffs = bspline_coefficients(real, g.spatial.periodic)
        xx, pp = g.mesh()
        self.x = np.ascontiguousarray(xx.ravel())
        self.p = np.ascontiguousarray(pp.ravel())
        self.n = 0

    def advance(self, n_steps):
        if n_steps:
            status = _run_verlet(self.x, self.p, self.potential, self.params, -self.h, n_steps)
            if np.any(status >= 0):
                raise DivergenceError("backward characteristic became non-finite",
                                      state={"nodes": np.nonzero(status >= 0)[0]})
            self.n += n_steps

    def snapshot(self):
        g = self.grid
        ix = (self.x - g.spatial.x_min) / g.dx
        if g.spatial.periodic:
            ix = np.mod(ix, g.n_x)
        ip = (self.p - g.p_min) / g.dp
        vals = kernels.bspline3_gather(self.coeffs, ip, ix, g.spatial.periodic).reshape(g.shape)
        mass = float(vals.sum() * g.cell)
        deficit = (self.mass0 - mass) / self.mass0 if self.mass0 else 0.0
        if deficit > MASS_LOSS_FAIL:
            raise DomainError(
                f"characteristics left the phase-space domain carrying {100 * deficit:.2f}% of the mass"
            )
        clipped = 0.0
        if self.clip:
            neg = vals < 0
            clipped = float(-vals[neg].sum() * g.cell)
            vals = np.where(neg, 0.0, vals)
        mass_now = float(vals.sum() * g.cell)
        drift = mass_now - self.mass0
        renorm = abs(drift) > self.renorm_tol * abs(self.mass0) and mass_now > 0
        if renorm:
            vals = vals * (self.mass0 / mass_now)
        meta = {"source": "evolve_grid", "dt": self.h, "n_steps": self.n, "mass_drift": drift,
                "clipped_mass": clipped, "renormalized": bool(renorm)}
        return PhaseDistribution(g, vals, self.w0.t + self.n * self.h, meta)


def _prepare(w0, potential, params, check_domain):
    w0.require_normalized()
    if check_domain:
        check_momentum_domain(w0, potential, params)


def evolve_grid(w0, potential, params, t, dt, clip=None, check_domain=True):
    """W(x, p, t) = W0 at the foot of the backward Verlet characteristic.

    ``clip`` defaults to clipping negative values only when W0 itself is
    non-negative; quasi-probabilities keep their sign. Metadata records the
    mass drift, the clipped mass and whether the result was renormalized.
    """
    _prepare(w0, potential, params, check_domain)
    n, h = _steps(t, dt)
    solver = CharacteristicSolver(w0, potential, params, h, clip)
    solver.advance(n)
    return solver.snapshot()


def evolve_grid_series(w0, potential, params, dt, n_steps, every=1, clip=None, check_domain=True):
    """Snapshots at ``t0 + k * every * dt`` for ``k = 0 .. n_steps // every``."""
    if every < 1 or n_steps < 0:
        raise ValueError("every must be >= 1 and n_steps >= 0")
    _prepare(w0, potential, params, check_domain)
    solver = CharacteristicSolver(w0, potential, params, dt, clip)
    out = [solver.snapshot()]
    done = 0
    while done + every <= n_steps:
        solver.advance(every)
        done += every
        out.append(solver.snapshot())
    return out


# ---------------------------------------------------------------------------
# residuals and correction terms
# ---------------------------------------------------------------------------

_FD = {
    2: ((1, 0.5),),
    4: ((1, 2.0 / 3.0), (2, -1.0 / 12.0)),
}


def _derivative(values, h, axis, periodic, order):
    """Centred first derivative; ``order`` is 2, 4 or ``"spectral"``."""
    if order == "spectral":
        n = values.shape[axis]
        k = 2.0 * math.pi * np.fft.fftfreq(n, d=h)
        if n % 2 == 0:
            k[n // 2] = 0.0
        shape = [1] * values.ndim
        shape[axis] = n
        return np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(values, axis=axis), axis=axis)
    if order not in _FD:
        raise ValueError(f"finite-difference order must be 2, 4 or 'spectral', got {order!r}")
    pad = len(_FD[order])
    if periodic:
        ext = np.concatenate([np.take(values, range(-pad, 0), axis=axis), values,
                              np.take(values, range(pad), axis=axis)], axis=axis)
    else:
        widths = [(0, 0)] * values.ndim
        widths[axis] = (pad, pad)
        ext = np.pad(values, widths)
    n = values.shape[axis]
    out = np.zeros_like(values)
    for off, c in _FD[order]:
        hi = np.take(ext, range(pad + off, pad + off + n), axis=axis)
        lo = np.take(ext, range(pad - off, pad - off + n), axis=axis)
        out = out + c * (hi - lo)
    return out / h


def _time_derivative(stack, dt, order):
    if order == 4:
        return (8.0 * (stack[3:-1] - stack[1:-3]) - (stack[4:] - stack[:-4])) / (12.0 * dt), 2
    return (stack[2:] - stack[:-2]) / (2.0 * dt), 1


def liouville_residual(series, potential, params, order=2, spatial_order=None):
    """``dW/dt + (p/M) dW/dx + F dW/dp`` at the interior snapshots of ``series``.

    Time derivatives are centred differences of accuracy ``order`` (2 or 4);
    phase-space derivatives use ``spatial_order`` (default: same as ``order``,
    or ``"spectral"``). Returns an array shaped ``(n_snapshots - 2*m, n_p, n_x)``
    where ``m`` is the stencil half-width in time.
    """
    need = 3 if order == 2 else 5
    if order not in (2, 4):
        raise ValueError("time order must be 2 or 4")
    if len(series) < need:
        raise ValueError(f"need at least {need} snapshots, got {len(series)}")
    g = series[0].grid
    for s in series[1:]:
        if not s.grid.same_as(g):
            raise GridValidationError("snapshots live on different grids")
    times = np.array([s.t for s in series])
    steps = np.diff(times)
    dt = float(steps.mean())
    if not dt > 0 or np.max(np.abs(steps - dt)) > 1e-9 * max(abs(dt), 1.0):
        raise ValueError("snapshots must be uniformly spaced in time")
    stack = np.array([s.values.real for s in series])
    dwdt, m = _time_derivative(stack, dt, order)
    inner = stack[m:len(stack) - m]
    so = order if spatial_order is None else spatial_order
    dwdx = np.real(_derivative(inner, g.dx, 2, g.spatial.periodic, so))
    dwdp = np.real(_derivative(inner, g.dp, 1, False, so))
    xx, pp = g.mesh()
    return dwdt + (pp / params.mass) * dwdx + potential.force(xx) * dwdp


def p_derivative(values, grid, k):
    """k-th spectral p-derivative along axis -2."""
    n = grid.n_p
    kap = 2.0 * math.pi * np.fft.fftfreq(n, d=grid.dp)
    if k % 2 == 1:
        kap[n // 2] = 0.0
    spec = np.fft.fft(np.fft.ifftshift(values, axes=-2), axis=-2)
    out = np.fft.ifft(((1j * kap) ** k)[:, None] * spec, axis=-2)
    return np.fft.fftshift(out, axes=-2)


def quantum_correction_terms(q, potential, params, max_order=5):
    """Odd-order terms of the alpha-expansion of the quantum flow beyond Liouville.

    Order 3: ``-(alpha^2/24) V'''(x) d^3Q/dp^3``.
    Order 5: ``+(alpha^4/1920) V^(5)(x) d^5Q/dp^5``.
    Returns ``{order: PhaseDistribution}``. Tabulated potentials produce
    low-accuracy high derivatives; that is flagged in each term's metadata.
    """
    if max_order not in (3, 5):
        raise ValueError("max_order must be 3 or 5")
    g = q.grid
    a = params.alpha
    prefactor = {3: -(a**2) / 24.0, 5: a**4 / 1920.0}
    out = {}
    for k in range(3, max_order + 1, 2):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", AccuracyWarning)
            vk = potential.derivative(g.x, k)
        meta = {"order": k}
        if any(issubclass(w.category, AccuracyWarning) for w in caught):
            meta["accuracy_warning"] = f"order-{k} derivative of a tabulated potential is low accuracy"
        if np.all(vk == 0):
            term = np.zeros(g.shape)
        else:
            term = prefactor[k] * vk[None, :] * np.real(p_derivative(q.values, g, k))
        out[k] = PhaseDistribution(g, term, q.t, meta)
    return out
