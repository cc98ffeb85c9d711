"""Configuration-space dynamics: Strang split-step propagation and eigenstates.

The amplitude obeys ``i alpha dPsi/dt = [(-i alpha d/dx)^2 / 2M + V] Psi``.
Periodic grids take the kinetic step in the discrete Fourier basis; vanishing
grids use the sine basis (type-I DST), i.e. the odd extension of the box into
a periodic box of twice the length.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
import scipy.fft
import scipy.linalg

from .core.errors import ConvergenceError, DivergenceError, StabilityWarning
from .core.fields import Amplitude

STABILITY_PHASE = math.pi / 4


def wavenumbers(grid):
    """Kinetic-basis wavenumbers: FFT order for periodic, ``pi k / L`` for vanishing."""
    if grid.periodic:
        return 2.0 * math.pi * np.fft.fftfreq(grid.n_x, d=grid.dx)
    return math.pi * np.arange(1, grid.n_x) / grid.length


def _to_kinetic(values, grid):
    if grid.periodic:
        return np.fft.fft(values)
    return scipy.fft.dst(values[1:], type=1)


def _from_kinetic(coeffs, grid):
    if grid.periodic:
        return np.fft.ifft(coeffs)
    out = np.zeros(grid.n_x, dtype=np.complex128)
    out[1:] = scipy.fft.idst(coeffs, type=1)
    return out


def kinetic_energies(grid, params):
    k = wavenumbers(grid)
    return (params.alpha * k) ** 2 / (2.0 * params.mass)


def apply_hamiltonian(values, grid, potential, params):
    """H psi with the spectral kinetic operator used by the propagator."""
    t = _from_kinetic(kinetic_energies(grid, params) * _to_kinetic(values, grid), grid)
    out = t + potential.value(grid.x) * values
    if not grid.periodic:
        out[0] = 0.0
    return out


def energy_expectation(psi, potential, params):
    h = apply_hamiltonian(psi.values, psi.grid, potential, params)
    return float(np.real(np.vdot(psi.values, h)) * psi.grid.dx / psi.norm2())


def _energy_ceiling(values, grid, potential, params, rel=1e-14):
    """Largest kinetic + |V| energy carried by the state's occupied modes and support."""
    spec = np.abs(_to_kinetic(values, grid)) ** 2
    kin = kinetic_energies(grid, params)
    occupied = spec > rel * spec.max() if spec.max() > 0 else np.zeros_like(spec, dtype=bool)
    k_max = float(kin[occupied].max()) if occupied.any() else 0.0
    dens = np.abs(values) ** 2
    support = dens > rel * dens.max() if dens.max() > 0 else np.zeros_like(dens, dtype=bool)
    v_max = float(np.max(np.abs(potential.value(grid.x[support])))) if support.any() else 0.0
    return k_max + v_max


class SplitStepPropagator:
    """Strang splitting ``e^{-iV dt/2a} e^{-iT dt/a} e^{-iV dt/2a}`` with cached phases.

    Negative ``dt`` runs the exact inverse of the forward map.
    """

    def __init__(self, grid, potential, params, dt):
        self.grid = grid
        self.potential = potential
        self.params = params
        self.dt = float(dt)
        v = potential.value(grid.x)
        self._half = np.exp(-0.5j * self.dt * v / params.alpha)
        self._full = self._half * self._half
        self._kin = np.exp(-1j * self.dt * kinetic_energies(grid, params) / params.alpha)

    def check_stability(self, values):
        e_max = _energy_ceiling(values, self.grid, self.potential, self.params)
        phase = e_max * abs(self.dt) / self.params.alpha
        if phase > STABILITY_PHASE:
            warnings.warn(
                f"split-step phase advance {phase:.3g} rad per step exceeds pi/4 at E_max={e_max:.4g}; "
                "reduce dt",
                StabilityWarning,
                stacklevel=3,
            )
        return phase

    def advance(self, values, n_steps):
        """Raw array stepping; returns a new array."""
        v = np.array(values, dtype=np.complex128)
        if n_steps <= 0:
            return v
        g = self.grid
        v *= self._half
        for s in range(n_steps):
            v = _from_kinetic(self._kin * _to_kinetic(v, g), g)
            v *= self._full if s < n_steps - 1 else self._half
        if not np.all(np.isfinite(v)):
            raise DivergenceError("split-step propagation produced non-finite values", state=values)
        return v

    def evolve(self, psi, n_steps):
        self.check_stability(psi.values)
        out = self.advance(psi.values, n_steps)
        return psi.evolve_to(out, psi.t + n_steps * self.dt)


def split_step_evolve(psi, potential, params, dt, n_steps):
    """Propagate ``psi`` by ``n_steps`` Strang steps of size ``dt``."""
    psi.require_normalized()
    return SplitStepPropagator(psi.grid, potential, params, dt).evolve(psi, int(n_steps))


# ---------------------------------------------------------------------------
# eigenproblem
# ---------------------------------------------------------------------------

_FD_STENCILS = {
    2: np.array([1.0, -2.0, 1.0]),
    4: np.array([-1.0 / 12, 4.0 / 3, -5.0 / 2, 4.0 / 3, -1.0 / 12]),
}


def hamiltonian_matrix(potential, params, grid, stencil="spectral"):
    """Dense H on the unknowns of ``grid`` (all nodes if periodic, interior otherwise).

    ``stencil="spectral"`` is the centred-difference limit that matches the
    propagator's kinetic step exactly; ``2`` and ``4`` give the classic
    finite-difference stencils of that order.
    """
    scale = params.alpha**2 / (2.0 * params.mass)
    n = grid.n_x if grid.periodic else grid.n_x - 1
    x = grid.x if grid.periodic else grid.x[1:]
    if stencil == "spectral":
        if grid.periodic:
            col = np.real(np.fft.ifft(wavenumbers(grid) ** 2)) * scale
            kin = scipy.linalg.circulant(col)
        else:
            j = np.arange(1, grid.n_x)
            s = math.sqrt(2.0 / grid.n_x) * np.sin(math.pi * np.outer(j, j) / grid.n_x)
            kin = (s * (scale * wavenumbers(grid) ** 2)) @ s
    elif stencil in _FD_STENCILS:
        w = _FD_STENCILS[stencil]
        half = len(w) // 2
        kin = np.zeros((n, n))
        for off, c in zip(range(-half, half + 1), w):
            idx = np.arange(n)
            cols = idx + off
            if grid.periodic:
                kin[idx, cols % n] += c
            else:
                ok = (cols >= 0) & (cols < n)
                kin[idx[ok], cols[ok]] += c
        kin *= -scale / grid.dx**2
    else:
        raise ValueError(f"unknown stencil {stencil!r}")
    return kin + np.diag(potential.value(x))


@dataclass(frozen=True, eq=False)
class EigenSolution:
    energies: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)
    grid: object = None
    potential: object = None
    params: object = None
    stencil: object = "spectral"

    @property
    def n_states(self):
        return len(self.energies)

    def amplitude(self, n):
        return Amplitude(self.grid, self.states[n], 0.0, {"eigenstate": int(n),
                                                            "energy": float(self.energies[n])})

    def residuals(self):
        """``||H phi_n - e_n phi_n||_2`` (grid L2 norm) per state."""
        h = hamiltonian_matrix(self.potential, self.params, self.grid, self.stencil)
        out = []
        for e, phi in zip(self.energies, self.states):
            v = phi if self.grid.periodic else phi[1:]
            r = h @ v - e * v
            out.append(math.sqrt(float(np.sum(np.abs(r) ** 2)) * self.grid.dx))
        return np.array(out)

    def gram(self):
        return self.states.conj() @ self.states.T * self.grid.dx

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("n,energy\n")
            for n, e in enumerate(self.energies):
                fh.write(f"{n},{e:.17g}\n")


def _orthonormalize_clusters(energies, vecs, tol):
    start = 0
    n = len(energies)
    while start < n:
        stop = start + 1
        while stop < n and abs(energies[stop] - energies[start]) <= tol * max(1.0, abs(energies[start])):
            stop += 1
        if stop - start > 1:
            q, _ = np.linalg.qr(vecs[:, start:stop])
            vecs[:, start:stop] = q
        start = stop
    return vecs


def solve_eigenproblem(potential, params, grid, n_states, stencil="spectral", degeneracy_tol=1e-9):
    """Lowest ``n_states`` eigenpairs of the discrete Hamiltonian, ascending.

    States are normalized to ``sum |phi|^2 dx = 1`` and sign-fixed so the
    first component above 1e-3 of the maximum is positive.
    """
    n_unknowns = grid.n_x if grid.periodic else grid.n_x - 1
    if not 0 < n_states <= n_unknowns // 2:
        raise ValueError(f"n_states must be in 1..{n_unknowns // 2} for this grid, got {n_states}")
    h = hamiltonian_matrix(potential, params, grid, stencil)
    try:
        energies, vecs = scipy.linalg.eigh(h, subset_by_index=[0, n_states - 1])
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise ConvergenceError(f"eigensolver failed: {exc}",
                               {"n_unknowns": n_unknowns, "n_states": n_states}) from exc
    vecs = _orthonormalize_clusters(energies, np.array(vecs), degeneracy_tol)
    states = np.zeros((n_states, grid.n_x))
    if grid.periodic:
        states[:] = vecs.T
    else:
        states[:, 1:] = vecs.T
    states /= math.sqrt(grid.dx)
    for row in states:
        mag = np.abs(row)
        first = np.argmax(mag > 1e-3 * mag.max())
        if row[first] < 0:
            row *= -1.0
    return EigenSolution(np.asarray(energies), states.astype(np.complex128), grid, potential, params, stencil)


def stationary_evolution_check(sol, n, t, max_dt=1e-3):
    """``max |U(t) phi_n - phi_n exp(-i e_n t / alpha)|`` with the split-step propagator."""
    if not 0 <= n < sol.n_states:
        raise IndexError(f"state {n} not in solution with {sol.n_states} states")
    if t == 0:
        return 0.0
    steps = max(1, math.ceil(abs(t) / max_dt - 1e-9))
    prop = SplitStepPropagator(sol.grid, sol.potential, sol.params, t / steps)
    phi = sol.states[n]
    out = prop.advance(phi, steps)
    ref = phi * np.exp(-1j * sol.energies[n] * t / sol.params.alpha)
    return float(np.max(np.abs(out - ref)))


def mean_value_gap(potential, r, s):
    """``|V(r) - V(s) + (r - s) F((r + s)/2)|``: the midpoint-force replacement error."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    gap = np.abs(potential.value(r) - potential.value(s) + (r - s) * potential.force(0.5 * (r + s)))
    return float(gap) if gap.ndim == 0 else gap


def marginal_density(psi):
    """P(x) = |psi(x)|^2 on the grid nodes."""
    return np.abs(psi.values) ** 2
