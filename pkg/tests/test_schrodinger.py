import math

import numpy as np
import pytest

from phaseflow import schrodinger as sch
from phaseflow.basis import BasisSet, HarmonicEigen, PlaneWaveBox
from phaseflow.core import (
    Amplitude,
    DivergenceError,
    Harmonic,
    NormalizationError,
    Quartic,
    SpatialGrid,
    StabilityWarning,
    SystemParams,
    free,
    gaussian_amplitude,
)

P = SystemParams()


@pytest.fixture(scope="module")
def harmonic_solution():
    g = SpatialGrid(-10, 10, 256, "vanishing")
    return sch.solve_eigenproblem(Harmonic(1.0), P, g, 6)


class TestPropagator:
    def test_eigenstate_phase(self, harmonic_solution):
        sol = harmonic_solution
        psi = sol.amplitude(0)
        t = 1.7
        n = 8500
        out = sch.split_step_evolve(psi, Harmonic(1.0), P, t / n, n)
        assert np.max(np.abs(out.density() - psi.density())) < 1e-8
        i = np.argmax(np.abs(psi.values))
        phase = np.angle(out.values[i] / psi.values[i])
        expect = np.angle(np.exp(-1j * sol.energies[0] * t / P.alpha))
        assert abs(phase - expect) < 1e-6
        assert out.t == pytest.approx(t)

    def test_free_spreading(self):
        g = SpatialGrid(-40, 40, 1024)
        params = SystemParams(mass=1.3, alpha=0.8)
        s0 = 0.9
        psi = gaussian_amplitude(g, sigma=s0, params=params)
        t = 3.0
        out = sch.split_step_evolve(psi, free(), params, t / 300, 300)
        rho = out.density() * g.dx
        var = np.sum(rho * g.x**2) - np.sum(rho * g.x) ** 2
        expect = s0**2 * (1 + (params.alpha * t / (2 * params.mass * s0**2)) ** 2)
        assert var == pytest.approx(expect, rel=1e-6)

    def test_constant_potential_gauge(self):
        g = SpatialGrid(-10, 10, 128)
        psi = gaussian_amplitude(g, x0=1.0, p0=0.4)
        c, t, n = 2.5, 1.0, 100
        a = sch.split_step_evolve(psi, free(), P, t / n, n)
        b = sch.split_step_evolve(psi, free().shifted(c), P, t / n, n)
        assert np.max(np.abs(a.density() - b.density())) < 1e-13
        assert np.max(np.abs(b.values - a.values * np.exp(-1j * c * t / P.alpha))) < 1e-12

    def test_unitary_and_reversible(self):
        g = SpatialGrid(-8, 8, 128, "vanishing")
        psi = gaussian_amplitude(g, x0=1.0, sigma=0.7)
        fwd = sch.SplitStepPropagator(g, Quartic(0.5), P, 2e-3)
        out = fwd.advance(psi.values, 500)
        assert abs(np.sum(np.abs(out) ** 2) * g.dx - 1) < 1e-12
        back = sch.SplitStepPropagator(g, Quartic(0.5), P, -2e-3).advance(out, 500)
        assert np.max(np.abs(back - psi.values)) < 1e-12

    def test_zero_steps_copy(self):
        g = SpatialGrid(-8, 8, 64)
        psi = gaussian_amplitude(g)
        out = sch.SplitStepPropagator(g, free(), P, 0.1).advance(psi.values, 0)
        assert np.array_equal(out, psi.values)

    def test_requires_normalized(self):
        g = SpatialGrid(-8, 8, 64)
        with pytest.raises(NormalizationError):
            sch.split_step_evolve(Amplitude(g, np.ones(64)), free(), P, 0.1, 1)

    def test_stability_warning(self):
        g = SpatialGrid(-8, 8, 256)
        psi = gaussian_amplitude(g, sigma=0.1, p0=20.0)
        with pytest.warns(StabilityWarning):
            sch.split_step_evolve(psi, free(), P, 0.5, 1)

    def test_divergence(self):
        g = SpatialGrid(-8, 8, 64)
        v = np.ones(64, dtype=complex)
        v[3] = np.nan
        with pytest.raises(DivergenceError):
            sch.SplitStepPropagator(g, free(), P, 0.1).advance(v, 2)

    def test_second_order_in_dt(self):
        g = SpatialGrid(-8, 8, 128, "vanishing")
        psi = gaussian_amplitude(g, x0=1.0, sigma=0.7)
        pot, t = Quartic(0.2), 1.0
        ref = sch.SplitStepPropagator(g, pot, P, t / 2048).advance(psi.values, 2048)
        errs = [np.linalg.norm(sch.SplitStepPropagator(g, pot, P, t / n).advance(psi.values, n) - ref)
                for n in (32, 64, 128)]
        slopes = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(np.abs(slopes - 2) < 0.1)

    def test_energy_conserved(self):
        g = SpatialGrid(-10, 10, 256, "vanishing")
        psi = gaussian_amplitude(g, x0=1.5, sigma=0.6)
        e0 = sch.energy_expectation(psi, Quartic(0.1), P)
        out = sch.split_step_evolve(psi, Quartic(0.1), P, 1e-3, 2000)
        assert sch.energy_expectation(out, Quartic(0.1), P) == pytest.approx(e0, rel=1e-5)


class TestEigen:
    def test_harmonic_spectrum(self, harmonic_solution):
        assert np.allclose(harmonic_solution.energies, np.arange(6) + 0.5, rtol=1e-8)
        assert np.max(harmonic_solution.residuals()) < 1e-8
        assert np.allclose(harmonic_solution.gram(), np.eye(6), atol=1e-12)

    def test_states_match_analytic(self, harmonic_solution):
        g = harmonic_solution.grid
        ref = BasisSet(HarmonicEigen(), 5).sample(g)
        for n in range(6):
            s = harmonic_solution.states[n]
            sign = np.sign(np.real(np.vdot(ref[n], s)))
            assert np.max(np.abs(sign * s - ref[n])) < 1e-8

    @pytest.mark.parametrize("stencil,order", [(2, 2), (4, 4)])
    def test_finite_difference_order(self, stencil, order):
        errs = []
        for n in (128, 256, 512):
            g = SpatialGrid(-10, 10, n, "vanishing")
            e = sch.solve_eigenproblem(Harmonic(1.0), P, g, 3, stencil=stencil).energies
            errs.append(abs(e[2] - 2.5))
        slopes = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(np.abs(slopes - order) < 0.3)

    def test_box(self):
        b = 0.5
        params = SystemParams(mass=2.0, alpha=0.7)
        g = SpatialGrid(-b, b, 256, "vanishing")
        e = sch.solve_eigenproblem(free(), params, g, 4).energies
        n = np.arange(1, 5)
        assert np.allclose(e, n**2 * np.pi**2 * 0.7**2 / (8 * 2.0 * b**2), rtol=1e-10)

    def test_periodic_box(self):
        g = SpatialGrid(-1, 1, 64)
        e = sch.solve_eigenproblem(free(), P, g, 5).energies
        # plane waves exp(i n pi x): energies (n pi)^2 / 2 with +-n degenerate
        assert np.allclose(e, np.array([0, 1, 1, 4, 4]) * np.pi**2 / 2, atol=1e-10)

    def test_shift(self, harmonic_solution):
        sol = harmonic_solution
        shifted = sch.solve_eigenproblem(Harmonic(1.0).shifted(3.0), P, sol.grid, 6)
        assert np.allclose(shifted.energies - sol.energies, 3.0, atol=1e-10)
        assert np.max(np.abs(shifted.states - sol.states)) < 1e-8

    def test_bad_count(self):
        with pytest.raises(ValueError):
            sch.solve_eigenproblem(free(), P, SpatialGrid(-1, 1, 16, "vanishing"), 8)

    def test_csv(self, harmonic_solution, tmp_path):
        harmonic_solution.to_csv(tmp_path / "e.csv")
        rows = (tmp_path / "e.csv").read_text().splitlines()
        assert rows[0] == "n,energy"
        assert float(rows[1].split(",")[1]) == harmonic_solution.energies[0]


class TestStationary:
    def test_ground_state(self, harmonic_solution):
        assert sch.stationary_evolution_check(harmonic_solution, 0, 1.0) < 1e-6

    def test_zero_time(self, harmonic_solution):
        assert sch.stationary_evolution_check(harmonic_solution, 2, 0.0) == 0.0

    def test_third_state_one_period(self, harmonic_solution):
        assert sch.stationary_evolution_check(harmonic_solution, 3, 2 * math.pi) < 1e-5


class TestMeanValue:
    def test_quadratic_exact(self):
        rng = np.random.default_rng(0)
        r, s = rng.uniform(-3, 3, 50), rng.uniform(-3, 3, 50)
        assert np.max(sch.mean_value_gap(Harmonic(0.7), r, s)) < 1e-12

    def test_equal_points(self):
        assert sch.mean_value_gap(Quartic(1.0), 0.3, 0.3) == 0.0

    def test_quartic_closed_form(self):
        # V(1+y) - V(1-y) + 2y F(1) = 8y^3 for V = x^4
        y = 0.05
        assert sch.mean_value_gap(Quartic(1.0), 1 + y, 1 - y) == pytest.approx(8 * y**3, rel=1e-9)


class TestMarginal:
    def test_plane_wave_uniform(self):
        b = 1.0
        g = SpatialGrid(-b, b, 32)
        psi = Amplitude(g, BasisSet(PlaneWaveBox(b), 0).evaluate(0, g.x))
        assert np.allclose(sch.marginal_density(psi), 1 / (2 * b))

    def test_ground_state_variance(self):
        params = SystemParams(mass=2.0, alpha=0.5)
        omega = 1.5
        g = SpatialGrid(-8, 8, 256, "vanishing")
        psi = Amplitude.normalized(g, HarmonicEigen(2.0, omega, 0.5).evaluate(0, g.x))
        rho = sch.marginal_density(psi) * g.dx
        assert np.sum(rho * g.x**2) == pytest.approx(params.alpha / (2 * params.mass * omega), rel=1e-10)
