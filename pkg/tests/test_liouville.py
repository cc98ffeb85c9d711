import math

import numpy as np
import pytest

from phaseflow import liouville as lv
from phaseflow import wigner as wg
from phaseflow.basis import HarmonicEigen
from phaseflow.core import (
    Amplitude,
    DivergenceError,
    DomainError,
    Harmonic,
    NormalizationError,
    PhaseDistribution,
    PhaseSpaceGrid,
    Polynomial,
    Quartic,
    SpatialGrid,
    SystemParams,
    Tabulated,
    coherent_state,
    free,
)

P = SystemParams()


def gaussian_w(grid, x0=0.0, p0=0.0, sx=1.0, sp=1.0):
    xx, pp = grid.mesh()
    w = np.exp(-0.5 * ((xx - x0) / sx) ** 2 - 0.5 * ((pp - p0) / sp) ** 2) / (2 * math.pi * sx * sp)
    w /= w.sum() * grid.cell
    return PhaseDistribution(grid, w)


class TestTrajectory:
    def test_free(self):
        x, p = lv.integrate_trajectory(0.0, 1.0, free(), P, 2.0)
        assert x == pytest.approx(2.0, abs=1e-11) and p == 1.0

    def test_harmonic_half_period(self):
        x, p = lv.integrate_trajectory(1.0, 0.0, Harmonic(1.0), P, math.pi, 1e-4)
        assert abs(x + 1) < 1e-6 and abs(p) < 1e-6

    def test_quartic_energy(self):
        v = Quartic(1.0)
        x, p = lv.integrate_trajectory(1.0, 0.0, v, P, 10.0)
        e = 0.5 * p**2 + v.value(x)
        assert abs(e - 1.0) < 1e-8

    def test_mass_scaling(self):
        params = SystemParams(mass=4.0)
        x, _ = lv.integrate_trajectory(1.0, 0.0, Harmonic(4.0), params, math.pi, 1e-4)
        assert abs(x + 1) < 1e-6

    def test_lands_on_t(self):
        # dt does not divide t: the step is shrunk to hit t exactly
        x, p = lv.integrate_trajectory(0.0, 1.0, free(), P, 1.0, 0.3)
        assert x == pytest.approx(1.0, abs=1e-15)

    def test_tabulated_matches_closed_form(self):
        g = SpatialGrid(-4, 4, 1024, "vanishing")
        tab = Tabulated(g, Harmonic(1.0).value(g.x))
        a = lv.integrate_trajectory(1.0, 0.0, tab, P, 2.0, 1e-3)
        b = lv.integrate_trajectory(1.0, 0.0, Harmonic(1.0), P, 2.0, 1e-3)
        assert np.allclose(a, b, atol=1e-4)

    def test_divergence(self):
        steep = Polynomial((0,) * 8 + (-1e30,))
        with pytest.raises(DivergenceError) as info:
            lv.integrate_trajectory(10.0, 0.0, steep, P, 1.0, 0.1)
        assert info.value.state is not None

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            lv.integrate_trajectory(0, 0, free(), P, 1.0, 0.0)
        with pytest.raises(ValueError):
            lv.integrate_trajectory(0, 0, free(), P, -1.0)


class TestEnsemble:
    def test_harmonic_period(self):
        n = 4096
        s = lv.GaussianSampler(1.0, 0.5, 0.3, 0.4, method="random")
        ens = lv.evolve_ensemble(s, n, Harmonic(1.0), P, 2 * math.pi, 1e-3, seed=1)
        disp = np.hypot(ens.x - ens.x0, ens.p - ens.p0)
        assert np.abs(np.mean(ens.x - ens.x0)) < 3 * 0.3 / math.sqrt(n)
        assert np.max(disp) < 1e-5

    def test_free_mean(self):
        n = 10000
        s = lv.GaussianSampler(0.5, 1.5, 0.7, 0.3, method="random")
        ens = lv.evolve_ensemble(s, n, free(), SystemParams(mass=2.0), 3.0, 0.1, seed=2)
        x0m = float(ens.weights @ ens.x0)
        p0m = float(ens.weights @ ens.p0)
        assert ens.mean()[0] == pytest.approx(x0m + p0m * 3.0 / 2.0, abs=1e-12)
        assert ens.mean()[0] == pytest.approx(0.5 + 1.5 * 1.5, abs=3 * math.hypot(0.7, 0.45) / math.sqrt(n))

    def test_delta_reduces_to_trajectory(self):
        ens = lv.evolve_ensemble(lv.DeltaSampler(1.2, -0.3), 1, Quartic(0.5), P, 2.0, 1e-3)
        x, p = lv.integrate_trajectory(1.2, -0.3, Quartic(0.5), P, 2.0, 1e-3)
        assert (ens.x[0], ens.p[0]) == (x, p)
        assert ens.weights[0] == 1.0

    def test_energy_drift(self):
        ens = lv.evolve_ensemble(lv.GaussianSampler(0, 0, 1, 1), 256, Quartic(1.0), P, 5.0, 1e-3)
        assert np.max(ens.energy_drift()) < 1e-5

    def test_sobol_deterministic(self):
        s = lv.GaussianSampler.coherent(1.0, 0.0, 1.0, P)
        a = lv.evolve_ensemble(s, 512, Harmonic(), P, 1.0, 1e-2, seed=4)
        b = lv.evolve_ensemble(s, 512, Harmonic(), P, 1.0, 1e-2, seed=4)
        assert np.array_equal(a.x, b.x)
        assert s.sigma_x == pytest.approx(math.sqrt(0.5))

    def test_weights_checked(self):
        with pytest.raises(NormalizationError):
            lv.TrajectoryEnsemble([0.0], [0.0], [0.5], [0.0], [0.0])

    def test_csv(self, tmp_path):
        ens = lv.evolve_ensemble(lv.DeltaSampler(1, 2), 3, free(), P, 1.0, 0.5)
        ens.to_csv(tmp_path / "e.csv")
        rows = (tmp_path / "e.csv").read_text().splitlines()
        assert rows[0] == "x0,p0,weight,x,p"
        assert len(rows) == 4


class TestGridSampler:
    def test_moments(self):
        g = PhaseSpaceGrid.balanced(128)
        w = gaussian_w(g, 1.0, -0.5, 0.6, 0.8)
        x, p, wt = lv.GridSampler(w).sample(20000, seed=3)
        assert np.mean(x) == pytest.approx(1.0, abs=0.02)
        assert np.std(p) == pytest.approx(math.sqrt(0.64 + g.dp**2 / 12), rel=0.02)
        assert wt.sum() == pytest.approx(1.0)

    def test_rejects_quasi_probability(self):
        g = PhaseSpaceGrid.balanced(64)
        psi = Amplitude.normalized(g.spatial, HarmonicEigen().evaluate(1, g.x))
        q = wg.wigner_of_amplitude(psi, P, g)
        with pytest.raises(DomainError):
            lv.GridSampler(q).sample(10)

    def test_tolerates_roundoff(self):
        g = PhaseSpaceGrid.balanced(64)
        vals = gaussian_w(g).values.real.copy()
        vals[0, 0] = -1e-14
        lv.GridSampler(PhaseDistribution(g, vals)).sample(10)


class TestDensity:
    def test_single_sample_histogram(self):
        g = PhaseSpaceGrid.balanced(16)
        ens = lv.TrajectoryEnsemble([0], [0], [1.0], [g.x[5]], [g.p[9]])
        w = lv.ensemble_to_grid(ens, g, "histogram")
        assert w.values[9, 5] == pytest.approx(1 / g.cell)
        assert np.count_nonzero(w.values) == 1

    def test_kde_converges(self):
        g = PhaseSpaceGrid.balanced(128)
        s = lv.GaussianSampler(0.5, -0.5, 0.8, 1.1, method="random")
        xx, pp = g.mesh()
        exact = s.density(xx, pp)
        errs = []
        for n in (10_000, 1_000_000):
            ens = lv.evolve_ensemble(s, n, free(), P, 0.0, seed=5)
            errs.append(np.max(np.abs(lv.ensemble_to_grid(ens, g, "kde").values.real - exact)))
        assert errs[1] < errs[0]
        assert errs[1] < 0.03 * exact.max()

    def test_weight_scale_invariance(self):
        g = PhaseSpaceGrid.balanced(32)
        rng = np.random.default_rng(0)
        x, p = rng.normal(size=500), rng.normal(size=500)
        w = rng.random(500)
        a = lv.TrajectoryEnsemble(x, p, w / w.sum(), x, p)
        w2 = 2 * w
        b = lv.TrajectoryEnsemble(x, p, w2 / w2.sum(), x, p)
        for method in ("histogram", "kde"):
            assert np.array_equal(lv.ensemble_to_grid(a, g, method).values,
                                  lv.ensemble_to_grid(b, g, method).values)

    def test_out_of_bounds(self):
        g = PhaseSpaceGrid.balanced(16)
        far = g.spatial.x_max * 0 + 100.0
        n = 100
        x = np.zeros(n)
        x[:5] = far
        ens = lv.TrajectoryEnsemble(x, np.zeros(n), np.full(n, 1 / n), x, np.zeros(n))
        w = lv.ensemble_to_grid(ens, g, "histogram")
        assert w.metadata["out_of_bounds_fraction"] == pytest.approx(0.05)
        assert "warning" in w.metadata
        x[:30] = far
        ens = lv.TrajectoryEnsemble(x, np.zeros(n), np.full(n, 1 / n), x, np.zeros(n))
        with pytest.raises(DomainError):
            lv.ensemble_to_grid(ens, g, "histogram")

    def test_periodic_wraps(self):
        g = PhaseSpaceGrid(SpatialGrid(-1, 1, 16), 16, 1.0)
        ens = lv.TrajectoryEnsemble([0], [0], [1.0], [g.x[3] + 2.0], [0.0])
        w = lv.ensemble_to_grid(ens, g, "histogram")
        assert w.values[g.n_p // 2, 3] == pytest.approx(1 / g.cell)


class TestGridSolver:
    def test_ground_state_period(self):
        g = PhaseSpaceGrid.balanced(256)
        psi = Amplitude.normalized(g.spatial, HarmonicEigen().evaluate(0, g.x))
        w0 = wg.wigner_of_amplitude(psi, P, g)
        T = 2 * math.pi
        w = lv.evolve_grid(w0, Harmonic(1.0), P, T, T / 2000)
        rel = np.linalg.norm(w.values - w0.values) / np.linalg.norm(w0.values)
        assert rel < 1e-3
        assert w.t == pytest.approx(T)

    def test_free_streaming(self):
        g = PhaseSpaceGrid.balanced(128)
        params = SystemParams(mass=2.0)
        w0 = gaussian_w(g, -1.0, 0.5, 0.7, 0.6)
        t = 1.5
        w = lv.evolve_grid(w0, free(), params, t, 0.1)
        xx, pp = g.mesh()
        exact = gaussian_w(g, -1.0, 0.5, 0.7, 0.6)
        ref = np.exp(-0.5 * ((xx - pp * t / 2.0 + 1.0) / 0.7) ** 2 - 0.5 * ((pp - 0.5) / 0.6) ** 2)
        ref *= exact.values.real.max() / ref.max()
        assert np.max(np.abs(w.values.real - ref)) < 5e-3 * ref.max()

    def test_constant_shift_identical(self):
        g = PhaseSpaceGrid.balanced(64)
        w0 = gaussian_w(g, 1.0, 0.0, 0.5, 0.5)
        a = lv.evolve_grid(w0, Quartic(0.05), P, 1.0, 0.01)
        b = lv.evolve_grid(w0, Quartic(0.05).shifted(5.0), P, 1.0, 0.01)
        assert np.array_equal(a.values, b.values)

    def test_mass_and_positivity(self):
        g = PhaseSpaceGrid.balanced(128)
        w0 = gaussian_w(g, 1.0, 0.0, 0.5, 0.5)
        w = lv.evolve_grid(w0, Quartic(0.2), P, 3.0, 0.01)
        assert w.mass().real == pytest.approx(1.0, abs=1e-10)
        assert w.values.real.min() >= 0
        assert "clipped_mass" in w.metadata

    def test_series_matches_single(self):
        g = PhaseSpaceGrid.balanced(64)
        w0 = gaussian_w(g, 1.0, 0.0, 0.5, 0.5)
        series = lv.evolve_grid_series(w0, Quartic(0.05), P, 0.01, 100, every=25)
        assert [round(s.t, 12) for s in series] == [0.0, 0.25, 0.5, 0.75, 1.0]
        single = lv.evolve_grid(w0, Quartic(0.05), P, 1.0, 0.01)
        assert np.max(np.abs(series[-1].values - single.values)) < 1e-14

    def test_quasi_probability_keeps_sign(self):
        g = PhaseSpaceGrid.balanced(128)
        psi = Amplitude.normalized(g.spatial, HarmonicEigen().evaluate(1, g.x))
        q = wg.wigner_of_amplitude(psi, P, g)
        w = lv.evolve_grid(q, Harmonic(1.0), P, 1.0, 1e-3)
        assert w.values.real.min() < -0.3

    def test_domain_too_small(self):
        g = PhaseSpaceGrid(SpatialGrid(-4, 4, 32, "vanishing"), 32, 1.0)
        w0 = gaussian_w(g, 3.0, 0.0, 0.3, 0.3)
        with pytest.raises(DomainError):
            lv.evolve_grid(w0, Quartic(1.0), P, 1.0, 0.01)

    def test_requires_normalized(self):
        g = PhaseSpaceGrid.balanced(32)
        w = PhaseDistribution(g, 2 * gaussian_w(g).values)
        with pytest.raises(NormalizationError):
            lv.evolve_grid(w, free(), P, 1.0, 0.1)


class TestResidual:
    def test_stencil_order_ranking(self):
        # the momentum spacing is pi*alpha/L, so derivative order is compared on one grid
        g = PhaseSpaceGrid(SpatialGrid(-8, 8, 128, "vanishing"), 128, 1.0)
        w0 = gaussian_w(g, 1.0, 0.0, 0.7, 0.7)
        series = lv.evolve_grid_series(w0, Harmonic(1.0), P, 0.01, 10)
        r = [np.max(np.abs(lv.liouville_residual(series, Harmonic(1.0), P, spatial_order=so)))
             for so in (2, 4, "spectral")]
        assert r[0] > 5 * r[1] > 5 * r[2]
        assert r[2] < 1e-3 * np.max(w0.values.real)

    def test_stationary(self):
        g = PhaseSpaceGrid.balanced(128)
        xx, pp = g.mesh()
        e = 0.5 * pp**2 + Quartic(0.5).value(xx)
        w = np.exp(-e)
        w /= w.sum() * g.cell
        series = [PhaseDistribution(g, w, t) for t in (0.0, 0.1, 0.2)]
        r = lv.liouville_residual(series, Quartic(0.5), P, spatial_order="spectral")
        assert np.max(np.abs(r)) < 1e-6 * np.max(w)

    def test_free_momentum_profile(self):
        # W = f(p) is stationary for free motion
        g = PhaseSpaceGrid(SpatialGrid(-1, 1, 16), 16, 1.0)
        _, pp = g.mesh()
        w = np.exp(-pp**2) * np.ones(g.shape)
        series = [PhaseDistribution(g, w, t) for t in (0, 1, 2, 3, 4)]
        for order in (2, 4):
            assert np.max(np.abs(lv.liouville_residual(series, free(), P, order=order))) == 0.0

    def test_validation(self):
        g = PhaseSpaceGrid.balanced(16)
        s = [PhaseDistribution(g, np.zeros(g.shape), t) for t in (0.0, 0.1, 0.3)]
        with pytest.raises(ValueError):
            lv.liouville_residual(s, free(), P)
        with pytest.raises(ValueError):
            lv.liouville_residual(s[:2], free(), P)
        with pytest.raises(ValueError):
            lv.liouville_residual(s, free(), P, order=3)


class TestCorrections:
    def test_quadratic_vanishes(self):
        g = PhaseSpaceGrid.balanced(64)
        q = gaussian_w(g)
        for v in (Harmonic(3.0), Polynomial((1.0, 2.0, 0.5))):
            terms = lv.quantum_correction_terms(q, v, P)
            assert not np.any(terms[3].values) and not np.any(terms[5].values)

    def test_quartic(self):
        g = PhaseSpaceGrid.balanced(128)
        q = gaussian_w(g, 0.5, 0.2, 0.8, 0.9)
        lam = 0.3
        terms = lv.quantum_correction_terms(q, Quartic(lam), P)
        xx, _ = g.mesh()
        d3 = np.real(lv.p_derivative(q.values, g, 3))
        assert np.max(np.abs(terms[3].values - (-lam * xx * d3))) < 1e-14
        assert not np.any(terms[5].values)

    def test_cubic_closed_form(self):
        params = SystemParams(alpha=0.7)
        g = PhaseSpaceGrid.balanced(256, params)
        sp = 1.1
        xx, pp = g.mesh()
        q = np.exp(-xx**2 / 2 - pp**2 / (2 * sp**2)) / (2 * math.pi * sp)
        term = lv.quantum_correction_terms(PhaseDistribution(g, q), Polynomial((0, 0, 0, 1.0)), params, 3)[3]
        # d^3/dp^3 of exp(-p^2/2s^2) = -(p^3/s^6 - 3p/s^4) exp(...), V''' = 6
        d3 = -(pp**3 / sp**6 - 3 * pp / sp**4) * q
        exact = -(params.alpha**2 / 24) * 6 * d3
        assert np.max(np.abs(term.values.real - exact)) < 1e-8

    def test_fifth_order(self):
        g = PhaseSpaceGrid.balanced(256)
        q = gaussian_w(g, 0.0, 0.0, 1.0, 1.0)
        v = Polynomial((0, 0, 0, 0, 0, 1.0))
        terms = lv.quantum_correction_terms(q, v, P)
        d5 = np.real(lv.p_derivative(q.values, g, 5))
        assert np.max(np.abs(terms[5].values - 120 / 1920 * d5)) < 1e-14

    def test_tabulated_flagged(self):
        g = PhaseSpaceGrid.balanced(64)
        tab = Tabulated(g.spatial, Quartic(0.1).value(g.x))
        terms = lv.quantum_correction_terms(gaussian_w(g), tab, P)
        assert "accuracy_warning" in terms[3].metadata

    def test_bad_order(self):
        g = PhaseSpaceGrid.balanced(16)
        with pytest.raises(ValueError):
            lv.quantum_correction_terms(gaussian_w(g), free(), P, 4)

    def test_p_derivative_spectral(self):
        g = PhaseSpaceGrid.balanced(128)
        xx, pp = g.mesh()
        f = np.exp(-pp**2)
        d1 = np.real(lv.p_derivative(f, g, 1))
        assert np.max(np.abs(d1 + 2 * pp * f)) < 1e-12
