"""Experiment pipelines: quantum vs classical evolution, the factorization
round trip, and convergence sweeps. Each returns a :class:`ComparisonReport`.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field
import json
import math
import os

import numpy as np
import scipy

from .. import __version__, liouville, schrodinger, wigner
from .._accel import USE_NUMBA
from ..basis import (
    BasisSet,
    CoefficientVector,
    HarmonicEigen,
    NumericEigen,
    PlaneWaveBox,
    synthesize_amplitude,
)
from ..core.errors import ConfigError, FieldIOError, PhaseflowError
from ..core.fields import coherent_state, gaussian_amplitude


@contextmanager
def stage(name):
    """Prefix any package error raised inside with the pipeline stage."""
    try:
        yield
    except PhaseflowError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
            if exc.args:
                exc.args = (f"[{name}] {exc.args[0]}",) + exc.args[1:]
        raise


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def versions():
    try:
        import numba
        numba_version = numba.__version__
    except ImportError:
        numba_version = None
    return {"phaseflow": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba_version, "kernels": "numba" if USE_NUMBA else "numpy"}


@dataclass
class ComparisonReport:
    """Per-row metrics (aligned columns) plus a summary and a provenance block."""

    kind: str
    columns: dict
    summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError("report columns differ in length")
        self.columns = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}

    def __len__(self):
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def all_finite(self):
        return all(np.all(np.isfinite(v)) for v in self.columns.values())

    def csv_text(self):
        names = list(self.columns)
        lines = [",".join(names)]
        for i in range(len(self)):
            lines.append(",".join(repr(float(self.columns[n][i])) for n in names))
        return "\n".join(lines) + "\n"

    def json_text(self):
        doc = {"kind": self.kind, "columns": list(self.columns), "summary": self.summary,
               "provenance": self.provenance}
        return json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"

    def write(self, out_dir, stem=None):
        """Write ``<stem>.csv`` and ``<stem>.json``; returns both paths."""
        stem = stem or self.kind
        csv_path = os.path.join(out_dir, f"{stem}.csv")
        json_path = os.path.join(out_dir, f"{stem}.json")
        try:
            os.makedirs(out_dir, exist_ok=True)
            with open(csv_path, "w") as fh:
                fh.write(self.csv_text())
            with open(json_path, "w") as fh:
                fh.write(self.json_text())
        except OSError as exc:
            raise FieldIOError(exc.filename or out_dir, f"cannot write report ({exc.strerror or exc})") from exc
        return csv_path, json_path


def _provenance(cfg, seed):
    return {"config": cfg.to_text(), "seed": seed, "versions": versions()}


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_basis(cfg, grid):
    family = cfg["basis.family"]
    params = cfg.params()
    if family == "plane_wave":
        b = cfg["basis.b"] or 0.5 * grid.spatial.length
        fam = PlaneWaveBox(b)
    elif family == "harmonic":
        k = cfg["potential.k"]
        fam = HarmonicEigen(params.mass, math.sqrt(k / params.mass), params.alpha)
    else:
        n_states = cfg["basis.n_states"] or cfg["basis.n_max"] + 1
        fam = NumericEigen(cfg.potential(), params, grid.spatial, n_states)
    basis = BasisSet(fam, cfg["basis.n_max"])
    basis.check_grid(grid.spatial)
    return basis


def _coefficients(cfg, basis):
    raw = cfg["initial.coeffs"]
    if len(raw) > basis.size:
        raise ConfigError(f"initial.coeffs has {len(raw)} entries, basis holds {basis.size}")
    a = np.zeros(basis.size, dtype=np.complex128)
    a[:len(raw)] = raw
    norm = math.sqrt(float(np.sum(np.abs(a) ** 2)))
    if norm == 0:
        raise ConfigError("initial.coeffs are all zero")
    return CoefficientVector(a / norm, basis.indices, 0.0, basis.describe())


def build_amplitude(cfg, grid):
    """Initial amplitude Psi0 described by the ``initial.*`` keys."""
    params = cfg.params()
    kind = cfg["initial.kind"]
    x0, p0 = cfg["initial.x0"], cfg["initial.p0"]
    sigma = cfg["initial.sigma"]
    if kind == "coherent" and sigma is None:
        return coherent_state(grid.spatial, cfg["potential.k"], params, x0, p0)
    if kind in ("coherent", "gaussian"):
        return gaussian_amplitude(grid.spatial, x0, p0, sigma or 1.0, params)
    if kind == "eigenstate":
        n = cfg["initial.n"]
        sol = schrodinger.solve_eigenproblem(cfg.potential(), params, grid.spatial, n + 1)
        return sol.amplitude(n)
    if kind == "coefficients":
        basis = build_basis(cfg, grid)
        return synthesize_amplitude(_coefficients(cfg, basis), basis, grid.spatial)
    raise ConfigError("mixture initial states only make sense for the theorem check")


def initial_spread(cfg, psi):
    """(x0, p0, sigma_x, sigma_p) of a Gaussian initial state, else None."""
    if cfg["initial.kind"] not in ("coherent", "gaussian"):
        return None
    sx = float(psi.metadata["sigma"])
    return psi.metadata["x0"], psi.metadata["p0"], sx, cfg["system.alpha"] / (2.0 * sx)


def _rel_l2(a, b):
    den = float(np.linalg.norm(b.ravel()))
    return float(np.linalg.norm((a - b).ravel())) / den if den else float(np.linalg.norm(a.ravel()))


def _field_norm(values, grid):
    return math.sqrt(float(np.sum(np.abs(values) ** 2)) * grid.cell)


# ---------------------------------------------------------------------------
# equivalence
# ---------------------------------------------------------------------------


def _classical_series(cfg, q0, potential, params, h, n, every, seed):
    if cfg["solver.classical"] == "grid":
        return liouville.evolve_grid_series(q0, potential, params, h, n, every)
    sampler = liouville.GridSampler(q0, cfg["solver.sampling"])
    out = []
    for k in range(n // every + 1):
        ens = liouville.evolve_ensemble(sampler, cfg["solver.n_samples"], potential, params,
                                        k * every * h, h if k else 1.0, seed)
        out.append(liouville.ensemble_to_grid(ens, q0.grid, cfg["solver.density"],
                                              cfg["solver.bandwidth"]))
    return out


def run_equivalence(cfg, seed=None):
    """Evolve Q0 = wigner(Psi0) classically and Psi0 quantum-mechanically; compare per snapshot."""
    seed = cfg["solver.seed"] if seed is None else seed
    with stage("setup"):
        params = cfg.params()
        potential = cfg.potential()
        grid = cfg.grid()
        psi0 = build_amplitude(cfg, grid)
        t_final = cfg.final_time()
        n = cfg.n_steps()
        h = t_final / n
        every = cfg.snapshot_every()
    with stage("wigner"):
        q0 = wigner.wigner_of_amplitude(psi0, params, grid)
    with stage("classical"):
        series = _classical_series(cfg, q0, potential, params, h, n, every, seed)
    cols = {k: [] for k in ("t", "l2_rel", "linf", "correction3_norm", "correction5_norm",
                            "classical_mass", "quantum_norm", "factorization_residual")}
    with stage("quantum"):
        prop = schrodinger.SplitStepPropagator(grid.spatial, potential, params, h)
        prop.check_stability(psi0.values)
        values = psi0.values
    for k, w in enumerate(series):
        with stage("quantum"):
            if k:
                values = prop.advance(values, every)
            psi = psi0.evolve_to(values, w.t)
        with stage("wigner"):
            q = wigner.wigner_of_amplitude(psi, params, grid)
            terms = liouville.quantum_correction_terms(q, potential, params, 5)
        with stage("factorize"):
            _, fres = wigner.factorize_amplitude(wigner.inverse_transform(w, params))
        cols["t"].append(w.t)
        cols["l2_rel"].append(_rel_l2(w.values.real, q.values.real))
        cols["linf"].append(float(np.max(np.abs(w.values.real - q.values.real))))
        cols["correction3_norm"].append(_field_norm(terms[3].values.real, grid))
        cols["correction5_norm"].append(_field_norm(terms[5].values.real, grid))
        cols["classical_mass"].append(w.mass().real)
        cols["quantum_norm"].append(psi.norm2())
        cols["factorization_residual"].append(fres)
    summary = {"max_l2_rel": max(cols["l2_rel"]), "final_l2_rel": cols["l2_rel"][-1],
               "n_snapshots": len(series), "dt": h, "n_steps": n, "snapshot_every": every,
               "classical_solver": cfg["solver.classical"]}
    return ComparisonReport("equivalence", cols, summary, _provenance(cfg, seed))


# ---------------------------------------------------------------------------
# theorem
# ---------------------------------------------------------------------------


def initial_coefficient_matrix(cfg, basis):
    kind = cfg["initial.kind"]
    if kind == "coefficients":
        return wigner.CoefficientMatrix.pure(_coefficients(cfg, basis))
    if kind == "mixture":
        c = np.zeros((basis.size, basis.size), dtype=np.complex128)
        weights = np.asarray(cfg["initial.weights"], dtype=float)
        weights = weights / weights.sum()
        for n, wt in zip(cfg["initial.states"], weights):
            i = basis.position(n)
            c[i, i] += wt
        return wigner.CoefficientMatrix(c, basis.indices, 0.0, basis.describe())
    raise ConfigError("the theorem check needs initial.kind = coefficients or mixture")


def theorem_metrics(w, basis, params):
    """Residuals of the factorization theorem for one distribution."""
    grid = w.grid
    t_field = wigner.inverse_transform(w, params)
    _, fres = wigner.factorize_amplitude(t_field)
    c = wigner.expand_in_wmn(w, basis, params)
    herm = wigner.hermiticity_residual(c)
    a, defect = wigner.purity_decomposition(c)
    psi = synthesize_amplitude(a, basis, grid.spatial)
    synth = float(np.max(np.abs(t_field.values - wigner.amplitude_product(psi, grid))))
    return {"factorization_residual": fres, "hermiticity_residual": herm, "purity_defect": defect,
            "synthesis_error": synth, "reconstruction_residual": c.reconstruction_residual,
            "trace": c.trace().real}


def run_theorem_check(cfg, seed=None):
    """Classical W built from a coefficient matrix, then T[W] factorized and compared."""
    seed = cfg["solver.seed"] if seed is None else seed
    with stage("setup"):
        params = cfg.params()
        grid = cfg.grid()
        basis = build_basis(cfg, grid)
        c0 = initial_coefficient_matrix(cfg, basis)
    with stage("synthesize"):
        w0 = wigner.wmn_synthesize(c0, basis, params, grid)
    series = [w0]
    t_final = cfg["solver.t_final"]
    if t_final:
        with stage("classical"):
            n = cfg.n_steps()
            series = liouville.evolve_grid_series(w0, cfg.potential(), params, t_final / n, n,
                                                  cfg.snapshot_every())
    cols = {"t": []}
    for w in series:
        with stage("theorem"):
            m = theorem_metrics(w, basis, params)
        cols["t"].append(w.t)
        for k, v in m.items():
            cols.setdefault(k, []).append(v)
    summary = {"max_factorization_residual": max(cols["factorization_residual"]),
               "max_hermiticity_residual": max(cols["hermiticity_residual"]),
               "max_purity_defect": max(cols["purity_defect"]),
               "max_synthesis_error": max(cols["synthesis_error"]),
               "n_snapshots": len(series)}
    return ComparisonReport("theorem", cols, summary, _provenance(cfg, seed))


# ---------------------------------------------------------------------------
# convergence sweeps
# ---------------------------------------------------------------------------


def loglog_slope(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _check_values(values):
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise ConfigError(f"a sweep needs at least 3 values, got {v.size}")
    d = np.diff(v)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ConfigError("sweep values must be strictly monotone")
    if np.any(v <= 0):
        raise ConfigError("sweep values must be positive")
    return v


def _sweep_dt(cfg, values):
    params, potential, grid = cfg.params(), cfg.potential(), cfg.grid()
    psi0 = build_amplitude(cfg, grid)
    q0 = wigner.wigner_of_amplitude(psi0, params, grid)
    t = cfg.final_time()

    def run(dt):
        n = max(1, math.ceil(t / dt - 1e-9))
        with stage("classical"):
            w = liouville.evolve_grid(q0, potential, params, t, t / n)
        with stage("quantum"):
            prop = schrodinger.SplitStepPropagator(grid.spatial, potential, params, t / n)
            v = prop.advance(psi0.values, n)
        return t / n, w.values.real, v

    _, w_ref, v_ref = run(float(np.min(values)) / 8.0)
    cols = {"value": [], "dt": [], "classical_error": [], "quantum_error": [], "l2_rel": []}
    for dt in values:
        h, w, v = run(float(dt))
        with stage("wigner"):
            q = wigner.wigner_of_amplitude(psi0.evolve_to(v, t), params, grid).values.real
        cols["value"].append(dt)
        cols["dt"].append(h)
        cols["classical_error"].append(_rel_l2(w, w_ref))
        cols["quantum_error"].append(math.sqrt(float(np.sum(np.abs(v - v_ref) ** 2)) * grid.dx))
        cols["l2_rel"].append(_rel_l2(w, q))
    slopes = {"classical_error": loglog_slope(cols["dt"], cols["classical_error"]),
              "quantum_error": loglog_slope(cols["dt"], cols["quantum_error"])}
    return cols, slopes, {"reference_dt": float(np.min(values)) / 8.0, "t_final": t}


def _sweep_dx(cfg, values):
    params, potential = cfg.params(), cfg.potential()
    base = cfg.grid()
    length = base.spatial.length
    t = cfg.final_time()
    cols = {"value": [], "dx": [], "l2_rel": []}
    for nx in values:
        n_x = int(round(nx))
        local = cfg.replace(grid__n_x=n_x, grid__n_p=n_x, grid__length=length)
        grid = local.grid()
        psi0 = build_amplitude(local, grid)
        q0 = wigner.wigner_of_amplitude(psi0, params, grid)
        n = local.n_steps()
        with stage("classical"):
            w = liouville.evolve_grid(q0, potential, params, t, t / n)
        with stage("quantum"):
            v = schrodinger.SplitStepPropagator(grid.spatial, potential, params, t / n).advance(psi0.values, n)
        q = wigner.wigner_of_amplitude(psi0.evolve_to(v, t), params, grid)
        cols["value"].append(nx)
        cols["dx"].append(grid.dx)
        cols["l2_rel"].append(_rel_l2(w.values.real, q.values.real))
    return cols, {"l2_rel": loglog_slope(cols["dx"], cols["l2_rel"])}, {"length": length, "t_final": t}


def _sweep_samples(cfg, values, seed):
    params, potential, grid = cfg.params(), cfg.potential(), cfg.grid()
    psi0 = build_amplitude(cfg, grid)
    q0 = wigner.wigner_of_amplitude(psi0, params, grid)
    t = cfg.final_time()
    n = cfg.n_steps()
    spread = initial_spread(cfg, psi0)
    if spread is not None:
        sampler = liouville.GaussianSampler(*spread, method="random")
    else:
        sampler = liouville.GridSampler(q0, "random")
    with stage("classical"):
        w_ref = liouville.evolve_grid(q0, potential, params, t, t / n).values.real
    cols = {"value": [], "density_error": []}
    for count in values:
        with stage("ensemble"):
            ens = liouville.evolve_ensemble(sampler, int(round(count)), potential, params, t, t / n, seed)
            w = liouville.ensemble_to_grid(ens, grid, "histogram")
        cols["value"].append(count)
        cols["density_error"].append(_rel_l2(w.values.real, w_ref))
    return cols, {"density_error": loglog_slope(cols["value"], cols["density_error"])}, {
        "t_final": t, "density": "histogram", "sampling": "random"}


def run_convergence_sweep(cfg, axis=None, values=None, seed=None):
    """Repeat the configured experiment over ``values`` of ``axis`` and fit log-log slopes.

    * ``dt``: each branch against its own run at ``min(values) / 8``.
    * ``dx``: values are grid sizes ``n_x`` (with ``n_p = n_x``) at fixed box length;
      the metric is the classical/quantum distance at the final time.
    * ``n_samples``: histogram of a randomly sampled ensemble against the grid solver.
    """
    axis = axis or cfg["sweep.axis"]
    values = cfg["sweep.values"] if values is None else values
    if values is None:
        raise ConfigError("sweep needs values (sweep.values)")
    seed = cfg["solver.seed"] if seed is None else seed
    v = _check_values(values)
    if axis == "dt":
        cols, slopes, extra = _sweep_dt(cfg, v)
    elif axis == "dx":
        cols, slopes, extra = _sweep_dx(cfg, v)
    elif axis == "n_samples":
        cols, slopes, extra = _sweep_samples(cfg, v, seed)
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    summary = {"axis": axis, "slopes": slopes, **extra}
    return ComparisonReport(f"sweep_{axis}", cols, summary, _provenance(cfg, seed))
