"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 I/O error, 1 any other package error.
"""

import argparse
import os
import sys

import numpy as np

from . import liouville, schrodinger, wigner
from .core.errors import (
    ConfigError,
    ConvergenceError,
    DivergenceError,
    FieldIOError,
    PhaseflowError,
)
from .core.fieldio import export_csv, save_field
from .experiments.config import load_config, parse_config
from .experiments.runners import (
    build_amplitude,
    run_convergence_sweep,
    run_equivalence,
    run_theorem_check,
    stage,
)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4


def _config(args):
    overrides = {}
    if args.seed is not None:
        overrides["solver.seed"] = str(args.seed)
    if args.snapshots is not None:
        overrides["output.snapshots"] = str(args.snapshots)
    for item in args.set or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = val.strip()
    if args.config:
        return load_config(args.config, overrides)
    return parse_config("", overrides)


def _out(args, *parts):
    path = os.path.join(args.out, *parts)
    try:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    except OSError as exc:
        raise FieldIOError(path, f"cannot create output directory ({exc.strerror or exc})") from exc
    return path


def _want_csv(cfg):
    return cfg["output.csv"] == "true"


def cmd_eigen(cfg, args):
    params, potential, grid = cfg.params(), cfg.potential(), cfg.grid()
    stencil = cfg["solver.stencil"]
    stencil = stencil if stencil == "spectral" else int(stencil)
    with stage("eigen"):
        sol = schrodinger.solve_eigenproblem(potential, params, grid.spatial, cfg["solver.n_states"], stencil)
    sol.to_csv(_out(args, "eigen.csv"))
    for n in range(sol.n_states):
        save_field(sol.amplitude(n), _out(args, f"state_{n:03d}.pbf"))
    for n, e in enumerate(sol.energies):
        print(f"{n} {e:.12g}")


def cmd_evolve_quantum(cfg, args):
    params, potential, grid = cfg.params(), cfg.potential(), cfg.grid()
    psi = build_amplitude(cfg, grid)
    n, every = cfg.n_steps(), cfg.snapshot_every()
    h = cfg.final_time() / n
    prop = schrodinger.SplitStepPropagator(grid.spatial, potential, params, h)
    prop.check_stability(psi.values)
    rows = []
    done = 0
    k = 0
    while True:
        save_field(psi, _out(args, f"psi_{k:04d}.pbf"))
        rows.append((psi.t, psi.norm2(), schrodinger.energy_expectation(psi, potential, params)))
        if done + every > n:
            break
        with stage("quantum"):
            psi = psi.evolve_to(prop.advance(psi.values, every), psi.t + every * h)
        done += every
        k += 1
    np.savetxt(_out(args, "quantum.csv"), np.array(rows), delimiter=",", header="t,norm,energy",
               comments="", fmt="%.17g")
    print(f"wrote {len(rows)} snapshots to {args.out}")


def cmd_evolve_classical(cfg, args):
    params, potential, grid = cfg.params(), cfg.potential(), cfg.grid()
    psi = build_amplitude(cfg, grid)
    q0 = wigner.wigner_of_amplitude(psi, params, grid)
    n, every = cfg.n_steps(), cfg.snapshot_every()
    h = cfg.final_time() / n
    with stage("classical"):
        if cfg["solver.classical"] == "grid":
            series = liouville.evolve_grid_series(q0, potential, params, h, n, every)
        else:
            sampler = liouville.GridSampler(q0, cfg["solver.sampling"])
            ens = liouville.evolve_ensemble(sampler, cfg["solver.n_samples"], potential, params,
                                            n * h, h, cfg["solver.seed"])
            ens.to_csv(_out(args, "ensemble.csv"))
            series = [liouville.ensemble_to_grid(ens, grid, cfg["solver.density"], cfg["solver.bandwidth"])]
    rows = []
    for k, w in enumerate(series):
        save_field(w, _out(args, f"w_{k:04d}.pbf"))
        rows.append((w.t, w.mass().real, w.metadata.get("clipped_mass", 0.0)))
    np.savetxt(_out(args, "classical.csv"), np.array(rows), delimiter=",", header="t,mass,clipped_mass",
               comments="", fmt="%.17g")
    print(f"wrote {len(rows)} snapshots to {args.out}")


def cmd_wigner(cfg, args):
    params, grid = cfg.params(), cfg.grid()
    psi = build_amplitude(cfg, grid)
    with stage("wigner"):
        q = wigner.wigner_of_amplitude(psi, params, grid)
        t_field = wigner.inverse_transform(q, params)
    save_field(q, _out(args, "wigner.pbf"))
    save_field(t_field, _out(args, "transform.pbf"))
    if _want_csv(cfg):
        export_csv(q, _out(args, "wigner.csv"))
    print(f"mass {q.mass().real:.12g} min {q.values.real.min():.6g}")


def _report(report, cfg, args):
    csv_path, json_path = report.write(args.out, f"{cfg['output.prefix']}_{report.kind}")
    for key in sorted(report.summary):
        print(f"{key} = {report.summary[key]}")
    print(f"wrote {csv_path} and {json_path}")


def cmd_compare(cfg, args):
    _report(run_equivalence(cfg), cfg, args)


def cmd_theorem(cfg, args):
    _report(run_theorem_check(cfg), cfg, args)


def cmd_sweep(cfg, args):
    values = [float(v) for v in args.values.split(",")] if args.values else None
    _report(run_convergence_sweep(cfg, args.axis, values), cfg, args)


COMMANDS = {
    "eigen": (cmd_eigen, "lowest eigenpairs of the configured potential"),
    "evolve-quantum": (cmd_evolve_quantum, "split-step propagation of the initial amplitude"),
    "evolve-classical": (cmd_evolve_classical, "Liouville evolution of the initial Wigner function"),
    "wigner": (cmd_wigner, "Wigner function and its inverse transform for the initial state"),
    "compare": (cmd_compare, "classical vs quantum evolution report"),
    "theorem": (cmd_theorem, "factorization round-trip report"),
    "sweep": (cmd_sweep, "convergence sweep over dt, dx or n_samples"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="phaseflow", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--seed", type=int, help="override solver.seed")
    common.add_argument("--snapshots", type=int, help="write a snapshot every k steps")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=text)
        if name == "sweep":
            p.add_argument("--axis", choices=("dt", "dx", "n_samples"))
            p.add_argument("--values", help="comma-separated sweep values")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        COMMANDS[args.command][0](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, ConvergenceError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except FieldIOError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PhaseflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
