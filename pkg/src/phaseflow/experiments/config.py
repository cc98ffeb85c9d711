"""Flat ``key = value`` experiment configuration.

Keys carry a section prefix (``system.mass``, ``potential.form``, ...).
Lines starting with ``#`` are comments. Unknown keys and malformed values
raise :class:`ConfigError` at load time, and the assembled objects (grid,
potential, initial state) are built once to validate them.
"""

from dataclasses import dataclass, field
import math

from ..core.errors import ConfigError, FieldIOError, PhaseflowError
from ..core.grids import BOUNDARIES, PhaseSpaceGrid, SpatialGrid, SystemParams
from ..core.potentials import DoubleWell, Harmonic, Polynomial, Quartic, free


def _float(text):
    return float(text)


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _float_list(text):
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _int_list(text):
    return [_int(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _complex_list(text):
    return [complex(t.replace(" ", "")) for t in text.replace(";", ",").split(",") if t.strip()]


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _str(text):
    return text


# key -> (parser, default)
SCHEMA = {
    "system.mass": (_float, 1.0),
    "system.alpha": (_float, 1.0),
    "potential.form": (_choice("harmonic", "quartic", "double_well", "polynomial", "free"), "harmonic"),
    "potential.k": (_float, 1.0),
    "potential.lambda": (_float, 0.1),
    "potential.a": (_float, 1.0),
    "potential.b": (_float, 1.0),
    "potential.coeffs": (_float_list, None),
    "potential.shift": (_float, 0.0),
    "grid.n_x": (_int, 256),
    "grid.n_p": (_int, None),
    "grid.length": (_float, None),
    "grid.boundary": (_choice(*BOUNDARIES), "vanishing"),
    "initial.kind": (_choice("coherent", "gaussian", "eigenstate", "coefficients", "mixture"), "coherent"),
    "initial.x0": (_float, 1.0),
    "initial.p0": (_float, 0.0),
    "initial.sigma": (_float, None),
    "initial.n": (_int, 0),
    "initial.coeffs": (_complex_list, None),
    "initial.states": (_int_list, None),
    "initial.weights": (_float_list, None),
    "basis.family": (_choice("plane_wave", "harmonic", "numeric"), "plane_wave"),
    "basis.n_max": (_int, 8),
    "basis.b": (_float, None),
    "basis.n_states": (_int, None),
    "solver.dt": (_float, None),
    "solver.t_final": (_float, None),
    "solver.classical": (_choice("grid", "ensemble"), "grid"),
    "solver.n_samples": (_int, 100000),
    "solver.sampling": (_choice("sobol", "random"), "sobol"),
    "solver.density": (_choice("histogram", "kde"), "kde"),
    "solver.bandwidth": (_float, None),
    "solver.seed": (_int, 0),
    "solver.n_states": (_int, 8),
    "solver.stencil": (_choice("spectral", "2", "4"), "spectral"),
    "output.snapshots": (_int, None),
    "output.prefix": (_str, "run"),
    "output.csv": (_choice("true", "false"), "true"),
    "sweep.axis": (_choice("dt", "dx", "n_samples"), "dt"),
    "sweep.values": (_float_list, None),
}

SECTIONS = sorted({k.split(".")[0] for k in SCHEMA})


def _format(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, complex):
        return repr(value).strip("()")
    if isinstance(value, list):
        return ", ".join(_format(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed settings; ``values`` maps every known key to its value or default."""

    values: dict = field(default_factory=dict)
    explicit: tuple = ()

    def __getitem__(self, key):
        if key not in SCHEMA:
            raise KeyError(key)
        return self.values.get(key, SCHEMA[key][1])

    def replace(self, **updates):
        """Copy with keys overridden; dotted keys are passed with ``__`` for the dot."""
        vals = dict(self.values)
        explicit = set(self.explicit)
        for k, v in updates.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown configuration key {key!r}")
            vals[key] = v
            explicit.add(key)
        cfg = ExperimentConfig(vals, tuple(sorted(explicit)))
        cfg.validate()
        return cfg

    def to_text(self):
        """Canonical text form: every explicitly set key, sorted."""
        return "".join(f"{k} = {_format(self.values[k])}\n" for k in sorted(self.explicit))

    def to_dict(self):
        return {k: self[k] for k in sorted(SCHEMA)}

    # -- derived objects ---------------------------------------------------

    def params(self):
        return SystemParams(self["system.mass"], self["system.alpha"])

    def potential(self):
        form = self["potential.form"]
        if form == "harmonic":
            v = Harmonic(self["potential.k"])
        elif form == "quartic":
            v = Quartic(self["potential.lambda"])
        elif form == "double_well":
            v = DoubleWell(self["potential.a"], self["potential.b"])
        elif form == "polynomial":
            coeffs = self["potential.coeffs"]
            if not coeffs:
                raise ConfigError("potential.form = polynomial needs potential.coeffs")
            v = Polynomial(tuple(coeffs))
        else:
            v = free()
        shift = self["potential.shift"]
        return v.shifted(shift) if shift else v

    def grid(self):
        params = self.params()
        n_x = self["grid.n_x"]
        n_p = self["grid.n_p"] or n_x
        length = self["grid.length"]
        boundary = self["grid.boundary"]
        if length is None:
            return PhaseSpaceGrid.balanced(n_x, params, boundary, n_p=n_p)
        return PhaseSpaceGrid(SpatialGrid.centered(length, n_x, boundary), n_p, params.alpha)

    def time_step(self):
        dt = self["solver.dt"]
        if dt is None:
            return 2.0 * math.pi / 2000.0
        return dt

    def final_time(self):
        t = self["solver.t_final"]
        if t is None:
            return 2.0 * math.pi / self.potential_omega()
        return t

    def potential_omega(self):
        """Small-oscillation frequency used for default time scales (1 when undefined)."""
        if self["potential.form"] == "harmonic":
            return math.sqrt(self["potential.k"] / self["system.mass"])
        return 1.0

    def n_steps(self):
        return max(1, math.ceil(self.final_time() / self.time_step() - 1e-9))

    def snapshot_every(self):
        k = self["output.snapshots"]
        if k is None:
            return max(1, self.n_steps() // 8)
        return k

    def validate(self):
        try:
            self.params()
            self.grid()
            self.potential()
        except ConfigError:
            raise
        except (PhaseflowError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        if self.time_step() <= 0:
            raise ConfigError("solver.dt must be positive")
        if self.final_time() < 0:
            raise ConfigError("solver.t_final must be non-negative")
        if self["output.snapshots"] is not None and self["output.snapshots"] < 1:
            raise ConfigError("output.snapshots must be at least 1")
        kind = self["initial.kind"]
        if kind == "coefficients" and not self["initial.coeffs"]:
            raise ConfigError("initial.kind = coefficients needs initial.coeffs")
        if kind == "mixture":
            states = self["initial.states"]
            weights = self["initial.weights"]
            if not states or not weights or len(states) != len(weights):
                raise ConfigError("initial.kind = mixture needs initial.states and matching initial.weights")
            if any(w < 0 for w in weights) or not sum(weights) > 0:
                raise ConfigError("mixture weights must be non-negative with a positive sum")
        if kind == "gaussian" and self["initial.sigma"] is not None and self["initial.sigma"] <= 0:
            raise ConfigError("initial.sigma must be positive")
        return self


def parse_config(text, overrides=None):
    """Parse config text; ``overrides`` is a mapping of dotted keys to raw strings."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        values[key] = (val, lineno)
    for key, val in (overrides or {}).items():
        values[key] = (str(val), None)
    parsed = {}
    for key, (val, lineno) in values.items():
        where = f"line {lineno}: " if lineno else ""
        if key not in SCHEMA:
            raise ConfigError(f"{where}unknown configuration key {key!r}")
        parser = SCHEMA[key][0]
        try:
            parsed[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"{where}bad value for {key}: {val!r} ({exc})") from exc
    cfg = ExperimentConfig(parsed, tuple(sorted(parsed)))
    return cfg.validate()


def load_config(path, overrides=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise FieldIOError(path, f"cannot read config ({exc.strerror or exc})") from exc
    return parse_config(text, overrides)
