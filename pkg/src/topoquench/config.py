"""Run configuration: a flat, sectioned ``key = value`` format.

Grammar, one statement per line::

    # comment (also allowed after a value)
    scenario = chern-quench
    [grid]
    nx = 40
    time.dt = 0.01

A ``[section]`` header prefixes the following bare keys with ``section.``;
dotted keys are always taken literally.  ``[]`` returns to the top level.
Values are numbers or bare words; ``time.samples`` is either a count or a
comma-separated list of times.  Unknown and repeated keys are errors.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError

SCENARIOS = ("lz", "chern-quench", "bhz-quench", "z2-quench", "verify")
QUENCH_KINDS = ("sudden", "linear_ramp", "smooth_tanh")
TOLERANCE_KEYS = ("floor", "trs", "propagator", "spectrum", "eigenvector", "pairing",
                  "hellmann_feynman")

_FLOAT_KEYS = {
    "model.v": "v", "model.g": "g", "model.m_initial": "m_initial", "model.m_final": "m_final",
    "quench.t_start": "quench_t_start", "quench.t_end": "quench_t_end",
    "quench.width": "quench_width",
    "time.t0": "t0", "time.t1": "t1", "time.dt": "dt",
}
_INT_KEYS = {"grid.nl": "nl", "grid.nx": "nx", "grid.ny": "ny"}
_STR_KEYS = {"scenario": "scenario", "quench.kind": "quench_kind", "output.dir": "output_dir"}
KEYS = (tuple(_STR_KEYS) + tuple(_FLOAT_KEYS) + tuple(_INT_KEYS) + ("time.samples",)
        + tuple(f"tol.{k}" for k in TOLERANCE_KEYS))

_TORUS_DEFAULTS = {"m_initial": -1.0, "m_final": 3.0, "t0": 0.0, "t1": 5.0}
DEFAULT_TORUS_GRID = 40
_SCENARIO_DEFAULTS = {
    "lz": {"nl": 256, "samples": 401},
    "chern-quench": dict(_TORUS_DEFAULTS, samples=11),
    "bhz-quench": dict(_TORUS_DEFAULTS, samples=11),
    "z2-quench": dict(_TORUS_DEFAULTS, samples=11),
    "verify": dict(_TORUS_DEFAULTS, samples=11, v=1.0, g=1.0, nl=256, dt=1e-3),
}
_SECTION = re.compile(r"^\[\s*([A-Za-z_][\w]*)?\s*\]$")
_ASSIGN = re.compile(r"^([A-Za-z_][\w.]*)\s*=\s*(.*)$")
MIN_GRID = 8


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    v: float | None = None
    g: float | None = None
    m_initial: float | None = None
    m_final: float | None = None
    quench_kind: str = "sudden"
    quench_t_start: float | None = None
    quench_t_end: float | None = None
    quench_width: float | None = None
    nl: int = 256
    nx: int | None = None
    ny: int | None = None
    t0: float | None = None
    t1: float | None = None
    dt: float = 1e-2
    samples: int | tuple = 11
    output_dir: str = "out"
    tolerances: dict = field(default_factory=dict)

    @property
    def torus(self):
        return self.scenario != "lz"

    def sample_times(self):
        """Sample instants, each snapped to the nearest node of the time grid."""
        n_steps = int(round((self.t1 - self.t0) / self.dt))
        if isinstance(self.samples, int):
            idx = np.rint(np.linspace(0, n_steps, self.samples)).astype(int)
        else:
            idx = np.rint((np.asarray(self.samples) - self.t0) / self.dt).astype(int)
        return [float(t) for t in self.t0 + self.dt * np.unique(idx)]

    def tolerance(self, name, default):
        return float(self.tolerances.get(name, default))

    def echo(self):
        """Resolved settings as an ordered, JSON-ready mapping."""
        out = asdict(self)
        out["samples"] = self.samples if isinstance(self.samples, int) else list(self.samples)
        out["tolerances"] = {k: self.tolerances[k] for k in sorted(self.tolerances)}
        return out

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        return validate(RunConfig(**data))


def _strip_comment(line):
    return line.split("#", 1)[0].strip()


def _number(text, key, line, integer=False):
    try:
        value = int(text) if integer else float(text)
    except ValueError:
        kind = "an integer" if integer else "a number"
        raise ConfigError(f"{key} must be {kind}, got {text!r}", line=line, key=key) from None
    if not integer and not math.isfinite(value):
        raise ConfigError(f"{key} must be finite, got {text!r}", line=line, key=key)
    return value


def _samples(text, line):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) == 1:
        return _number(parts[0], "time.samples", line, integer=True)
    if any(not p for p in parts):
        raise ConfigError("time.samples has an empty entry", line=line, key="time.samples")
    return tuple(_number(p, "time.samples", line) for p in parts)


def parse_config(text):
    """Parse and validate a configuration; returns a :class:`RunConfig`."""
    section = ""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line)
        if not body:
            continue
        m = _SECTION.match(body)
        if m:
            section = m.group(1) or ""
            continue
        m = _ASSIGN.match(body)
        if not m:
            raise ConfigError(f"cannot parse {body!r}; expected 'key = value' or '[section]'",
                              line=lineno)
        key, value = m.group(1), m.group(2).strip()
        if section and "." not in key:
            key = f"{section}.{key}"
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", line=lineno, key=key)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r} (first set on line {raw[key][1]})",
                              line=lineno, key=key)
        if not value:
            raise ConfigError(f"{key} has no value", line=lineno, key=key)
        raw[key] = (value, lineno)

    if "scenario" not in raw:
        raise ConfigError("missing required key 'scenario'", key="scenario")
    values = {"tolerances": {}}
    for key, (text_value, lineno) in raw.items():
        if key in _STR_KEYS:
            values[_STR_KEYS[key]] = text_value
        elif key in _FLOAT_KEYS:
            values[_FLOAT_KEYS[key]] = _number(text_value, key, lineno)
        elif key in _INT_KEYS:
            values[_INT_KEYS[key]] = _number(text_value, key, lineno, integer=True)
        elif key == "time.samples":
            values["samples"] = _samples(text_value, lineno)
        else:
            values["tolerances"][key[4:]] = _number(text_value, key, lineno)

    scenario = values["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}; got {scenario!r}",
                          line=raw["scenario"][1], key="scenario")
    for name, default in _SCENARIO_DEFAULTS[scenario].items():
        values.setdefault(name, default)
    return validate(RunConfig(**values))


def _require(cond, key, message):
    if not cond:
        raise ConfigError(f"{key} {message}", key=key)


def validate(cfg):
    """Range checks; returns ``cfg`` with derived defaults filled in."""
    _require(cfg.scenario in SCENARIOS, "scenario", f"must be one of {', '.join(SCENARIOS)}")
    needed = [("time.t0", cfg.t0), ("time.t1", cfg.t1)]
    if cfg.scenario == "lz":
        needed += [("model.v", cfg.v), ("model.g", cfg.g)]
    else:
        needed += [("model.m_initial", cfg.m_initial), ("model.m_final", cfg.m_final)]
    for key, value in needed:
        _require(value is not None, key, "is required for this scenario")
    for key, attr in list(_FLOAT_KEYS.items()):
        value = getattr(cfg, attr)
        _require(value is None or math.isfinite(value), key, "must be finite")
    _require(cfg.dt > 0, "time.dt", f"must be > 0, got {cfg.dt}")
    _require(cfg.t1 > cfg.t0, "time.t1", f"must exceed time.t0, got [{cfg.t0}, {cfg.t1}]")
    n = (cfg.t1 - cfg.t0) / cfg.dt
    _require(abs(n - round(n)) <= 1e-9 * max(1.0, n), "time.dt",
             f"must divide the window [{cfg.t0}, {cfg.t1}] into whole steps")
    if cfg.v is not None:
        _require(cfg.v > 0, "model.v", f"must be > 0, got {cfg.v}")
    if cfg.g is not None:
        _require(cfg.g >= 0, "model.g", f"must be >= 0, got {cfg.g}")

    _require(cfg.nl >= MIN_GRID, "grid.nl", f"must be >= {MIN_GRID}, got {cfg.nl}")
    changes = {}
    if cfg.torus:
        nx = DEFAULT_TORUS_GRID if cfg.nx is None else cfg.nx
        ny = nx if cfg.ny is None else cfg.ny
        _require(nx >= MIN_GRID, "grid.nx", f"must be >= {MIN_GRID}, got {nx}")
        _require(ny >= MIN_GRID, "grid.ny", f"must be >= {MIN_GRID}, got {ny}")
        if cfg.scenario in ("z2-quench", "verify"):
            _require(ny % 2 == 0, "grid.ny", "must be even for the half-zone Z2")
        changes.update(nx=nx, ny=ny)

    _require(cfg.quench_kind in QUENCH_KINDS, "quench.kind",
             f"must be one of {', '.join(QUENCH_KINDS)}")
    t_start = cfg.t0 if cfg.quench_t_start is None else cfg.quench_t_start
    changes["quench_t_start"] = t_start
    if cfg.quench_kind != "sudden":
        _require(cfg.quench_t_end is not None and cfg.quench_t_end > t_start, "quench.t_end",
                 "must exceed quench.t_start")
    if cfg.quench_kind == "smooth_tanh":
        _require(cfg.quench_width is not None and cfg.quench_width > 0, "quench.width",
                 "must be > 0")

    if isinstance(cfg.samples, int):
        _require(cfg.samples >= 2, "time.samples", f"must be >= 2, got {cfg.samples}")
    else:
        s = cfg.samples
        _require(all(b > a for a, b in zip(s, s[1:])), "time.samples", "must be increasing")
        _require(cfg.t0 <= s[0] and s[-1] <= cfg.t1, "time.samples",
                 f"must lie in [{cfg.t0}, {cfg.t1}]")
        off = [abs((t - cfg.t0) / cfg.dt - round((t - cfg.t0) / cfg.dt)) for t in s]
        _require(max(off) <= 1e-6, "time.samples", "must be multiples of time.dt from time.t0")
        changes["samples"] = tuple(float(t) for t in s)

    for name, value in cfg.tolerances.items():
        _require(name in TOLERANCE_KEYS, f"tol.{name}", "is not a known tolerance")
        _require(value > 0, f"tol.{name}", f"must be > 0, got {value}")
    _require(bool(cfg.output_dir), "output.dir", "must not be empty")
    object_changes = {k: v for k, v in changes.items() if getattr(cfg, k) != v}
    if not object_changes:
        return cfg
    data = asdict(cfg)
    data.update(object_changes)
    return RunConfig(**data)
