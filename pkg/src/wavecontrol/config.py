"""Scenario definitions: parse-validated key=value configs for the CLI.

A scenario file is UTF-8 text, one `key = value` per line, `#` comments.
`parse_config` validates everything up front and reports every offense
(not just the first) through ConfigError; a valid scenario has all
defaults resolved and carries any advisory warnings (e.g. the geometric
control condition).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .core import Grid, StatePair, read_field, t_exceeds_geometric
from .least_squares import LSConfig
from .nonlinearity import Nonlinearity, make as make_nonlinearity

__all__ = ["ParseError", "ConfigError", "Scenario", "parse_config", "METHODS"]

METHODS = ("ls", "picard", "newton", "newton_alt", "hum_linear", "probe")


@dataclass(frozen=True)
class ParseError:
    line: int
    message: str

    def __str__(self):
        return f"line {self.line}: {self.message}"


class ConfigError(ValueError):
    """Carries every ParseError found in a config."""

    def __init__(self, errors: list[ParseError]):
        super().__init__("; ".join(str(e) for e in errors))
        self.errors = errors


@dataclass
class Scenario:
    method: str = "ls"
    nx: int = 200
    T: float = 1.0
    l1: float = 0.2
    l2: float = 0.8
    dt: float | None = None
    g: str = "zero"
    init: str = "zero"
    target: str = "zero"
    e_tol: float = 1e-12
    max_outer: int = 50
    m: float = 2.0
    ls_grid: int = 25
    golden_iters: int = 20
    inner_tol: float = 1e-8
    inner_max_iter: int = 500
    init_mode: str = "linear_star"
    guard: float = 1e6
    increment_tol: float = 1e-8
    probe_magnitudes: tuple[float, ...] = (0.0, 1.0, 4.0)
    probe_samples: int = 3
    seed: int = 0
    out: str = "out"
    warnings: list[str] = field(default_factory=list)

    def grid(self) -> Grid:
        return Grid.make(self.nx, self.T, (self.l1, self.l2), self.dt)

    def nonlinearity(self) -> Nonlinearity:
        return make_nonlinearity(self.g)

    def ls_config(self) -> LSConfig:
        return LSConfig(m=self.m, ls_grid_points=self.ls_grid, golden_iters=self.golden_iters,
                        E_tol=self.e_tol, max_outer=self.max_outer, inner_tol=self.inner_tol,
                        inner_max_iter=self.inner_max_iter, init_mode=self.init_mode,
                        blowup_guard=self.guard)

    def state(self, spec: str, grid: Grid) -> StatePair:
        return _build_state(spec, grid)

    def resolved_items(self) -> list[tuple[str, str]]:
        out = []
        for key in sorted(_FIELDS):
            val = getattr(self, key)
            if key == "probe_magnitudes":
                val = ",".join(repr(v) for v in val)
            out.append((key, "" if val is None else str(val)))
        return out


_PROFILE_RE = re.compile(r"^\s*([a-z_][a-z0-9_]*)\s*(?:\((.*)\))?\s*$")


def _build_state(spec: str, grid: Grid) -> StatePair:
    """Named initial/target profiles: zero, sine_mode(n,amp), bump(c,w,amp), file(pos,vel)."""
    m = _PROFILE_RE.match(spec)
    if m is None:
        raise ValueError(f"cannot parse state profile {spec!r}")
    name, args = m.group(1), m.group(2)
    params = [p.strip() for p in args.split(",")] if args and args.strip() else []
    x = grid.x
    if name == "zero":
        return StatePair.zeros(grid)
    if name == "sine_mode":
        n, amp = int(float(params[0])), float(params[1])
        return StatePair(grid, amp * np.sin(n * np.pi * x), np.zeros(grid.nx))
    if name == "bump":
        center, width, amp = (float(p) for p in params)
        xi = (x - center) / width
        pos = np.where(np.abs(xi) < 1.0, amp * np.exp(1.0 - 1.0 / np.maximum(1.0 - xi ** 2, 1e-300)), 0.0)
        return StatePair(grid, pos, np.zeros(grid.nx))
    if name == "file":
        pos_field = read_field(params[0])
        vel_field = read_field(params[1])
        for f in (pos_field, vel_field):
            if f.values.shape[1] != grid.nx:
                raise ValueError(f"state dump {params} does not match nx={grid.nx}")
        return StatePair(grid, pos_field.values[0], vel_field.values[0])
    raise ValueError(f"unknown state profile {name!r}")


# key -> (type tag, parser)
def _parse_bool_free_float(s: str) -> float:
    return float(s)


_FIELDS: dict[str, tuple[str, object]] = {
    "method": ("str", str),
    "nx": ("int", int),
    "T": ("float", float),
    "l1": ("float", float),
    "l2": ("float", float),
    "dt": ("float", float),
    "g": ("str", str),
    "init": ("str", str),
    "target": ("str", str),
    "e_tol": ("float", float),
    "max_outer": ("int", int),
    "m": ("float", float),
    "ls_grid": ("int", int),
    "golden_iters": ("int", int),
    "inner_tol": ("float", float),
    "inner_max_iter": ("int", int),
    "init_mode": ("str", str),
    "guard": ("float", float),
    "increment_tol": ("float", float),
    "probe_magnitudes": ("floats", lambda s: tuple(float(p) for p in s.split(","))),
    "probe_samples": ("int", int),
    "seed": ("int", int),
    "out": ("str", str),
}


def parse_config(text: str) -> Scenario:
    """Parse and validate a scenario; raises ConfigError with ALL offenses."""
    errors: list[ParseError] = []
    values: dict[str, object] = {}
    lines_of: dict[str, int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(ParseError(lineno, f"expected 'key = value', got {line!r}"))
            continue
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _FIELDS:
            errors.append(ParseError(lineno, f"unknown key {key!r}"))
            continue
        if key in values:
            errors.append(ParseError(lineno, f"duplicate key {key!r}"))
            continue
        kind, parser = _FIELDS[key]
        try:
            values[key] = parser(val)
        except (ValueError, TypeError):
            errors.append(ParseError(lineno, f"cannot parse {key!r} as {kind}: {val!r}"))
            continue
        lines_of[key] = lineno

    # Semantic checks run on whatever parsed, so one bad key does not mask
    # every other offense in the file.
    scenario = Scenario(**values)

    def err(key: str, message: str):
        errors.append(ParseError(lines_of.get(key, 0), message))

    if True:
        if scenario.method not in METHODS:
            err("method", f"unknown method {scenario.method!r}; choose from {METHODS}")
        if scenario.nx < 3:
            err("nx", f"nx must be >= 3, got {scenario.nx}")
        if scenario.T <= 0:
            err("T", f"T must be positive, got {scenario.T}")
        if not (0.0 <= scenario.l1 < scenario.l2 <= 1.0):
            err("l1", f"need 0 <= l1 < l2 <= 1, got ({scenario.l1}, {scenario.l2})")
        if scenario.dt is not None and scenario.nx >= 3:
            dx = 1.0 / (scenario.nx + 1)
            if scenario.dt > dx * (1 + 1e-12):
                err("dt", f"dt={scenario.dt} violates the CFL bound dx={dx}")
            elif scenario.dt <= 0:
                err("dt", "dt must be positive")
        for key in ("e_tol", "inner_tol", "increment_tol"):
            if getattr(scenario, key) <= 0:
                err(key, f"{key} must be positive")
        if scenario.m < 1:
            err("m", f"line-search cap m must be >= 1, got {scenario.m}")
        for key in ("max_outer", "ls_grid", "golden_iters", "inner_max_iter", "probe_samples"):
            if getattr(scenario, key) < 1:
                err(key, f"{key} must be >= 1")
        if scenario.init_mode not in ("linear_star", "affine_star"):
            err("init_mode", f"init_mode must be linear_star or affine_star, got {scenario.init_mode!r}")
        if any(mg < 0 for mg in scenario.probe_magnitudes):
            err("probe_magnitudes", "potential magnitudes must be nonnegative")
        try:
            scenario.nonlinearity()
        except ValueError as exc:
            err("g", str(exc))
        if not errors:
            grid = scenario.grid()
            for key in ("init", "target"):
                try:
                    scenario.state(getattr(scenario, key), grid)
                except (ValueError, OSError) as exc:
                    err(key, f"bad {key} profile: {exc}")

    if errors:
        raise ConfigError(sorted(errors, key=lambda e: e.line))

    if not t_exceeds_geometric(scenario.grid()):
        bound = 2.0 * max(scenario.l1, 1.0 - scenario.l2)
        scenario.warnings.append(
            f"T={scenario.T} does not exceed the geometric control time "
            f"2*max(l1, 1-l2)={bound}; control solves may fail")
    return scenario
