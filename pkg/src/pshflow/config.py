"""YAML run configuration with line-precise validation.

Example::

    geometry:
      n: 3
      N: 8
      periods: 1.0
      metric: {recipe: conformal, f: "0.02 cos(x1) + 0.02 sin(y2)"}
    problem:
      chi: {base: beta, scale: -1.0}
      S: 1.0
    integrator: {t_end: 0.5, err_tol: 1.0e-8}
    monitor: {cadence: 0.1}
    output: {dir: out}
    seed: 0

Every section and key is optional except ``geometry.n`` and ``geometry.N``.
Unknown keys are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, InvariantViolation
from .flow import FlowProblem, StepControl
from .geometry import MetricField, chern_ricci
from .grid import Grid
from .recipes import (RecipeError, conformal_metric, explicit_metric, flat_metric,
                      kahler_metric, parse_trig)

SCHEMA = {
    "geometry": {"n", "N", "periods", "dealias", "metric"},
    "problem": {"omega0", "chi", "psi", "S", "volume", "variant"},
    "integrator": {"t_end", "err_tol", "dt_init", "dt_max", "dt_min", "pos_tol"},
    "monitor": {"cadence", "ceilings", "expect_singular", "estimates"},
    "output": {"dir", "checkpoint_every", "figures"},
    "maxtime": {"t_lo", "t_hi", "K", "iterations", "tol", "restarts", "temperatures",
                "run_flow", "t_end"},
    "check": {"tolerance"},
    "seed": None,
}
METRIC_KEYS = {"flat": {"recipe"}, "conformal": {"recipe", "f"}, "kahler": {"recipe", "phi"},
               "explicit": {"recipe", "matrix"}}
CHI_KEYS = {"base", "scale", "ddbar"}
CHI_BASES = ("canonical", "zero", "omega", "beta")


def _to_python(node, path: tuple, lines: dict):
    """Convert a composed YAML node, recording the line of every key path."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", ".".join(path + (key,)), k.start_mark.line + 1)
            lines[path + (key,)] = k.start_mark.line + 1
            out[key] = _to_python(v, path + (key,), lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_python(v, path + (str(i),), lines) for i, v in enumerate(node.value)]
    return yaml.SafeLoader("").construct_object(node, deep=True)


@dataclass
class RunConfig:
    """Validated configuration plus the objects it describes."""

    raw: dict
    lines: dict = field(repr=False)
    source: str = "<string>"
    grid: Grid = field(init=False, repr=False)
    problem: FlowProblem = field(init=False, repr=False)
    control: StepControl = field(init=False, repr=False)

    def __post_init__(self):
        self._validate_keys()
        self.grid = self._grid()
        self.problem = self._problem()
        self.control = self._control()

    # helpers ---------------------------------------------------------------------

    def line(self, *path) -> int | None:
        path = tuple(path)
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path)

    def fail(self, message: str, *path):
        raise ConfigError(message, ".".join(path) if path else None, self.line(*path))

    def section(self, name: str) -> dict:
        v = self.raw.get(name, {})
        if v is None:
            return {}
        if not isinstance(v, dict):
            self.fail("must be a mapping", name)
        return v

    def get(self, sec: str, key: str, default=None, kind=None, positive=False):
        v = self.section(sec).get(key, default)
        if v is None or kind is None:
            return v
        try:
            if kind is int:
                if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                    raise TypeError
                v = int(v)
            elif kind is float:
                if isinstance(v, bool):
                    raise TypeError
                v = float(v)
            elif kind is bool:
                if not isinstance(v, bool):
                    raise TypeError
        except (TypeError, ValueError):
            self.fail(f"expected {kind.__name__}, got {v!r}", sec, key)
        if positive and not v > 0:
            self.fail(f"must be positive, got {v!r}", sec, key)
        return v

    def _validate_keys(self) -> None:
        if not isinstance(self.raw, dict):
            raise ConfigError("top level must be a mapping", None, 1)
        for k, v in self.raw.items():
            if k not in SCHEMA:
                self.fail(f"unknown section {k!r} (allowed: {', '.join(sorted(SCHEMA))})", k)
            allowed = SCHEMA[k]
            if allowed is None or v is None:
                continue
            if not isinstance(v, dict):
                self.fail("must be a mapping", k)
            for kk in v:
                if kk not in allowed:
                    self.fail(f"unknown key {kk!r} (allowed: {', '.join(sorted(allowed))})", k, kk)
        if "geometry" not in self.raw:
            raise ConfigError("missing required section", "geometry", None)

    def _trig(self, text, *path):
        try:
            return parse_trig(text, self.grid.n)
        except RecipeError as exc:
            self.fail(str(exc), *path)

    # construction ----------------------------------------------------------------

    def _grid(self) -> Grid:
        geo = self.section("geometry")
        for key in ("n", "N"):
            if key not in geo:
                self.fail("missing required key", "geometry", key)
        n = self.get("geometry", "n", kind=int)
        N = self.get("geometry", "N", kind=int)
        periods = geo.get("periods", 1.0)
        try:
            return Grid(n, N, periods, dealias=self.get("geometry", "dealias", False, kind=bool))
        except (ValueError, TypeError) as exc:
            self.fail(str(exc), "geometry")

    def _metric(self, spec, *path) -> MetricField:
        if spec is None or spec == "flat":
            return flat_metric(self.grid)
        if not isinstance(spec, dict) or "recipe" not in spec:
            self.fail("metric must be 'flat' or a mapping with a 'recipe' key", *path)
        recipe = spec["recipe"]
        if recipe not in METRIC_KEYS:
            self.fail(f"unknown metric recipe {recipe!r} (allowed: {', '.join(METRIC_KEYS)})", *path, "recipe")
        for k in spec:
            if k not in METRIC_KEYS[recipe]:
                self.fail(f"unknown key {k!r} for recipe {recipe!r}", *path, k)
        try:
            if recipe == "flat":
                return flat_metric(self.grid)
            if recipe == "conformal":
                return conformal_metric(self.grid, self._trig(spec.get("f", 0), *path, "f"))
            if recipe == "kahler":
                return kahler_metric(self.grid, self._trig(spec.get("phi", 0), *path, "phi"))
            if "matrix" not in spec:
                self.fail("explicit metric needs 'matrix'", *path)
            try:
                return explicit_metric(self.grid, spec["matrix"])
            except (ValueError, TypeError) as exc:
                if isinstance(exc, InvariantViolation):
                    raise
                self.fail(str(exc), *path, "matrix")
        except InvariantViolation as exc:
            # structural failures keep their invariant name but gain a location
            exc.args = (f"{exc.args[0]} (config {'.'.join(path)}, line {self.line(*path)})",)
            raise

    def _problem(self) -> FlowProblem:
        grid = self.grid
        n = grid.n
        omega = self._metric(self.section("geometry").get("metric"), "geometry", "metric")
        prob = self.section("problem")
        omega0 = omega
        if prob.get("omega0") not in (None, "same"):
            omega0 = self._metric(prob["omega0"], "problem", "omega0")
        S = self.get("problem", "S", 1.0, kind=float, positive=True)
        psi = np.zeros(grid.shape)
        if "psi" in prob:
            psi = self._trig(prob["psi"], "problem", "psi").evaluate(grid)
        variant = prob.get("variant", "base")
        if variant not in ("base", "gauduchon"):
            self.fail(f"variant must be 'base' or 'gauduchon', got {variant!r}", "problem", "variant")

        chi_spec = prob.get("chi", {"base": "canonical"})
        if isinstance(chi_spec, str):
            chi_spec = {"base": chi_spec}
        if not isinstance(chi_spec, dict):
            self.fail("chi must be a mapping or a base name", "problem", "chi")
        for k in chi_spec:
            if k not in CHI_KEYS:
                self.fail(f"unknown key {k!r} (allowed: {', '.join(sorted(CHI_KEYS))})", "problem", "chi", k)
        base = chi_spec.get("base", "canonical")
        if base not in CHI_BASES:
            self.fail(f"unknown chi base {base!r} (allowed: {', '.join(CHI_BASES)})", "problem", "chi", "base")
        scale = chi_spec.get("scale", 1.0)
        if isinstance(scale, bool) or not isinstance(scale, (int, float)) or not math.isfinite(scale):
            self.fail(f"expected a finite number, got {scale!r}", "problem", "chi", "scale")
        if base == "canonical":
            chi = -(n - 1) * chern_ricci(omega) + grid.hessian(psi) / S
        elif base == "zero":
            chi = np.zeros(grid.shape + (n, n), dtype=complex)
        elif base == "omega":
            chi = omega.g.copy()
        else:
            chi = np.broadcast_to(np.eye(n, dtype=complex), grid.shape + (n, n)).copy()
        chi = scale * chi
        if "ddbar" in chi_spec:
            chi = chi + self._trig(chi_spec["ddbar"], "problem", "chi", "ddbar").hessian(grid)

        vol = prob.get("volume", "canonical")
        if vol == "canonical":
            F = psi / S
        elif vol == "omega":
            F = np.zeros(grid.shape)
        elif isinstance(vol, dict) and set(vol) == {"F"}:
            F = self._trig(vol["F"], "problem", "volume", "F").evaluate(grid)
        else:
            self.fail("volume must be 'canonical', 'omega' or {F: expr}", "problem", "volume")
        return FlowProblem(omega, omega0, chi=chi, psi=psi, S=S, log_volume=F, variant=variant)

    def _control(self) -> StepControl:
        d = StepControl()
        kw = {}
        for key in ("err_tol", "dt_init", "dt_max", "dt_min", "pos_tol"):
            v = self.get("integrator", key, getattr(d, key), kind=float)
            if not v > 0:
                self.fail(f"must be positive, got {v!r}", "integrator", key)
            kw[key] = v
        if kw["dt_min"] >= kw["dt_max"]:
            self.fail("dt_min must be below dt_max", "integrator", "dt_min")
        return StepControl(**kw)

    # accessors -------------------------------------------------------------------

    @property
    def t_end(self) -> float:
        return self.get("integrator", "t_end", 1.0, kind=float, positive=True)

    @property
    def cadence(self) -> float | None:
        return self.get("monitor", "cadence", None, kind=float, positive=True)

    @property
    def expect_singular(self) -> bool:
        return self.get("monitor", "expect_singular", False, kind=bool)

    @property
    def estimates_enabled(self) -> bool:
        return self.get("monitor", "estimates", True, kind=bool)

    @property
    def ceilings(self) -> dict:
        c = self.section("monitor").get("ceilings") or {}
        if not isinstance(c, dict):
            self.fail("must be a mapping", "monitor", "ceilings")
        return {str(k): float(v) for k, v in c.items()}

    @property
    def seed(self) -> int:
        v = self.raw.get("seed", 0)
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(f"seed must be an integer, got {v!r}", "seed")
        return v

    @property
    def out_dir(self) -> Path:
        return Path(self.section("output").get("dir", "out"))

    @property
    def checkpoint_every(self) -> int:
        return self.get("output", "checkpoint_every", 1, kind=int, positive=True)

    @property
    def check_tolerance(self) -> float:
        return self.get("check", "tolerance", 1e-7, kind=float, positive=True)

    def maxtime_query(self):
        from .maxtime import MaxTimeQuery

        kw = {}
        for key, kind in (("t_lo", float), ("t_hi", float), ("K", int), ("iterations", int),
                          ("restarts", int)):
            v = self.get("maxtime", key, None, kind=kind)
            if v is not None:
                kw[key] = v
        temps = self.section("maxtime").get("temperatures")
        if temps is not None:
            if not isinstance(temps, list) or not temps or not all(
                    isinstance(x, (int, float)) and x > 0 for x in temps):
                self.fail("temperatures must be a list of positive numbers", "maxtime", "temperatures")
            kw["temperatures"] = tuple(float(x) for x in temps)
        try:
            return MaxTimeQuery.from_problem(self.problem, seed=self.seed, **kw)
        except ValueError as exc:
            self.fail(str(exc), "maxtime")

    @property
    def maxtime_tol(self) -> float:
        return self.get("maxtime", "tol", 1e-2, kind=float, positive=True)

    @property
    def maxtime_run_flow(self) -> bool:
        return self.get("maxtime", "run_flow", False, kind=bool)

    @property
    def maxtime_t_end(self) -> float:
        default = self.get("maxtime", "t_hi", 2.0, kind=float)
        return self.get("maxtime", "t_end", default, kind=float, positive=True)


def load_config(source, name: str | None = None) -> RunConfig:
    """Parse YAML text or a path into a :class:`RunConfig`."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and Path(source).suffix in (".yaml", ".yml")):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        name = name or str(path)
    else:
        text = source
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", None,
                          mark.line + 1 if mark else None) from None
    if node is None:
        raise ConfigError("empty configuration", None, 1)
    lines: dict = {}
    raw = _to_python(node, (), lines)
    return RunConfig(raw=raw, lines=lines, source=name or "<string>")
