"""Scenario configuration: TOML schema, built-in presets and validation.

A scenario file has the tables ``[model]`` (with sub-tables ``growth``,
``light``, ``death``, ``evolution``), ``[grid]``, ``[stepping]``,
``[eigen]``, ``[initial]`` and ``[output]``, plus optional top-level
``name`` and ``description`` strings.  Every key is optional except the
model scalars; unknown keys are rejected.  See ``README.md`` for the full
schema.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .discretize import Grid, StateProfile
from .errors import ConfigError
from .floquet import EigenSolveConfig
from .model import (
    AffineDeath,
    ExpCosineEvolution,
    GrowthFunction,
    LightSchedule,
    ModelParameters,
    TabulatedDeath,
    TabulatedEvolution,
    validate,
)
from .timestep import SteppingConfig, initial_profile

__all__ = ["ScenarioConfig", "PRESETS", "preset", "parse_config", "to_toml", "PERIOD"]

logger = logging.getLogger(__name__)

#: period of every preset (the period of cos(3t))
PERIOD = 2.0 * math.pi / 3.0

#: self-shading coefficient used by the presets (the source examples omit it)
PRESET_K1 = 0.1


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """A complete, validated run description."""

    params: ModelParameters
    name: str = "custom"
    description: str = ""
    grid_N: int = 201
    stepping: SteppingConfig = field(default_factory=SteppingConfig)
    eigen: EigenSolveConfig = field(default_factory=EigenSolveConfig)
    initial: str = "cosine"
    initial_value: float = 1.0
    initial_path: str | None = None
    output_dir: str = "."
    warnings: tuple = ()

    @property
    def grid(self) -> Grid:
        return Grid(self.grid_N, self.params.L0)

    def initial_state(self) -> StateProfile:
        """The z-form initial profile on :attr:`grid`."""
        grid = self.grid
        if self.initial == "file":
            try:
                vals = np.loadtxt(self.initial_path, delimiter=",", ndmin=1)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read initial profile {self.initial_path!r}: {exc}")
            vals = np.ravel(vals)
            if vals.size != grid.N:
                raise ConfigError(f"initial profile has {vals.size} values, grid has {grid.N}")
            return StateProfile(vals, "z")
        return initial_profile(grid, self.initial, self.initial_value)

    def __eq__(self, other):
        if not isinstance(other, ScenarioConfig):
            return NotImplemented
        return to_toml(self) == to_toml(other)


# ---------------------------------------------------------------------------
# presets


def _example(name, description, *, c0, c1, sigma, D=1e-3, alpha=1e-3, a=3.0, b=2.0, I0=0.1,
             k0=0.2, L0=1.0):
    params = ModelParameters(
        D=D, alpha=alpha, k0=k0, k1=PRESET_K1,
        growth=GrowthFunction(a, b),
        light=LightSchedule(I0),
        death=AffineDeath(c0, c1),
        evolution=ExpCosineEvolution(sigma, 2.0 * math.pi / PERIOD),
        L0=L0, T=PERIOD,
    )
    return ScenarioConfig(params=params, name=name, description=description)


_COMMON = ("D = alpha = 0.001, g = 3I/(1+2I), I0 = 0.1, k0 = 0.2, L0 = 1, "
           "z0 = 4 + 2cos(pi y) + cos(2pi y), T = 2pi/3, k1 = 0.1 (self-shading, chosen here)")
_SECOND = ("D = 0.001, alpha = 0, g = I/(1+3I), I0 = 2, k0 = 0.02, "
           "rho(t) = exp(-0.5(1-cos 3t)), z0 = 4 + 2cos(pi y) + cos(2pi y), T = 2pi/3, "
           "k1 = 0.1 (self-shading, chosen here)")

PRESETS = {
    "example-4.1a": _example(
        "example-4.1a", "fixed column, d = 0.2 + 0.1x, rho = 1; " + _COMMON,
        c0=0.2, c1=0.1, sigma=0.0),
    "example-4.1b": _example(
        "example-4.1b", "d = 0.2 + 0.1x, rho(t) = exp(-0.5(1-cos 3t)); " + _COMMON,
        c0=0.2, c1=0.1, sigma=-0.5),
    "example-4.2a": _example(
        "example-4.2a", "fixed column, d = 0.1 + 0.2x, rho = 1; " + _COMMON,
        c0=0.1, c1=0.2, sigma=0.0),
    "example-4.2b": _example(
        "example-4.2b",
        "d = 0.1 + 0.2x, rho(t) = exp(+0.5(1-cos 3t)) (the sign used in the text; one figure "
        "caption prints the opposite sign); " + _COMMON,
        c0=0.1, c1=0.2, sigma=0.5),
    "example-4.3a": _example(
        "example-4.3a", "d = 0.29 + 3x, L0 = 3; " + _SECOND,
        c0=0.29, c1=3.0, sigma=-0.5, alpha=0.0, a=1.0, b=3.0, I0=2.0, k0=0.02, L0=3.0),
    "example-4.3b": _example(
        "example-4.3b",
        "d = 0.29 + 0.1x, L0 = 1 (the printed bottom-death integral 0.579 is inconsistent "
        "with this d; the computed value is about 0.742); " + _SECOND,
        c0=0.29, c1=0.1, sigma=-0.5, alpha=0.0, a=1.0, b=3.0, I0=2.0, k0=0.02, L0=1.0),
}


def preset(name: str) -> ScenarioConfig:
    """Return a built-in scenario by name."""
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None


# ---------------------------------------------------------------------------
# TOML <-> ScenarioConfig


def _take(table: dict, where: str, required=(), optional=()):
    unknown = set(table) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    missing = [k for k in required if k not in table]
    if missing:
        raise ConfigError(f"missing key(s) in [{where}]: {', '.join(missing)}")
    return table


def _num(table, key, where, default=None):
    val = table.get(key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"[{where}] {key} must be a number, got {val!r}")
    return float(val)


def _int(table, key, where, default):
    val = table.get(key, default)
    if val is None:
        return None
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"[{where}] {key} must be an integer, got {val!r}")
    return val


def _table(doc, key, where):
    val = doc.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError(f"{where} must be a table")
    return val


def _model_from(doc: dict) -> ModelParameters:
    m = _take(_table(doc, "model", "[model]"), "model",
              required=("D", "alpha", "k0", "k1", "L0", "T", "growth", "light", "death"),
              optional=("evolution",))
    T = _num(m, "T", "model")
    g = _take(_table(m, "growth", "[model.growth]"), "model.growth", required=("a", "b"))
    li = _take(_table(m, "light", "[model.light]"), "model.light", required=("mean",),
               optional=("amplitude", "omega", "phase"))
    d = _table(m, "death", "[model.death]")
    kind = d.get("kind", "affine")
    if kind == "affine":
        _take(d, "model.death", required=("c0",), optional=("kind", "c1"))
        death = AffineDeath(_num(d, "c0", "model.death"), _num(d, "c1", "model.death", 0.0))
    elif kind == "tabulated":
        _take(d, "model.death", required=("kind", "depths", "values"))
        death = TabulatedDeath(tuple(d["depths"]), tuple(map(tuple, d["values"])), T)
    else:
        raise ConfigError(f"[model.death] kind must be 'affine' or 'tabulated', got {kind!r}")
    e = _table(m, "evolution", "[model.evolution]")
    ekind = e.get("kind", "exp-cosine")
    if ekind == "exp-cosine":
        _take(e, "model.evolution", optional=("kind", "sigma", "omega"))
        evolution = ExpCosineEvolution(_num(e, "sigma", "model.evolution", 0.0),
                                       _num(e, "omega", "model.evolution", 2.0 * math.pi / T))
    elif ekind == "tabulated":
        _take(e, "model.evolution", required=("kind", "samples"))
        evolution = TabulatedEvolution(tuple(e["samples"]), T)
    else:
        raise ConfigError(f"[model.evolution] kind must be 'exp-cosine' or 'tabulated', "
                          f"got {ekind!r}")
    return ModelParameters(
        D=_num(m, "D", "model"), alpha=_num(m, "alpha", "model"),
        k0=_num(m, "k0", "model"), k1=_num(m, "k1", "model"),
        growth=GrowthFunction(_num(g, "a", "model.growth"), _num(g, "b", "model.growth")),
        light=LightSchedule(_num(li, "mean", "model.light"),
                            _num(li, "amplitude", "model.light", 0.0),
                            _num(li, "omega", "model.light", 0.0),
                            _num(li, "phase", "model.light", 0.0)),
        death=death, evolution=evolution, L0=_num(m, "L0", "model"), T=T,
    )


def _from_document(doc: dict) -> ScenarioConfig:
    _take(doc, "top level", optional=("name", "description", "model", "grid", "stepping",
                                      "eigen", "initial", "output"))
    params = _model_from(doc)
    gr = _take(_table(doc, "grid", "[grid]"), "grid", optional=("N",))
    st = _take(_table(doc, "stepping", "[stepping]"), "stepping",
               optional=("steps_per_period", "record_stride", "horizon_periods"))
    ei = _take(_table(doc, "eigen", "[eigen]"), "eigen",
               optional=tuple(f.name for f in fields(EigenSolveConfig)))
    ini = _take(_table(doc, "initial", "[initial]"), "initial",
                optional=("kind", "value", "path"))
    out = _take(_table(doc, "output", "[output]"), "output", optional=("directory",))
    defaults = EigenSolveConfig()
    eigen = EigenSolveConfig(
        power_tol=_num(ei, "power_tol", "eigen", defaults.power_tol),
        max_periods=_int(ei, "max_periods", "eigen", defaults.max_periods),
        bisection_tol=_num(ei, "bisection_tol", "eigen", defaults.bisection_tol),
        max_bisections=_int(ei, "max_bisections", "eigen", defaults.max_bisections),
        steps_per_period=_int(ei, "steps_per_period", "eigen", defaults.steps_per_period),
    )
    stepping = SteppingConfig(
        steps_per_period=_int(st, "steps_per_period", "stepping", 2000),
        record_stride=_int(st, "record_stride", "stepping", None),
        horizon_periods=_int(st, "horizon_periods", "stepping", 200),
    )
    kind = ini.get("kind", "cosine")
    if kind not in ("cosine", "constant", "file"):
        raise ConfigError(f"[initial] kind must be cosine, constant or file, got {kind!r}")
    if kind == "file" and "path" not in ini:
        raise ConfigError("[initial] kind = 'file' needs a path")
    for key in ("name", "description"):
        if not isinstance(doc.get(key, ""), str):
            raise ConfigError(f"{key} must be a string")
    return ScenarioConfig(
        params=params,
        name=doc.get("name", "custom"),
        description=doc.get("description", ""),
        grid_N=_int(gr, "N", "grid", 201),
        stepping=stepping,
        eigen=eigen,
        initial=kind,
        initial_value=_num(ini, "value", "initial", 1.0),
        initial_path=ini.get("path"),
        output_dir=str(out.get("directory", ".")),
    )


def _checked(cfg: ScenarioConfig) -> ScenarioConfig:
    Grid(cfg.grid_N, cfg.params.L0)
    issues = validate(cfg.params)
    errors = [i for i in issues if i.severity == "error"]
    if errors:
        listing = "; ".join(f"{i.code}: {i.message}" for i in errors)
        raise ConfigError(f"invalid model: {listing}")
    warns = tuple(f"{i.code}: {i.message}" for i in issues)
    for w in warns:
        logger.warning("%s", w)
    return replace(cfg, warnings=warns)


def parse_config(source) -> ScenarioConfig:
    """Build a validated :class:`ScenarioConfig`.

    ``source`` is a preset name, a path to a TOML file, or inline TOML text
    (tried in that order).

    Raises
    ------
    ConfigError
        Empty input, TOML syntax errors (with line and column), unknown or
        mistyped keys, or model validation errors.
    """
    if isinstance(source, Path):
        text = _read(source)
    elif isinstance(source, str):
        if source in PRESETS:
            return _checked(PRESETS[source])
        candidate = Path(source) if "\n" not in source and len(source) < 4096 else None
        text = _read(candidate) if candidate is not None and candidate.is_file() else source
    else:
        raise ConfigError("config source must be a path, preset name or TOML text")
    if not text.strip():
        raise ConfigError("empty configuration")
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    try:
        cfg = _from_document(doc)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return _checked(cfg)


def _read(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config file is not UTF-8: {exc}") from exc


def _model_document(p: ModelParameters) -> dict:
    death = p.death
    if isinstance(death, AffineDeath):
        dtab = {"kind": "affine", "c0": death.c0, "c1": death.c1}
    else:
        dtab = {"kind": "tabulated", "depths": list(death.depths),
                "values": [list(r) for r in death.values]}
    ev = p.evolution
    if isinstance(ev, ExpCosineEvolution):
        etab = {"kind": "exp-cosine", "sigma": ev.sigma}
        if ev.omega != 2.0 * math.pi / p.T:
            etab["omega"] = ev.omega
    else:
        etab = {"kind": "tabulated", "samples": list(ev.samples)}
    return {
        "D": p.D, "alpha": p.alpha, "k0": p.k0, "k1": p.k1, "L0": p.L0, "T": p.T,
        "growth": {"a": p.growth.a, "b": p.growth.b},
        "light": {"mean": p.light.mean, "amplitude": p.light.amplitude,
                  "omega": p.light.omega, "phase": p.light.phase},
        "death": dtab,
        "evolution": etab,
    }


def to_toml(cfg: ScenarioConfig) -> str:
    """Serialize a scenario; ``parse_config(to_toml(c))`` reproduces ``c``."""
    doc = {
        "name": cfg.name,
        "description": cfg.description,
        "model": _model_document(cfg.params),
        "grid": {"N": cfg.grid_N},
        "stepping": {"steps_per_period": cfg.stepping.steps_per_period,
                     "record_stride": cfg.stepping.record_stride,
                     "horizon_periods": cfg.stepping.horizon_periods},
        "eigen": {"power_tol": float(cfg.eigen.power_tol),
                  "max_periods": cfg.eigen.max_periods,
                  "bisection_tol": float(cfg.eigen.bisection_tol),
                  "max_bisections": cfg.eigen.max_bisections,
                  "steps_per_period": cfg.eigen.steps_per_period},
        "initial": {"kind": cfg.initial, "value": float(cfg.initial_value)},
        "output": {"directory": cfg.output_dir},
    }
    if cfg.initial_path is not None:
        doc["initial"]["path"] = cfg.initial_path
    return tomli_w.dumps(doc)
