"""Run configuration: data types, validation, parsing and dumping."""
from __future__ import annotations

import copy
import json
import warnings
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .elasticity import ProblemDef
from .errors import ConfigError, InvalidArgument
from .levelset import EvolutionParams, InitialShape, Scheme
from .mesh import (BoundarySegment, Tag, generate_lbracket_mesh, generate_rect_mesh, mark_fixed, tag_boundaries,
                   widen_to_mesh)


class ParameterWarning(UserWarning):
    """Parameters are valid but outside the range known to give usable layouts."""


@dataclass(frozen=True, eq=False)
class Geometry:
    """Domain, resolution and boundary layout.

    ``shape`` is ``"rect"`` (``width`` x ``height``) or ``"lbracket"`` (outer
    square of side ``width`` with the upper-right corner square removed).
    ``solid_tags`` and ``void_tags`` name the boundary tags where the level set
    is held at +1 and -1; nodes of ``fixed_boxes`` are held at +1 as well.
    """

    shape: str
    width: float
    height: float
    nx: int
    ny: int
    arm_fraction: float = 0.0
    segments: tuple = ()
    fixed_boxes: tuple = ()
    solid_tags: tuple = ("GammaT",)
    void_tags: tuple = ()

    def __post_init__(self):
        if self.shape not in ("rect", "lbracket"):
            raise InvalidArgument(f"unknown domain shape {self.shape!r}")
        for name in ("nx", "ny"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise InvalidArgument(f"{name} must be an integer >= 1, got {value}")
            object.__setattr__(self, name, int(value))
        segs = tuple(s if isinstance(s, BoundarySegment) else BoundarySegment.from_dict(s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "fixed_boxes", tuple(tuple(float(x) for x in b) for b in self.fixed_boxes))
        object.__setattr__(self, "solid_tags", tuple(Tag(t).value for t in self.solid_tags))
        object.__setattr__(self, "void_tags", tuple(Tag(t).value for t in self.void_tags))

    def build_mesh(self):
        if self.shape == "rect":
            mesh = generate_rect_mesh(self.width, self.height, self.nx, self.ny)
        else:
            mesh = generate_lbracket_mesh(self.width, self.arm_fraction, self.nx)
        # strips narrower than one element still tag the edges under their centre
        mesh = tag_boundaries(mesh, [widen_to_mesh(mesh, s) for s in self.segments])
        if self.fixed_boxes:
            mesh = mark_fixed(mesh, self.fixed_boxes)
        return mesh

    def to_dict(self):
        out = {"shape": self.shape, "width": self.width, "height": self.height, "nx": self.nx, "ny": self.ny}
        if self.shape == "lbracket":
            out["arm_fraction"] = self.arm_fraction
        out["segments"] = [s.to_dict() for s in self.segments]
        out["fixed_boxes"] = [list(b) for b in self.fixed_boxes]
        out["solid_tags"] = list(self.solid_tags)
        out["void_tags"] = list(self.void_tags)
        return out


@dataclass(frozen=True, eq=False)
class RunConfig:
    preset: str
    geometry: Geometry
    problem: ProblemDef
    evolution: EvolutionParams
    init: str = "filled"
    init_prev: str | None = None
    max_iterations: int = 200
    window: int = 10
    eps: float = 1e-3
    eps_g: float = 1e-3
    seed: int = 0
    penalty: float = 1.0
    penalty_growth: float = 1.1
    penalty_max: float = 100.0
    normalize_objective: bool = True

    def __post_init__(self):
        if isinstance(self.max_iterations, bool) or int(self.max_iterations) != self.max_iterations \
                or self.max_iterations < 1:
            raise InvalidArgument(f"max_iterations must be an integer >= 1, got {self.max_iterations}")
        object.__setattr__(self, "max_iterations", int(self.max_iterations))
        if int(self.window) != self.window or self.window < 2:
            raise InvalidArgument(f"window must be an integer >= 2, got {self.window}")
        if not self.eps > 0 or not self.eps_g >= 0:
            raise InvalidArgument("convergence tolerances must be positive")
        if not (self.penalty > 0 and self.penalty_growth >= 1 and self.penalty_max >= self.penalty):
            raise InvalidArgument("penalty settings need r0 > 0, growth >= 1 and r_max >= r0")
        object.__setattr__(self, "init", InitialShape.parse(self.init).value)
        if self.init_prev is not None:
            object.__setattr__(self, "init_prev", InitialShape.parse(self.init_prev).value)
        if InitialShape.CUSTOM.value in (self.init, self.init_prev):
            raise InvalidArgument("custom initial fields are only available through the Python API")

    def to_dict(self):
        return {
            "preset": self.preset,
            "geometry": self.geometry.to_dict(),
            "problem": self.problem.to_dict(),
            "evolution": self.evolution.to_dict(),
            "init": self.init,
            "init_prev": self.init_prev,
            "max_iterations": self.max_iterations,
            "window": self.window,
            "eps": self.eps,
            "eps_g": self.eps_g,
            "seed": self.seed,
            "penalty": self.penalty,
            "penalty_growth": self.penalty_growth,
            "penalty_max": self.penalty_max,
            "normalize_objective": self.normalize_objective,
        }

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.to_dict() == other.to_dict()

    __hash__ = None

    def with_changes(self, **changes):
        return replace(self, **changes)


_TOP_KEYS = {f.name for f in fields(RunConfig)}
_SECTION_KEYS = {
    "geometry": {f.name for f in fields(Geometry)},
    "problem": {f.name for f in fields(ProblemDef)},
    "evolution": {f.name for f in fields(EvolutionParams)},
}
_MATERIAL_KEYS = {"youngs_modulus", "poisson_ratio", "mode"}

# command-line flag -> dotted config key
FLAG_KEYS = {
    "scheme": "evolution.scheme",
    "ell": "evolution.ell",
    "m": "evolution.m",
    "k": "evolution.k",
    "beta": "evolution.beta",
    "c_f": "evolution.c_f",
    "iters": "max_iterations",
    "init": "init",
    "init_prev": "init_prev",
    "seed": "seed",
    "nx": "geometry.nx",
    "ny": "geometry.ny",
    "volume_fraction": "problem.volume_fraction",
    "gamma": "problem.gamma",
}


def _check_keys(raw):
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError("unknown key", key=key)
    for section, allowed in _SECTION_KEYS.items():
        value = raw.get(section)
        if value is None:
            continue
        if not isinstance(value, dict):
            raise ConfigError("expected a mapping", key=section)
        for key in value:
            if key not in allowed:
                raise ConfigError("unknown key", key=f"{section}.{key}")
    material = raw.get("problem", {}).get("material")
    if material is not None:
        if not isinstance(material, dict):
            raise ConfigError("expected a mapping", key="problem.material")
        for key in material:
            if key not in _MATERIAL_KEYS:
                raise ConfigError("unknown key", key=f"problem.material.{key}")


def merge(base, override):
    """Recursive last-wins merge of nested dicts."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def set_dotted(raw, dotted, value):
    node = raw
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return raw


def from_dict(raw):
    """Validate a nested dict into a :class:`RunConfig` (raises :class:`ConfigError`)."""
    from .presets import preset_dict

    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    _check_keys(raw)
    if "preset" in raw and raw["preset"] is not None:
        try:
            base = preset_dict(raw["preset"])
        except InvalidArgument as exc:
            raise ConfigError(str(exc), key="preset") from None
        raw = merge(base, _scheme_defaults(base, raw))
    for section in ("geometry", "problem", "evolution"):
        if section not in raw:
            raise ConfigError("missing section", key=section)
    geo = raw["geometry"]
    for key in ("nx", "ny"):
        if key not in geo:
            raise ConfigError("mesh resolution missing", key=f"geometry.{key}")
    if "material" not in raw["problem"]:
        raise ConfigError("missing section", key="problem.material")
    try:
        geometry = Geometry(**geo)
        problem = ProblemDef.from_dict(raw["problem"])
        evolution = EvolutionParams(**raw["evolution"])
        rest = {k: v for k, v in raw.items() if k not in ("geometry", "problem", "evolution")}
        rest.setdefault("preset", "custom")
        config = RunConfig(geometry=geometry, problem=problem, evolution=evolution, **rest)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    check_parameter_band(config.evolution)
    return config


def _scheme_defaults(base, override):
    """Adapt inherited preset parameters when the override switches scheme.

    Parameters the new scheme forces to zero are dropped unless the override
    sets them itself; the stress benchmark also takes its per-scheme c_f and
    gamma unless they are given.
    """
    from .levelset import _ZERO_PARAMS
    from .presets import STRESS_SETTINGS

    evo = override.get("evolution", {})
    if "scheme" not in evo:
        return override
    scheme = Scheme.parse(evo["scheme"])
    override = copy.deepcopy(override)
    evo = override["evolution"]
    for name in _ZERO_PARAMS[scheme]:
        evo.setdefault(name, 0.0)
    if base["problem"]["kind"] == "StressBiObjective":
        c_f, gamma = STRESS_SETTINGS[scheme]
        evo.setdefault("c_f", c_f)
        override.setdefault("problem", {}).setdefault("gamma", gamma)
    return override


def check_parameter_band(params):
    """Warn when a generalized wave scheme has ell / k > 1."""
    if params.scheme in (Scheme.GWE, Scheme.DGWE) and params.k > 0 and params.ell / params.k > 1:
        warnings.warn(f"ell / k = {params.ell / params.k:.3g} > 1: generalized wave schemes "
                      "tend to produce wave patterns instead of usable layouts", ParameterWarning,
                      stacklevel=3)
        return False
    return True


def _coerce(value):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def flags_to_dict(flags):
    """Turn ``--key value`` pairs into a nested override dict (in order, last wins)."""
    raw = {}
    it = iter(flags)
    for token in it:
        if not token.startswith("--"):
            raise ConfigError(f"unexpected argument {token!r}")
        name = token[2:].replace("-", "_")
        try:
            value = next(it)
        except StopIteration:
            raise ConfigError("missing value", key=name) from None
        if name == "config":
            raw = merge(raw, load_file(value))
        elif name == "preset":
            raw["preset"] = value
        elif name in FLAG_KEYS:
            key = FLAG_KEYS[name]
            set_dotted(raw, key, value if key in ("evolution.scheme", "init", "init_prev") else _coerce(value))
        else:
            raise ConfigError("unknown flag", key=name)
    return raw


def load_file(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def parse_config(source):
    """Build a validated :class:`RunConfig` from a JSON path, a flag list or a dict."""
    if isinstance(source, dict):
        raw = source
    elif isinstance(source, (str, Path)):
        raw = load_file(source)
    else:
        raw = flags_to_dict(list(source))
    return from_dict(raw)


def dump_config(config):
    return json.dumps(config.to_dict(), indent=2, sort_keys=False)
