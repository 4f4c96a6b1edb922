"""Benchmark presets.

Physical parameters follow the reference benchmarks. Strip positions and
widths, mesh resolutions, mechanism load magnitude and the evolution
parameters of the stress benchmark are artifact choices; each one is marked
``# assumed`` below.
"""
from __future__ import annotations

from .config import Geometry, RunConfig, from_dict
from .elasticity import ProblemDef, ProblemKind
from .errors import InvalidArgument
from .levelset import EvolutionParams, Scheme
from .material import Material, PlaneMode
from .mesh import BoundarySegment as Seg
from .mesh import Tag

PRESET_IDS = ("AsymPlate", "Cantilever", "Girder", "Inverter", "Gripper", "LBracket")

STRIP = 0.05  # assumed: load and support strips span 5% of their edge

# Stress benchmark: (c_f, gamma) per scheme
STRESS_SETTINGS = {
    Scheme.WE: (0.020, 4.0),
    Scheme.DWE: (0.010, 4.0),
    Scheme.BWE: (0.004, 3.0),
    Scheme.DBWE: (0.004, 3.0),
    Scheme.GWE: (0.100, 3.0),
    Scheme.DGWE: (0.100, 3.0),
    Scheme.RDE: (0.010, 4.0),
}

STEEL = Material(210e9, 0.3, PlaneMode.PLANE_STRAIN)
UNIT = Material(1.0, 0.3, PlaneMode.PLANE_STRAIN)


def _structural(scheme, ell, m=0.0, k=0.0):
    problem = ProblemDef(ProblemKind.COMPLIANCE, STEEL, traction=(0.0, -1.0e3), volume_fraction=0.45,
                         ersatz_e=1e-3, ersatz_q=3.0)
    evolution = EvolutionParams(scheme, ell=ell, m=m, k=k, beta=5.0, c_f=1.0)
    return problem, evolution


def cantilever():
    W, H = 1.0, 0.5  # assumed 2:1 aspect
    geo = Geometry("rect", W, H, 80, 40, segments=(
        Seg(Tag.GAMMA_U, "x", 0.0, 0.0, H),
        Seg(Tag.GAMMA_T, "x", W, 0.5 * H - 0.5 * STRIP * H, 0.5 * H + 0.5 * STRIP * H),
    ))
    problem, evolution = _structural(Scheme.WE, 0.008)
    return RunConfig("Cantilever", geo, problem, evolution, max_iterations=200)


def asym_plate():
    L = 1.0
    # assumed: clamped left edge, load on the lowest strip of the right edge
    geo = Geometry("rect", L, L, 60, 60, segments=(
        Seg(Tag.GAMMA_U, "x", 0.0, 0.0, L),
        Seg(Tag.GAMMA_T, "x", L, 0.0, STRIP * L),
    ))
    problem, evolution = _structural(Scheme.WE, 0.008)
    return RunConfig("AsymPlate", geo, problem, evolution, max_iterations=200)


def girder():
    W, H = 2.0, 0.5  # assumed 4:1 aspect
    s = STRIP * H
    geo = Geometry("rect", W, H, 96, 24, segments=(
        Seg(Tag.GAMMA_U, "y", 0.0, 0.0, s),
        Seg(Tag.GAMMA_U, "y", 0.0, W - s, W),
        Seg(Tag.GAMMA_T, "y", H, 0.5 * W - s, 0.5 * W + s),
    ))
    problem, evolution = _structural(Scheme.DGWE, 0.010, 1.0, 0.011)
    return RunConfig("Girder", geo, problem, evolution, max_iterations=200)


def _mechanism_problem(volume_fraction, r_b):
    return ProblemDef(ProblemKind.MECHANISM, UNIT, traction=(1.0, 0.0),  # assumed |t| = 1 N/mm
                      volume_fraction=volume_fraction, ersatz_e=1e-3, ersatz_q=3.0,
                      k_a=1.0e5, k_b=1.0e3, r_a=(1.0, 0.0), r_b=r_b)


def inverter():
    L = 0.1
    geo = Geometry("rect", L, L, 60, 60, segments=(
        Seg(Tag.GAMMA_U, "x", 0.0, 0.0, 0.1 * L),
        Seg(Tag.GAMMA_U, "x", 0.0, 0.9 * L, L),
        Seg(Tag.GAMMA_A, "x", 0.0, 0.45 * L, 0.55 * L),
        Seg(Tag.GAMMA_B, "x", L, 0.45 * L, 0.55 * L),
    ), fixed_boxes=(
        (0.0, 0.05 * L, 0.4 * L, 0.6 * L),
        (0.95 * L, L, 0.4 * L, 0.6 * L),
    ), solid_tags=(Tag.GAMMA_A.value, Tag.GAMMA_B.value))
    evolution = EvolutionParams(Scheme.WE, ell=0.001, beta=2.0, c_f=1.0)  # assumed ell scaled to L
    return RunConfig("Inverter", geo, _mechanism_problem(0.20, (-1.0, 0.0)), evolution, max_iterations=200)


def gripper():
    W, H = 0.1, 0.05  # upper half of an L x L domain
    geo = Geometry("rect", W, H, 60, 30, segments=(
        Seg(Tag.GAMMA_A, "x", 0.0, 0.0, 0.1 * H),
        Seg(Tag.GAMMA_U, "x", 0.0, 0.8 * H, H),
        Seg(Tag.GAMMA_S, "y", 0.0, 0.0, 0.8 * W),
        Seg(Tag.GAMMA_B, "y", 0.0, 0.9 * W, W),
    ), fixed_boxes=(
        (0.0, 0.05 * W, 0.0, 0.2 * H),
        (0.9 * W, W, 0.0, 0.1 * H),
    ), solid_tags=(Tag.GAMMA_A.value, Tag.GAMMA_B.value))
    evolution = EvolutionParams(Scheme.WE, ell=0.001, beta=2.0, c_f=1.0)  # assumed ell scaled to L
    return RunConfig("Gripper", geo, _mechanism_problem(0.30, (0.0, -1.0)), evolution, max_iterations=200)


def lbracket():
    L, arm = 1.5, 0.4  # assumed arm fraction
    a = arm * L
    tip = 0.9 * L  # assumed: load on the last 10% of the arm's top edge
    geo = Geometry("lbracket", L, L, 60, 60, arm_fraction=arm, segments=(
        Seg(Tag.GAMMA_U, "y", L, 0.0, a),
        Seg(Tag.GAMMA_T, "y", a, tip, L),
        Seg(Tag.GAMMA_VOID_A, "y", a, a, tip),
        Seg(Tag.GAMMA_VOID_B, "x", a, a, L),
    ), solid_tags=(Tag.GAMMA_T.value,), void_tags=(Tag.GAMMA_VOID_A.value, Tag.GAMMA_VOID_B.value))
    force = 1.0
    c_f, gamma = STRESS_SETTINGS[Scheme.DGWE]
    problem = ProblemDef(ProblemKind.STRESS, Material(1.0, 0.3, PlaneMode.PLANE_STRESS),
                         traction=(0.0, -force / (L - tip)), ersatz_e=1e-3, ersatz_q=3.0,
                         yield_stress=42.0, weight=0.99, gamma=gamma, kappa=1.0e-5)
    # assumed: ell = k = 0.008 keeps ell / k at the band edge while k^4 mu^2 <= ell^2 mu holds on this mesh
    evolution = EvolutionParams(Scheme.DGWE, ell=0.008, m=1.0, k=0.008, beta=5.0, c_f=c_f)
    return RunConfig("LBracket", geo, problem, evolution, max_iterations=200)


_BUILDERS = {
    "asymplate": asym_plate,
    "cantilever": cantilever,
    "girder": girder,
    "inverter": inverter,
    "gripper": gripper,
    "lbracket": lbracket,
}


def preset(name):
    """RunConfig of a named preset (case-insensitive)."""
    key = str(name).lower().replace("_", "").replace("-", "")
    if key not in _BUILDERS:
        raise InvalidArgument(f"unknown preset {name!r}; expected one of {', '.join(PRESET_IDS)}")
    return _BUILDERS[key]()


def preset_dict(name):
    return preset(name).to_dict()


def stress_settings(scheme):
    """(c_f, gamma) of the stress benchmark for ``scheme``."""
    return STRESS_SETTINGS[Scheme.parse(scheme)]


def load(name, **overrides):
    """Preset with nested overrides, validated like a config file."""
    raw = {"preset": name}
    raw.update(overrides)
    return from_dict(raw)
