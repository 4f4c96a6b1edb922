"""The optimization loop and its history."""
from __future__ import annotations

import time
import warnings
from collections import defaultdict
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import fem
from .constraints import (AugmentedMultiplier, eval_stress_constraint, eval_volume_constraint,
                          update_multiplier_field, update_multiplier_global, volume_fraction)
from .elasticity import ElasticModel, ProblemKind, element_von_mises
from .errors import NumericDegeneracy, RunAborted, WavetopoError
from .config import ParameterWarning
from .levelset import (LevelSetBC, build_evolution_operator, delta_const, evolve, heaviside, initialize,
                       lowest_mode_coefficient)
from .sensitivity import (HelmholtzFilter, arsinh_scale, design_derivative, normalization_factor,
                          perturbation_compliance, perturbation_mechanism, perturbation_stress)

COLUMNS = ("iteration", "J", "J_over_J0", "G", "vol_frac", "max_vm", "C_v", "lambda", "wall_ms")


class History:
    """Append-only per-iteration record.

    ``G`` holds the volume constraint value, or the largest nodal stress
    constraint value for the stress problem; ``lambda`` holds the scalar
    multiplier or the largest entry of the multiplier field. ``extras`` keeps
    diagnostics that are not part of the exported table.
    """

    def __init__(self):
        self.rows = []
        self.extras = defaultdict(list)
        self.J0 = None
        self.converged = False

    def __len__(self):
        return len(self.rows)

    def append(self, **row):
        if self.J0 is None:
            if not row["J"] != 0 or not np.isfinite(row["J"]):
                raise NumericDegeneracy(f"initial objective J0 = {row['J']} cannot normalize the history")
            self.J0 = row["J"]
        row = {"iteration": len(self.rows), "J_over_J0": row["J"] / abs(self.J0), **row}
        self.rows.append({c: row[c] for c in COLUMNS})

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def last(self, name):
        return self.rows[-1][name]


class RunResult(NamedTuple):
    history: History
    state: object
    displacement: np.ndarray


def check_convergence(history, W=10, eps=1e-3, eps_g=1e-3):
    """True iff the last ``W`` rows have |dJ/J0| <= eps and the last one is feasible."""
    if len(history) < W:
        return False
    ratio = history.column("J_over_J0")[-W:]
    steady = np.max(np.abs(np.diff(ratio))) <= eps if W > 1 else True
    return bool(steady and history.last("G") <= eps_g)


def level_set_bc(mesh, geometry):
    """Fixed level set values: +1 on solid tags and fixed-solid nodes, -1 on void tags."""
    solid = [mesh.nodes_with_tag(t) for t in geometry.solid_tags if mesh.has_tag(t)]
    if mesh.fixed.any():
        solid.append(mesh.fixed_nodes())
    solid = np.unique(np.concatenate(solid)) if solid else np.zeros(0, np.int64)
    void = [mesh.nodes_with_tag(t) for t in geometry.void_tags if mesh.has_tag(t)]
    void = np.setdiff1d(np.concatenate(void), solid) if void else np.zeros(0, np.int64)
    return LevelSetBC.build([(solid, 1.0), (void, -1.0)])


def material_elements(mesh, phi, beta):
    """Elements whose mean Heaviside value is at least one half."""
    return mesh.to_elements(heaviside(phi, beta)) >= 0.5


def solid_components(mesh, mask):
    """Label edge-connected components of the masked elements (-1 elsewhere)."""
    adj = mesh.element_adjacency()
    idx = np.flatnonzero(mask)
    labels = np.full(mesh.n_elements, -1)
    if len(idx) == 0:
        return labels, 0
    n, lab = connected_components(adj[idx][:, idx], directed=False)
    labels[idx] = lab
    return labels, n


def elements_on_tag(mesh, tag):
    """Elements owning at least one boundary edge with ``tag``."""
    edges = {tuple(sorted(e)) for e in mesh.edges_with_tag(tag)}
    tris = mesh.triangles
    out = np.zeros(mesh.n_elements, bool)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        pairs = np.sort(tris[:, [a, b]], axis=1)
        out |= np.array([tuple(p) in edges for p in pairs])
    return out


def links_tags(mesh, mask, tag_a, tag_b):
    """True when one component of ``mask`` touches both tagged boundaries."""
    labels, _ = solid_components(mesh, mask)
    la = set(labels[elements_on_tag(mesh, tag_a) & mask])
    lb = set(labels[elements_on_tag(mesh, tag_b) & mask])
    return bool(la & lb)


def intersection_over_union(a, b, weights=None):
    a, b = np.asarray(a, bool), np.asarray(b, bool)
    w = np.ones(len(a)) if weights is None else weights
    union = w[a | b].sum()
    return float(w[a & b].sum() / union) if union > 0 else 1.0


class Run:
    """One optimization run; :meth:`execute` performs the loop."""

    def __init__(self, config, out_dir=None, initial_state=None):
        self.config = config
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.mesh = mesh = config.geometry.build_mesh()
        self.problem = config.problem
        self.model = ElasticModel(mesh, self.problem)
        self.M, self.B = fem.assemble_mass(mesh), fem.assemble_laplacian(mesh)
        self.lumped = fem.lumped_weights(mesh)
        self.V0 = mesh.area
        self.bc = level_set_bc(mesh, config.geometry)
        p = config.evolution
        self.op = build_evolution_operator(p.scheme, self.M, self.B, p, self.bc)
        coefficient = lowest_mode_coefficient(self.B, self.lumped, p)
        if coefficient < 0:
            warnings.warn(f"k^4 mu^2 exceeds ell^2 mu on this mesh (lowest mode coefficient {coefficient:.3g}): "
                          "short-wavelength modes grow and lock into wave patterns", ParameterWarning, stacklevel=3)
        self.delta = delta_const(p.beta)
        self.stress = self.problem.kind is ProblemKind.STRESS
        self.filter = None
        if self.stress and self.problem.helmholtz_filter:
            self.filter = HelmholtzFilter(self.problem.kappa, self.M, self.B)
        if initial_state is None:
            initial_state = initialize(mesh, config.init, self.bc, config.init_prev, seed=config.seed)
        self.state = initial_state
        if self.stress:
            self.multiplier = AugmentedMultiplier.field(mesh.n_nodes, config.penalty, config.penalty_growth,
                                                        config.penalty_max)
        else:
            self.multiplier = AugmentedMultiplier(0.0, 0.0, config.penalty, config.penalty_growth,
                                                  config.penalty_max)
        self.objective_scale = None
        self.history = History()
        self.history.mesh = mesh
        self.history.config = config
        self.solution = None

    def evaluate(self):
        """State and adjoint solves plus the source field for the current level set."""
        p, prob, mesh = self.config.evolution, self.problem, self.mesh
        e, q = prob.ersatz_e, prob.ersatz_q
        theta = heaviside(self.state.phi, p.beta)
        sol = self.model.solve_state(theta)
        v = self.model.solve_adjoint(sol, self.multiplier)
        sigma = mesh.to_nodes(element_von_mises(mesh, prob.material, sol.u))
        out = {"theta": theta, "solution": sol, "adjoint": v, "sigma": sigma,
               "max_vm": float(np.max(sigma * sol.tau_nodes))}
        if self.stress:
            f = perturbation_stress(mesh, prob.material, sol.u, v, theta, self.multiplier,
                                    prob.yield_stress, prob.weight, self.V0, e, q)
            if prob.arsinh_scaling:
                f = arsinh_scale(f, prob.gamma)
            if self.filter is not None:
                before = float(self.lumped @ f)
                filtered = self.filter(f)
                scale = max(float(self.lumped @ np.abs(f)), np.finfo(float).tiny)
                self.history.extras["filter_mean_error"].append(abs(float(self.lumped @ filtered) - before) / scale)
                f = filtered
            C = normalization_factor(f, self.lumped, self.V0, p.c_f)
            ev = eval_stress_constraint(sigma, sol.tau_nodes, prob.yield_stress, self.multiplier)
            out.update(f=f, C=C, constraint=ev, G=ev.max_value,
                       vol=volume_fraction(theta, self.lumped, self.V0),
                       lam=float(np.max(self.multiplier.lam)))
            return out
        mech = prob.kind is ProblemKind.MECHANISM
        region = self.model.design_lumped if mech else None
        vol = volume_fraction(theta, self.lumped, self.V0, region)
        G = vol - prob.volume_fraction
        mask = self.model.design_mask if mech else None
        dR = design_derivative(mesh, prob.material, sol.u, v, theta, e, q, mask)
        if self.objective_scale is None:
            # the mechanical terms are taken relative to the initial objective
            scale = abs(sol.objective) if self.config.normalize_objective else 1.0
            self.objective_scale = scale if scale > 0 else 1.0
        s = self.objective_scale
        if mech:
            f = perturbation_mechanism(mesh, prob.material, sol.u, v, theta, self.multiplier, G, self.V0,
                                       e, q, mask, objective_scale=s)
        else:
            f = perturbation_compliance(mesh, prob.material, sol.u, theta, self.multiplier, G, self.V0,
                                        e, q, objective_scale=s)
        C = normalization_factor(dR / s, self.lumped, self.V0, p.c_f)
        out.update(f=f, C=C, constraint=eval_volume_constraint(vol, prob.volume_fraction, self.multiplier),
                   G=G, vol=vol, lam=float(self.multiplier.lam))
        return out

    def update(self, step):
        """Multiplier update followed by one level set evolution step."""
        if self.stress:
            self.multiplier = update_multiplier_field(self.multiplier, step["constraint"].value)
        else:
            self.multiplier = update_multiplier_global(self.multiplier, step["G"])
        source = step["f"] * self.delta / step["C"]
        self.state = evolve(self.state, self.op, source)
        phi = self.state.phi
        if not (np.all(phi >= -1.0) and np.all(phi <= 1.0)):
            raise NumericDegeneracy("level set left [-1, 1]")

    def _record(self, step, started):
        h = self.history
        h.append(J=step["solution"].objective, G=step["G"], vol_frac=step["vol"], max_vm=step["max_vm"],
                 C_v=step["C"], **{"lambda": step["lam"]}, wall_ms=(time.perf_counter() - started) * 1e3)
        h.extras["state_solves"].append(self.model.state_solves)
        h.extras["adjoint_solves"].append(self.model.adjoint_solves)
        h.extras["evolution_solves"].append(self.op.solves)
        h.extras["phi_min"].append(float(self.state.phi.min()))
        h.extras["phi_max"].append(float(self.state.phi.max()))
        if self.out_dir is not None:
            from .io import export_history
            export_history(h, self.out_dir / "history.csv")

    def execute(self, callback=None):
        cfg = self.config
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        for it in range(cfg.max_iterations):
            started = time.perf_counter()
            try:
                step = self.evaluate()
                self._record(step, started)
                self.solution = step
                if callback is not None:
                    callback(self, step)
                if check_convergence(self.history, cfg.window, cfg.eps, cfg.eps_g):
                    self.history.converged = True
                    break
                if it == cfg.max_iterations - 1:
                    break
                self.update(step)
            except WavetopoError as exc:
                raise RunAborted(it, exc) from exc
        h = self.history
        h.final_theta = self.solution["theta"]
        h.final_sigma = self.solution["sigma"]
        h.final_multiplier = self.multiplier
        return RunResult(h, self.state, self.solution["solution"].u)


def run(config, out_dir=None, callback=None, initial_state=None):
    """Run the optimization described by ``config``.

    Each iteration solves the state and adjoint problems, builds the source,
    records the history row, checks convergence, then updates the multiplier
    and evolves the level set. The returned state is the one the last history
    row was evaluated on.
    """
    return Run(config, out_dir, initial_state).execute(callback)
