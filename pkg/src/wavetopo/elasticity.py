"""State and adjoint elasticity solves for the three problem families."""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import fem
from .errors import InvalidArgument
from .levelset import tau as ersatz_tau
from .material import Material, PlaneMode, VON_MISES_QUADRATIC, lame_constants, stress_matrix_4
from .mesh import Tag

__all__ = [
    "Material", "PlaneMode", "lame_constants", "ProblemKind", "ProblemDef", "StateSolution",
    "ElasticModel", "solve_state", "solve_adjoint", "von_mises", "element_von_mises",
    "element_strains", "mean_output_displacement",
]


class ProblemKind(str, Enum):
    COMPLIANCE = "Compliance"
    MECHANISM = "Mechanism"
    STRESS = "StressBiObjective"


def _unit(vec, name, allow_zero=False):
    vec = np.asarray(vec, dtype=float).reshape(2)
    n = np.linalg.norm(vec)
    if allow_zero and n == 0.0:
        return vec
    if abs(n - 1.0) > 1e-12:
        raise InvalidArgument(f"{name} must be a unit vector, got {vec.tolist()}")
    return vec


@dataclass(frozen=True, eq=False)
class ProblemDef:
    """Physical problem definition.

    ``traction`` is force per unit boundary length. For mechanisms it acts on
    GammaA; otherwise on GammaT.
    """

    kind: ProblemKind
    material: Material
    traction: tuple = (0.0, -1.0)
    volume_fraction: float = 0.45
    ersatz_e: float = 1e-3
    ersatz_q: float = 3.0
    k_a: float = 0.0
    k_b: float = 0.0
    r_a: tuple = (1.0, 0.0)
    r_b: tuple = (-1.0, 0.0)
    yield_stress: float = 1.0
    weight: float = 0.99
    gamma: float = 3.0
    kappa: float = 0.0
    arsinh_scaling: bool = True
    helmholtz_filter: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", ProblemKind(self.kind))
        object.__setattr__(self, "traction", tuple(float(t) for t in np.asarray(self.traction).reshape(2)))
        if not 0 < self.ersatz_e < 1 or not self.ersatz_q > 1:
            raise InvalidArgument(f"Ersatz parameters need 0 < e < 1 and q > 1, got {self.ersatz_e}, {self.ersatz_q}")
        if self.kind is not ProblemKind.STRESS and not 0 < self.volume_fraction < 1:
            raise InvalidArgument(f"volume fraction must lie in (0, 1), got {self.volume_fraction}")
        if self.kind is ProblemKind.MECHANISM:
            object.__setattr__(self, "r_a", tuple(_unit(self.r_a, "r_a")))
            # a zero output direction switches the objective off (used in degenerate checks)
            object.__setattr__(self, "r_b", tuple(_unit(self.r_b, "r_b", allow_zero=True)))
            if self.k_a < 0 or self.k_b < 0:
                raise InvalidArgument("spring stiffnesses must be nonnegative")
        if self.kind is ProblemKind.STRESS:
            if not self.yield_stress > 0:
                raise InvalidArgument(f"yield stress must be positive, got {self.yield_stress}")
            if not 0 <= self.weight <= 1:
                raise InvalidArgument(f"weight must lie in [0, 1], got {self.weight}")
            if not self.gamma > 0 or self.kappa < 0:
                raise InvalidArgument("need gamma > 0 and kappa >= 0")

    def with_changes(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        out = {"kind": self.kind.value, "material": self.material.to_dict(),
               "traction": list(self.traction), "ersatz_e": self.ersatz_e, "ersatz_q": self.ersatz_q}
        if self.kind is not ProblemKind.STRESS:
            out["volume_fraction"] = self.volume_fraction
        if self.kind is ProblemKind.MECHANISM:
            out.update(k_a=self.k_a, k_b=self.k_b, r_a=list(self.r_a), r_b=list(self.r_b))
        if self.kind is ProblemKind.STRESS:
            out.update(yield_stress=self.yield_stress, weight=self.weight, gamma=self.gamma,
                       kappa=self.kappa, arsinh_scaling=self.arsinh_scaling,
                       helmholtz_filter=self.helmholtz_filter)
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["material"] = Material(**d["material"])
        for key in ("traction", "r_a", "r_b"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(eq=False)
class StateSolution:
    """Displacement and everything needed to reuse its solve."""

    u: np.ndarray
    theta: np.ndarray
    tau_nodes: np.ndarray
    tau_elements: np.ndarray
    stiffness: object
    solver: fem.Factorization
    objective: float
    load: np.ndarray


def element_strains(mesh, u):
    """(E, 3) engineering strains (eps_xx, eps_yy, gamma_xy) of a nodal displacement."""
    u = np.asarray(u, dtype=float)
    if u.shape != (2 * mesh.n_nodes,):
        raise InvalidArgument(f"displacement has shape {u.shape}, expected ({2 * mesh.n_nodes},)")
    Bm = fem.strain_displacement(mesh.grads)
    return np.einsum("eij,ej->ei", Bm, u[fem.element_dofs(mesh.triangles)])


def element_von_mises(mesh, material, u):
    """Element-constant von Mises stress of ``C : eps(u)``."""
    D4 = stress_matrix_4(material)
    s = element_strains(mesh, u) @ D4.T
    sq = np.einsum("ei,ij,ej->e", s, VON_MISES_QUADRATIC, s)
    return np.sqrt(np.maximum(sq, 0.0))


def von_mises(mesh, material, u, tau=None):
    """Nodal von Mises stress (area-weighted projection of element values).

    With ``tau`` the stress of the interpolated material ``tau C : eps`` is used.
    """
    se = element_von_mises(mesh, material, u)
    if tau is not None:
        se = se * fem.element_tau(mesh, tau)
    return mesh.to_nodes(se)


def mean_output_displacement(mesh, u, tag, direction):
    """Average of ``direction . u`` over the edges carrying ``tag``."""
    edges = mesh.edges_with_tag(tag)
    if len(edges) == 0:
        raise InvalidArgument(f"no boundary edges carry tag {Tag(tag).value}")
    L = fem.boundary_functional(mesh, tag, direction)
    return float(L @ u / mesh.edge_lengths(edges).sum())


def nodal_density(mesh, values, mask=None):
    """Per-node density of an element field: sum(A_e w_e / 3) / lumped mass.

    With ``mask`` only the flagged elements contribute to the numerator.
    This is the area-weighted element-to-node projection, and makes
    ``lumped * density`` the exact derivative of sum_e A_e w_e mean_e(.).
    """
    w = mesh.areas * np.asarray(values, dtype=float)
    if mask is not None:
        w = w * mask
    num = np.zeros(mesh.n_nodes)
    np.add.at(num, mesh.triangles.ravel(), np.repeat(w / 3.0, 3))
    return num / fem.lumped_weights(mesh)


class ElasticModel:
    """Precomputed boundary data for repeated solves of one problem on one mesh."""

    def __init__(self, mesh, problem):
        self.mesh = mesh
        self.problem = problem
        kind = problem.kind
        required = [Tag.GAMMA_U]
        required += [Tag.GAMMA_A, Tag.GAMMA_B] if kind is ProblemKind.MECHANISM else [Tag.GAMMA_T]
        missing = [t.value for t in required if not mesh.has_tag(t)]
        if missing:
            raise InvalidArgument(f"mesh lacks boundary tags required by {kind.value}: {', '.join(missing)}")
        self.n_dofs = 2 * mesh.n_nodes
        self.fixed_dofs = self._fixed_dofs()
        load_tag = Tag.GAMMA_A if kind is ProblemKind.MECHANISM else Tag.GAMMA_T
        self.load = fem.assemble_boundary_load(mesh, problem.traction, load_tag)
        self.springs = None
        self.output_functional = None
        self.design_mask = np.ones(mesh.n_elements, bool)
        if kind is ProblemKind.MECHANISM:
            self.springs = (fem.assemble_boundary_spring(mesh, Tag.GAMMA_A, problem.k_a, problem.r_a)
                            + fem.assemble_boundary_spring(mesh, Tag.GAMMA_B, problem.k_b, problem.r_b))
            self.output_functional = fem.boundary_functional(mesh, Tag.GAMMA_B, problem.r_b)
            self.design_mask = ~mesh.fixed
        self.lumped = fem.lumped_weights(mesh)
        self.design_lumped = nodal_density(mesh, np.ones(mesh.n_elements), self.design_mask) * self.lumped
        self.V0 = mesh.area
        self.state_solves = 0
        self.adjoint_solves = 0

    def _fixed_dofs(self):
        mesh = self.mesh
        dofs = []
        if mesh.has_tag(Tag.GAMMA_U):
            n = mesh.nodes_with_tag(Tag.GAMMA_U)
            dofs += [2 * n, 2 * n + 1]
        if mesh.has_tag(Tag.GAMMA_S):
            edges = mesh.edges_with_tag(Tag.GAMMA_S)
            d = np.abs(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]])
            # normal component: y for horizontal edges, x for vertical ones
            comp = (d[:, 0] > d[:, 1]).astype(np.int64)
            dofs += [2 * edges[:, 0] + comp, 2 * edges[:, 1] + comp]
        return np.unique(np.concatenate(dofs)) if dofs else np.zeros(0, np.int64)

    def tau_fields(self, theta):
        p = self.problem
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.mesh.n_nodes,):
            raise InvalidArgument(f"theta has shape {theta.shape}, expected ({self.mesh.n_nodes},)")
        tn = ersatz_tau(theta, p.ersatz_e, p.ersatz_q)
        te = self.mesh.to_elements(tn)
        te[~self.design_mask] = 1.0
        return tn, te

    def stiffness(self, tau_elements):
        K = fem.assemble_elasticity(self.mesh, self.problem.material, tau_elements=tau_elements)
        if self.springs is not None:
            K = K + self.springs
        return K

    def _factorize(self, K):
        A, _ = fem.dirichlet_lift(K, self.fixed_dofs, np.zeros(len(self.fixed_dofs)))
        return fem.Factorization(A)

    def _solve(self, solver, rhs):
        b = np.array(rhs, dtype=float)
        b[self.fixed_dofs] = 0.0
        return solver.solve(b)

    def objective(self, u, theta, K):
        p = self.problem
        if p.kind is ProblemKind.COMPLIANCE:
            return float(self.load @ u)
        if p.kind is ProblemKind.MECHANISM:
            return float(-self.output_functional @ u)
        volume = float(self.lumped @ theta) / self.V0
        return p.weight * volume + 0.5 * (1.0 - p.weight) * float(u @ (K @ u))

    def solve_state(self, theta):
        tn, te = self.tau_fields(theta)
        K = self.stiffness(te)
        solver = self._factorize(K)
        u = self._solve(solver, self.load)
        self.state_solves += 1
        return StateSolution(u, np.asarray(theta, float), tn, te, K, solver,
                             self.objective(u, theta, K), self.load)

    def adjoint_source(self, state, multiplier=None):
        p = self.problem
        if p.kind is ProblemKind.COMPLIANCE:
            return self.load.copy()
        if p.kind is ProblemKind.MECHANISM:
            return -self.output_functional
        rhs = (1.0 - p.weight) * (state.stiffness @ state.u)
        if multiplier is not None:
            rhs = rhs + self.stress_constraint_gradient(state, multiplier)
        return rhs

    def stress_constraint_gradient(self, state, multiplier):
        """Derivative of the lumped-quadrature stress penalty with respect to u."""
        from .constraints import eval_stress_constraint

        p, mesh, mat = self.problem, self.mesh, self.problem.material
        eps = element_strains(mesh, state.u)
        D4 = stress_matrix_4(mat)
        Q = D4.T @ VON_MISES_QUADRATIC @ D4
        sigma_e = np.sqrt(np.maximum(np.einsum("ei,ij,ej->e", eps, Q, eps), 0.0))
        sigma_n = mesh.to_nodes(sigma_e)
        ev = eval_stress_constraint(sigma_n, state.tau_nodes, p.yield_stress, multiplier)
        c = (multiplier.lam + multiplier.r * ev.value) * ev.indicator * state.tau_nodes / p.yield_stress
        coef = mesh.areas / 3.0 * c[mesh.triangles].sum(axis=1)
        tiny = 1e-300
        coef = np.where(sigma_e > tiny, coef / np.maximum(sigma_e, tiny), 0.0)
        Bm = fem.strain_displacement(mesh.grads)
        local = coef[:, None] * np.einsum("eki,kl,el->ei", Bm, Q, eps)
        out = np.zeros(self.n_dofs)
        np.add.at(out, fem.element_dofs(mesh.triangles).ravel(), local.ravel())
        return out

    def solve_adjoint(self, state, multiplier=None):
        if state.u.shape != (self.n_dofs,):
            raise InvalidArgument(f"state has {state.u.shape[0]} dofs, expected {self.n_dofs}")
        rhs = self.adjoint_source(state, multiplier)
        self.adjoint_solves += 1
        # the stiffness is symmetric, so the state factorization serves the adjoint too
        return self._solve(state.solver, rhs)


def solve_state(problem, mesh, theta):
    """Displacement for the material distribution ``theta``."""
    return ElasticModel(mesh, problem).solve_state(theta).u


def solve_adjoint(problem, mesh, theta, state, multiplier=None):
    """Adjoint displacement for a state ``u`` solved on the same ``theta``."""
    model = ElasticModel(mesh, problem)
    state = np.asarray(state, dtype=float)
    if state.shape != (model.n_dofs,):
        raise InvalidArgument(f"state has shape {state.shape}, expected ({model.n_dofs},)")
    tn, te = model.tau_fields(theta)
    K = model.stiffness(te)
    sol = StateSolution(state, np.asarray(theta, float), tn, te, K, model._factorize(K),
                        model.objective(state, theta, K), model.load)
    return model.solve_adjoint(sol, multiplier)
