"""Independent reference computations shared by the unit and acceptance tests."""
import numpy as np

from wavetopo import fem
from wavetopo.constraints import AugmentedMultiplier, eval_stress_constraint, stress_penalty
from wavetopo.elasticity import ElasticModel, ProblemDef, ProblemKind, element_von_mises
from wavetopo.material import Material, PlaneMode
from wavetopo.mesh import BoundarySegment, Tag, generate_rect_mesh, tag_boundaries
from wavetopo.sensitivity import perturbation_compliance, perturbation_mechanism, perturbation_stress

STEP = 1e-4


def small_cantilever():
    mesh = generate_rect_mesh(1.0, 0.5, 4, 2)
    return tag_boundaries(mesh, [BoundarySegment(Tag.GAMMA_U, "x", 0.0, 0.0, 0.5),
                                 BoundarySegment(Tag.GAMMA_T, "x", 1.0, 0.0, 0.25)])


def small_mechanism():
    mesh = generate_rect_mesh(1.0, 0.5, 4, 2)
    return tag_boundaries(mesh, [BoundarySegment(Tag.GAMMA_U, "x", 0.0, 0.0, 0.25),
                                 BoundarySegment(Tag.GAMMA_A, "x", 0.0, 0.25, 0.5),
                                 BoundarySegment(Tag.GAMMA_B, "x", 1.0, 0.25, 0.5)])


def _volume_term(model, theta, lam, r, V_f):
    G = float(model.lumped @ theta) / model.V0 - V_f
    # indicator branch lam + r G > 0 is active in every oracle below
    return lam * G + 0.5 * r * G * G, G


def lagrangian(model, theta, lam=0.0, r=1.0, V_f=0.45, stress_mult=None):
    """Reduced Lagrangian J(u(theta), theta) + constraint terms, evaluated by a fresh solve."""
    p = model.problem
    sol = model.solve_state(theta)
    if p.kind is ProblemKind.STRESS:
        sigma = model.mesh.to_nodes(element_von_mises(model.mesh, p.material, sol.u))
        ev = eval_stress_constraint(sigma, sol.tau_nodes, p.yield_stress, stress_mult)
        return sol.objective + stress_penalty(ev, stress_mult, model.lumped)
    vol, _ = _volume_term(model, theta, lam, r, V_f)
    return sol.objective + vol


def source(model, theta, lam=0.0, r=1.0, V_f=0.45, stress_mult=None):
    p, mesh = model.problem, model.mesh
    sol = model.solve_state(theta)
    if p.kind is ProblemKind.STRESS:
        v = model.solve_adjoint(sol, stress_mult)
        return perturbation_stress(mesh, p.material, sol.u, v, theta, stress_mult, p.yield_stress, p.weight,
                                   model.V0, p.ersatz_e, p.ersatz_q)
    _, G = _volume_term(model, theta, lam, r, V_f)
    mult = AugmentedMultiplier(lam, lam, r=r, r_max=max(r, 100.0))
    if p.kind is ProblemKind.COMPLIANCE:
        return perturbation_compliance(mesh, p.material, sol.u, theta, mult, G, model.V0, p.ersatz_e, p.ersatz_q)
    v = model.solve_adjoint(sol)
    return perturbation_mechanism(mesh, p.material, sol.u, v, theta, mult, G, model.V0, p.ersatz_e, p.ersatz_q,
                                  model.design_mask)


def fd_errors(model, theta, step=STEP, **kw):
    """Relative error of lumped * f against one-sided differences of the Lagrangian, per design node.

    Nodes are perturbed downward so filled designs stay in [0, 1].
    """
    f = source(model, theta, **kw)
    base = lagrangian(model, theta, **kw)
    pred, fd = [], []
    for i in range(model.mesh.n_nodes):
        t = theta.copy()
        t[i] -= step
        fd.append(lagrangian(model, t, **kw) - base)
        pred.append(-step * model.lumped[i] * f[i])
    pred, fd = np.array(pred), np.array(fd)
    scale = np.max(np.abs(fd))
    return np.abs(pred - fd) / np.maximum(np.abs(fd), 1e-3 * scale), pred, fd


def compliance_model(q=3.0):
    prob = ProblemDef(ProblemKind.COMPLIANCE, Material(1.0, 0.3), traction=(0.0, -1.0), ersatz_q=q)
    return ElasticModel(small_cantilever(), prob)


def mechanism_model(q=3.0):
    prob = ProblemDef(ProblemKind.MECHANISM, Material(1.0, 0.3), traction=(1.0, 0.0), volume_fraction=0.3,
                      ersatz_q=q, k_a=2.0, k_b=1.0, r_a=(1.0, 0.0), r_b=(-1.0, 0.0))
    return ElasticModel(small_mechanism(), prob)


def stress_model(q=3.0):
    prob = ProblemDef(ProblemKind.STRESS, Material(1.0, 0.3, PlaneMode.PLANE_STRESS), traction=(0.0, -1.0),
                      ersatz_q=q, yield_stress=1.0, weight=0.5, gamma=3.0)
    return ElasticModel(small_cantilever(), prob)


def stress_multiplier(n, lam=0.5, r=2.0):
    # lam_prev equals lam so the indicator uses the same multiplier as the penalty
    return AugmentedMultiplier(np.full(n, lam), np.full(n, lam), r=r, r_max=100.0)


def manufactured_error(n, ell=0.1):
    """L2 error of (M + ell^2 B) phi = M g on the unit square for phi* = cos(pi x) cos(pi y)."""
    mesh = generate_rect_mesh(1.0, 1.0, n, n)
    M, B = fem.assemble_mass(mesh), fem.assemble_laplacian(mesh)
    x, y = mesh.nodes.T
    exact = np.cos(np.pi * x) * np.cos(np.pi * y)
    g = (1.0 + 2.0 * np.pi**2 * ell**2) * exact  # natural boundary conditions hold for phi*
    phi = fem.solve_linear(M + ell**2 * B, M @ g)
    e = phi - exact
    return float(np.sqrt(e @ (M @ e)))


def block_reference(M, B, lumped, params, rhs):
    """Unreduced (phi, omega) solve with omega = -M_L^-1 B phi in the coupling."""
    import scipy.sparse as sp

    n = M.shape[0]
    K = sp.bmat([[(1 + params.m) * M + params.ell**2 * B, params.k**4 * B], [B, sp.diags(lumped)]]).tocsc()
    return fem.solve_linear(K, np.r_[rhs, np.zeros(n)])[:n]
