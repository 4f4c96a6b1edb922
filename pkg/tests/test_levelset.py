import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from wavetopo import fem
from wavetopo.errors import InvalidArgument
from wavetopo.levelset import (EvolutionParams, LevelSetBC, LevelSetState, Scheme, assemble_rde_weak_form,
                               build_evolution_operator, delta_const, discrete_energy, dtau, evolve, heaviside,
                               initialize, lowest_mode_coefficient, operator_matrix, tau)
from wavetopo.mesh import generate_lbracket_mesh, generate_rect_mesh


def matrices(nx=6, ny=4):
    mesh = generate_rect_mesh(1.0, 0.5, nx, ny)
    return mesh, fem.assemble_mass(mesh), fem.assemble_laplacian(mesh)


def test_heaviside_values(rng):
    assert heaviside(0.0, 5.0) == 0.5
    # (tanh(10) + 1) / 2 evaluated at 30 digits
    assert heaviside(1.0, 5.0) == pytest.approx(0.999999997938846382, rel=0, abs=1e-15)
    assert np.tanh(10.0) == pytest.approx(0.999999995877692764, rel=0, abs=1e-15)
    phi = rng.uniform(-1, 1, 100)
    assert np.allclose(heaviside(-phi, 3.0), 1 - heaviside(phi, 3.0), atol=1e-15)
    t = heaviside(np.sort(phi), 2.0)
    assert np.all(np.diff(t) >= 0) and np.all((t > 0) & (t < 1))


def test_delta_const():
    assert delta_const(5.0) == 5.0 and delta_const(2.0) == 2.0
    assert delta_const(5.0) == 5.0 / np.cosh(0.0) ** 2
    with pytest.raises(InvalidArgument):
        delta_const(0.0)


def test_tau_values():
    assert tau(1.0, 1e-3, 3.0) == pytest.approx(1.0, abs=1e-15)
    assert dtau(1.0, 1e-3, 3.0) == pytest.approx(2.997, abs=1e-15)
    assert tau(0.0, 1e-3, 3.0) == 1e-3 and dtau(0.0, 1e-3, 3.0) == 0.0
    assert tau(0.5, 1e-3, 3.0) == pytest.approx(0.125875, abs=1e-15)
    with pytest.raises(InvalidArgument):
        tau(1.1, 1e-3, 3.0)
    with pytest.raises(InvalidArgument):
        dtau(0.5, 1e-3, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1), st.floats(0.1, 20))
def test_tau_range_property(phi, beta):
    t = tau(heaviside(phi, beta), 1e-3, 3.0)
    assert 1e-3 <= t <= 1.0


@pytest.mark.parametrize("scheme,kw", [
    ("we", dict(m=1.0)), ("we", dict(k=0.1)), ("dwe", dict(k=0.1)), ("bwe", dict(ell=0.1)),
    ("bwe", dict(m=0.1)), ("dbwe", dict(ell=0.1)), ("gwe", dict(m=0.5)), ("rde", dict(k=0.1)),
    ("rde", dict(m=0.0)), ("we", dict(ell=-1.0)), ("we", dict(beta=0.0)), ("we", dict(c_f=0.0)),
])
def test_params_reject_inconsistent(scheme, kw):
    base = dict(ell=0.01, m=1.0 if scheme in ("rde",) else 0.0)
    base.update(kw)
    with pytest.raises(InvalidArgument):
        EvolutionParams(scheme, **base)


def test_scheme_reductions():
    mesh, M, B = matrices()
    L = fem.lumped_weights(mesh)
    we = operator_matrix(M, B, EvolutionParams("we", ell=0.02), L)
    gwe = operator_matrix(M, B, EvolutionParams("gwe", ell=0.02, k=0.0), L)
    assert abs(we - gwe).max() == 0
    dwe = operator_matrix(M, B, EvolutionParams("dwe", ell=0.02, m=0.7), L)
    dgwe = operator_matrix(M, B, EvolutionParams("dgwe", ell=0.02, m=0.7, k=0.0), L)
    assert abs(dwe - dgwe).max() == 0
    dbwe = operator_matrix(M, B, EvolutionParams("dbwe", m=0.7, k=0.03), L)
    dgwe0 = operator_matrix(M, B, EvolutionParams("dgwe", ell=0.0, m=0.7, k=0.03), L)
    assert abs(dbwe - dgwe0).max() == 0
    pure = operator_matrix(M, B, EvolutionParams("dgwe", m=0.7), L)
    assert abs(pure - 1.7 * M).max() == 0


def test_full_operator_formula():
    mesh, M, B = matrices()
    L = fem.lumped_weights(mesh)
    A = operator_matrix(M, B, EvolutionParams("dgwe", ell=0.02, m=0.5, k=0.03), L).toarray()
    Md, Bd = M.toarray(), B.toarray()
    ref = 1.5 * Md + 0.02**2 * Bd - 0.03**4 * Bd @ np.diag(1 / L) @ Bd
    assert np.allclose(A, ref, rtol=0, atol=1e-15 * np.abs(ref).max())
    assert abs(sp.csr_matrix(A) - sp.csr_matrix(A).T).max() <= 1e-15 * np.abs(A).max()


def test_rde_weak_form_matches():
    mesh, M, B = matrices(9, 5)
    p = EvolutionParams("rde", ell=0.03, m=2.0)
    direct = assemble_rde_weak_form(mesh, p)
    generic = operator_matrix(M, B, p)
    assert abs(direct - generic).max() <= 1e-15 * abs(generic).max()


def test_operator_scheme_mismatch():
    _, M, B = matrices()
    with pytest.raises(InvalidArgument):
        build_evolution_operator("dwe", M, B, EvolutionParams("we", ell=0.01))


def block_solution(M, B, L, p, rhs):
    """Solve the unreduced (phi, omega) system with a lumped mass in the coupling."""
    n = M.shape[0]
    K = sp.bmat([[(1 + p.m) * M + p.ell**2 * B, p.k**4 * B], [B, sp.diags(L)]]).tocsc()
    return fem.solve_linear(K, np.r_[rhs, np.zeros(n)])[:n]


def test_block_system_matches_reduced(rng):
    mesh = generate_rect_mesh(1.0, 1.0, 3, 3)
    M, B, L = fem.assemble_mass(mesh), fem.assemble_laplacian(mesh), fem.lumped_weights(mesh)
    for p in (EvolutionParams("gwe", ell=0.01, k=0.011), EvolutionParams("dgwe", ell=0.3, m=1.0, k=0.2)):
        op = build_evolution_operator(p.scheme, M, B, p)
        rhs = rng.standard_normal(mesh.n_nodes)
        reduced = op.solve(rhs)
        block = block_solution(M, B, L, p, rhs)
        assert np.linalg.norm(reduced - block) <= 1e-8 * np.linalg.norm(block)


def test_constant_is_fixed_point():
    mesh, M, B = matrices()
    phi = np.full(mesh.n_nodes, 0.3)
    for p in (EvolutionParams("we", ell=0.02), EvolutionParams("dwe", ell=0.02, m=1.0),
              EvolutionParams("bwe", k=0.02), EvolutionParams("dbwe", m=1.0, k=0.02),
              EvolutionParams("gwe", ell=0.02, k=0.01), EvolutionParams("dgwe", ell=0.02, m=1.0, k=0.01),
              EvolutionParams("rde", ell=0.02, m=1.0)):
        op = build_evolution_operator(p.scheme, M, B, p)
        out = evolve(LevelSetState(phi, phi), op, np.zeros(mesh.n_nodes))
        assert np.allclose(out.phi, phi, rtol=0, atol=1e-12), p.scheme


def test_we_uniform_source_step():
    mesh, M, B = matrices()
    p = EvolutionParams("we", ell=0.05)
    op = build_evolution_operator("we", M, B, p)
    phi = np.full(mesh.n_nodes, 0.5)
    out = evolve(LevelSetState(phi, phi), op, np.full(mesh.n_nodes, 0.2))
    assert np.allclose(out.phi, 0.3, rtol=0, atol=1e-12)
    assert np.array_equal(out.phi_prev, phi) and out.iteration == 1


def test_clamping_and_dirichlet():
    mesh, M, B = matrices()
    p = EvolutionParams("we", ell=0.05)
    bc = LevelSetBC.build([(np.array([0, 1]), 1.0), (np.array([5]), -1.0)])
    op = build_evolution_operator("we", M, B, p, bc)
    phi = np.full(mesh.n_nodes, 0.5)
    out = evolve(LevelSetState(phi, phi), op, np.full(mesh.n_nodes, -1.2))
    assert np.all(out.phi[~np.isin(np.arange(mesh.n_nodes), [5])] == 1.0)
    assert out.phi[5] == -1.0
    raw = evolve(LevelSetState(phi, phi), op, np.full(mesh.n_nodes, -1.2), clamp=False)
    assert raw.phi.max() > 1.0


def test_evolve_rejects_bad_source():
    mesh, M, B = matrices()
    op = build_evolution_operator("we", M, B, EvolutionParams("we", ell=0.05))
    phi = np.zeros(mesh.n_nodes)
    with pytest.raises(InvalidArgument):
        evolve(LevelSetState(phi, phi), op, np.full(mesh.n_nodes, np.nan))
    with pytest.raises(InvalidArgument):
        evolve(LevelSetState(phi, phi), op, np.zeros(3))


def test_conflicting_bc():
    with pytest.raises(InvalidArgument):
        LevelSetBC.build([(np.array([1, 2]), 1.0), (np.array([2]), -1.0)])


def test_rde_step_solves_its_system(rng):
    mesh, M, B = matrices()
    p = EvolutionParams("rde", ell=0.05, m=2.0)
    op = build_evolution_operator("rde", M, B, p)
    phi, s = rng.uniform(-0.5, 0.5, mesh.n_nodes), rng.uniform(-0.1, 0.1, mesh.n_nodes)
    out = evolve(LevelSetState(phi, phi), op, s, clamp=False)
    assert np.allclose((2.0 * M + 0.05**2 * B) @ out.phi, M @ (-s + 2.0 * phi), atol=1e-13)


def test_initial_shapes():
    mesh = generate_rect_mesh(1.0, 0.5, 40, 20)
    filled = initialize(mesh, "filled")
    assert np.all(filled.phi == 1) and np.all(filled.phi_prev == 1)
    half = initialize(mesh, "half").phi
    y = mesh.nodes[:, 1]
    assert np.all(half[y < 0.18] > 0.9) and np.all(half[y > 0.32] < -0.9)
    hole = initialize(mesh, "hole").phi
    centre = np.argmin(np.linalg.norm(mesh.nodes - [0.5, 0.25], axis=1))
    assert hole[centre] < -0.9 and hole[0] > 0.9
    mixed = initialize(mesh, "filled", shape_prev="perforated")
    assert np.all(mixed.phi == 1) and mixed.phi_prev.min() < -0.5
    assert np.sum(mixed.phi_prev < 0) > 0.03 * mesh.n_nodes
    for s in ("hole", "perforated", "half", "random"):
        f = initialize(mesh, s).phi
        assert f.min() >= -1 and f.max() <= 1
    a, b = initialize(mesh, "random", seed=3).phi, initialize(mesh, "random", seed=3).phi
    assert np.array_equal(a, b)


def test_initial_lbracket_strips():
    mesh = generate_lbracket_mesh(1.5, 0.4, 10)
    bc = LevelSetBC.build([(np.array([0, 1]), -1.0)])
    state = initialize(mesh, "filled", bc)
    assert np.all(state.phi[[0, 1]] == -1) and np.all(state.phi[2:] == 1)


def test_lowest_mode_coefficient_sign():
    mesh, M, B = matrices(40, 20)
    L = fem.lumped_weights(mesh)
    h = 1.0 / 40
    assert lowest_mode_coefficient(B, L, EvolutionParams("dgwe", ell=h / 3.5, m=1.0, k=h / 3.5)) == 0.0
    assert lowest_mode_coefficient(B, L, EvolutionParams("dgwe", ell=h / 2, m=1.0, k=h / 2)) < 0.0
    assert lowest_mode_coefficient(B, L, EvolutionParams("we", ell=h)) == 0.0


def free_energies(mesh, p, steps, rng):
    M, B = fem.assemble_mass(mesh), fem.assemble_laplacian(mesh)
    L = fem.lumped_weights(mesh)
    op = build_evolution_operator(p.scheme, M, B, p)
    phi = rng.uniform(-0.5, 0.5, mesh.n_nodes)
    state = LevelSetState(phi, phi + rng.uniform(-0.05, 0.05, mesh.n_nodes))
    out = [discrete_energy(state.phi, state.phi_prev, M, B, p.ell, p.k, L, biharmonic_sign=-1.0)]
    for _ in range(steps):
        state = evolve(state, op, np.zeros(mesh.n_nodes), clamp=False)
        out.append(discrete_energy(state.phi, state.phi_prev, M, B, p.ell, p.k, L, biharmonic_sign=-1.0))
    return np.array(out)


def test_energy_decays_with_damping(rng):
    mesh = generate_rect_mesh(1.0, 0.5, 20, 10)
    for p in (EvolutionParams("dwe", ell=0.05, m=1.0), EvolutionParams("dgwe", ell=0.05, m=1.0, k=0.01)):
        E = free_energies(mesh, p, 50, rng)
        assert np.all(np.diff(E) <= 1e-14 * E[0])
