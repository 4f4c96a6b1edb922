import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wavetopo import fem
from wavetopo.constraints import AugmentedMultiplier
from wavetopo.material import Material
from wavetopo.mesh import generate_rect_mesh
from wavetopo.sensitivity import (HelmholtzFilter, arsinh_scale, helmholtz_filter, normalization_factor,
                                  perturbation_compliance, perturbation_mechanism, perturbation_stress)

import oracles

MAT = Material(1.0, 0.3)


@pytest.fixture
def mesh():
    return generate_rect_mesh(1.0, 1.0, 4, 4)


def test_compliance_source_examples(mesh):
    zero = np.zeros(2 * mesh.n_nodes)
    theta = np.ones(mesh.n_nodes)
    f = perturbation_compliance(mesh, MAT, zero, theta, AugmentedMultiplier(0.0, 0.0, r=1.0), -0.5, 1.0)
    assert np.all(f == 0)
    f = perturbation_compliance(mesh, MAT, zero, theta, AugmentedMultiplier(0.0, 0.0, r=1.0), 0.05, 1.0)
    assert np.allclose(f, 0.05, rtol=0, atol=1e-15)


def test_mechanism_source_examples(mesh, rng):
    u = rng.standard_normal(2 * mesh.n_nodes)
    theta = rng.uniform(0, 1, mesh.n_nodes)
    mult = AugmentedMultiplier(0.2, 0.2, r=1.0)
    f0 = perturbation_mechanism(mesh, MAT, u, np.zeros_like(u), theta, mult, 0.1, 1.0)
    assert np.allclose(f0, 0.3)
    fuu = perturbation_mechanism(mesh, MAT, u, u, theta, mult, 0.1, 1.0)
    f1 = perturbation_compliance(mesh, MAT, u, theta, mult, 0.1, 1.0)
    assert np.allclose(fuu, f1, rtol=1e-14)


def test_mechanism_source_ignores_fixed_region(mesh, rng):
    u = rng.standard_normal(2 * mesh.n_nodes)
    theta = np.ones(mesh.n_nodes)
    mask = np.ones(mesh.n_elements, bool)
    mask[:8] = False
    f = perturbation_mechanism(mesh, MAT, u, u, theta, AugmentedMultiplier(), -1.0, 1.0, design_mask=mask)
    inside = np.setdiff1d(np.arange(mesh.n_nodes), mesh.triangles[mask])
    assert np.all(f[inside] == 0)


def test_stress_source_examples(mesh):
    zero = np.zeros(2 * mesh.n_nodes)
    theta = np.full(mesh.n_nodes, 0.7)
    mult = AugmentedMultiplier.field(mesh.n_nodes)
    f = perturbation_stress(mesh, MAT, zero, zero, theta, mult, 1.0, 0.3, 2.0)
    assert np.allclose(f, 0.15)


def test_stress_source_weight_one_drops_objective(mesh, rng):
    u, v = rng.standard_normal(2 * mesh.n_nodes), rng.standard_normal(2 * mesh.n_nodes)
    theta = rng.uniform(0.2, 1, mesh.n_nodes)
    mult = AugmentedMultiplier(np.full(mesh.n_nodes, 0.3), np.full(mesh.n_nodes, 0.3), r=2.0)
    f1 = perturbation_stress(mesh, MAT, u, v, theta, mult, 1.0, 1.0, 1.0)
    f0 = perturbation_stress(mesh, MAT, u, v, theta, mult, 1.0, 0.5, 1.0)
    from wavetopo.levelset import dtau
    from wavetopo.sensitivity import strain_energy_density
    from wavetopo.elasticity import nodal_density
    diff = nodal_density(mesh, 0.25 * strain_energy_density(mesh, MAT, u)) * dtau(theta, 1e-3, 3.0) - 0.5
    assert np.allclose(f0 - f1, diff, rtol=1e-10, atol=1e-12)


def test_compliance_source_zero_strain_region():
    # nodes away from any strained element and with an inactive constraint get exactly zero
    mesh = generate_rect_mesh(1.0, 1.0, 4, 4)
    u = np.zeros(2 * mesh.n_nodes)
    right = mesh.nodes[:, 0] > 0.9
    u[0::2][right] = 0.01
    f = perturbation_compliance(mesh, MAT, u, np.ones(mesh.n_nodes), AugmentedMultiplier(), -0.5, 1.0)
    far = mesh.nodes[:, 0] < 0.6
    assert np.all(f[far] == 0) and np.any(f != 0)


def test_normalization_examples(mesh):
    w = fem.lumped_weights(mesh)
    assert normalization_factor(np.ones(mesh.n_nodes), w, 1.0, 1.0) == pytest.approx(1.0, rel=1e-14)
    assert normalization_factor(np.full(mesh.n_nodes, 2.0), w, 1.0, 0.5) == pytest.approx(4.0, rel=1e-14)
    with pytest.warns(RuntimeWarning):
        assert normalization_factor(np.zeros(mesh.n_nodes), w, 1.0, 1.0) == 1e-12


def test_arsinh_examples():
    assert arsinh_scale(0.0, 4.0) == 0.0
    assert arsinh_scale(1.0, 4.0) == pytest.approx(0.523678136815275324, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(float, 30, elements=st.floats(-1e3, 1e3)), st.floats(1e-3, 50))
def test_arsinh_properties(f, gamma):
    out = arsinh_scale(f, gamma)
    assert np.all(np.abs(out) <= np.abs(f) * (1 + 1e-12))
    assert np.array_equal(arsinh_scale(-f, gamma), -out)
    order = np.argsort(f)
    assert np.all(np.diff(out[order]) >= 0)


def test_helmholtz_filter(rng):
    mesh = generate_rect_mesh(1.0, 0.5, 20, 10)
    M, B = fem.assemble_mass(mesh), fem.assemble_laplacian(mesh)
    c = np.full(mesh.n_nodes, 3.7)
    assert np.allclose(helmholtz_filter(c, 1e-3, M, B), 3.7, rtol=1e-12)
    f = rng.standard_normal(mesh.n_nodes)
    assert np.allclose(helmholtz_filter(f, 0.0, M, B), f, rtol=0, atol=1e-10)
    spike = np.zeros(mesh.n_nodes)
    spike[mesh.n_nodes // 2] = 1.0
    smooth = HelmholtzFilter(1e-3, M, B)(spike)
    assert smooth.max() < spike.max()
    one = np.ones(mesh.n_nodes)
    assert abs(one @ M @ smooth - one @ M @ spike) <= 1e-10 * abs(one @ M @ spike)
    for _ in range(5):
        f = rng.standard_normal(mesh.n_nodes)
        g = HelmholtzFilter(1e-2, M, B)(f)
        assert abs(one @ M @ g - one @ M @ f) <= 1e-10 * (one @ M @ np.abs(f))


def test_fd_compliance_filled():
    err, _, _ = oracles.fd_errors(oracles.compliance_model(), np.ones(15), lam=0.3, r=2.0)
    assert err.max() <= 0.05


def test_fd_compliance_interior_q2(rng):
    # the simplified slope q (1 - e) theta is exact for q = 2
    theta = rng.uniform(0.3, 0.9, 15)
    err, _, _ = oracles.fd_errors(oracles.compliance_model(q=2.0), theta, lam=0.3, r=2.0)
    assert err.max() <= 0.05


def test_fd_mechanism_filled():
    err, _, _ = oracles.fd_errors(oracles.mechanism_model(), np.ones(15), lam=0.3, r=2.0, V_f=0.3)
    assert err.max() <= 0.05


def test_fd_stress_filled():
    m = oracles.stress_model()
    err, _, _ = oracles.fd_errors(m, np.ones(15), stress_mult=oracles.stress_multiplier(15))
    assert err.max() <= 0.08
