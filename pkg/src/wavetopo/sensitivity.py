"""Perturbation (driving source) fields, their normalization and regularization.

All fields are nodal densities: integrating a field ``f`` against a nodal
variation ``d_theta`` with the lumped weights gives the first-order change of
the Lagrangian.
"""
from __future__ import annotations

import warnings

import numpy as np

from . import fem
from .constraints import eval_stress_constraint, eval_volume_constraint, volume_gradient
from .elasticity import element_strains, element_von_mises, nodal_density
from .errors import InvalidArgument
from .levelset import dtau as ersatz_dtau
from .levelset import tau as ersatz_tau
from .material import voigt_matrix

NORMALIZATION_FLOOR = 1e-12


def strain_energy_density(mesh, material, u, v=None):
    """Element values of ``eps(u) : C : eps(v)`` (``v`` defaults to ``u``)."""
    eu = element_strains(mesh, u)
    ev = eu if v is None else element_strains(mesh, v)
    return np.einsum("ei,ij,ej->e", eu, voigt_matrix(material), ev)


def design_derivative(mesh, material, u, v, theta, e, q, design_mask=None):
    """Nodal ``eps(u) : dtau/dTheta C : eps(v)``, the equilibrium term of the source."""
    w = strain_energy_density(mesh, material, u, v)
    return ersatz_dtau(theta, e, q) * nodal_density(mesh, w, design_mask)


def _check(mesh, theta, *fields):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (mesh.n_nodes,):
        raise InvalidArgument(f"theta has shape {theta.shape}, expected ({mesh.n_nodes},)")
    for f in fields:
        if f is not None and np.shape(f) != (2 * mesh.n_nodes,):
            raise InvalidArgument(f"displacement has shape {np.shape(f)}, expected ({2 * mesh.n_nodes},)")
    return theta


def perturbation_compliance(mesh, material, u, theta, multiplier, G, V0, e=1e-3, q=3.0,
                            objective_scale=1.0):
    """Compliance source ``(lam + r G) I_G / V0 - eps(u) : dtau C : eps(u)``.

    ``objective_scale`` divides the mechanical term, which is the same as
    minimising ``J / objective_scale``; it leaves the multiplier dimensionless.
    """
    theta = _check(mesh, theta, u)
    ev = eval_volume_constraint(G, 0.0, multiplier)
    dR = design_derivative(mesh, material, u, u, theta, e, q)
    return volume_gradient(ev, multiplier, V0) - dR / objective_scale


def perturbation_mechanism(mesh, material, u, v, theta, multiplier, G, V0, e=1e-3, q=3.0,
                           design_mask=None, objective_scale=1.0):
    """Mechanism source ``(lam + r G) I_G / V0 - eps(u) : dtau C : eps(v)``.

    Elements outside ``design_mask`` (the fixed solid) contribute nothing:
    their stiffness does not depend on theta and their volume is not counted.
    """
    theta = _check(mesh, theta, u, v)
    ev = eval_volume_constraint(G, 0.0, multiplier)
    dR = design_derivative(mesh, material, u, v, theta, e, q, design_mask)
    share = 1.0 if design_mask is None else nodal_density(mesh, np.ones(mesh.n_elements), design_mask)
    return volume_gradient(ev, multiplier, V0) * share - dR / objective_scale


def perturbation_stress(mesh, material, u, v, theta, multiplier, f_y, w, V0, e=1e-3, q=3.0):
    """Stress bi-objective source.

    ``{(lam + r g) sigma_vm / f_y I_g + eps(u) : C : ((1 - w)/2 eps(u) - eps(v))} dtau + w / V0``
    with nodal von Mises stress of ``C : eps(u)`` and ``g = sigma_vm tau / f_y - 1``.
    """
    theta = _check(mesh, theta, u, v)
    sigma = mesh.to_nodes(element_von_mises(mesh, material, u))
    ev = eval_stress_constraint(sigma, ersatz_tau(theta, e, q), f_y, multiplier)
    stress_term = (multiplier.lam + multiplier.r * ev.value) * sigma / f_y * ev.indicator
    euu = strain_energy_density(mesh, material, u)
    euv = strain_energy_density(mesh, material, u, v)
    mech = nodal_density(mesh, 0.5 * (1.0 - w) * euu - euv)
    return (stress_term + mech) * ersatz_dtau(theta, e, q) + w / V0


def normalization_factor(field, weights, V0, c_f):
    """``(1 / (c_f V0)) int |field|`` with lumped weights; floored at 1e-12 with a warning."""
    if not c_f > 0:
        raise InvalidArgument(f"c_f must be positive, got {c_f}")
    field = np.asarray(field, dtype=float)
    if not np.all(np.isfinite(field)):
        raise InvalidArgument("normalization field contains non-finite values")
    value = float(np.dot(weights, np.abs(field)) / (c_f * V0))
    if not value > NORMALIZATION_FLOOR:
        warnings.warn(f"normalization factor {value:.3e} floored at {NORMALIZATION_FLOOR:.0e}",
                      RuntimeWarning, stacklevel=2)
        return NORMALIZATION_FLOOR
    return value


def arsinh_scale(f, gamma):
    """Odd contraction ``arsinh(gamma f) / gamma``."""
    if not gamma > 0:
        raise InvalidArgument(f"gamma must be positive, got {gamma}")
    return np.arcsinh(gamma * np.asarray(f, dtype=float)) / gamma


class HelmholtzFilter:
    """Solver for ``(M + kappa B) f_bar = M f`` with natural boundary conditions."""

    def __init__(self, kappa, M, B):
        if kappa < 0:
            raise InvalidArgument(f"kappa must be nonnegative, got {kappa}")
        self.kappa = kappa
        self.M = M
        self._solver = fem.Factorization(M + kappa * B)

    def __call__(self, f):
        return self._solver.solve(self.M @ np.asarray(f, dtype=float))


def helmholtz_filter(f, kappa, M, B):
    return HelmholtzFilter(kappa, M, B)(f)
