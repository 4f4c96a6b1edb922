"""Isotropic linear elastic material in 2D."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidArgument


class PlaneMode(str, Enum):
    PLANE_STRAIN = "PlaneStrain"
    PLANE_STRESS = "PlaneStress"


@dataclass(frozen=True)
class Material:
    youngs_modulus: float
    poisson_ratio: float
    mode: PlaneMode = PlaneMode.PLANE_STRAIN

    def __post_init__(self):
        object.__setattr__(self, "mode", PlaneMode(self.mode))
        if not self.youngs_modulus > 0:
            raise InvalidArgument(f"Young's modulus must be positive, got {self.youngs_modulus}")
        if not -1.0 < self.poisson_ratio <= 0.5:
            raise InvalidArgument(f"Poisson ratio must lie in (-1, 0.5), got {self.poisson_ratio}")
        if self.poisson_ratio == 0.5 and self.mode is PlaneMode.PLANE_STRAIN:
            raise InvalidArgument("Poisson ratio 0.5 is incompressible; plane strain is singular")

    def to_dict(self):
        return {"youngs_modulus": self.youngs_modulus, "poisson_ratio": self.poisson_ratio,
                "mode": self.mode.value}


def lame_constants(material):
    """Return ``(mu, lam)`` with ``lam`` already reduced for plane stress.

    Plane strain uses the 3D Lame constants directly. Plane stress replaces
    ``lam`` by ``2 lam mu / (lam + 2 mu)``.
    """
    E, nu = material.youngs_modulus, material.poisson_ratio
    if nu == 0.5:
        if material.mode is PlaneMode.PLANE_STRAIN:
            raise InvalidArgument("Poisson ratio 0.5 is incompressible; plane strain is singular")
        # limit of 2 lam mu / (lam + 2 mu) as lam -> inf
        mu = E / 3.0
        return mu, 2.0 * mu
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    if material.mode is PlaneMode.PLANE_STRESS:
        lam = 2.0 * lam * mu / (lam + 2.0 * mu)
    return mu, lam


def voigt_matrix(material):
    """3x3 constitutive matrix acting on (eps_xx, eps_yy, gamma_xy)."""
    mu, lam = lame_constants(material)
    return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])


def stress_matrix_4(material):
    """4x3 map from (eps_xx, eps_yy, gamma_xy) to (s_xx, s_yy, s_zz, s_xy).

    Plane strain keeps the out-of-plane stress ``lam (eps_xx + eps_yy)``;
    plane stress sets it to zero.
    """
    mu, lam = lame_constants(material)
    D = voigt_matrix(material)
    zz = np.zeros(3) if material.mode is PlaneMode.PLANE_STRESS else np.array([lam, lam, 0.0])
    return np.vstack([D[0], D[1], zz, D[2]])


# sigma_vm^2 = s^T V s for s = (s_xx, s_yy, s_zz, s_xy)
VON_MISES_QUADRATIC = np.array([
    [1.0, -0.5, -0.5, 0.0],
    [-0.5, 1.0, -0.5, 0.0],
    [-0.5, -0.5, 1.0, 0.0],
    [0.0, 0.0, 0.0, 3.0],
])
