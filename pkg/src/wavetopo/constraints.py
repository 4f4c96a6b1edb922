"""Augmented Lagrangian handling of the volume and local stress constraints."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgument


@dataclass(frozen=True, eq=False)
class AugmentedMultiplier:
    """Multiplier ``lam`` (scalar or nodal array), its previous value and the penalty.

    ``lam_prev`` is the value used in the indicator test ``lam_prev + r g > 0``.
    """

    lam: object = 0.0
    lam_prev: object = 0.0
    r: float = 1.0
    growth: float = 1.1
    r_max: float = 100.0

    def __post_init__(self):
        if not self.r > 0:
            raise InvalidArgument(f"penalty must be positive, got {self.r}")
        if not self.growth >= 1:
            raise InvalidArgument(f"penalty growth must be at least 1, got {self.growth}")
        if not self.r_max >= self.r:
            raise InvalidArgument(f"penalty cap {self.r_max} is below the penalty {self.r}")
        if np.any(np.asarray(self.lam) < 0) or np.any(np.asarray(self.lam_prev) < 0):
            raise InvalidArgument("multipliers must be nonnegative")

    @classmethod
    def field(cls, n, r=1.0, growth=1.1, r_max=100.0):
        return cls(np.zeros(n), np.zeros(n), r, growth, r_max)

    def _next_penalty(self):
        return min(self.r * self.growth, self.r_max)


@dataclass(frozen=True, eq=False)
class ConstraintEval:
    value: object  # G (scalar) or g (nodal array)
    indicator: object  # 0/1 float, same shape as value
    augmented: object  # G-bar or g-bar

    @property
    def max_value(self):
        return float(np.max(self.value))


def volume_fraction(theta, weights, V0, region_weights=None):
    """``(1^T M theta) / V0`` using lumped nodal weights (the row sums of M).

    ``region_weights`` replaces ``weights`` for restricted regions such as the
    design region without the fixed solid.
    """
    theta = np.asarray(theta, dtype=float)
    w = weights if region_weights is None else region_weights
    return float(np.dot(w, theta) / V0)


def _augment(value, multiplier):
    value = np.asarray(value, dtype=float)
    ind = (np.asarray(multiplier.lam_prev) + multiplier.r * value > 0).astype(float)
    aug = value * ind - np.asarray(multiplier.lam_prev) / multiplier.r * (1.0 - ind)
    if value.ndim == 0:
        return float(value), float(ind), float(aug)
    return value, ind, aug


def eval_volume_constraint(vol_frac, V_f, multiplier):
    """Volume constraint ``G = vol_frac - V_f`` with its indicator and augmented value."""
    return ConstraintEval(*_augment(float(vol_frac) - V_f, multiplier))


def volume_gradient(ev, multiplier, V0):
    """Pointwise derivative of the augmented volume term: ``(lam + r G) I_G / V0``."""
    return (multiplier.lam + multiplier.r * ev.value) * ev.indicator / V0


def eval_stress_constraint(sigma_vm, tau_field, f_y, multiplier):
    """Nodal stress constraint ``g = sigma_vm tau / f_y - 1`` with indicator."""
    if not f_y > 0:
        raise InvalidArgument(f"yield stress must be positive, got {f_y}")
    sigma_vm = np.asarray(sigma_vm, dtype=float)
    tau_field = np.asarray(tau_field, dtype=float)
    if sigma_vm.shape != tau_field.shape:
        raise InvalidArgument(f"stress and tau shapes differ: {sigma_vm.shape} vs {tau_field.shape}")
    return ConstraintEval(*_augment(sigma_vm * tau_field / f_y - 1.0, multiplier))


def stress_penalty(ev, multiplier, weights):
    """Lumped quadrature of ``lam g_bar + r/2 g_bar^2``."""
    gb = ev.augmented
    return float(np.dot(weights, multiplier.lam * gb + 0.5 * multiplier.r * gb**2))


def update_multiplier_global(multiplier, G):
    """``lam <- lam + r max(G, 0)``, remember the old value, grow the penalty."""
    lam = float(multiplier.lam) + multiplier.r * max(float(G), 0.0)
    return replace(multiplier, lam=lam, lam_prev=float(multiplier.lam), r=multiplier._next_penalty())


def update_multiplier_field(multiplier, g):
    """Nodewise ``lam <- max(lam + r g, 0)``, remember the old field, grow the penalty."""
    g = np.asarray(g, dtype=float)
    old = np.broadcast_to(np.asarray(multiplier.lam, dtype=float), g.shape).copy()
    lam = np.maximum(old + multiplier.r * g, 0.0)
    return replace(multiplier, lam=lam, lam_prev=old, r=multiplier._next_penalty())
