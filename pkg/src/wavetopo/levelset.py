"""Level set fields and their wave-type evolution.

The level set ``phi`` lives on mesh nodes, takes values in [-1, 1] and is
positive inside material. One evolution step of every scheme is a single
linear solve with an iteration-independent operator, so the operator is
factorized once per run.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .errors import InvalidArgument
from .fem import Factorization, _scatter, assemble_laplacian, assemble_mass, dirichlet_lift, merge_constraints


class Scheme(str, Enum):
    WE = "we"
    DWE = "dwe"
    BWE = "bwe"
    DBWE = "dbwe"
    GWE = "gwe"
    DGWE = "dgwe"
    RDE = "rde"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidArgument(f"unknown scheme {value!r}; expected one of "
                                  f"{', '.join(s.value for s in cls)}") from None


# parameters each scheme forces to zero
_ZERO_PARAMS = {
    Scheme.WE: ("m", "k"),
    Scheme.DWE: ("k",),
    Scheme.BWE: ("ell", "m"),
    Scheme.DBWE: ("ell",),
    Scheme.GWE: ("m",),
    Scheme.DGWE: (),
    Scheme.RDE: ("k",),
}


@dataclass(frozen=True)
class EvolutionParams:
    """Scheme selection and its parameters (evolution step fixed to 1)."""

    scheme: Scheme
    ell: float = 0.0
    m: float = 0.0
    k: float = 0.0
    beta: float = 5.0
    c_f: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        for name in ("ell", "m", "k", "beta", "c_f"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise InvalidArgument(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, float(value))
        if self.ell < 0 or self.k < 0 or self.m < 0:
            raise InvalidArgument(f"ell, m and k must be nonnegative, got {self.ell}, {self.m}, {self.k}")
        if not self.beta > 0:
            raise InvalidArgument(f"beta must be positive, got {self.beta}")
        if not self.c_f > 0:
            raise InvalidArgument(f"c_f must be positive, got {self.c_f}")
        for name in _ZERO_PARAMS[self.scheme]:
            if getattr(self, name) != 0.0:
                raise InvalidArgument(f"scheme {self.scheme.name} requires {name} = 0, got {getattr(self, name)}")
        if self.scheme is Scheme.RDE and not self.m > 0:
            raise InvalidArgument("scheme RDE requires m > 0")

    def to_dict(self):
        return {"scheme": self.scheme.value, "ell": self.ell, "m": self.m, "k": self.k,
                "beta": self.beta, "c_f": self.c_f}


def heaviside(phi, beta):
    """Smoothed material indicator ``(tanh(2 beta phi) + 1) / 2``."""
    if not beta > 0:
        raise InvalidArgument(f"beta must be positive, got {beta}")
    return 0.5 * (np.tanh(2.0 * beta * np.asarray(phi, dtype=float)) + 1.0)


def delta_const(beta):
    """Constant approximation of the smoothed Dirac delta: ``beta * sech^2(0)``."""
    if not beta > 0:
        raise InvalidArgument(f"beta must be positive, got {beta}")
    return float(beta)


def _check_ersatz(theta, e, q):
    if not 0 < e < 1:
        raise InvalidArgument(f"e must lie in (0, 1), got {e}")
    if not q > 1:
        raise InvalidArgument(f"q must exceed 1, got {q}")
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < -1e-12) or np.any(theta > 1 + 1e-12) or not np.all(np.isfinite(theta)):
        raise InvalidArgument("theta outside [0, 1]")
    return np.clip(theta, 0.0, 1.0)


def tau(theta, e, q):
    """Ersatz stiffness interpolation ``(1 - e) theta^q + e``."""
    theta = _check_ersatz(theta, e, q)
    return (1.0 - e) * theta**q + e


def dtau(theta, e, q):
    """Simplified interpolation slope ``q (1 - e) theta``.

    This is the exact derivative of ``tau`` only for q = 2; the simplified
    linear form is kept deliberately since it drives the reference method.
    """
    theta = _check_ersatz(theta, e, q)
    return q * (1.0 - e) * theta


def operator_matrix(M, B, params, lumped=None):
    """Evolution matrix without boundary conditions.

    Second-order schemes: ``(1 + m) M + ell^2 B - k^4 B diag(1/m_L) B``.
    RDE: ``m M + ell^2 B``.
    """
    M = sp.csr_matrix(M)
    B = sp.csr_matrix(B)
    if params.scheme is Scheme.RDE:
        return (params.m * M + params.ell**2 * B).tocsr()
    A = (1.0 + params.m) * M + params.ell**2 * B
    if params.k > 0:
        if lumped is None:
            lumped = np.asarray(M.sum(axis=1)).ravel()
        A = A - params.k**4 * (B @ sp.diags(1.0 / lumped) @ B)
    return A.tocsr()


def lowest_mode_coefficient(B, lumped, params):
    """Smallest ``ell^2 mu - k^4 mu^2`` over the spectrum ``B x = mu M_L x``.

    The concave mode curve attains its minimum at the largest eigenvalue.
    Second-order schemes amplify every mode whose coefficient lies in
    ``(-(4 + 2 m), 0)``, so a negative return value means the mesh resolves
    growing modes and the level set will form wave patterns.
    """
    if params.scheme is Scheme.RDE or params.k == 0:
        return 0.0
    d = 1.0 / np.sqrt(np.asarray(lumped, dtype=float))
    scaled = sp.diags(d) @ sp.csr_matrix(B) @ sp.diags(d)
    mu = float(eigsh(scaled, k=1, which="LA", return_eigenvectors=False, tol=1e-6)[0])
    return min(0.0, params.ell**2 * mu - params.k**4 * mu**2)


def assemble_rde_weak_form(mesh, params):
    """RDE matrix assembled element by element from ``m phi w + ell^2 grad phi . grad w``."""
    if params.scheme is not Scheme.RDE:
        raise InvalidArgument("direct weak-form assembly is only defined for RDE")
    mass_ref = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    local = mesh.areas[:, None, None] * (
        params.m * mass_ref[None] + params.ell**2 * np.einsum("eik,ejk->eij", mesh.grads, mesh.grads)
    )
    return _scatter(mesh.triangles, local, mesh.n_nodes)


@dataclass(frozen=True)
class LevelSetBC:
    """Nodes where phi is held fixed during evolution, with their values."""

    nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def build(cls, pairs):
        """From an iterable of ``(node_array, value)``; conflicting values raise."""
        pairs = list(pairs)
        if not pairs:
            return cls()
        nodes = np.concatenate([np.asarray(n, dtype=np.int64) for n, _ in pairs])
        values = np.concatenate([np.full(len(n), float(v)) for n, v in pairs])
        n, v = merge_constraints(nodes, values)
        return cls(n, v)

    def apply(self, phi):
        phi = np.array(phi, dtype=float)
        phi[self.nodes] = self.values
        return phi


class EvolutionOperator:
    """Factorized evolution matrix with Dirichlet rows eliminated."""

    def __init__(self, M, B, params, bc=None):
        self.params = params
        self.M = sp.csr_matrix(M)
        self.B = sp.csr_matrix(B)
        self.lumped = np.asarray(self.M.sum(axis=1)).ravel()
        self.bc = bc if bc is not None else LevelSetBC()
        self.raw = operator_matrix(self.M, self.B, params, self.lumped)
        if len(self.bc.nodes):
            self.matrix, self.lift = dirichlet_lift(self.raw, self.bc.nodes, self.bc.values)
        else:
            self.matrix, self.lift = self.raw, np.zeros(self.raw.shape[0])
        self._solver = Factorization(self.matrix)
        self.solves = 0

    @property
    def scheme(self):
        return self.params.scheme

    def rhs(self, phi, phi_prev, source):
        p = self.params
        if p.scheme is Scheme.RDE:
            b = self.M @ (-source + p.m * phi)
        else:
            b = self.M @ (-source + (2.0 + p.m) * phi - phi_prev)
        b = b - self.lift
        b[self.bc.nodes] = self.bc.values
        return b

    def solve(self, b):
        self.solves += 1
        return self._solver.solve(b)


def build_evolution_operator(scheme, M, B, params, dirichlet=None):
    """Build and factorize the evolution operator for ``params``.

    ``dirichlet`` is a :class:`LevelSetBC` (or None for no fixed nodes).
    """
    scheme = Scheme.parse(scheme)
    if scheme is not params.scheme:
        raise InvalidArgument(f"scheme {scheme.name} does not match parameters for {params.scheme.name}")
    return EvolutionOperator(M, B, params, dirichlet)


@dataclass(frozen=True, eq=False)
class LevelSetState:
    phi: np.ndarray
    phi_prev: np.ndarray
    iteration: int = 0


def evolve(state, op, source, clamp=True):
    """Advance the level set by one step of the operator's scheme.

    The update is clamped to [-1, 1] and the fixed nodes are reset afterwards.
    """
    source = np.asarray(source, dtype=float)
    if source.shape != state.phi.shape:
        raise InvalidArgument(f"source has shape {source.shape}, expected {state.phi.shape}")
    if not np.all(np.isfinite(source)):
        raise InvalidArgument("source contains non-finite values")
    phi_new = op.solve(op.rhs(state.phi, state.phi_prev, source))
    if clamp:
        np.clip(phi_new, -1.0, 1.0, out=phi_new)
    phi_new = op.bc.apply(phi_new)
    return LevelSetState(phi_new, state.phi.copy(), state.iteration + 1)


class InitialShape(str, Enum):
    FILLED = "filled"
    SINGLE_HOLE = "hole"
    PERFORATED = "perforated"
    HALF_FILLED = "half"
    RANDOM = "random"
    CUSTOM = "custom"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"singlehole": "hole", "halffilled": "half"}
        key = str(value).lower().replace("_", "").replace("-", "")
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise InvalidArgument(f"unknown initial shape {value!r}") from None


def _element_size(mesh):
    return float(np.sqrt(2.0 * mesh.areas.mean()))


def _holes_field(mesh, centers, radius):
    width = _element_size(mesh)
    x = mesh.nodes
    d = np.min(np.linalg.norm(x[:, None, :] - np.asarray(centers)[None], axis=2), axis=1)
    return np.tanh((d - radius) / width)


def initial_field(mesh, shape, seed=0, values=None):
    """Nodal level set for one of the initial shapes (no boundary conditions applied)."""
    shape = InitialShape.parse(shape)
    lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
    size = hi - lo
    if shape is InitialShape.FILLED:
        return np.ones(mesh.n_nodes)
    if shape is InitialShape.SINGLE_HOLE:
        return _holes_field(mesh, [lo + 0.5 * size], 0.15 * size.min())
    if shape is InitialShape.PERFORATED:
        # roughly square spacing, four holes along the short side
        spacing = size.min() / 4.0
        nx, ny = max(1, int(round(size[0] / spacing))), max(1, int(round(size[1] / spacing)))
        cx = lo[0] + (np.arange(nx) + 0.5) * size[0] / nx
        cy = lo[1] + (np.arange(ny) + 0.5) * size[1] / ny
        centers = np.array([(a, b) for a in cx for b in cy])
        return _holes_field(mesh, centers, 0.3 * spacing)
    if shape is InitialShape.HALF_FILLED:
        width = 2.0 * _element_size(mesh)
        return -np.tanh((mesh.nodes[:, 1] - (lo[1] + 0.5 * size[1])) / width)
    if shape is InitialShape.RANDOM:
        return np.random.default_rng(seed).uniform(-1.0, 1.0, mesh.n_nodes)
    if values is None:
        raise InvalidArgument("custom initial shape needs explicit values")
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_nodes,):
        raise InvalidArgument(f"custom field has shape {values.shape}, expected ({mesh.n_nodes},)")
    return np.clip(values, -1.0, 1.0)


def initialize(mesh, shape="filled", bc=None, shape_prev=None, seed=0, values=None, values_prev=None):
    """Initial state; ``shape_prev`` defaults to ``shape`` (zero initial velocity)."""
    phi = initial_field(mesh, shape, seed, values)
    if shape_prev is None and values_prev is None:
        phi_prev = phi.copy()
    else:
        phi_prev = initial_field(mesh, shape_prev if shape_prev is not None else "custom", seed, values_prev)
    if bc is not None:
        phi, phi_prev = bc.apply(phi), bc.apply(phi_prev)
    return LevelSetState(phi, phi_prev, 0)


def discrete_energy(phi, phi_prev, M, B, ell, k, lumped=None, biharmonic_sign=1.0):
    """Kinetic plus potential energy of a level set pair.

    ``0.5 d.M.d + 0.5 ell^2 phi.B.phi + sign * 0.5 k^4 (B phi).M_L^-1.(B phi)``
    with ``d = phi - phi_prev``. ``biharmonic_sign = -1`` gives the quantity
    that the implemented update dissipates.
    """
    d = phi - phi_prev
    if lumped is None:
        lumped = np.asarray(M.sum(axis=1)).ravel()
    Bphi = B @ phi
    return 0.5 * d @ (M @ d) + 0.5 * ell**2 * phi @ Bphi + biharmonic_sign * 0.5 * k**4 * Bphi @ (Bphi / lumped)


def evolution_matrices(mesh):
    """Consistent mass and Laplacian matrices of the auxiliary domain."""
    return assemble_mass(mesh), assemble_laplacian(mesh)
