"""P1 finite element assembly, Dirichlet elimination and linear solves."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgument, NumericDegeneracy, SolverFailure
from .material import voigt_matrix

DIRECT_SOLVER_MAX_DOFS = 200_000
DIRECT_TOL = 1e-10
ITERATIVE_TOL = 1e-8

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def _scatter(tris, local, n):
    """Sum (E, k, k) element matrices into an (n, n) CSR matrix."""
    k = tris.shape[1]
    rows = np.repeat(tris, k, axis=1).ravel()
    cols = np.tile(tris, (1, k)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def element_mass(area):
    return area * _MASS_REF


def element_laplacian(area, grads):
    return area * grads @ grads.T


def assemble_mass(mesh, elements=None):
    """Consistent P1 mass matrix, optionally restricted to a boolean element mask."""
    key = ("mass", None if elements is None else np.asarray(elements, bool).tobytes())
    if key not in mesh._cache:
        areas = mesh.areas if elements is None else mesh.areas * np.asarray(elements, bool)
        local = areas[:, None, None] * _MASS_REF[None]
        mesh._cache[key] = _scatter(mesh.triangles, local, mesh.n_nodes)
    return mesh._cache[key]


def assemble_laplacian(mesh):
    """P1 stiffness matrix of the scalar Laplacian (natural boundary conditions)."""
    if "laplacian" not in mesh._cache:
        local = mesh.areas[:, None, None] * np.einsum("eik,ejk->eij", mesh.grads, mesh.grads)
        mesh._cache["laplacian"] = _scatter(mesh.triangles, local, mesh.n_nodes)
    return mesh._cache["laplacian"]


def lump_mass(M):
    """Row-sum lumped mass as a sparse diagonal matrix."""
    d = np.asarray(M.sum(axis=1)).ravel()
    if np.any(d <= 0):
        raise NumericDegeneracy(f"nonpositive lumped mass at {int(np.sum(d <= 0))} node(s)")
    return sp.diags(d, format="csr")


def lumped_weights(mesh):
    """Lumped nodal areas of the full mesh as a 1D array."""
    if "lumped" not in mesh._cache:
        w = np.zeros(mesh.n_nodes)
        np.add.at(w, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
        mesh._cache["lumped"] = w
    return mesh._cache["lumped"]


def strain_displacement(grads):
    """(E, 3, 6) strain-displacement matrices for dof order (u0x, u0y, u1x, ...)."""
    n = len(grads)
    Bm = np.zeros((n, 3, 6))
    gx, gy = grads[:, :, 0], grads[:, :, 1]
    Bm[:, 0, 0::2] = gx
    Bm[:, 1, 1::2] = gy
    Bm[:, 2, 0::2] = gy
    Bm[:, 2, 1::2] = gx
    return Bm


def element_dofs(tris):
    dofs = np.empty((len(tris), 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * tris
    dofs[:, 1::2] = 2 * tris + 1
    return dofs


def unit_element_stiffness(mesh, material):
    """(E, 6, 6) element stiffness matrices for tau = 1, cached per material."""
    key = ("ke", material)
    if key not in mesh._cache:
        Bm = strain_displacement(mesh.grads)
        D = voigt_matrix(material)
        mesh._cache[key] = mesh.areas[:, None, None] * np.einsum("eki,kl,elj->eij", Bm, D, Bm)
    return mesh._cache[key]


def element_tau(mesh, tau):
    """Reduce a nodal tau field to elements (arithmetic mean); pass element arrays through."""
    tau = np.asarray(tau, dtype=float)
    if tau.ndim == 0:
        return np.full(mesh.n_elements, float(tau))
    if tau.shape == (mesh.n_nodes,) and mesh.n_nodes != mesh.n_elements:
        return mesh.to_elements(tau)
    if tau.shape == (mesh.n_elements,):
        return tau
    raise InvalidArgument(f"tau has shape {tau.shape}; expected ({mesh.n_nodes},) or ({mesh.n_elements},)")


def assemble_elasticity(mesh, material, tau=1.0, e_min=0.0, tau_elements=None):
    """Stiffness matrix of int eps(u) : tau C : eps(v) over the mesh.

    ``tau`` may be nodal (reduced to elements by averaging) or elementwise.
    ``tau_elements`` bypasses that reduction and the range check, which is
    useful for assembling sums and differences of stiffness matrices.
    """
    if tau_elements is None:
        te = element_tau(mesh, tau)
        if np.any(te < e_min - 1e-12) or np.any(te > 1.0 + 1e-12) or not np.all(np.isfinite(te)):
            raise InvalidArgument(f"tau outside [{e_min}, 1]: range [{te.min()}, {te.max()}]")
    else:
        te = np.asarray(tau_elements, dtype=float)
    local = te[:, None, None] * unit_element_stiffness(mesh, material)
    return _scatter(element_dofs(mesh.triangles), local, 2 * mesh.n_nodes)


def assemble_boundary_load(mesh, traction, tag):
    """Consistent nodal load vector of a constant traction on the edges with ``tag``."""
    edges = mesh.edges_with_tag(tag)
    if len(edges) == 0:
        raise InvalidArgument(f"no boundary edges carry tag {getattr(tag, 'value', tag)}")
    t = np.asarray(traction, dtype=float).reshape(2)
    half = 0.5 * mesh.edge_lengths(edges)
    f = np.zeros(2 * mesh.n_nodes)
    for c in range(2):
        np.add.at(f, 2 * edges[:, 0] + c, half * t[c])
        np.add.at(f, 2 * edges[:, 1] + c, half * t[c])
    return f


def assemble_boundary_spring(mesh, tag, stiffness, direction):
    """Matrix of int_Gamma k (r x r) u . v over the tagged edges (consistent 1D mass)."""
    edges = mesh.edges_with_tag(tag)
    if len(edges) == 0:
        raise InvalidArgument(f"no boundary edges carry tag {getattr(tag, 'value', tag)}")
    r = np.asarray(direction, dtype=float).reshape(2)
    edge_mass = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    local = np.kron(edge_mass, stiffness * np.outer(r, r))
    lengths = mesh.edge_lengths(edges)
    dofs = np.column_stack([2 * edges[:, 0], 2 * edges[:, 0] + 1, 2 * edges[:, 1], 2 * edges[:, 1] + 1])
    return _scatter(dofs, lengths[:, None, None] * local[None], 2 * mesh.n_nodes)


def boundary_functional(mesh, tag, direction):
    """Vector L with L . u = int_Gamma r . u dGamma (trapezoidal, exact for P1)."""
    return assemble_boundary_load(mesh, direction, tag)


@dataclass(frozen=True)
class LinearSystem:
    matrix: sp.spmatrix
    rhs: np.ndarray
    fixed_dofs: np.ndarray = None
    fixed_values: np.ndarray = None


def merge_constraints(dofs, values):
    """Deduplicate prescribed dofs; conflicting values raise ``InvalidArgument``."""
    dofs = np.asarray(dofs, dtype=np.int64).ravel()
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    order = np.argsort(dofs, kind="stable")
    d, v = dofs[order], values[order]
    same = d[1:] == d[:-1]
    if np.any(same & (v[1:] != v[:-1])):
        bad = d[1:][same & (v[1:] != v[:-1])][0]
        raise InvalidArgument(f"conflicting prescribed values on dof {bad}")
    keep = np.r_[True, ~same]
    return d[keep], v[keep].copy()


def dirichlet_lift(A, dofs, values):
    """Return (reduced matrix, lift) so that ``rhs - lift`` is the modified right-hand side."""
    n = A.shape[0]
    free = np.ones(n)
    free[dofs] = 0.0
    F = sp.diags(free)
    reduced = (F @ A @ F + sp.diags(1.0 - free)).tocsr()
    full = np.zeros(n)
    full[dofs] = values
    lift = F @ (A @ full)
    return reduced, lift


def apply_dirichlet(system):
    """Symmetric elimination of the prescribed dofs of a :class:`LinearSystem`."""
    if system.fixed_dofs is None or len(system.fixed_dofs) == 0:
        return system
    n = system.matrix.shape[0]
    dofs, values = merge_constraints(system.fixed_dofs, system.fixed_values)
    if dofs[0] < 0 or dofs[-1] >= n:
        raise InvalidArgument("prescribed dof out of range")
    A, lift = dirichlet_lift(sp.csr_matrix(system.matrix), dofs, values)
    b = np.asarray(system.rhs, dtype=float) - lift
    b[dofs] = values
    return LinearSystem(A, b, dofs, values)


class Factorization:
    """Reusable solver for a fixed sparse matrix with a residual contract."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise InvalidArgument(f"matrix must be square, got {A.shape}")
        self.A = A
        self.n = A.shape[0]
        self.iterative = self.n > DIRECT_SOLVER_MAX_DOFS
        self._lu = None
        if not self.iterative:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("error", spla.MatrixRankWarning)
                    self._lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
            except (RuntimeError, spla.MatrixRankWarning) as exc:
                raise SolverFailure(f"factorization failed: {exc}") from exc
            else:
                self.iterations = 0

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros_like(b)
        if self.iterative:
            return self._solve_cg(b, bnorm)
        x = self._lu.solve(b)
        res = self._residual(x, b, bnorm)
        # a couple of refinement sweeps rescue badly scaled but nonsingular systems
        for _ in range(2):
            if res <= DIRECT_TOL:
                break
            x = x + self._lu.solve(b - self.A @ x)
            res = self._residual(x, b, bnorm)
        if not res <= DIRECT_TOL:
            raise SolverFailure(f"direct solve residual {res:.3e} exceeds {DIRECT_TOL:.0e}", residual=res)
        return x

    def _residual(self, x, b, bnorm):
        if not np.all(np.isfinite(x)):
            return np.inf
        return float(np.linalg.norm(self.A @ x - b) / bnorm)

    def _solve_cg(self, b, bnorm):
        diag = self.A.diagonal()
        if np.any(diag <= 0):
            raise SolverFailure("iterative fallback needs a positive diagonal")
        count = [0]

        def tick(_):
            count[0] += 1

        x, info = spla.cg(self.A, b, rtol=ITERATIVE_TOL, maxiter=10 * self.n,
                          M=sp.diags(1.0 / diag), callback=tick)
        self.iterations = count[0]
        res = self._residual(x, b, bnorm)
        if info != 0 or not res <= ITERATIVE_TOL * 1.01:
            raise SolverFailure(f"CG stopped after {count[0]} iterations, residual {res:.3e}", residual=res)
        return x


def solve_linear(A, b):
    """Solve ``A x = b``; raises :class:`SolverFailure` when the residual contract is missed."""
    A = sp.csc_matrix(A) if sp.issparse(A) else sp.csc_matrix(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise InvalidArgument(f"rhs length {b.shape[0]} does not match matrix size {A.shape[0]}")
    return Factorization(A).solve(b)
