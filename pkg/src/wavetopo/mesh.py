"""Structured P1 triangle meshes with tagged boundary segments.

Meshes are built on a regular grid of square (or rectangular) cells. Each cell
is split along one diagonal; the diagonal direction alternates with the cell
parity so that the pattern is mirror symmetric about both grid centre lines.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument, NumericDegeneracy


class Tag(str, Enum):
    """Boundary segment tags."""

    GAMMA_U = "GammaU"  # clamped, u = 0
    GAMMA_T = "GammaT"  # traction; also where phi = 1 in the evolution system
    GAMMA_A = "GammaA"  # mechanism input port
    GAMMA_B = "GammaB"  # mechanism output port
    GAMMA_VOID_A = "GammaVoidA"  # phi = -1 strips
    GAMMA_VOID_B = "GammaVoidB"
    GAMMA_S = "GammaS"  # symmetry line, zero normal displacement
    FREE = "Free"


@dataclass(frozen=True)
class BoundarySegment:
    """Axis-aligned piece of the domain outline.

    The segment lies on the line ``axis == value`` and spans ``[lo, hi)`` along
    the other coordinate. An edge belongs to the segment when its midpoint does.
    """

    tag: Tag
    axis: str
    value: float
    lo: float
    hi: float

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise InvalidArgument(f"axis must be 'x' or 'y', got {self.axis!r}")
        if not self.hi > self.lo:
            raise InvalidArgument(f"empty interval [{self.lo}, {self.hi})")
        object.__setattr__(self, "tag", Tag(self.tag))

    def contains(self, points, tol):
        points = np.atleast_2d(points)
        on, along = (0, 1) if self.axis == "x" else (1, 0)
        return (
            (np.abs(points[:, on] - self.value) <= tol)
            & (points[:, along] >= self.lo - tol)
            & (points[:, along] < self.hi - tol)
        )

    def to_dict(self):
        return {"tag": self.tag.value, "axis": self.axis, "value": self.value,
                "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d):
        return cls(Tag(d["tag"]), d["axis"], float(d["value"]), float(d["lo"]), float(d["hi"]))


@dataclass(frozen=True, eq=False)
class Grid:
    """Cell layout of a structured mesh, used for rasterisation."""

    x0: float
    y0: float
    dx: float
    dy: float
    nx: int
    ny: int
    cell_mask: np.ndarray  # (ny, nx) bool, True where the cell is part of the domain
    node_index: np.ndarray  # (ny+1, nx+1) int, -1 where no node exists


def p1_geometry(coords):
    """Area and constant basis-function gradients of one P1 triangle.

    Parameters
    ----------
    coords : array_like, shape (3, 2)
        Vertex coordinates in counterclockwise order.

    Returns
    -------
    area : float
    grads : ndarray, shape (3, 2)
    """
    area, grads = _p1_geometry_batch(np.asarray(coords, dtype=float)[None])
    return float(area[0]), grads[0]


def _p1_geometry_batch(xy):
    x, y = xy[..., 0], xy[..., 1]
    # b_i = y_j - y_k, c_i = x_k - x_j for cyclic (i, j, k)
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    scale = np.max(np.ptp(xy, axis=1), axis=1) ** 2
    bad = ~(det > 1e-13 * scale)
    if np.any(bad):
        raise NumericDegeneracy(
            f"{int(bad.sum())} degenerate or clockwise triangle(s), first at index {int(np.argmax(bad))}"
        )
    grads = np.stack([b, c], axis=2) / det[:, None, None]
    return 0.5 * det, grads


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation of a 2D domain.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (E, 3) int array, counterclockwise
    boundary_edges : (B, 2) int array, oriented as in their triangle
    edge_tags : (B,) object array of :class:`Tag`
    fixed : (E,) bool array, True for elements of the non-design solid region
    domain_area : analytic area of the domain, when known
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray = None
    edge_tags: np.ndarray = None
    fixed: np.ndarray = None
    grid: Grid | None = None
    domain_area: float | None = None
    areas: np.ndarray = field(init=False, repr=False)
    grads: np.ndarray = field(init=False, repr=False)
    _cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise InvalidArgument("nodes must have shape (N, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise InvalidArgument("triangles must have shape (E, 3)")
        if tris.size and (tris.min() < 0 or tris.max() >= len(nodes)):
            raise InvalidArgument("triangle node index out of range")
        areas, grads = _p1_geometry_batch(nodes[tris])
        edges = self.boundary_edges
        if edges is None:
            edges = _boundary_edges(tris)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        tags = self.edge_tags
        if tags is None:
            tags = _free_tags(len(edges))
        tags = np.asarray(tags, dtype=object)
        if len(tags) != len(edges):
            raise InvalidArgument("edge_tags must match boundary_edges")
        fixed = np.zeros(len(tris), bool) if self.fixed is None else np.asarray(self.fixed, bool)
        if fixed.shape != (len(tris),):
            raise InvalidArgument("fixed mask must have one entry per triangle")
        for name, value in (("nodes", nodes), ("triangles", tris), ("boundary_edges", edges),
                            ("edge_tags", tags), ("fixed", fixed), ("areas", areas), ("grads", grads)):
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.triangles)

    @property
    def length_scale(self):
        return float(np.max(np.ptp(self.nodes, axis=0)))

    @property
    def area(self):
        return float(self.areas.sum())

    def edge_lengths(self, edges=None):
        edges = self.boundary_edges if edges is None else edges
        d = self.nodes[edges[:, 1]] - self.nodes[edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def edges_with_tag(self, tag):
        tag = Tag(tag)
        return self.boundary_edges[np.array([t == tag for t in self.edge_tags], dtype=bool)]

    def nodes_with_tag(self, tag):
        return np.unique(self.edges_with_tag(tag))

    def has_tag(self, tag):
        return len(self.edges_with_tag(tag)) > 0

    def fixed_nodes(self):
        """Nodes touching at least one fixed-solid element."""
        return np.unique(self.triangles[self.fixed])

    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    def element_adjacency(self):
        """Sparse (E, E) matrix with ones for elements sharing an edge."""
        if "adjacency" not in self._cache:
            tris = self.triangles
            e = np.repeat(np.arange(len(tris)), 3)
            pairs = np.sort(tris[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
            key = pairs[:, 0] * self.n_nodes + pairs[:, 1]
            order = np.argsort(key, kind="stable")
            k, el = key[order], e[order]
            same = np.flatnonzero(k[1:] == k[:-1])
            a, b = el[same], el[same + 1]
            n = len(tris)
            adj = sp.coo_matrix((np.ones(2 * len(a)), (np.r_[a, b], np.r_[b, a])), shape=(n, n)).tocsr()
            self._cache["adjacency"] = adj
        return self._cache["adjacency"]

    def node_element_weights(self):
        """Sparse (N, E) area-weighted averaging operator from elements to nodes."""
        if "n2e" not in self._cache:
            rows = self.triangles.ravel()
            cols = np.repeat(np.arange(self.n_elements), 3)
            vals = np.repeat(self.areas, 3)
            W = sp.coo_matrix((vals, (rows, cols)), shape=(self.n_nodes, self.n_elements)).tocsr()
            s = np.asarray(W.sum(axis=1)).ravel()
            self._cache["n2e"] = sp.diags(1.0 / s) @ W
        return self._cache["n2e"]

    def to_elements(self, nodal):
        """Arithmetic mean of a nodal field over each element's vertices."""
        return np.asarray(nodal)[self.triangles].mean(axis=1)

    def to_nodes(self, elemental):
        """Area-weighted projection of an element-constant field to nodes."""
        return self.node_element_weights() @ np.asarray(elemental)

    def write_vtk(self, path, point_data=None, cell_data=None, title="wavetopo"):
        """Write the mesh and fields in the legacy ASCII VTK unstructured-grid format."""
        path = Path(path)
        lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
                 f"POINTS {self.n_nodes} double"]
        lines += [f"{x:.17g} {y:.17g} 0" for x, y in self.nodes]
        lines.append(f"CELLS {self.n_elements} {4 * self.n_elements}")
        lines += [f"3 {a} {b} {c}" for a, b, c in self.triangles]
        lines.append(f"CELL_TYPES {self.n_elements}")
        lines += ["5"] * self.n_elements
        if point_data:
            lines.append(f"POINT_DATA {self.n_nodes}")
            lines += _vtk_arrays(point_data, self.n_nodes)
        if cell_data:
            lines.append(f"CELL_DATA {self.n_elements}")
            lines += _vtk_arrays(cell_data, self.n_elements)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text("\n".join(lines) + "\n")
        tmp.replace(path)
        return path


def _vtk_arrays(data, n):
    out = []
    for name, values in data.items():
        values = np.asarray(values, dtype=float)
        if values.shape[0] != n:
            raise InvalidArgument(f"field {name!r} has {values.shape[0]} entries, expected {n}")
        if values.ndim == 1:
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [f"{v:.17g}" for v in values]
        else:
            vec = np.zeros((n, 3))
            vec[:, : values.shape[1]] = values
            out.append(f"VECTORS {name} double")
            out += [f"{a:.17g} {b:.17g} {c:.17g}" for a, b, c in vec]
    return out


def _boundary_edges(tris):
    oriented = tris[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    s = np.sort(oriented, axis=1)
    _, inverse, counts = np.unique(s, axis=0, return_inverse=True, return_counts=True)
    return oriented[counts[inverse.ravel()] == 1]


def _structured(x0, y0, dx, dy, nx, ny, cell_mask, domain_area):
    jj, ii = np.nonzero(cell_mask)
    used = np.zeros((ny + 1, nx + 1), bool)
    for dj in (0, 1):
        for di in (0, 1):
            used[jj + dj, ii + di] = True
    node_index = np.full((ny + 1, nx + 1), -1, dtype=np.int64)
    node_index[used] = np.arange(int(used.sum()))
    gy, gx = np.nonzero(used)
    nodes = np.column_stack([x0 + gx * dx, y0 + gy * dy])

    n00 = node_index[jj, ii]
    n10 = node_index[jj, ii + 1]
    n01 = node_index[jj + 1, ii]
    n11 = node_index[jj + 1, ii + 1]
    even = (ii + jj) % 2 == 0
    t1 = np.where(even[:, None], np.column_stack([n00, n10, n11]), np.column_stack([n00, n10, n01]))
    t2 = np.where(even[:, None], np.column_stack([n00, n11, n01]), np.column_stack([n10, n11, n01]))
    tris = np.empty((2 * len(ii), 3), dtype=np.int64)
    tris[0::2] = t1
    tris[1::2] = t2
    grid = Grid(x0, y0, dx, dy, nx, ny, np.asarray(cell_mask, bool), node_index)
    return Mesh(nodes, tris, grid=grid, domain_area=domain_area)


def generate_rect_mesh(width, height, nx, ny):
    """Union-jack triangulation of ``[0, width] x [0, height]`` with ``nx * ny`` cells."""
    if not (width > 0 and height > 0):
        raise InvalidArgument(f"width and height must be positive, got {width}, {height}")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InvalidArgument(f"nx and ny must be integers >= 1, got {nx}, {ny}")
    nx, ny = int(nx), int(ny)
    mask = np.ones((ny, nx), bool)
    return _structured(0.0, 0.0, width / nx, height / ny, nx, ny, mask, width * height)


def generate_lbracket_mesh(L, arm_fraction, n):
    """L-shaped domain: the square ``[0, L]^2`` minus its upper-right corner square.

    The removed square is ``[a, L] x [a, L]`` with ``a = arm_fraction * L``; the
    re-entrant corner ``(a, a)`` is always a mesh node, which requires
    ``arm_fraction * n`` to be an integer.
    """
    if not L > 0:
        raise InvalidArgument(f"L must be positive, got {L}")
    if not 0 < arm_fraction < 1:
        raise InvalidArgument(f"arm_fraction must lie in (0, 1), got {arm_fraction}")
    if int(n) != n or n < 1:
        raise InvalidArgument(f"n must be a positive integer, got {n}")
    n = int(n)
    k = arm_fraction * n
    if abs(k - round(k)) > 1e-9 or round(k) < 1:
        raise InvalidArgument(f"corner at arm_fraction*n = {k} is not on a grid line")
    k = int(round(k))
    mask = np.ones((n, n), bool)
    mask[k:, k:] = False
    area = L * L * (1.0 - (1.0 - arm_fraction) ** 2)
    return _structured(0.0, 0.0, L / n, L / n, n, n, mask, area)


def _free_tags(n):
    # np.full would coerce the str enum to a truncated string
    tags = np.empty(n, dtype=object)
    tags[:] = [Tag.FREE] * n
    return tags


def _check_overlap(segments, tol):
    segments = list(segments)
    for i, a in enumerate(segments):
        for b in segments[i + 1:]:
            same_line = a.axis == b.axis and abs(a.value - b.value) <= tol
            if same_line and min(a.hi, b.hi) - max(a.lo, b.lo) > tol:
                raise InvalidArgument(f"segments {a.tag.value} and {b.tag.value} overlap on {a.axis} = {a.value}")


def tag_boundaries(mesh, segments):
    """Return a copy of ``mesh`` whose boundary edges carry the segment tags.

    Edges not matched by any segment are tagged ``Free``. An edge matched by two
    segments is an error.
    """
    tol = 1e-9 * mesh.length_scale
    edges = mesh.boundary_edges
    mid = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    _check_overlap(segments, tol)
    tags = _free_tags(len(edges))
    hit = np.zeros(len(edges), dtype=np.int64)
    for seg in segments:
        m = seg.contains(mid, tol)
        hit += m
        tags[m] = seg.tag
    if np.any(hit > 1):
        raise InvalidArgument(f"{int(np.sum(hit > 1))} boundary edge(s) matched by more than one segment")
    return _copy_with(mesh, edge_tags=tags)


def widen_to_mesh(mesh, segment):
    """Segment grown to whole boundary edges when it is narrower than the local edge.

    A segment that contains no edge midpoint is replaced by the span of the
    outline edges whose closed extent contains its centre (two edges when the
    centre is a node). Other segments are returned unchanged.
    """
    tol = 1e-9 * mesh.length_scale
    edges = mesh.boundary_edges
    mid = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    if np.any(segment.contains(mid, tol)):
        return segment
    on, along = (0, 1) if segment.axis == "x" else (1, 0)
    a, b = mesh.nodes[edges[:, 0]], mesh.nodes[edges[:, 1]]
    centre = 0.5 * (segment.lo + segment.hi)
    lo, hi = np.minimum(a[:, along], b[:, along]), np.maximum(a[:, along], b[:, along])
    hit = ((np.abs(a[:, on] - segment.value) <= tol) & (np.abs(b[:, on] - segment.value) <= tol)
           & (lo <= centre + tol) & (hi >= centre - tol))
    if not np.any(hit):
        return segment
    return replace(segment, lo=float(lo[hit].min()), hi=float(hi[hit].max()))


def mark_fixed(mesh, boxes):
    """Flag elements whose centroid lies in any ``(xmin, xmax, ymin, ymax)`` box as fixed solid."""
    c = mesh.centroids()
    fixed = np.zeros(mesh.n_elements, bool)
    for xmin, xmax, ymin, ymax in boxes:
        fixed |= (c[:, 0] > xmin) & (c[:, 0] < xmax) & (c[:, 1] > ymin) & (c[:, 1] < ymax)
    return _copy_with(mesh, fixed=fixed)


def _copy_with(mesh, **changes):
    return replace(mesh, boundary_edges=mesh.boundary_edges,
                   edge_tags=changes.get("edge_tags", mesh.edge_tags),
                   fixed=changes.get("fixed", mesh.fixed))


def triangle_geometry(mesh, elem):
    """Area and the three P1 shape-function gradients of element ``elem``."""
    if not 0 <= elem < mesh.n_elements:
        raise InvalidArgument(f"element index {elem} out of range")
    return float(mesh.areas[elem]), mesh.grads[elem].copy()
