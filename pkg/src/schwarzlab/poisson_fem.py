"""P1 finite elements for the Laplacian on the unit interval or unit square.

Nodes are numbered lexicographically, ``node = i + (n_c + 1) * j`` in 2D.
Each square cell is split along its ``(i, j) -> (i+1, j+1)`` diagonal.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DofOutOfRange, EmptyElementSet, NotOnBoundary, TooCoarse


@dataclass(frozen=True)
class StructuredGrid:
    dim: int
    cells_per_side: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.cells_per_side < 4:
            raise TooCoarse(f"cells_per_side={self.cells_per_side} < 4")

    @property
    def h(self) -> float:
        return 1.0 / self.cells_per_side

    @property
    def nodes_per_side(self) -> int:
        return self.cells_per_side + 1

    @property
    def n_nodes(self) -> int:
        return self.nodes_per_side ** self.dim

    @property
    def n_cells(self) -> int:
        return self.cells_per_side ** self.dim

    @cached_property
    def node_index(self) -> np.ndarray:
        """Integer lattice coordinates of every node, shape ``(n_nodes, dim)``."""
        k = np.arange(self.nodes_per_side)
        if self.dim == 1:
            return k[:, None]
        I, J = np.meshgrid(k, k, indexing="xy")
        return np.column_stack([I.ravel(), J.ravel()])

    @property
    def coords(self) -> np.ndarray:
        return self.node_index * self.h

    def node(self, *idx) -> int:
        if self.dim == 1:
            return int(idx[0])
        return int(idx[0] + self.nodes_per_side * idx[1])

    @cached_property
    def elements(self) -> np.ndarray:
        """Element connectivity, shape ``(n_elements, dim + 1)``."""
        n = self.cells_per_side
        if self.dim == 1:
            i = np.arange(n)
            return np.column_stack([i, i + 1])
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
        i, j = i.ravel(), j.ravel()
        n00 = i + (n + 1) * j
        n10 = n00 + 1
        n01 = n00 + (n + 1)
        n11 = n01 + 1
        tri = np.empty((2 * n * n, 3), dtype=int)
        tri[0::2] = np.column_stack([n00, n10, n11])
        tri[1::2] = np.column_stack([n00, n11, n01])
        return tri

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @cached_property
    def element_cell(self) -> np.ndarray:
        """Cell lattice coordinates of every element, shape ``(n_elements, dim)``."""
        n = self.cells_per_side
        if self.dim == 1:
            return np.arange(n)[:, None]
        c = np.arange(n * n)
        cells = np.column_stack([c % n, c // n])
        return np.repeat(cells, 2, axis=0)

    def cell_elements(self, cell_mask: np.ndarray) -> np.ndarray:
        """Element ids of all cells selected by a boolean array indexed ``[i]`` or ``[i, j]``."""
        ec = self.element_cell
        sel = cell_mask[ec[:, 0]] if self.dim == 1 else cell_mask[ec[:, 0], ec[:, 1]]
        return np.flatnonzero(sel)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        ni = self.node_index
        on = np.any((ni == 0) | (ni == self.cells_per_side), axis=1)
        return np.flatnonzero(on)

    @cached_property
    def free_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @property
    def n_free(self) -> int:
        return (self.cells_per_side - 1) ** self.dim

    @cached_property
    def free_dofs(self) -> "DofMap":
        return DofMap(self.free_nodes, self.n_nodes)

    @cached_property
    def all_dofs(self) -> "DofMap":
        return DofMap(np.arange(self.n_nodes), self.n_nodes)

    @cached_property
    def element_stiffness(self) -> np.ndarray:
        """Local stiffness of every element, shape ``(n_elements, dim+1, dim+1)``."""
        X = self.coords[self.elements]  # (ne, d+1, d)
        if self.dim == 1:
            L = X[:, 1, 0] - X[:, 0, 0]
            k = np.array([[1.0, -1.0], [-1.0, 1.0]])
            return k[None, :, :] / L[:, None, None]
        # gradients of barycentric coordinates
        J = np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]], axis=2)  # columns are edges
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        Jinv = np.linalg.inv(J)
        ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        G = np.einsum("ak,ekd->ead", ref, Jinv)
        area = 0.5 * np.abs(det)
        return np.einsum("ead,ebd->eab", G, G) * area[:, None, None]

    @cached_property
    def element_measure(self) -> np.ndarray:
        if self.dim == 1:
            return np.full(self.n_elements, self.h)
        return np.full(self.n_elements, 0.5 * self.h * self.h)


def build_grid(dim: int, cells_per_side: int) -> StructuredGrid:
    return StructuredGrid(dim, cells_per_side)


class DofMap:
    """Ordered list of grid nodes acting as degrees of freedom."""

    def __init__(self, nodes, n_grid_nodes: int):
        nodes = np.asarray(nodes, dtype=int)
        if nodes.size and (nodes.min() < 0 or nodes.max() >= n_grid_nodes):
            raise DofOutOfRange("dof map references nodes outside the grid")
        if np.unique(nodes).size != nodes.size:
            raise ValueError("dof map must be injective")
        self.nodes = nodes
        self.n_grid_nodes = n_grid_nodes
        pos = np.full(n_grid_nodes, -1, dtype=int)
        pos[nodes] = np.arange(nodes.size)
        self.position = pos

    def __len__(self):
        return self.nodes.size

    def __eq__(self, other):
        return (isinstance(other, DofMap) and self.n_grid_nodes == other.n_grid_nodes
                and np.array_equal(self.nodes, other.nodes))

    def __hash__(self):
        return hash((self.n_grid_nodes, self.nodes.tobytes()))

    def restrict(self, nodal: np.ndarray) -> np.ndarray:
        """Pick the values of a full nodal vector at these dofs."""
        return np.asarray(nodal)[self.nodes]

    def prolong(self, values: np.ndarray) -> np.ndarray:
        """Full nodal vector, zero outside these dofs."""
        out = np.zeros(self.n_grid_nodes)
        out[self.nodes] = values
        return out

    def selection(self, other: "DofMap") -> sp.csr_matrix:
        """0/1 matrix mapping values on ``other`` to values on ``self`` (nodes absent in ``other`` give 0)."""
        src = other.position[self.nodes]
        keep = src >= 0
        rows = np.flatnonzero(keep)
        return sp.csr_matrix((np.ones(rows.size), (rows, src[keep])), shape=(len(self), len(other)))


@dataclass
class AssembledForm:
    matrix: sp.csr_matrix
    rows: DofMap
    cols: DofMap
    descriptor: str

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def assemble_stiffness(grid: StructuredGrid, element_set, row_dofs: DofMap = None,
                       col_dofs: DofMap = None, descriptor: str = "a") -> AssembledForm:
    """Integrate ``grad phi_j . grad phi_i`` over the elements in ``element_set``."""
    element_set = np.asarray(element_set, dtype=int)
    if element_set.size == 0:
        raise EmptyElementSet("element set is empty")
    if element_set.min() < 0 or element_set.max() >= grid.n_elements:
        raise DofOutOfRange("element id out of range")
    row_dofs = grid.free_dofs if row_dofs is None else row_dofs
    col_dofs = row_dofs if col_dofs is None else col_dofs
    for d in (row_dofs, col_dofs):
        if d.n_grid_nodes != grid.n_nodes:
            raise DofOutOfRange("dof map belongs to a different grid")
    conn = grid.elements[element_set]
    K = grid.element_stiffness[element_set]
    nloc = conn.shape[1]
    r = row_dofs.position[conn]
    c = col_dofs.position[conn]
    R = np.repeat(r, nloc, axis=1).ravel()
    C = np.tile(c, (1, nloc)).ravel()
    V = K.reshape(len(element_set), -1).ravel()
    keep = (R >= 0) & (C >= 0)
    M = sp.coo_matrix((V[keep], (R[keep], C[keep])), shape=(len(row_dofs), len(col_dofs))).tocsr()
    M.sum_duplicates()
    M.eliminate_zeros()
    return AssembledForm(M, row_dofs, col_dofs, descriptor)


def region_boundary(grid: StructuredGrid, element_set):
    """Boundary facets of the union of ``element_set``.

    Returns ``(facets, lengths)`` where ``facets`` is an array of node tuples:
    single nodes in 1D (length 1, the point measure), edges in 2D.
    """
    conn = grid.elements[np.asarray(element_set, dtype=int)]
    if grid.dim == 1:
        nodes, counts = np.unique(conn.ravel(), return_counts=True)
        pts = nodes[counts == 1]
        return pts[:, None], np.ones(pts.size)
    edges = np.concatenate([conn[:, [0, 1]], conn[:, [1, 2]], conn[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    bnd = uniq[counts == 1]
    X = grid.coords
    lengths = np.linalg.norm(X[bnd[:, 0]] - X[bnd[:, 1]], axis=1)
    return bnd, lengths


def boundary_mass(grid: StructuredGrid, element_set, boundary_nodes, dofs: DofMap = None) -> AssembledForm:
    """Lumped boundary mass of the region covered by ``element_set``.

    Weight of a node is half the length of the boundary edges touching it
    (1 per boundary point in 1D).  Only ``boundary_nodes`` get weights.
    """
    dofs = grid.all_dofs if dofs is None else dofs
    facets, lengths = region_boundary(grid, element_set)
    weights = np.zeros(grid.n_nodes)
    if grid.dim == 1:
        weights[facets[:, 0]] += lengths
    else:
        np.add.at(weights, facets[:, 0], 0.5 * lengths)
        np.add.at(weights, facets[:, 1], 0.5 * lengths)
    on_bnd = np.zeros(grid.n_nodes, dtype=bool)
    on_bnd[facets.ravel()] = True
    boundary_nodes = np.asarray(boundary_nodes, dtype=int)
    bad = boundary_nodes[~on_bnd[boundary_nodes]]
    if bad.size:
        raise NotOnBoundary(f"nodes {bad.tolist()} are not on the region boundary")
    keep = np.zeros(grid.n_nodes)
    keep[boundary_nodes] = weights[boundary_nodes]
    d = dofs.restrict(keep)
    return AssembledForm(sp.diags(d).tocsr(), dofs, dofs, "b_boundary")


def load_vector(grid: StructuredGrid, f=1.0, dofs: DofMap = None) -> np.ndarray:
    """P1 load vector ``int f phi_i`` with one-point-per-vertex quadrature (exact for constant f)."""
    dofs = grid.free_dofs if dofs is None else dofs
    conn = grid.elements
    if callable(f):
        fv = f(grid.coords)
        vals = fv[conn].mean(axis=1)
    else:
        vals = np.full(conn.shape[0], float(f))
    share = (vals * grid.element_measure / conn.shape[1])
    out = np.zeros(grid.n_nodes)
    np.add.at(out, conn.ravel(), np.repeat(share, conn.shape[1]))
    return dofs.restrict(out)


def interpolate(grid: StructuredGrid, func, dofs: DofMap = None) -> np.ndarray:
    dofs = grid.free_dofs if dofs is None else dofs
    return dofs.restrict(func(grid.coords))


def global_stiffness(grid: StructuredGrid) -> sp.csr_matrix:
    """Dirichlet stiffness ``A`` on the free dofs."""
    return assemble_stiffness(grid, np.arange(grid.n_elements)).matrix
