"""Box partitions, overlapping covers, cut functions and index operators."""
from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.sparse as sp

from .errors import IndivisibleBlocks, OverlapTooLarge
from .poisson_fem import DofMap, StructuredGrid


@dataclass(frozen=True)
class Subdomain:
    index: int
    block: tuple
    core_cells: tuple  # per axis half-open cell range of D_l
    cells: tuple  # per axis half-open cell range of O_l
    core_elements: np.ndarray
    elements: np.ndarray
    overlap_elements: np.ndarray  # O_l minus D_l
    closure_nodes: np.ndarray
    interior_nodes: np.ndarray
    boundary_nodes: np.ndarray  # dO_l inside the open domain

    @property
    def local_nodes(self) -> np.ndarray:
        """Product-space dofs: interior nodes first, then boundary nodes."""
        return np.concatenate([self.interior_nodes, self.boundary_nodes])

    @property
    def n_interior(self) -> int:
        return self.interior_nodes.size

    @property
    def n_local(self) -> int:
        return self.interior_nodes.size + self.boundary_nodes.size


@dataclass(frozen=True)
class OverlapDecomposition:
    grid: StructuredGrid
    blocks_per_side: int
    overlap_layers: int
    subdomains: tuple
    neighbors: tuple  # neighbors[l] is a sorted tuple including l

    @property
    def n_sub(self) -> int:
        return len(self.subdomains)

    @property
    def nu(self) -> int:
        return max(len(n) for n in self.neighbors)

    @property
    def delta(self) -> float:
        return self.overlap_layers * self.grid.h

    def element_multiplicity(self) -> np.ndarray:
        """Number of overlapping subdomains containing each element."""
        m = np.zeros(self.grid.n_elements, dtype=int)
        for s in self.subdomains:
            m[s.elements] += 1
        return m

    def node_multiplicity(self) -> np.ndarray:
        m = np.zeros(self.grid.n_nodes, dtype=int)
        for s in self.subdomains:
            m[s.local_nodes] += 1
        return m


def _box_nodes(grid, ranges):
    """Closure nodes of a cell box and the mask of nodes strictly inside it."""
    axes = [np.arange(lo, hi + 1) for lo, hi in ranges]
    if grid.dim == 1:
        nodes = axes[0]
        inside = (nodes > ranges[0][0]) & (nodes < ranges[0][1])
        return nodes, inside
    I, J = np.meshgrid(axes[0], axes[1], indexing="xy")
    I, J = I.ravel(), J.ravel()
    nodes = I + grid.nodes_per_side * J
    inside = ((I > ranges[0][0]) & (I < ranges[0][1]) & (J > ranges[1][0]) & (J < ranges[1][1]))
    return nodes, inside


def _cells_mask(grid, ranges):
    n = grid.cells_per_side
    masks = []
    for lo, hi in ranges:
        m = np.zeros(n, dtype=bool)
        m[lo:hi] = True
        masks.append(m)
    if grid.dim == 1:
        return masks[0]
    return np.outer(masks[0], masks[1])


def build_decomposition(grid: StructuredGrid, blocks_per_side: int, overlap_layers: int) -> OverlapDecomposition:
    n = grid.cells_per_side
    if blocks_per_side < 1 or n % blocks_per_side:
        raise IndivisibleBlocks(f"{blocks_per_side} blocks do not divide {n} cells")
    if overlap_layers < 1:
        raise ValueError("overlap_layers must be >= 1")
    m = n // blocks_per_side
    L = overlap_layers
    on_dirichlet = np.zeros(grid.n_nodes, dtype=bool)
    on_dirichlet[grid.boundary_nodes] = True

    subs = []
    for idx, block in enumerate(product(range(blocks_per_side), repeat=grid.dim)):
        # product() varies the last axis fastest; make x fastest instead
        block = tuple(reversed(block))
        core = tuple((b * m, (b + 1) * m) for b in block)
        grown = tuple((max(0, lo - L), min(n, hi + L)) for lo, hi in core)
        if all(lo == 0 and hi == n for lo, hi in grown):
            raise OverlapTooLarge(f"overlapping subdomain {idx} covers the whole domain")
        core_el = grid.cell_elements(_cells_mask(grid, core))
        el = grid.cell_elements(_cells_mask(grid, grown))
        ov_el = np.setdiff1d(el, core_el)
        nodes, inside = _box_nodes(grid, grown)
        interior = np.sort(nodes[inside])
        bnd = np.sort(nodes[~inside & ~on_dirichlet[nodes]])
        subs.append(Subdomain(idx, block, core, grown, core_el, el, ov_el,
                              np.sort(nodes), interior, bnd))

    neigh = []
    for s in subs:
        nb = []
        for t in subs:
            if all(max(a[0], b[0]) < min(a[1], b[1]) for a, b in zip(s.cells, t.cells)):
                nb.append(t.index)
        neigh.append(tuple(nb))
    return OverlapDecomposition(grid, blocks_per_side, L, tuple(subs), tuple(neigh))


@dataclass(frozen=True)
class CutFunctions:
    eta: np.ndarray  # (n_sub, n_nodes)
    chi: np.ndarray  # (n_sub, n_nodes)
    gradient_constant: float  # max_l |grad eta_l| * delta

    def local(self, od: OverlapDecomposition, which: str = "eta"):
        """Per-subdomain values of ``eta`` or ``chi`` at the interior nodes."""
        vals = self.eta if which == "eta" else self.chi
        return [vals[s.index, s.interior_nodes] for s in od.subdomains]


def _max_gradient(grid: StructuredGrid, nodal: np.ndarray) -> float:
    X = grid.coords[grid.elements]
    v = nodal[grid.elements]
    if grid.dim == 1:
        g = np.abs(v[:, 1] - v[:, 0]) / (X[:, 1, 0] - X[:, 0, 0])
        return float(g.max())
    J = np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]], axis=1)  # rows are edges
    dv = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=1)
    g = np.linalg.solve(J, dv[..., None])[..., 0]
    return float(np.linalg.norm(g, axis=1).max())


def build_cut_functions(od: OverlapDecomposition) -> CutFunctions:
    """Cut functions decaying linearly over the overlap layers, and their normalized partition of unity."""
    grid = od.grid
    ni = grid.node_index
    L = od.overlap_layers
    eta = np.zeros((od.n_sub, grid.n_nodes))
    for s in od.subdomains:
        dist = np.zeros(grid.n_nodes)
        for axis, (lo, hi) in enumerate(s.core_cells):
            k = ni[:, axis]
            dist = np.maximum(dist, np.maximum(lo - k, k - hi).clip(min=0))
        eta[s.index] = np.clip(1.0 - dist / L, 0.0, 1.0)
    total = eta.sum(axis=0)
    chi = eta / total
    grad = max(_max_gradient(grid, e) for e in eta)
    return CutFunctions(eta, chi, grad * od.delta)


@dataclass(frozen=True)
class RestrictionOps:
    """Index operators between the global free dofs and the product spaces.

    ``R_l``: free dofs -> local dofs (interior then boundary) of ``O_l``.
    ``E_l``: interior dofs of ``O_l`` -> free dofs (extension by zero).
    """
    R_blocks: tuple
    E_blocks: tuple
    R: sp.csr_matrix  # stacked, full product space x free dofs
    E: sp.csr_matrix  # free dofs x interior product space
    hat_offsets: np.ndarray
    g_offsets: np.ndarray
    g_index: np.ndarray  # positions of interior dofs inside the full product space

    @property
    def n_hat(self) -> int:
        return int(self.hat_offsets[-1])

    @property
    def n_g(self) -> int:
        return int(self.g_offsets[-1])

    def embed_g(self) -> sp.csr_matrix:
        """Injection of the interior product space into the full product space."""
        n = self.g_index.size
        return sp.csr_matrix((np.ones(n), (self.g_index, np.arange(n))), shape=(self.n_hat, n))


def restriction_ops(od: OverlapDecomposition) -> RestrictionOps:
    grid = od.grid
    free = grid.free_dofs
    Rb, Eb = [], []
    hat_off, g_off, g_index = [0], [0], []
    for s in od.subdomains:
        loc = DofMap(s.local_nodes, grid.n_nodes)
        inter = DofMap(s.interior_nodes, grid.n_nodes)
        Rb.append(loc.selection(free))
        Eb.append(free.selection(inter))
        g_index.append(hat_off[-1] + np.arange(s.n_interior))
        hat_off.append(hat_off[-1] + s.n_local)
        g_off.append(g_off[-1] + s.n_interior)
    return RestrictionOps(tuple(Rb), tuple(Eb), sp.vstack(Rb).tocsr(), sp.hstack(Eb).tocsr(),
                          np.array(hat_off), np.array(g_off), np.concatenate(g_index))
