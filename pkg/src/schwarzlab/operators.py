"""Product-space forms, local solvers and the Schwarz-type preconditioned operators.

Vectors on the product space are stored stacked by subdomain, each block
ordered interior dofs first, then the dofs on the subdomain boundary.  The
subspace ``G`` (local Dirichlet spaces) is the set of stacked vectors whose
boundary entries vanish; ``RestrictionOps.g_index`` locates its entries.

The extension ``E`` and its b-transpose never need a global solve.  ``F``,
``F_ov`` and ``F_eps`` as maps into ``H`` do, and are used by diagnostics only.
"""
import enum
from dataclasses import dataclass
from functools import cached_property, total_ordering

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .decomposition import (CutFunctions, OverlapDecomposition, RestrictionOps,
                            build_cut_functions, restriction_ops)
from .errors import DenseCapExceeded, NotInG
from .linalg import SPDFactor
from .poisson_fem import (DofMap, StructuredGrid, assemble_stiffness, boundary_mass,
                          global_stiffness)

DEFAULT_DENSE_CAP = 5000
EPSILON_SWEEP = (0.5, 0.1, 0.02, 0.004)


@dataclass
class ProductSpaceForm:
    """Block-diagonal Gram matrix on the product of the local spaces."""
    label: str
    blocks: list  # dense (n_local, n_local) per subdomain
    ops: RestrictionOps

    @cached_property
    def gram(self) -> np.ndarray:
        return sla.block_diag(*self.blocks)

    @cached_property
    def g_gram(self) -> np.ndarray:
        """Restriction of the form to ``G`` (interior-interior blocks)."""
        return self.gram[np.ix_(self.ops.g_index, self.ops.g_index)]


def _local_form(grid, s, elements, weight=1.0, with_boundary=True):
    loc = DofMap(s.local_nodes, grid.n_nodes)
    M = np.zeros((s.n_local, s.n_local))
    for el, w in zip(elements, np.broadcast_to(weight, (len(elements),))):
        if len(el) and w != 0.0:
            M += w * assemble_stiffness(grid, el, loc, loc).dense()
    if with_boundary and s.boundary_nodes.size:
        M += boundary_mass(grid, s.elements, s.boundary_nodes, loc).dense()
    return M


def build_b_form(grid: StructuredGrid, od: OverlapDecomposition, ops: RestrictionOps = None) -> ProductSpaceForm:
    ops = restriction_ops(od) if ops is None else ops
    blocks = [_local_form(grid, s, [s.elements]) for s in od.subdomains]
    form = ProductSpaceForm("b", blocks, ops)
    SPDFactor(form.gram, name="b")
    return form


def build_c_form(grid: StructuredGrid, od: OverlapDecomposition, eps: float,
                 ops: RestrictionOps = None) -> ProductSpaceForm:
    """``c_eps``: stiffness on ``D_l`` plus ``eps`` times stiffness on ``O_l \\ D_l`` plus boundary mass."""
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {eps}")
    ops = restriction_ops(od) if ops is None else ops
    blocks = [_local_form(grid, s, [s.core_elements, s.overlap_elements], [1.0, eps])
              for s in od.subdomains]
    form = ProductSpaceForm(f"c_{eps:g}", blocks, ops)
    SPDFactor(form.gram, name=form.label)
    return form


def build_forms(grid: StructuredGrid, od: OverlapDecomposition, eps: float = None):
    """Return ``(b, c_eps)``; ``c_eps`` is ``None`` when no epsilon is given."""
    ops = restriction_ops(od)
    b = build_b_form(grid, od, ops)
    c = build_c_form(grid, od, eps, ops) if eps is not None else None
    return b, c


class LocalSolverBundle:
    """Everything needed to apply the local solves of every method."""

    def __init__(self, grid: StructuredGrid, od: OverlapDecomposition,
                 cuts: CutFunctions = None, dense_cap: int = DEFAULT_DENSE_CAP):
        self.grid = grid
        self.od = od
        self.cuts = build_cut_functions(od) if cuts is None else cuts
        self.ops = restriction_ops(od)
        self.dense_cap = dense_cap
        self.A = global_stiffness(grid)
        free = grid.free_dofs
        self.E_idx, self.factors, self.N, self.Nov = [], [], [], []
        self.eta, self.chi, self.eta_local = [], [], []
        for s in od.subdomains:
            inter = DofMap(s.interior_nodes, grid.n_nodes)
            self.E_idx.append(free.position[s.interior_nodes])
            Bl = assemble_stiffness(grid, s.elements, inter, inter).dense()
            self.factors.append(SPDFactor(Bl, name=f"B_{s.index}"))
            self.N.append(assemble_stiffness(grid, s.core_elements, free, inter, "b_tilde").matrix)
            if s.overlap_elements.size:
                self.Nov.append(assemble_stiffness(grid, s.overlap_elements, free, inter, "b_ov").matrix)
            else:
                self.Nov.append(sp.csr_matrix((len(free), s.n_interior)))
            self.eta.append(self.cuts.eta[s.index, s.interior_nodes])
            self.chi.append(self.cuts.chi[s.index, s.interior_nodes])
            self.eta_local.append(self.cuts.eta[s.index, s.local_nodes])

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @cached_property
    def b_form(self) -> ProductSpaceForm:
        return build_b_form(self.grid, self.od, self.ops)

    def c_form(self, eps: float) -> ProductSpaceForm:
        cache = self.__dict__.setdefault("_c_cache", {})
        if eps not in cache:
            cache[eps] = build_c_form(self.grid, self.od, eps, self.ops)
        return cache[eps]

    @cached_property
    def A_factor(self) -> SPDFactor:
        self._check_cap()
        return SPDFactor(self.A, name="A")

    def _check_cap(self):
        if self.n > self.dense_cap:
            raise DenseCapExceeded(f"{self.n} free dofs exceed dense cap {self.dense_cap}")

    # product-space bookkeeping
    def split_g(self, x_hat: np.ndarray, check: bool = True):
        """Interior blocks of a stacked product-space vector (or matrix)."""
        off = self.ops.hat_offsets
        out = []
        for k, s in enumerate(self.od.subdomains):
            blk = x_hat[off[k]:off[k + 1]]
            if check and np.any(blk[s.n_interior:] != 0.0):
                raise NotInG(f"block {k} has nonzero boundary values")
            out.append(blk[:s.n_interior])
        return out

    def pack_g(self, blocks) -> np.ndarray:
        tail = blocks[0].shape[1:]
        out = np.zeros((self.ops.n_hat,) + tail)
        out[self.ops.g_index] = np.concatenate(blocks)
        return out

    def g_blocks(self, x_g: np.ndarray):
        off = self.ops.g_offsets
        return [x_g[off[k]:off[k + 1]] for k in range(self.od.n_sub)]

    def _extend(self, blocks) -> np.ndarray:
        out = np.zeros((self.n,) + blocks[0].shape[1:])
        for idx, v in zip(self.E_idx, blocks):
            out[idx] += v
        return out


def _local_rhs_E(bundle, r):
    return [r[idx] for idx in bundle.E_idx]


def _solve_all(bundle, rhs):
    return [f.solve(b) for f, b in zip(bundle.factors, rhs)]


def _scale(weights, blocks):
    return [(w[:, None] if b.ndim == 2 else w) * b for w, b in zip(weights, blocks)]


def apply_ET(bundle: LocalSolverBundle, u: np.ndarray) -> np.ndarray:
    """``E^{T,b} u``: local Dirichlet solves with right-hand side ``E_l^T A u``."""
    return bundle.pack_g(_solve_all(bundle, _local_rhs_E(bundle, bundle.A @ u)))


def apply_FT(bundle: LocalSolverBundle, u: np.ndarray) -> np.ndarray:
    """``F^{T,b} u``: local Dirichlet solves with the ``D_l``-region (Neumann) right-hand side."""
    return bundle.pack_g(_solve_all(bundle, [N.T @ u for N in bundle.N]))


def apply_extension(bundle: LocalSolverBundle, kind: str, v_hat: np.ndarray, eps: float = None) -> np.ndarray:
    """Apply ``E``, ``F``, ``F_ov`` or ``F_eps`` to a vector of ``G`` (stacked product-space layout)."""
    blocks = bundle.split_g(v_hat)
    kind = kind.upper()
    if kind == "E":
        return bundle._extend(blocks)
    if kind == "F":
        rhs = sum(N @ v for N, v in zip(bundle.N, blocks))
    elif kind == "F_OV":
        rhs = sum(N @ v for N, v in zip(bundle.Nov, blocks))
    elif kind == "F_EPS":
        if eps is None:
            raise ValueError("F_eps needs eps")
        rhs = sum(N @ v + eps * (No @ v) for N, No, v in zip(bundle.N, bundle.Nov, blocks))
    else:
        raise ValueError(f"unknown extension {kind!r}")
    return bundle.A_factor.solve(rhs)


def apply_cut(bundle: LocalSolverBundle, v_hat: np.ndarray) -> np.ndarray:
    """Pointwise (nodal) multiplication by the cut functions, blockwise."""
    return v_hat * _stack_local(bundle, bundle.eta_local, v_hat)


def apply_cut_adjoint(bundle: LocalSolverBundle, v_hat: np.ndarray) -> np.ndarray:
    """b-adjoint of :func:`apply_cut`: ``B_l^{-1} diag(eta_l) B_l`` on every block."""
    off = bundle.ops.hat_offsets
    out = np.zeros_like(v_hat, dtype=float)
    for k, (Bk, eta) in enumerate(zip(bundle.b_form.blocks, bundle.eta_local)):
        blk = v_hat[off[k]:off[k + 1]]
        w = Bk @ blk
        w = (eta[:, None] if w.ndim == 2 else eta) * w
        out[off[k]:off[k + 1]] = sla.solve(Bk, w, assume_a="pos")
    return out


def _stack_local(bundle, vals, like):
    col = np.concatenate(vals)
    return col[:, None] if like.ndim == 2 else col


def project_G(bundle: LocalSolverBundle, v_hat: np.ndarray, form: ProductSpaceForm = None) -> np.ndarray:
    """Orthogonal projection onto ``G`` in the given product-space form (default ``b``)."""
    form = bundle.b_form if form is None else form
    off = bundle.ops.hat_offsets
    out = np.zeros_like(v_hat, dtype=float)
    for k, s in enumerate(bundle.od.subdomains):
        blk = v_hat[off[k]:off[k + 1]]
        M = form.blocks[k]
        ni = s.n_interior
        rhs = M[:ni] @ blk
        out[off[k]:off[k] + ni] = sla.solve(M[:ni, :ni], rhs, assume_a="pos")
    return out


def restrict(bundle: LocalSolverBundle, u: np.ndarray) -> np.ndarray:
    """``R u``: values on every overlapping subdomain, stacked."""
    return bundle.ops.R @ u


@total_ordering
class MethodKind(enum.Enum):
    AS = "AS"
    FE_T = "FE_T"
    EF_T = "EF_T"
    RAS_CUT = "RAS_CUT"
    OBDD_CUT = "OBDD_CUT"
    FEPS_T = "FEPS_T"

    @property
    def order(self) -> int:
        return list(MethodKind).index(self)

    def __lt__(self, other):
        return self.order < other.order

    @property
    def symmetric(self) -> bool:
        return self is MethodKind.AS


@dataclass(frozen=True)
class Method:
    kind: MethodKind
    eps: float = None

    def __post_init__(self):
        if self.kind is MethodKind.FEPS_T and not (self.eps is not None and 0.0 < self.eps < 1.0):
            raise ValueError("FEPS_T requires epsilon in (0, 1)")

    @property
    def label(self) -> str:
        if self.kind is MethodKind.FEPS_T:
            return f"FEPS_T({self.eps:g})"
        return self.kind.value

    @property
    def sort_key(self):
        return (self.kind.order, -(self.eps or 0.0))

    @classmethod
    def parse(cls, text, eps=None) -> "Method":
        kind = MethodKind(text) if not isinstance(text, MethodKind) else text
        return cls(kind, eps if kind is MethodKind.FEPS_T else None)


def _as_method(kind, eps) -> Method:
    if isinstance(kind, Method):
        return kind
    return Method.parse(kind, eps)


def _restricted_rhs(bundle, method, r):
    """Dual (functional) vector produced by the restricted-prolongation methods."""
    y = _solve_all(bundle, _local_rhs_E(bundle, r))
    if method.kind is MethodKind.FEPS_T:
        return sum(N @ v + method.eps * (No @ v) for N, No, v in zip(bundle.N, bundle.Nov, y))
    return sum(N @ v for N, v in zip(bundle.N, y))


def _primal_correction(bundle, method, r):
    """Preconditioner action ``r -> sum_l ...`` for methods of the form ``T = M^{-1} A``."""
    rhs = _local_rhs_E(bundle, r)
    if method.kind is MethodKind.OBDD_CUT:
        rhs = _scale(bundle.eta, rhs)
    y = _solve_all(bundle, rhs)
    if method.kind is MethodKind.RAS_CUT:
        y = _scale(bundle.eta, y)
    return bundle._extend(y)


def _ef_core(bundle, w):
    return bundle._extend(_solve_all(bundle, [N.T @ w for N in bundle.N]))


def preconditioned_apply(kind, bundle: LocalSolverBundle, u: np.ndarray, eps: float = None) -> np.ndarray:
    """Apply the preconditioned operator ``T`` of a method to ``u`` (vector or matrix of columns).

    FE_T and FEPS_T need one global solve here; the iterative path uses
    :func:`equation_apply` instead, where it cancels.
    """
    method = _as_method(kind, eps)
    k = method.kind
    if k in (MethodKind.AS, MethodKind.RAS_CUT, MethodKind.OBDD_CUT):
        return _primal_correction(bundle, method, bundle.A @ u)
    if k in (MethodKind.FE_T, MethodKind.FEPS_T):
        return bundle.A_factor.solve(_restricted_rhs(bundle, method, bundle.A @ u))
    if k is MethodKind.EF_T:
        return _ef_core(bundle, u)
    raise ValueError(k)


def equation_apply(kind, bundle: LocalSolverBundle, x: np.ndarray, eps: float = None) -> np.ndarray:
    """Operator of the residual equation that is iterated on; free of global solves.

    AS, RAS_CUT, OBDD_CUT: ``T``.  FE_T, FEPS_T: ``A T``.  EF_T: ``A T`` acting on
    the auxiliary unknown ``w`` with ``u = T w``.
    """
    method = _as_method(kind, eps)
    k = method.kind
    if k in (MethodKind.AS, MethodKind.RAS_CUT, MethodKind.OBDD_CUT):
        return _primal_correction(bundle, method, bundle.A @ x)
    if k in (MethodKind.FE_T, MethodKind.FEPS_T):
        return _restricted_rhs(bundle, method, bundle.A @ x)
    return bundle.A @ _ef_core(bundle, x)


def equation_rhs(kind, bundle: LocalSolverBundle, load: np.ndarray, eps: float = None) -> np.ndarray:
    """Right-hand side assembled from local solves with the load vector."""
    method = _as_method(kind, eps)
    k = method.kind
    if k in (MethodKind.AS, MethodKind.RAS_CUT, MethodKind.OBDD_CUT):
        return _primal_correction(bundle, method, load)
    if k in (MethodKind.FE_T, MethodKind.FEPS_T):
        return _restricted_rhs(bundle, method, load)
    return np.array(load, dtype=float)


def recover_solution(kind, bundle: LocalSolverBundle, x: np.ndarray, eps: float = None) -> np.ndarray:
    method = _as_method(kind, eps)
    if method.kind is MethodKind.EF_T:
        return _ef_core(bundle, x)
    return x


def materialize(kind, bundle: LocalSolverBundle, eps: float = None) -> np.ndarray:
    """Dense matrix of the preconditioned operator on the free dofs."""
    bundle._check_cap()
    return preconditioned_apply(kind, bundle, np.eye(bundle.n), eps)


def materialize_equation(kind, bundle: LocalSolverBundle, eps: float = None) -> np.ndarray:
    bundle._check_cap()
    return equation_apply(kind, bundle, np.eye(bundle.n), eps)


# Dense realizations used by diagnostics, all in G coordinates (interior blocks stacked).

def dense_E(bundle: LocalSolverBundle) -> np.ndarray:
    return bundle.ops.E.toarray()


def dense_ET(bundle: LocalSolverBundle) -> np.ndarray:
    """``E^{T,b}`` as an ``(n_G, n)`` matrix."""
    bundle._check_cap()
    return np.concatenate(_solve_all(bundle, _local_rhs_E(bundle, bundle.A.toarray())))


def dense_FT(bundle: LocalSolverBundle) -> np.ndarray:
    bundle._check_cap()
    return np.concatenate(_solve_all(bundle, [N.T.toarray() for N in bundle.N]))


def dense_extension(bundle: LocalSolverBundle, kind: str, eps: float = None) -> np.ndarray:
    """``F``, ``F_ov`` or ``F_eps`` as ``(n, n_G)`` matrices (one global solve)."""
    bundle._check_cap()
    kind = kind.upper()
    N = sp.hstack(bundle.N).toarray()
    Nov = sp.hstack(bundle.Nov).toarray()
    rhs = {"F": N, "F_OV": Nov}.get(kind)
    if kind == "F_EPS":
        rhs = N + eps * Nov
    if rhs is None:
        raise ValueError(f"unknown extension {kind!r}")
    return bundle.A_factor.solve(rhs)


def dense_right_inverse(bundle: LocalSolverBundle, which: str = "chi") -> np.ndarray:
    """Nodal multiplication ``u -> {w_l * u}`` with ``w = chi`` (for E) or ``eta`` (for F), shape ``(n_G, n)``."""
    weights = bundle.chi if which == "chi" else bundle.eta
    out = np.zeros((bundle.ops.n_g, bundle.n))
    off = bundle.ops.g_offsets
    for k, (idx, w) in enumerate(zip(bundle.E_idx, weights)):
        out[off[k] + np.arange(idx.size), idx] = w
    return out
