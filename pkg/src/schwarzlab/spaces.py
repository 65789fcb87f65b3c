"""Subspace geometry in SPD inner products: projectors, angles, norms, Wielandt.

Angles follow the variational definitions: the minimal angle ``theta`` has
``cos theta = sup b(x, y) / (|x| |y|)``; the maximal angle ``Theta`` has
``sin Theta = sup_{|x|=1, x in X} dist(x, Y)``.  The latter is one-sided and
is not symmetrized when ``dim X != dim Y``.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.optimize as sopt

from .errors import DimensionMismatch, NotComplementary, RankDeficient
from .linalg import SPDFactor, as_dense, eig_sym_gen

RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class InnerProduct:
    gram: np.ndarray
    label: str = "euclidean"

    def __post_init__(self):
        object.__setattr__(self, "gram", as_dense(self.gram))
        self.factor  # validates SPD

    @classmethod
    def euclidean(cls, n: int) -> "InnerProduct":
        return cls(np.eye(n), "euclidean")

    @cached_property
    def factor(self) -> SPDFactor:
        return SPDFactor(self.gram, name=f"gram[{self.label}]")

    @property
    def dim(self) -> int:
        return self.gram.shape[0]

    def inner(self, x, y):
        return x.T @ (self.gram @ y)

    def norm(self, x) -> float:
        return float(np.sqrt(max(x @ (self.gram @ x), 0.0)))

    def whiten(self, M: np.ndarray) -> np.ndarray:
        """``L^T M`` with ``gram = L L^T``: maps ip-geometry to Euclidean."""
        return self.factor.L.T @ M


def _as_ip(ip, n):
    if ip is None:
        return InnerProduct.euclidean(n)
    if isinstance(ip, InnerProduct):
        return ip
    return InnerProduct(ip)


def numerical_rank(s: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


class Subspace:
    """Column span of a full-rank basis matrix."""

    def __init__(self, basis, check: bool = True):
        B = as_dense(basis)
        if B.ndim == 1:
            B = B[:, None]
        if check and B.shape[1]:
            s = np.linalg.svd(B, compute_uv=False)
            if numerical_rank(s) < B.shape[1]:
                raise RankDeficient(f"basis of {B.shape[1]} columns has rank {numerical_rank(s)}")
        self.basis = B

    @property
    def ambient(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def _as_subspace(X) -> Subspace:
    return X if isinstance(X, Subspace) else Subspace(X)


def range_basis(M: np.ndarray, rtol: float = RANK_RTOL) -> Subspace:
    """Orthonormal (Euclidean) basis of the column range, rank revealed at ``rtol``."""
    U, s, _ = np.linalg.svd(as_dense(M), full_matrices=False)
    return Subspace(U[:, :numerical_rank(s, rtol)], check=False)


def null_basis(M: np.ndarray, rtol: float = RANK_RTOL) -> Subspace:
    """Orthonormal (Euclidean) basis of the null space, rank revealed at ``rtol``."""
    M = as_dense(M)
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    r = numerical_rank(s, rtol)
    return Subspace(Vt[r:].T, check=False)


def orthonormalize(X, ip=None) -> Subspace:
    """ip-orthonormal basis ``Q`` (``Q^T G Q = I``) of the span of ``X``."""
    X = _as_subspace(X)
    ip = _as_ip(ip, X.ambient)
    U, s, _ = np.linalg.svd(ip.whiten(X.basis), full_matrices=False)
    if numerical_rank(s) < X.dim:
        raise RankDeficient("subspace basis is rank deficient in this inner product")
    return Subspace(ip.factor.unwhiten_t(U), check=False)


def orth_complement(X, ip=None) -> Subspace:
    """Basis of the ip-orthogonal complement of ``X``."""
    X = _as_subspace(X)
    ip = _as_ip(ip, X.ambient)
    return null_basis(X.basis.T @ ip.gram)


def orth_project(X, ip=None) -> np.ndarray:
    """Matrix of the ip-orthogonal projection onto ``X``."""
    X = _as_subspace(X)
    ip = _as_ip(ip, X.ambient)
    Q = orthonormalize(X, ip).basis
    return Q @ (Q.T @ ip.gram)


def oblique_project(X, Y) -> np.ndarray:
    """Projection onto ``X`` along ``Y``; requires ``X + Y`` to be a direct sum filling the space."""
    X, Y = _as_subspace(X), _as_subspace(Y)
    n = X.ambient
    if Y.ambient != n:
        raise DimensionMismatch("subspaces live in different spaces")
    if X.dim + Y.dim != n:
        raise NotComplementary(f"dimensions {X.dim} + {Y.dim} != {n}")
    Ux = range_basis(X.basis).basis
    Uy = range_basis(Y.basis).basis
    K = np.hstack([Ux, Uy])
    s = np.linalg.svd(K, compute_uv=False)
    if numerical_rank(s) < n:
        raise NotComplementary("subspaces intersect nontrivially")
    coeff = np.linalg.solve(K, np.eye(n))
    return Ux @ coeff[:X.dim]


@dataclass(frozen=True)
class Angles:
    theta: float  # minimal angle
    Theta: float  # maximal angle (one-sided, sup over X)
    cos_theta: float
    sin_theta: float
    cos_Theta: float
    sin_Theta: float


def subspace_angles(X, Y, ip=None) -> Angles:
    X, Y = _as_subspace(X), _as_subspace(Y)
    ip = _as_ip(ip, X.ambient)
    Qx = orthonormalize(X, ip).basis
    Qy = orthonormalize(Y, ip).basis
    cross = Qy.T @ ip.gram @ Qx  # coefficients of Pi_Y applied to the X basis
    c = np.linalg.svd(cross, compute_uv=False)
    cos_sup = min(float(c[0]), 1.0) if c.size else 0.0
    cos_inf = min(float(c[-1]), 1.0) if X.dim <= Y.dim and c.size else 0.0
    resid = ip.whiten(Qx - Qy @ cross)
    d = np.linalg.svd(resid, compute_uv=False)
    sin_inf, sin_sup = min(float(d[-1]), 1.0), min(float(d[0]), 1.0)
    return Angles(float(np.arctan2(sin_inf, cos_sup)), float(np.arctan2(sin_sup, cos_inf)),
                  cos_sup, sin_inf, cos_inf, sin_sup)


def operator_norm(M, ip_in=None, ip_out=None, restricted_to=None) -> float:
    """``sup |M x|_out / |x|_in`` over ``x`` (in ``restricted_to`` when given)."""
    M = as_dense(M)
    ip_in = _as_ip(ip_in, M.shape[1])
    ip_out = _as_ip(ip_out, M.shape[0])
    if restricted_to is not None:
        Q = orthonormalize(restricted_to, ip_in).basis
        W = ip_out.whiten(M @ Q)
    else:
        W = ip_out.whiten(ip_in.factor.whiten(M.T).T)
    return float(np.linalg.svd(W, compute_uv=False)[0])


def singular_values(M, ip_in=None, ip_out=None) -> np.ndarray:
    """All generalized singular values of ``M`` between two inner products, descending."""
    M = as_dense(M)
    ip_in = _as_ip(ip_in, M.shape[1])
    ip_out = _as_ip(ip_out, M.shape[0])
    W = ip_out.whiten(ip_in.factor.whiten(M.T).T)
    return np.linalg.svd(W, compute_uv=False)


@dataclass(frozen=True)
class WielandtReport:
    m: float
    M: float
    bound: float
    worst_ratio: float
    samples: int

    @property
    def holds(self) -> bool:
        return self.worst_ratio <= self.bound + 1e-10


def wielandt_ratio(b_gram, c_gram, x, y) -> float:
    """``b(x, Cy)^2 / (b(x, x) b(Cy, Cy))`` with ``b(Cu, v) = c(u, v)``."""
    Cy = np.linalg.solve(b_gram, c_gram @ y)
    num = (x @ c_gram @ y) ** 2
    return float(num / ((x @ b_gram @ x) * (Cy @ b_gram @ Cy)))


def wielandt_gap(b_ip, c_ip, samples: int = 1000, seed: int = 0) -> WielandtReport:
    B = b_ip.gram if isinstance(b_ip, InnerProduct) else as_dense(b_ip)
    Cg = c_ip.gram if isinstance(c_ip, InnerProduct) else as_dense(c_ip)
    lam, _ = eig_sym_gen(Cg, B)
    m, M = float(lam[0]), float(lam[-1])
    bound = ((M - m) / (M + m)) ** 2
    rng = np.random.default_rng(seed)
    n = B.shape[0]
    X = rng.standard_normal((n, samples))
    Y = rng.standard_normal((n, samples))
    BX = B @ X
    Y -= X * (np.einsum("ij,ij->j", BX, Y) / np.einsum("ij,ij->j", BX, X))
    CY = Cg @ Y
    CbY = np.linalg.solve(B, CY)
    num = np.einsum("ij,ij->j", X, CY) ** 2
    den = np.einsum("ij,ij->j", X, BX) * np.einsum("ij,ij->j", CbY, CY)
    worst = float(np.max(num / den)) if samples else 0.0
    return WielandtReport(m, M, bound, worst, samples)


def wielandt_planar_sweep(m: float, M: float, n_grid: int = 4001) -> float:
    """Max ratio over b-orthogonal pairs in the plane, ``b = I``, ``c = diag(m, M)``."""
    Cg = np.diag([m, M])

    def ratio(t):
        x = np.array([np.cos(t), np.sin(t)])
        y = np.array([-np.sin(t), np.cos(t)])
        return wielandt_ratio(np.eye(2), Cg, x, y)

    ts = np.linspace(0.0, np.pi, n_grid)
    vals = np.array([ratio(t) for t in ts])
    k = int(np.argmax(vals))
    dt = ts[1] - ts[0]
    res = sopt.minimize_scalar(lambda t: -ratio(t), bounds=(ts[k] - dt, ts[k] + dt),
                               method="bounded", options={"xatol": 1e-12})
    return float(max(vals[k], -res.fun))
