"""Dense kernels and Krylov solvers.

Everything spectral is done densely; sparse matrices are accepted as input
and densified where a factorization is needed.
"""
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import DimensionMismatch, NotSPD, NotSymmetric

SYM_RTOL = 1e-12


def as_dense(M) -> np.ndarray:
    if sp.issparse(M):
        return M.toarray()
    return np.asarray(M, dtype=float)


def check_symmetric(A: np.ndarray, rtol: float = SYM_RTOL, name: str = "matrix"):
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {A.shape}")
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale and np.max(np.abs(A - A.T)) > rtol * scale:
        raise NotSymmetric(f"{name} is not symmetric within {rtol:g}")


class SPDFactor:
    """Cholesky factor ``A = L L^T`` computed once and reused for solves."""

    def __init__(self, A, name: str = "matrix"):
        A = as_dense(A)
        check_symmetric(A, name=name)
        try:
            self.L = sla.cholesky(A, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NotSPD(f"{name} is not positive definite: {exc}") from None
        self.n = A.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.n:
            raise DimensionMismatch(f"rhs has {rhs.shape[0]} rows, expected {self.n}")
        return sla.cho_solve((self.L, True), rhs)

    def whiten(self, M: np.ndarray) -> np.ndarray:
        """Return ``L^{-1} M``."""
        return sla.solve_triangular(self.L, M, lower=True)

    def unwhiten_t(self, M: np.ndarray) -> np.ndarray:
        """Return ``L^{-T} M``."""
        return sla.solve_triangular(self.L, M, lower=True, trans="T")


def solve_spd(A, rhs) -> np.ndarray:
    """Solve ``A x = rhs`` for symmetric positive definite ``A``."""
    return SPDFactor(A).solve(rhs)


def eig_sym_gen(A, B=None):
    """Generalized symmetric eigenproblem ``A v = lam B v``.

    Reduced to a standard problem through the Cholesky factor of ``B``.
    Returns ascending eigenvalues and ``B``-orthonormal eigenvectors (columns).
    """
    A = as_dense(A)
    check_symmetric(A, name="A")
    if B is None:
        w, V = np.linalg.eigh(0.5 * (A + A.T))
        return w, V
    B = as_dense(B)
    if B.shape != A.shape:
        raise DimensionMismatch(f"A is {A.shape} but B is {B.shape}")
    fac = SPDFactor(B, name="B")
    C = fac.whiten(fac.whiten(A).T)
    w, Y = np.linalg.eigh(0.5 * (C + C.T))
    return w, fac.unwhiten_t(Y)


def svd(M):
    """Thin SVD ``M = U diag(s) V^T`` with ``s`` descending. Returns ``(U, s, V)``."""
    U, s, Vt = np.linalg.svd(as_dense(M), full_matrices=False)
    return U, s, Vt.T


@dataclass
class SolveReport:
    x: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)
    converged: bool = False

    @property
    def relative_residual(self) -> float:
        if not self.residuals or self.residuals[0] == 0.0:
            return 0.0
        return self.residuals[-1] / self.residuals[0]


Operator = Union[Callable[[np.ndarray], np.ndarray], np.ndarray, sp.spmatrix]


def _as_apply(op: Operator) -> Callable[[np.ndarray], np.ndarray]:
    if callable(op):
        return op
    return lambda v: op @ v


def _as_inner(inner) -> Callable[[np.ndarray, np.ndarray], float]:
    if inner is None:
        return lambda x, y: float(x @ y)
    if callable(inner):
        return inner
    return lambda x, y: float(x @ (inner @ y))


def cg(apply: Operator, rhs, tol=1e-10, max_iter=1000, inner=None, x0=None) -> SolveReport:
    """Conjugate gradients for an operator self-adjoint and positive definite in ``inner``.

    ``inner`` may be ``None`` (Euclidean), a Gram matrix or a callable ``(x, y) -> float``.
    Residual norms are measured in the same inner product.
    """
    apply = _as_apply(apply)
    ip = _as_inner(inner)
    b = np.asarray(rhs, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply(x) if x0 is not None else b.copy()
    rr = ip(r, r)
    res = [np.sqrt(max(rr, 0.0))]
    target = tol * res[0]
    if res[0] == 0.0:
        return SolveReport(x, 0, res, True)
    p = r.copy()
    it = 0
    while it < max_iter:
        q = apply(p)
        pq = ip(p, q)
        if pq <= 0.0:
            break
        alpha = rr / pq
        x += alpha * p
        r -= alpha * q
        rr_new = ip(r, r)
        it += 1
        res.append(np.sqrt(max(rr_new, 0.0)))
        if res[-1] <= target:
            return SolveReport(x, it, res, True)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return SolveReport(x, it, res, res[-1] <= target)


def gmres(apply: Operator, rhs, tol=1e-10, max_iter=1000, restart=200, x0=None) -> SolveReport:
    """Restarted GMRES with modified Gram-Schmidt plus one reorthogonalization pass.

    The residual history holds the least-squares residual norm after every
    Arnoldi step; at each restart the true residual is recomputed.
    """
    apply = _as_apply(apply)
    b = np.asarray(rhs, dtype=float)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - apply(x)
    beta = np.linalg.norm(r)
    res = [beta]
    if beta == 0.0:
        return SolveReport(x, 0, res, True)
    target = tol * beta
    it = 0
    m = max(1, min(restart, n))
    while it < max_iter:
        V = np.zeros((n, m + 1))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[:, 0] = r / beta
        k_used = 0
        breakdown = False
        for k in range(m):
            w = np.array(apply(V[:, k]), dtype=float)  # copy: apply may return its argument
            for _ in range(2):
                for j in range(k + 1):
                    hj = V[:, j] @ w
                    H[j, k] += hj
                    w -= hj * V[:, j]
            H[k + 1, k] = np.linalg.norm(w)
            breakdown = H[k + 1, k] <= 1e-14 * np.linalg.norm(H[: k + 2, k])
            if not breakdown:
                V[:, k + 1] = w / H[k + 1, k]
            for j in range(k):
                t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
                H[j + 1, k] = -sn[j] * H[j, k] + cs[j] * H[j + 1, k]
                H[j, k] = t
            denom = np.hypot(H[k, k], H[k + 1, k])
            cs[k], sn[k] = (1.0, 0.0) if denom == 0.0 else (H[k, k] / denom, H[k + 1, k] / denom)
            H[k, k] = cs[k] * H[k, k] + sn[k] * H[k + 1, k]
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            it += 1
            k_used = k + 1
            res.append(abs(g[k + 1]))
            if res[-1] <= target or breakdown or it >= max_iter:
                break
        y = sla.solve_triangular(H[:k_used, :k_used], g[:k_used])
        x = x + V[:, :k_used] @ y
        r = b - apply(x)
        beta = np.linalg.norm(r)
        if beta <= target:
            return SolveReport(x, it, res, True)
        if breakdown and beta > target:
            # exact-arithmetic termination that rounding did not honour
            res.append(beta)
            return SolveReport(x, it, res, False)
    return SolveReport(x, it, res, False)


def krylov_solve(apply: Operator, rhs, method="GMRES", tol=1e-10, max_iter=1000,
                 restart=200, inner=None, x0=None) -> SolveReport:
    method = method.upper()
    if method == "CG":
        return cg(apply, rhs, tol=tol, max_iter=max_iter, inner=inner, x0=x0)
    if method == "GMRES":
        return gmres(apply, rhs, tol=tol, max_iter=max_iter, restart=restart, x0=x0)
    raise ValueError(f"unknown Krylov method {method!r}")


def power_norm(M, iters: int = 500, seed: int = 0) -> float:
    """Largest singular value by power iteration on ``M^T M``; a cross-check for :func:`svd`."""
    M = as_dense(M)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        w = M.T @ (M @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        sigma = np.sqrt(nw)
    return float(sigma)
