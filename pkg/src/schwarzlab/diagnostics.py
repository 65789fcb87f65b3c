"""Measured constants, spectra, bound verification and solver comparisons.

All quantities are computed densely from materialized operators.  ``H`` is
the space of free dofs with the ``a`` (stiffness) inner product; ``G`` is the
stacked space of local interior dofs with the ``b`` inner product; the full
product space (local interior plus boundary dofs) carries ``b`` and ``c_eps``.
"""
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from . import operators as ops_mod
from .errors import MissingConstant, SchwarzLabError
from .linalg import SPDFactor, eig_sym_gen, krylov_solve
from .operators import EPSILON_SWEEP, LocalSolverBundle, Method, MethodKind
from .poisson_fem import load_vector
from .spaces import (InnerProduct, Subspace, null_basis, oblique_project, operator_norm,
                     orth_complement, orth_project, singular_values,
                     subspace_angles, wielandt_gap)

REL_TOL = 1e-8


class DenseModel:
    """Materialized matrices of one configuration, built lazily."""

    def __init__(self, bundle: LocalSolverBundle):
        self.bundle = bundle
        bundle._check_cap()

    @property
    def n(self) -> int:
        return self.bundle.n

    @cached_property
    def A(self) -> np.ndarray:
        return self.bundle.A.toarray()

    @cached_property
    def ip_a(self) -> InnerProduct:
        return InnerProduct(self.A, "a")

    @cached_property
    def ip_bg(self) -> InnerProduct:
        return InnerProduct(self.bundle.b_form.g_gram, "b|G")

    @cached_property
    def B_hat(self) -> np.ndarray:
        return self.bundle.b_form.gram

    def C_hat(self, eps: float) -> np.ndarray:
        return self.bundle.c_form(eps).gram

    @cached_property
    def R(self) -> np.ndarray:
        return self.bundle.ops.R.toarray()

    @cached_property
    def P_G(self) -> np.ndarray:
        return self.bundle.ops.embed_g().toarray()

    @cached_property
    def E(self) -> np.ndarray:
        return ops_mod.dense_E(self.bundle)

    @cached_property
    def ET(self) -> np.ndarray:
        return ops_mod.dense_ET(self.bundle)

    @cached_property
    def FT(self) -> np.ndarray:
        return ops_mod.dense_FT(self.bundle)

    @cached_property
    def F(self) -> np.ndarray:
        return ops_mod.dense_extension(self.bundle, "F")

    @cached_property
    def F_ov(self) -> np.ndarray:
        return ops_mod.dense_extension(self.bundle, "F_OV")

    @cached_property
    def E_hat(self) -> np.ndarray:
        return ops_mod.dense_right_inverse(self.bundle, "chi")

    @cached_property
    def F_hat(self) -> np.ndarray:
        return ops_mod.dense_right_inverse(self.bundle, "eta")

    def operator(self, method: Method) -> np.ndarray:
        cache = self.__dict__.setdefault("_ops", {})
        if method not in cache:
            cache[method] = ops_mod.materialize(method, self.bundle)
        return cache[method]

    def block_columns(self, k: int) -> np.ndarray:
        off = self.bundle.ops.g_offsets
        return self.E[:, off[k]:off[k + 1]]


# ---------------------------------------------------------------- constants

@dataclass
class ConstantsReport:
    nu: int
    rho_mu: float
    mu: list
    C_E: float
    C_F: float
    norm_E: float
    norm_F: float
    norm_F_ov: float
    norm_F_ov_F_hat: float
    cos_alpha_E: float
    cos_alpha_F: float
    cos_beta_EF: float
    sin_theta_FT_NE: float
    norm_Q_restricted: float
    norm_Q_E: float
    norm_Q_F: float
    beta_E: float
    beta_F: float
    C_cut: float
    Theta_hatE_hatF: float
    r0: dict = field(default_factory=dict)
    r1: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["r0"] = {f"{k:g}": v for k, v in self.r0.items()}
        d["r1"] = {f"{k:g}": v for k, v in self.r1.items()}
        return d


def strengthened_cauchy(model: DenseModel):
    """Pairwise principal cosines of the extended local spaces in the ``a`` geometry."""
    od = model.bundle.od
    mu = np.eye(od.n_sub)
    for i in range(od.n_sub):
        for j in od.neighbors[i]:
            if j > i:
                c = subspace_angles(model.block_columns(i), model.block_columns(j), model.ip_a).cos_theta
                mu[i, j] = mu[j, i] = c
    rho = float(np.max(np.abs(np.linalg.eigvalsh(mu))))
    return mu, rho


def r_constants(model: DenseModel, eps: float):
    """``r0 = sqrt(max c/b)`` on the product space and ``r1 = sqrt(max b/c)`` on ``R(R)``."""
    B, C = model.B_hat, model.C_hat(eps)
    r0 = math.sqrt(eig_sym_gen(C, B)[0][-1])
    R = model.R
    r1 = math.sqrt(eig_sym_gen(_sym(R.T @ B @ R), _sym(R.T @ C @ R))[0][-1])
    return r0, r1


def measure_constants(model: DenseModel, eps_list=EPSILON_SWEEP) -> ConstantsReport:
    ipa, ipb = model.ip_a, model.ip_bg
    mu, rho = strengthened_cauchy(model)
    C_E = operator_norm(model.E_hat, ipa, ipb)
    C_F = operator_norm(model.F_hat, ipa, ipb)
    norm_E = operator_norm(model.E, ipb, ipa)
    norm_F = operator_norm(model.F, ipb, ipa)
    norm_Fov = operator_norm(model.F_ov, ipb, ipa)
    norm_FovFh = operator_norm(model.F_ov @ model.F_hat, ipa, ipa)

    range_ET = Subspace(model.ET)
    range_FT = Subspace(model.FT)
    N_E = null_basis(model.E)
    N_F = null_basis(model.F)
    alpha_E = subspace_angles(model.E_hat, range_ET, ipb)
    alpha_F = subspace_angles(model.F_hat, range_FT, ipb)
    beta_EF = subspace_angles(range_FT, range_ET, ipb)
    theta_FT_NE = subspace_angles(range_FT, N_E, ipb)
    Q = oblique_project(range_ET, N_F)
    norm_Q_restr = operator_norm(Q, ipb, ipb, restricted_to=Subspace(model.E_hat))
    norm_QE = operator_norm(model.E_hat @ model.E, ipb, ipb)
    norm_QF = operator_norm(model.F_hat @ model.F, ipb, ipb)
    rep = ConstantsReport(
        nu=model.bundle.od.nu, rho_mu=rho, mu=mu.tolist(), C_E=C_E, C_F=C_F,
        norm_E=norm_E, norm_F=norm_F, norm_F_ov=norm_Fov, norm_F_ov_F_hat=norm_FovFh,
        cos_alpha_E=alpha_E.cos_theta, cos_alpha_F=alpha_F.cos_theta,
        cos_beta_EF=beta_EF.cos_Theta, sin_theta_FT_NE=theta_FT_NE.sin_theta,
        norm_Q_restricted=norm_Q_restr, norm_Q_E=norm_QE, norm_Q_F=norm_QF,
        beta_E=math.acos(min(1.0, 1.0 / norm_QE)), beta_F=math.acos(min(1.0, 1.0 / norm_QF)),
        C_cut=model.bundle.cuts.gradient_constant,
        Theta_hatE_hatF=subspace_angles(model.E_hat, model.F_hat, ipb).Theta,
    )
    for eps in eps_list:
        rep.r0[eps], rep.r1[eps] = r_constants(model, eps)
    return rep


# ---------------------------------------------------------------- spectra

@dataclass
class SpectrumReport:
    method: Method
    eigenvalues: np.ndarray  # complex, sorted by (real, imag)
    kappa_aa: float
    sigma_max: float
    sigma_min: float
    kappa_spectral: float  # NaN unless the operator is a-self-adjoint
    fov_min_a: float  # min a(Tu, u) / a(u, u)

    @property
    def label(self) -> str:
        return self.method.label


def spectrum(model: DenseModel, method: Method) -> SpectrumReport:
    T = model.operator(method)
    A = model.A
    s = singular_values(T, model.ip_a, model.ip_a)
    AT = A @ T
    fov = eig_sym_gen(0.5 * (AT + AT.T), A)[0][0]
    if method.kind.symmetric:
        lam = eig_sym_gen(0.5 * (AT + AT.T), A)[0]
        ev = lam.astype(complex)
        kspec = float(lam[-1] / lam[0])
    else:
        ev = np.linalg.eigvals(T)
        ev = ev[np.lexsort((ev.imag, ev.real))]
        kspec = float("nan")
    return SpectrumReport(method, ev, float(s[0] / s[-1]), float(s[0]), float(s[-1]), kspec, float(fov))


# ---------------------------------------------------------------- bounds

@dataclass
class BoundReport:
    statement: str
    method: str
    measured: float
    theoretical: float
    kind: str = "assert"  # or "report"
    note: str = ""

    @property
    def slack(self) -> float:
        if self.measured == 0.0:
            return math.inf
        return self.theoretical / self.measured

    @property
    def passed(self) -> bool:
        if math.isnan(self.measured) or math.isnan(self.theoretical):
            return False
        return self.measured <= self.theoretical * (1.0 + REL_TOL) if self.theoretical >= 0 else \
            self.measured <= self.theoretical * (1.0 - REL_TOL)

    @property
    def failed_assertion(self) -> bool:
        return self.kind == "assert" and not self.passed


def _need(constants, *names):
    if constants is None:
        raise MissingConstant("constants report missing")
    for n in names:
        if getattr(constants, n, None) is None:
            raise MissingConstant(n)


def theorem21_bound(constants: ConstantsReport, eps: float) -> tuple:
    """Right side of the restricted-method condition number bound, and a note when vacuous."""
    base = math.sqrt(constants.nu) * math.sqrt(constants.rho_mu) * constants.C_F * constants.C_E
    den = 1.0 - eps * constants.norm_F_ov_F_hat
    if den <= 0.0:
        return math.inf, f"vacuous: 1 - eps*|F_ov F_hat| = {den:.6g} <= 0"
    return base * (1.0 + eps * constants.norm_F_ov) / den, ""


def limit_bound(constants: ConstantsReport) -> float:
    return math.sqrt(constants.nu) * math.sqrt(constants.rho_mu) * constants.C_F * constants.C_E


def verify_bounds(method: Method, constants: ConstantsReport, spec: SpectrumReport) -> list:
    _need(constants, "C_E", "rho_mu", "nu")
    c = constants
    lab = method.label
    out = []
    k = method.kind
    if k is MethodKind.AS:
        lam = spec.eigenvalues.real
        out += [
            BoundReport("lions_lower: 1/C_E^2 <= lambda_min(P_add)", lab, 1.0 / c.C_E ** 2, float(lam[0])),
            BoundReport("lions_upper: lambda_max(P_add) <= rho(mu)", lab, float(lam[-1]), c.rho_mu),
            BoundReport("norm_E: |E|^2 <= rho(mu)", lab, c.norm_E ** 2, c.rho_mu),
            BoundReport("rho_nu: rho(mu) <= nu", lab, c.rho_mu, float(c.nu)),
            BoundReport("kappa_AS: kappa_spectral <= C_E^2 rho(mu)", lab, spec.kappa_spectral, c.C_E ** 2 * c.rho_mu),
        ]
    elif k is MethodKind.FE_T:
        five = c.C_F * c.norm_F * c.norm_Q_restricted * c.norm_E * c.C_E
        beta = c.C_F * c.norm_F * c.cos_alpha_E / c.cos_beta_EF * c.norm_E * c.C_E
        r1_lim = math.sqrt(c.nu)
        thm9 = c.C_F * c.norm_F * c.cos_alpha_E * 1.0 * r1_lim * c.norm_E * c.C_E
        out += [
            BoundReport("kappa_five_norms: kappa <= |F_hat||F||Q|R(E_hat)||E||E_hat|", lab, spec.kappa_aa, five),
            BoundReport("kappa_beta: kappa <= |F_hat||F| cos(alpha_E)/cos(beta_EF) |E||E_hat|", lab, spec.kappa_aa, beta),
            BoundReport("kappa_r0r1: kappa <= |F_hat||F| cos(alpha_E) r0 r1 |E||E_hat|", lab, spec.kappa_aa, thm9),
            BoundReport("kappa_limit: kappa <= sqrt(nu) sqrt(rho) C_F C_E", lab, spec.kappa_aa, limit_bound(c)),
        ]
        as_bound = c.C_E ** 2 * c.rho_mu
        hyp = c.C_F <= c.C_E and c.rho_mu <= c.nu
        out.append(BoundReport("ras_vs_as: sqrt(nu rho) C_F C_E <= C_E^2 rho", lab, limit_bound(c), as_bound,
                               kind="report",
                               note=f"hypothesis C_F<=C_E and rho<=nu {'holds' if hyp else 'fails'} "
                                    f"(C_F={c.C_F:.6g}, C_E={c.C_E:.6g})"))
    elif k is MethodKind.FEPS_T:
        rhs, note = theorem21_bound(c, method.eps)
        out.append(BoundReport("kappa_eps: kappa(F_eps E^T) <= Theorem-21 right side", lab,
                               spec.kappa_aa, rhs, note=note))
    elif k is MethodKind.EF_T:
        total = c.beta_E + c.beta_F
        inv_norm = 1.0 / spec.sigma_min
        if total < math.pi / 2:
            rhs = c.cos_alpha_E / math.cos(total) * c.C_E * c.C_F
            note = f"beta_E+beta_F={total:.6g} < pi/2"
        else:
            rhs = math.inf
            note = f"hypothesis fails: beta_E+beta_F={total:.6g} >= pi/2"
        out.append(BoundReport("beta_sum: |(EF^T)^-1| <= cos(alpha_E)/cos(beta_E+beta_F) C_E C_F", lab,
                               inv_norm, rhs, kind="report", note=note))
    else:
        out.append(BoundReport("kappa (no bound available)", lab, spec.kappa_aa, math.nan, kind="report",
                               note="comparator only"))
    return out


def structural_checks(model: DenseModel, constants: ConstantsReport, seed: int = 0) -> list:
    """Identities that wire the operators together, reported as ``measured <= tolerance``."""
    b = model.bundle
    rng = np.random.default_rng(seed)
    out = []
    # abstract transpose R^{T,b} = A^{-1} R^T B restricted to G is extension by zero
    RTb = b.A_factor.solve(model.R.T @ model.B_hat @ model.P_G)
    out.append(BoundReport("zero_extension: max|A^-1 R^T B|_G - E|", "-", float(np.abs(RTb - model.E).max()), 1e-9))
    Pi = np.linalg.solve(model.bundle.b_form.g_gram, model.P_G.T @ model.B_hat)
    out.append(BoundReport("ET_projection: max|E^T - Pi_G R|", "-", float(np.abs(Pi @ model.R - model.ET).max()), 1e-9))
    QE = model.E_hat @ model.E
    out.append(BoundReport("QE_idempotent: max|QE^2 - QE|", "-", float(np.abs(QE @ QE - QE).max()), 1e-10))
    cosT = subspace_angles(model.E_hat, Subspace(model.ET), model.ip_bg).cos_Theta
    out.append(BoundReport("QE_angle: |cos Theta(R(E_hat),R(E^T)) - 1/|QE||", "-",
                           abs(cosT - 1.0 / constants.norm_Q_E), 1e-8))
    out.append(BoundReport("QE_norm: 1/(|E_hat||E|) <= 1/|QE|", "-",
                           1.0 / (constants.C_E * constants.norm_E), 1.0 / constants.norm_Q_E))
    V = rng.standard_normal((model.n, 50))
    FFh = model.F @ (model.F_hat @ V) - V
    err = np.sqrt(np.einsum("ij,ij->j", FFh, model.A @ FFh) / np.einsum("ij,ij->j", V, model.A @ V))
    out.append(BoundReport("F_right_inverse: max |F(eta v) - v|_a / |v|_a", "-", float(err.max()), 1e-10))
    out.append(BoundReport("norm_F: |F|_{b,a} <= 1", "-", constants.norm_F, 1.0))
    out.append(BoundReport("range_hatE_hatF: Theta_b(R(E_hat),R(F_hat))", "-", constants.Theta_hatE_hatF, 1e-8))
    out.append(BoundReport("alpha_F: 1 - cos(alpha_F)", "-", 1.0 - constants.cos_alpha_F, 1e-8))
    out.append(BoundReport("alpha_E: 1 - cos(alpha_E)", "-", 1.0 - constants.cos_alpha_E, 1e-8, kind="report",
                           note="paper's bullet list cites cos(alpha_E)=1 from the alpha_F corollary"))
    out.append(BoundReport("beta_identity: |sin theta(R(F^T),N(E)) - cos beta_EF|", "-",
                           abs(constants.sin_theta_FT_NE - constants.cos_beta_EF), 1e-8))
    for eps in sorted(constants.r0, reverse=True):
        out.append(BoundReport(f"r0: |r0 - 1| (eps={eps:g})", "-", abs(constants.r0[eps] - 1.0), 1e-10))
        out.append(BoundReport(f"r1: r1 <= sqrt(nu) (eps={eps:g})", "-", constants.r1[eps], math.sqrt(constants.nu)))
    return out


# ---------------------------------------------------------------- positivity

@dataclass
class PositivityReport:
    eps: float
    m: float
    M: float
    tan_Theta: float
    multiplier: float
    alpha_R: float
    fov_min: float  # min c(T u, u) / c(u, u) on H with c(u, u) = c_eps(Ru, Ru), T = F E^{T,b}
    fov_a_form: float  # min c(Pi_{G,b} R u, R u) / c(R u, R u), i.e. a(F_eps E^{T,b} u, u) / c(Ru, Ru)
    split_ratio: float = math.nan  # sup |(I - Pi_{G,c}) R u|_c / |Pi_{G,c} R u|_c
    multiplier_wielandt: float = math.nan  # (M - m) / (2 sqrt(mM)), the tan bound Wielandt actually gives
    theorem13_margin: float = math.nan  # min [a(F_eps E^{T,b} u,u) - (1 - alpha_R^2)|Pi_{G,c} R u|_c^2] / c(Ru,Ru)

    @property
    def passed(self) -> bool:
        return self.fov_min >= -1e-10


def _sym(M):
    return 0.5 * (M + M.T)


def _fov(T, C):
    K = C @ T
    return float(eig_sym_gen(0.5 * (K + K.T), C)[0][0])


def positivity_from_forms(R, B_hat, C_hat, P_G, T=None, eps=float("nan")) -> PositivityReport:
    """Positivity quantities for explicit Gram matrices.

    ``T`` is the operator whose field of values is taken in the geometry
    ``R^T C_hat R``; without it ``fov_min`` falls back to ``fov_a_form``.
    """
    lam = eig_sym_gen(C_hat, B_hat)[0]
    m, M = float(lam[0]), float(lam[-1])
    ipc = InnerProduct(C_hat, "c")
    G_perp_b = orth_complement(P_G, InnerProduct(B_hat))
    G_perp_c = orth_complement(P_G, ipc)
    ang = subspace_angles(G_perp_b, G_perp_c, ipc)
    tan = ang.sin_Theta / ang.cos_Theta if ang.cos_Theta > 0 else math.inf
    mult = math.sqrt(m * M) * (M - m) ** 2 / (2.0 * (M + m))
    Pc = orth_project(P_G, ipc)
    X = (np.eye(Pc.shape[0]) - Pc) @ R
    Y = Pc @ R
    YCY = _sym(Y.T @ C_hat @ Y)
    try:
        split = math.sqrt(max(eig_sym_gen(_sym(X.T @ C_hat @ X), YCY)[0][-1], 0.0))
    except SchwarzLabError:
        split = math.inf  # Pi_{G,c} R has a kernel
    alpha = 0.0 if mult == 0.0 else mult * split
    Pb = orth_project(P_G, InnerProduct(B_hat))
    K = R.T @ (Pb.T @ C_hat) @ R
    Ks = 0.5 * (K + K.T)
    C_H = _sym(R.T @ C_hat @ R)
    fov_a = float(eig_sym_gen(Ks, C_H)[0][0])
    fov = _fov(T, C_H) if T is not None else fov_a
    margin = math.nan
    if alpha <= 1.0:
        margin = float(eig_sym_gen(Ks - (1.0 - alpha ** 2) * YCY, C_H)[0][0])
    return PositivityReport(eps, m, M, float(tan), mult, float(alpha), fov, fov_a, split,
                            (M - m) / (2.0 * math.sqrt(m * M)), margin)


def positivity_report(model: DenseModel, eps: float) -> PositivityReport:
    T = model.operator(Method(MethodKind.FE_T))
    return positivity_from_forms(model.R, model.B_hat, model.C_hat(eps), model.P_G, T, eps)


def wielandt_report(model: DenseModel, eps: float, samples: int = 1000, seed: int = 0):
    return wielandt_gap(model.B_hat, model.C_hat(eps), samples=samples, seed=seed)


# ---------------------------------------------------------------- solvers

@dataclass
class SolverRow:
    method: str
    solver: str
    iterations: int
    converged: bool
    relative_residual: float
    error_a: float
    iteration_bound: float = math.nan
    sort_key: tuple = ()


def cg_iteration_bound(kappa: float, tol: float) -> int:
    return math.ceil(math.sqrt(kappa) * math.log(2.0 / tol) / 2.0) + 1


def solver_table(bundle: LocalSolverBundle, methods, tol: float = 1e-10, max_iter: int = 1000,
                 restart: int = 200, baseline: bool = True, kappa_as: float = None) -> list:
    """Solve ``A u = load(f=1)`` through each method's residual equation."""
    f = load_vector(bundle.grid, 1.0)
    A = bundle.A
    u_star = SPDFactor(A).solve(f)
    norm_star = math.sqrt(u_star @ (A @ u_star))

    def err(u):
        d = u - u_star
        return math.sqrt(max(d @ (A @ d), 0.0)) / norm_star

    rows = []
    if baseline:
        for solver in ("CG", "GMRES"):
            rep = krylov_solve(lambda v: A @ v, f, solver, tol, max_iter, restart)
            rows.append(SolverRow("NONE", solver, rep.iterations, rep.converged, rep.relative_residual,
                                  err(rep.x), sort_key=(-1, 0.0, solver)))
    for method in sorted(methods, key=lambda m: m.sort_key):
        rhs = ops_mod.equation_rhs(method, bundle, f)
        apply = lambda v, m=method: ops_mod.equation_apply(m, bundle, v)
        solvers = ("CG", "GMRES") if method.kind.symmetric else ("GMRES",)
        for solver in solvers:
            inner = (lambda x, y: float(x @ (A @ y))) if solver == "CG" else None
            rep = krylov_solve(apply, rhs, solver, tol, max_iter, restart, inner=inner)
            u = ops_mod.recover_solution(method, bundle, rep.x)
            bound = math.nan
            if solver == "CG" and kappa_as is not None:
                bound = float(cg_iteration_bound(kappa_as, tol))
            rows.append(SolverRow(method.label, solver, rep.iterations, rep.converged,
                                  rep.relative_residual, err(u), bound,
                                  sort_key=method.sort_key + (solver,)))
    return rows
