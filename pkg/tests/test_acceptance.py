"""Acceptance criteria on the reference configurations, one test per criterion.

R1: 1D, 32 cells, 4 blocks, 2 overlap layers.  R2: 2D, 16 cells, 2x2 blocks, 1 layer.
Each test records a PASS/FAIL line that is printed in the terminal summary.
"""
import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, R1
from schwarzlab.cli import parse_config, run_experiment
from schwarzlab.diagnostics import (cg_iteration_bound, limit_bound, measure_constants, positivity_report,
                                    solver_table, spectrum, structural_checks, theorem21_bound, wielandt_report)
from schwarzlab.operators import EPSILON_SWEEP, Method, MethodKind
from schwarzlab.spaces import (InnerProduct, oblique_project, operator_norm, orth_complement, orth_project,
                               subspace_angles, wielandt_gap, wielandt_planar_sweep)

ALL_METHODS = [Method(k) for k in MethodKind if k is not MethodKind.FEPS_T] + \
              [Method(MethodKind.FEPS_T, e) for e in EPSILON_SWEEP]


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def models(r1_model, r2_model):
    return {"R1": r1_model, "R2": r2_model}


@pytest.fixture(scope="module")
def constants(models):
    return {k: measure_constants(m) for k, m in models.items()}


def test_criterion_01_wiring(models):
    diffs = {}
    for name, m in models.items():
        RTb = m.bundle.A_factor.solve(m.R.T @ m.B_hat @ m.P_G)
        diffs[name] = float(np.abs(RTb - m.E).max())
    record(1, "A^-1 R^T B on G equals zero extension", all(d <= 1e-9 for d in diffs.values()),
           ", ".join(f"{k} max diff {v:.2e}" for k, v in diffs.items()))


def test_criterion_02_lions(models, constants):
    ok, parts = True, []
    for name, m in models.items():
        c = constants[name]
        lam = spectrum(m, Method(MethodKind.AS)).eigenvalues.real
        lo = lam[0] >= 1 / c.C_E ** 2 - 1e-8
        hi = lam[-1] <= c.rho_mu + 1e-8
        chain = c.norm_E ** 2 <= c.rho_mu + 1e-8 and c.rho_mu <= c.nu + 1e-12
        ok &= lo and hi and chain
        parts.append(f"{name} lmin {lam[0]:.6g} >= {1 / c.C_E ** 2:.6g}, lmax {lam[-1]:.6g} <= rho {c.rho_mu:.6g}"
                     f" <= nu {c.nu}, |E|^2 {c.norm_E ** 2:.6g}")
    record(2, "Lions bounds for AS", ok, "; ".join(parts))


def test_criterion_03_angles():
    worst = [0.0, 0.0, 0.0]
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 21))
        k = int(rng.integers(1, n))
        M = rng.standard_normal((n, n))
        G = InnerProduct(M.T @ M + np.eye(n))
        X, Y = rng.standard_normal((n, k)), rng.standard_normal((n, n - k))
        a = subspace_angles(X, Y, G)
        qn = operator_norm(oblique_project(X, Y), G, G)
        worst[0] = max(worst[0], abs(a.sin_theta * qn - 1.0))
        worst[1] = max(worst[1], abs(a.theta + subspace_angles(X, orth_complement(Y, G), G).Theta - math.pi / 2))
        worst[2] = max(worst[2], abs(operator_norm(orth_project(X, G) @ orth_project(Y, G), G, G) - a.cos_theta))
    record(3, "angle identities on 200 random pairs", max(worst) <= 1e-8,
           f"max |sin*|Q|-1| {worst[0]:.1e}, |theta+Theta-pi/2| {worst[1]:.1e}, |norm-cos| {worst[2]:.1e}")


def test_criterion_04_projection_lemma(r1_model, constants):
    c = constants["R1"]
    rows = {r.statement.split(":")[0]: r for r in structural_checks(r1_model, c)}
    idem = rows["QE_idempotent"].measured
    ang = rows["QE_angle"].measured
    lower = 1 / (c.C_E * c.norm_E) <= 1 / c.norm_Q_E + 1e-8
    record(4, "Q_E projection lemma on R1", idem <= 1e-10 and ang <= 1e-8 and lower,
           f"|QE^2-QE| {idem:.1e}, |cosTheta-1/|QE|| {ang:.1e}, 1/(|Ehat||E|) {1 / (c.C_E * c.norm_E):.4g}"
           f" <= 1/|QE| {1 / c.norm_Q_E:.4g}")


def test_criterion_05_right_inverse(models, constants):
    ok, parts = True, []
    for name, m in models.items():
        V = np.random.default_rng(0).standard_normal((m.n, 50))
        D = m.F @ (m.F_hat @ V) - V
        rel = np.sqrt(np.einsum("ij,ij->j", D, m.A @ D) / np.einsum("ij,ij->j", V, m.A @ V)).max()
        nf = constants[name].norm_F
        ok &= rel <= 1e-10 and nf <= 1 + 1e-8
        parts.append(f"{name} max rel {rel:.1e}, |F| {nf:.12g}")
    record(5, "F(eta v) = v and |F| <= 1", ok, "; ".join(parts))


def test_criterion_06_r_constants(constants):
    ok, parts = True, []
    for name, c in constants.items():
        d0 = max(abs(c.r0[e] - 1) for e in EPSILON_SWEEP)
        r1 = max(c.r1[e] for e in EPSILON_SWEEP)
        ok &= d0 <= 1e-10 and r1 <= math.sqrt(c.nu) + 1e-8
        parts.append(f"{name} max|r0-1| {d0:.1e}, max r1 {r1:.6g} <= sqrt(nu) {math.sqrt(c.nu):.6g}")
    record(6, "r0 = 1 and r1 <= sqrt(nu)", ok, "; ".join(parts))


def test_criterion_07_central_bound(models, constants):
    ok, parts = True, []
    for name, m in models.items():
        c = constants[name]
        for e in EPSILON_SWEEP:
            k = spectrum(m, Method(MethodKind.FEPS_T, e)).kappa_aa
            rhs, note = theorem21_bound(c, e)
            ok &= k <= rhs
            if note:  # 1 - eps |F_ov F_hat| <= 0: the hypothesis fails and the statement makes no claim
                parts.append(f"{name} eps={e:g}: {k:.5g}, no claim ({note})")
            else:
                parts.append(f"{name} eps={e:g}: {k:.5g} <= {rhs:.5g}")
        k0 = spectrum(m, Method(MethodKind.FE_T)).kappa_aa
        ok &= k0 <= limit_bound(c)
        parts.append(f"{name} eps->0: {k0:.5g} <= {limit_bound(c):.5g}")
    record(7, "kappa(F_eps E^T) below the restricted-method bound", ok, "; ".join(parts))


def test_criterion_08_positivity(r1_model):
    eps = min(EPSILON_SWEEP)
    p = positivity_report(r1_model, eps)
    record(8, f"min field of values of FE^T in c_eps, eps={eps:g}, R1", p.fov_min >= -1e-10,
           f"fov_min {p.fov_min:.6g} (a-form variant {p.fov_a_form:.6g})")


def test_criterion_09_wielandt(r1_model):
    w = wielandt_report(r1_model, 0.1, samples=1000, seed=0)
    ok = w.worst_ratio <= w.bound + 1e-10
    worst_gap = -math.inf
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 13))
        M1, M2 = rng.standard_normal((2, n, n))
        rep = wielandt_gap(M1.T @ M1 + np.eye(n), M2.T @ M2 + np.eye(n), samples=1000, seed=seed)
        worst_gap = max(worst_gap, rep.worst_ratio - rep.bound)
    planar = wielandt_planar_sweep(1.0, 4.0)
    ok &= worst_gap <= 1e-10 and abs(planar - 0.36) <= 1e-8
    record(9, "Wielandt inequality", ok,
           f"R1 c_0.1: {w.worst_ratio:.6g} <= {w.bound:.6g}; random max(ratio-bound) {worst_gap:.3g}; "
           f"planar {planar:.12g} vs 0.36")


def test_criterion_10_solvers(models):
    ok, parts = True, []
    for name, m in models.items():
        kappa = spectrum(m, Method(MethodKind.AS)).kappa_spectral
        rows = solver_table(m.bundle, ALL_METHODS, tol=1e-10, kappa_as=kappa)
        worst = max(r.error_a for r in rows if r.method != "NONE")
        cg = next(r for r in rows if r.method == "AS" and r.solver == "CG")
        bound = cg_iteration_bound(kappa, 1e-10)
        ok &= worst <= 1e-7 and all(r.converged for r in rows) and cg.iterations <= bound
        parts.append(f"{name} max a-error {worst:.1e}, AS-CG {cg.iterations} <= {bound}")
    record(10, "iterative solutions match the direct solve", ok, "; ".join(parts))


def test_criterion_11_determinism(tmp_path):
    text = '{"dim": %d, "cells": %d, "blocks": %d, "layers": %d, "seed": 3}' % R1
    outs = []
    for k in range(2):
        run_experiment(parse_config(text), tmp_path / f"run{k}")
        outs.append([(tmp_path / f"run{k}" / f).read_bytes() for f in ("bounds.csv", "solver_table.csv")])
    record(11, "byte-identical bounds.csv and solver_table.csv", outs[0] == outs[1],
           f"{len(outs[0][0])} + {len(outs[0][1])} bytes compared")
