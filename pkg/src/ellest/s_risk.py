"""Relative-scale estimation: S-risk design, lower bound, and S selection.

The S-risk of an estimate w(.) is sup_x sqrt(E||w(Ax + sigma xi) - Bx||^2 /
(1 + x'Sx)) with S >= 0 fixing the scale on which accuracy degrades away
from the origin. S = 0 recovers the plain worst-case risk. The linear design
problem gets one extra term tau*S in the slack block of the risk LMI; its
dual is a Gaussian-prior problem homogenized by a scalar s, and equality of
the two values holds with s > 0 at the optimum whenever B is nonzero.

The whole-space variant (signal set = all of R^n) drops the ellitope
constraints entirely; there the linear estimate is exactly minimax among all
estimates, which we certify by solving the dual. optimize_S_bisection treats
S itself as a design variable under a trace budget and finds the smallest
achievable S-risk level by bisection on tau (the program is linear in (H, S)
once tau is frozen).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ellitope import Ellitope, add_tset_cone, phi_terms
from .estimator import EstimationProblem, add_design_lmi, add_frobenius_epigraph
from .linalg import congruence_svec_map, min_eig, psd_tolerance, smat, svec, svec_len, sym
from .lower_bound import LowerBoundReport, delta_rho, gaussian_quantile, m_star
from .solver import Builder, ConicSolution, SolverError, solve, solve_or_raise

SRISK_RHO_FAMILY = "srisk_rho_family"
_DEFAULT_RHO_GRID = np.logspace(-3, 0, 40)


@dataclass(frozen=True)
class SRiskProblem:
    """An estimation problem plus the regularity-scale matrix S >= 0."""

    prob: EstimationProblem
    S: np.ndarray

    def __post_init__(self):
        S = sym(np.asarray(self.S, dtype=float))
        n = self.prob.ell.n
        if S.shape != (n, n):
            raise ValueError(f"S must be {n}x{n}")
        if min_eig(S) < -psd_tolerance(S):
            raise ValueError("S must be positive semidefinite")
        object.__setattr__(self, "S", S)


@dataclass(frozen=True)
class SRiskEstimate:
    H: np.ndarray
    lam: np.ndarray
    tau: float
    srisk_bound: float
    solution: ConicSolution | None = field(default=None, repr=False, compare=False)


def build_srisk_estimate(sp: SRiskProblem, *, tol_gap: float = 1e-8) -> SRiskEstimate:
    """min tau s.t. [[sum_k lam_k S_k + tau S, B'-A'H],[B-H'A, I]] >= 0 and
    sigma^2 Tr(H'H) + phi_T(lam) <= tau."""
    prob = sp.prob
    A, B, ell = prob.A, prob.B, prob.ell
    m, n, nu = prob.m, ell.n, prob.nu
    b = Builder()
    tau = b.vars("tau", 1)
    h = b.vars("H", m * nu)
    lam = b.vars("lam", ell.K)
    u = b.vars("u", 1)
    b.nonneg(lam)
    b.objective(tau, [1.0])
    L = b.lmi(n + nu)
    add_design_lmi(L, A, B, ell.S, lam, h, extra_00=[(tau[0], sp.S)])
    add_frobenius_epigraph(b, h, u[0])
    cols, vals = phi_terms(b, ell.tset, lam)
    b.ineq(np.concatenate([u, cols, tau]),
           np.concatenate([[prob.sigma ** 2], vals, [-1.0]]), 0.0)
    prog = b.build()
    sol = solve_or_raise(prog, tol_gap=tol_gap)
    H = sol.var(prog, "H").reshape(m, nu)
    tau_val = float(sol.var(prog, "tau")[0])
    return SRiskEstimate(H, sol.var(prog, "lam").copy(), tau_val,
                         math.sqrt(max(tau_val, 0.0)), sol)


def _dual_srisk_solve(A: np.ndarray, B: np.ndarray, sigma: float, S: np.ndarray,
                      ell: Ellitope | None, *, tol_gap: float = 1e-8):
    """max Tr(BWB') - Tr(G) s.t. [[G, BWA'],[AWB', sigma^2 s I + AWA']] >= 0,
    W >= 0, Tr(WS) + s <= 1, and (with an ellitope) Tr(WS_k) <= v_k with
    [v; s] in the homogenizing cone of T. Returns (opt, W, s, solution)."""
    m, n = A.shape
    nu = B.shape[0]
    b = Builder()
    w = b.vars("W", svec_len(n))
    g = b.vars("G", svec_len(nu))
    s = b.vars("s", 1)
    b.nonneg(s)
    b.objective(g, svec(np.eye(nu)))
    b.objective(w, -svec(sym(B.T @ B)))
    L = b.lmi(nu + m)
    L.term_symmetric_block(g, offset=0)
    Es = np.zeros((nu + m, nu + m))
    Es[nu:, nu:] = sigma ** 2 * np.eye(m)
    L.term(s[0], Es)
    V = np.vstack([B, A])
    V0 = np.vstack([B, np.zeros_like(A)])
    L.map_svec(w, congruence_svec_map(V) - congruence_svec_map(V0))
    Lw = b.lmi(n)
    Lw.term_symmetric_block(w)
    sv_s = svec(S)
    nz = np.nonzero(sv_s)[0]
    b.ineq(np.concatenate([w[nz], s]), np.concatenate([sv_s[nz], [1.0]]), 1.0)
    if ell is not None:
        v = b.vars("v", ell.K)
        for k in range(ell.K):
            sv = svec(ell.S[k])
            nzk = np.nonzero(sv)[0]
            b.ineq(np.concatenate([w[nzk], [v[k]]]),
                   np.concatenate([sv[nzk], [-1.0]]), 0.0)
        add_tset_cone(b, ell.tset, v, tau_idx=s[0])
    prog = b.build()
    sol = solve_or_raise(prog, tol_gap=tol_gap)
    W = smat(sol.var(prog, "W"), n)
    s_val = float(sol.var(prog, "s")[0])
    return -float(sol.objective), W, s_val, sol


def srisk_lower_bound(sp: SRiskProblem, *, tau: float | None = None,
                      rho_grid=None, tol_gap: float = 1e-8,
                      tol_dual: float = 1e-5) -> LowerBoundReport:
    """Lower bound on the minimax S-risk via the homogenized dual and the
    contracted-Gaussian-prior argument with Q_rho = rho W / s."""
    prob = sp.prob
    if tau is None:
        tau = build_srisk_estimate(sp, tol_gap=tol_gap).tau
    opt_star, W, s_val, _ = _dual_srisk_solve(prob.A, prob.B, prob.sigma, sp.S,
                                              prob.ell, tol_gap=tol_gap)
    if abs(opt_star - tau) > tol_dual * (1.0 + abs(tau)):
        raise AssertionError(
            f"dual value {opt_star} disagrees with design value {tau}")
    if np.any(prob.B) and s_val < 1e-8:
        raise AssertionError(f"dual scale s = {s_val} violates positivity")
    phi_star = opt_star / s_val
    tr_qs = max(float(np.sum(W * sp.S)), 0.0) / s_val
    K = prob.ell.K
    mstar = m_star(prob.B, prob.ell)
    if rho_grid is None:
        rho_grid = _DEFAULT_RHO_GRID
    best_val, best_rho, best_delta = 0.0, None, None
    for rho in np.asarray(rho_grid, dtype=float):
        d = delta_rho(float(rho), K)
        if d >= 1.0:
            continue
        if d > 0.0:
            bracket = 1.0 + math.sqrt(2.0 * rho) * (-gaussian_quantile(d / 2.0))
            num = rho * phi_star - bracket ** 2 * mstar ** 2 * d
        else:
            num = rho * phi_star
        den = 1.0 + rho * tr_qs / (1.0 - d)
        val = num / den
        if val > best_val:
            best_val, best_rho, best_delta = val, float(rho), d
    lb = math.sqrt(max(best_val, 0.0))
    bound = math.sqrt(max(tau, 0.0))
    factor = bound / lb if lb > 0 else math.inf
    return LowerBoundReport(method=SRISK_RHO_FAMILY, lb=lb, rho=best_rho,
                            delta=best_delta, factor_numeric=factor,
                            details={"opt_star": opt_star, "s": s_val,
                                     "tau": tau, "tr_ws": tr_qs * s_val})


def whole_space_estimate(A: np.ndarray, B: np.ndarray, sigma: float,
                         S: np.ndarray, *, tol_gap: float = 1e-8,
                         tol_cert: float = 1e-6) -> SRiskEstimate:
    """Minimax-optimal estimate of Bx from Ax + sigma*xi under the S-risk
    with no signal-set restriction. Optimality (among all estimates, not
    just linear ones) is certified by solving the dual program and checking
    that the values agree."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if not np.any(B):
        raise ValueError("B must be nonzero")
    S = sym(np.asarray(S, dtype=float))
    m, n = A.shape
    nu = B.shape[0]
    b = Builder()
    tau = b.vars("tau", 1)
    h = b.vars("H", m * nu)
    u = b.vars("u", 1)
    b.objective(tau, [1.0])
    L = b.lmi(n + nu)
    add_design_lmi(L, A, B, np.zeros((0, n, n)), np.zeros(0, dtype=int), h,
                   extra_00=[(tau[0], S)])
    add_frobenius_epigraph(b, h, u[0])
    b.ineq(np.concatenate([u, tau]), [sigma ** 2, -1.0], 0.0)
    prog = b.build()
    sol = solve_or_raise(prog, tol_gap=tol_gap)
    tau_val = float(sol.var(prog, "tau")[0])
    H = sol.var(prog, "H").reshape(m, nu)
    dual_val, _, _, _ = _dual_srisk_solve(A, B, sigma, S, None, tol_gap=tol_gap)
    if abs(dual_val - tau_val) > tol_cert * (1.0 + abs(tau_val)):
        raise AssertionError(
            f"whole-space certificate failed: dual {dual_val} vs tau {tau_val}")
    return SRiskEstimate(H, np.zeros(0), tau_val,
                         math.sqrt(max(tau_val, 0.0)), sol)


def _srisk_feasible_at(A: np.ndarray, B: np.ndarray, sigma: float, tau: float,
                       trace_cap: float, *, tol_gap: float):
    """Feasibility of the (H, S) program at frozen tau; minimizes Tr(S) among
    feasible points, which drives S toward low rank. Returns (ok, H, S)."""
    m, n = A.shape
    nu = B.shape[0]
    b = Builder()
    s_idx = b.vars("S", svec_len(n))
    h = b.vars("H", m * nu)
    u = b.vars("u", 1)
    sv_eye = svec(np.eye(n))
    b.objective(s_idx, sv_eye)
    L = b.lmi(n + nu)
    add_design_lmi(L, A, B, np.zeros((0, n, n)), np.zeros(0, dtype=int), h)
    L.term_symmetric_block(s_idx, offset=0, scale=tau)
    Ls = b.lmi(n)
    Ls.term_symmetric_block(s_idx)
    add_frobenius_epigraph(b, h, u[0])
    b.ineq(u, [sigma ** 2], tau)
    b.ineq(s_idx, sv_eye, trace_cap)
    prog = b.build()
    sol = solve(prog, tol_gap=tol_gap)
    if not sol.is_optimal:
        return False, None, None
    return True, sol.var(prog, "H").reshape(m, nu), smat(sol.var(prog, "S"), n)


def optimize_S_bisection(A: np.ndarray, B: np.ndarray, sigma: float,
                         trace_cap: float = 1.0, tol_tau: float = 1e-4, *,
                         max_iter: int = 60, tol_gap: float = 1e-8):
    """Smallest achievable S-risk level when S itself is a design variable
    under Tr(S) <= trace_cap: bisection on tau over the feasibility program
    in (H, S), which is jointly convex once tau is frozen. Returns
    (S_star, H_star, tau_star) at the final feasible tau."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if trace_cap <= 0:
        raise ValueError("trace_cap must be positive")
    if not np.any(B):
        raise ValueError("B must be nonzero")
    n = A.shape[1]
    # H = 0, S = trace_cap I/n is feasible once tau S >= B'B on that ray
    tau_hi = n * float(np.linalg.eigvalsh(sym(B.T @ B))[-1]) / trace_cap
    tau_hi = max(tau_hi * (1.0 + 1e-6), 1e-8)
    ok, H_best, S_best = _srisk_feasible_at(A, B, sigma, tau_hi, trace_cap,
                                            tol_gap=tol_gap)
    grow = 0
    while not ok and grow < 8:
        tau_hi *= 4.0
        grow += 1
        ok, H_best, S_best = _srisk_feasible_at(A, B, sigma, tau_hi, trace_cap,
                                                tol_gap=tol_gap)
    if not ok:
        raise RuntimeError(f"no feasible tau bracket found up to {tau_hi}")
    tau_lo = 0.0
    for _ in range(max_iter):
        if tau_hi - tau_lo <= tol_tau:
            break
        mid = 0.5 * (tau_lo + tau_hi)
        ok, H_mid, S_mid = _srisk_feasible_at(A, B, sigma, mid, trace_cap,
                                              tol_gap=tol_gap)
        if ok:
            tau_hi, H_best, S_best = mid, H_mid, S_mid
        else:
            tau_lo = mid
    return S_best, H_best, tau_hi
