"""Estimates robust to norm-bounded uncertainty in the sensing matrices.

The observation pair [A; B] is only known to lie in the set
{[A*; B*] + [E_A'; E_B'] Delta F : ||Delta|| <= r} with Delta a p x q matrix
bounded in spectral norm. Requiring the S-risk design LMI for every matrix in
the set is a semi-infinite constraint; the S-lemma turns it into one finite
LMI with a single multiplier mu, at the price of one extra p x p block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ellitope import Ellitope, phi_terms
from .estimator import add_design_lmi, add_frobenius_epigraph
from .linalg import sym
from .rng import stream
from .solver import Builder, solve_or_raise


@dataclass(frozen=True)
class UncertaintyModel:
    """Nominal (A_star, B_star) with perturbations [E_A'; E_B'] Delta F,
    ||Delta|| <= r. E stacks [E_A, E_B] side by side, p x (m + nu)."""

    A_star: np.ndarray
    B_star: np.ndarray
    E: np.ndarray
    F: np.ndarray
    r: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A_star, dtype=float))
        B = np.atleast_2d(np.asarray(self.B_star, dtype=float))
        E = np.atleast_2d(np.asarray(self.E, dtype=float))
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        m, n = A.shape
        nu = B.shape[0]
        if B.shape[1] != n:
            raise ValueError("A_star and B_star must share column count")
        if E.shape[1] != m + nu:
            raise ValueError(f"E must have {m + nu} columns")
        if F.shape[1] != n:
            raise ValueError(f"F must have {n} columns")
        if self.r < 0:
            raise ValueError("radius must be nonnegative")
        for name, val in (("A_star", A), ("B_star", B), ("E", E), ("F", F)):
            object.__setattr__(self, name, val)

    @property
    def m(self) -> int:
        return self.A_star.shape[0]

    @property
    def n(self) -> int:
        return self.A_star.shape[1]

    @property
    def nu(self) -> int:
        return self.B_star.shape[0]

    @property
    def E_A(self) -> np.ndarray:
        return self.E[:, :self.m]

    @property
    def E_B(self) -> np.ndarray:
        return self.E[:, self.m:]

    def perturbed(self, Delta: np.ndarray):
        """(A, B) at a given Delta."""
        shift = self.E.T @ Delta @ self.F
        return self.A_star + shift[:self.m], self.B_star + shift[self.m:]


def build_robust_estimate(um: UncertaintyModel, sigma: float, S: np.ndarray,
                          ell: Ellitope, *, tol_gap: float = 1e-8):
    """min tau s.t. for every admissible [A; B] the S-risk design LMI holds;
    reformulated with multiplier mu >= 0 as

        [ sum lam_k S_k + tau S - mu r^2 F'F   B*' - A*'H    0          ]
        [ B* - H'A*                            I_nu          E_B'-H'E_A']
        [ 0                                    E_B - E_A H   mu I_p     ]  >= 0

    plus sigma^2 Tr(H'H) + phi_T(lam) <= tau. Returns (H, lam, mu, rob_opt).
    With a vanishing uncertainty channel (E = 0 or F = 0) the nominal design
    program is solved instead and mu = 0."""
    A, B = um.A_star, um.B_star
    m, n, nu = um.m, um.n, um.nu
    p = um.E.shape[0]
    S = sym(np.asarray(S, dtype=float))
    trivial = not (np.any(um.E) and np.any(um.F))
    b = Builder()
    tau = b.vars("tau", 1)
    h = b.vars("H", m * nu)
    lam = b.vars("lam", ell.K)
    u = b.vars("u", 1)
    b.nonneg(lam)
    b.objective(tau, [1.0])
    add_frobenius_epigraph(b, h, u[0])
    cols, vals = phi_terms(b, ell.tset, lam)
    b.ineq(np.concatenate([u, cols, tau]),
           np.concatenate([[sigma ** 2], vals, [-1.0]]), 0.0)
    if trivial:
        L = b.lmi(n + nu)
        add_design_lmi(L, A, B, ell.S, lam, h, extra_00=[(tau[0], S)])
        prog = b.build()
        sol = solve_or_raise(prog, tol_gap=tol_gap)
        H = sol.var(prog, "H").reshape(m, nu)
        return H, sol.var(prog, "lam").copy(), 0.0, float(sol.var(prog, "tau")[0])

    mu = b.vars("mu", 1)
    b.nonneg(mu)
    L = b.lmi(n + nu + p)
    F0 = np.zeros((n + nu + p, n + nu + p))
    F0[:n, n:n + nu] = B.T
    F0[n:n + nu, :n] = B
    F0[n:n + nu, n:n + nu] = np.eye(nu)
    F0[n + nu:, n:n + nu] = um.E_B
    F0[n:n + nu, n + nu:] = um.E_B.T
    L.const(F0)
    for k in range(ell.K):
        M = np.zeros((n + nu + p, n + nu + p))
        M[:n, :n] = ell.S[k]
        L.term(lam[k], M)
    Mt = np.zeros((n + nu + p, n + nu + p))
    Mt[:n, :n] = S
    L.term(tau[0], Mt)
    Mm = np.zeros((n + nu + p, n + nu + p))
    Mm[:n, :n] = -um.r ** 2 * (um.F.T @ um.F)
    Mm[n + nu:, n + nu:] = np.eye(p)
    L.term(mu[0], Mm)
    # -A*'H at (i, n+bcol) and -E_A H at (n+bcol, n+nu+c)
    aa, ii, bb = np.meshgrid(np.arange(m), np.arange(n), np.arange(nu), indexing="ij")
    aa, ii, bb = aa.ravel(), ii.ravel(), bb.ravel()
    va = -A[aa, ii]
    keep = va != 0.0
    L.term_entries(ii[keep], (n + bb)[keep], h[aa[keep] * nu + bb[keep]], va[keep])
    cc, aa2, bb2 = np.meshgrid(np.arange(p), np.arange(m), np.arange(nu), indexing="ij")
    cc, aa2, bb2 = cc.ravel(), aa2.ravel(), bb2.ravel()
    ve = -um.E_A[cc, aa2]
    keep = ve != 0.0
    L.term_entries((n + bb2)[keep], (n + nu + cc)[keep],
                   h[aa2[keep] * nu + bb2[keep]], ve[keep])
    prog = b.build()
    sol = solve_or_raise(prog, tol_gap=tol_gap)
    H = sol.var(prog, "H").reshape(m, nu)
    return (H, sol.var(prog, "lam").copy(), float(sol.var(prog, "mu")[0]),
            float(sol.var(prog, "tau")[0]))


def design_lmi_min_eig(H: np.ndarray, lam: np.ndarray, tau: float,
                       A: np.ndarray, B: np.ndarray, S: np.ndarray,
                       ell: Ellitope) -> float:
    """Smallest eigenvalue of the S-risk design LMI at fixed (H, lam, tau)."""
    n, nu = ell.n, B.shape[0]
    M = np.zeros((n + nu, n + nu))
    M[:n, :n] = np.einsum("k,kij->ij", lam, ell.S) + tau * S
    D = B - H.T @ A
    M[:n, n:] = D.T
    M[n:, :n] = D
    M[n:, n:] = np.eye(nu)
    return float(np.linalg.eigvalsh(M)[0])


def verify_robust_feasibility(H: np.ndarray, lam: np.ndarray, tau: float,
                              um: UncertaintyModel, S: np.ndarray,
                              ell: Ellitope, N: int = 1000, seed: int = 0,
                              margin: float = 1e-7) -> float:
    """Fraction of N sampled perturbations ||Delta|| <= r at which the design
    LMI stays positive semidefinite (eigenvalue >= -margin). Delta is a
    Gaussian matrix rescaled to spectral norm u*r with u uniform, except the
    first draw which sits on the boundary u = 1 where feasibility binds."""
    S = sym(np.asarray(S, dtype=float))
    p, q = um.E.shape[0], um.F.shape[0]
    good = 0
    for i in range(N):
        rng = stream(seed, i)
        if um.r == 0.0 or not np.any(um.E) or not np.any(um.F):
            Delta = np.zeros((p, q))
        else:
            G = rng.normal(size=(p, q))
            nrm = np.linalg.norm(G, 2)
            u = 1.0 if i == 0 else rng.uniform()
            Delta = G * (u * um.r / nrm) if nrm > 0 else np.zeros((p, q))
        Ap, Bp = um.perturbed(Delta)
        if design_lmi_min_eig(H, lam, tau, Ap, Bp, S, ell) >= -margin:
            good += 1
    return good / N
