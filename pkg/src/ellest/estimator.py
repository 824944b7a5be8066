"""Design of near-optimal linear estimates.

Observation model: omega = A x + sigma * xi with xi standard normal and the
signal x confined to an ellitope. The estimate w = H' omega for the target
w = B x is obtained from the semidefinite design problem

    min_{H, lam >= 0}  sigma^2 Tr(H'H) + phi_T(lam)
    s.t.  [ sum_k lam_k S_k   B' - A'H ]
          [ B - H'A            I       ]  >= 0,

whose optimal value Opt certifies Risk^2 <= Opt over the whole set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ellitope import Ellitope, add_support_epigraph
from .linalg import psd_sqrt
from .rng import stream
from .solver import Builder, ConicSolution, solve_or_raise


@dataclass(frozen=True)
class EstimationProblem:
    A: np.ndarray           # m x n
    B: np.ndarray           # nu x n
    sigma: float
    ell: Ellitope

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        n = self.ell.n
        if A.shape[1] != n or B.shape[1] != n:
            raise ValueError("A and B must have n columns")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not np.any(B):
            raise ValueError("B must be nonzero")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def nu(self) -> int:
        return self.B.shape[0]


@dataclass(frozen=True)
class LinearEstimate:
    H: np.ndarray           # m x nu
    lam: np.ndarray         # K
    opt: float
    risk_bound: float
    solution: ConicSolution | None = field(default=None, repr=False, compare=False)


def add_frobenius_epigraph(b: Builder, h_idx: np.ndarray, u_col: int) -> None:
    """Constrain sum of squares of the h variables <= u via one cone block:
    ||[2h; u-1]|| <= u+1."""
    h_idx = np.asarray(h_idx, dtype=int)
    d = len(h_idx)
    soc = b.soc(d + 2)
    soc.set_row(0, [u_col], [1.0], 1.0)
    soc.set_row(1, [u_col], [1.0], -1.0)
    soc.set_triplets(np.arange(2, d + 2), h_idx, np.full(d, 2.0))


def add_design_lmi(L, A: np.ndarray, B: np.ndarray, S: np.ndarray,
                   lam_idx: np.ndarray, h_idx: np.ndarray,
                   extra_00: list | None = None) -> None:
    """Fill the design LMI block of order n + nu:

        [ sum_k lam_k S_k (+ extra)   B' - A'H ]
        [ (B - H'A)                    I_nu    ]  >= 0

    with H entered row-major (h_idx[a*nu + b] = H[a, b]). extra_00 is a list
    of (col, M) terms added to the upper-left block.
    """
    m, n = A.shape
    nu = B.shape[0]
    F0 = np.zeros((n + nu, n + nu))
    F0[:n, n:] = B.T
    F0[n:, :n] = B
    F0[n:, n:] = np.eye(nu)
    L.const(F0)
    for k in range(S.shape[0]):
        M = np.zeros((n + nu, n + nu))
        M[:n, :n] = S[k]
        L.term(lam_idx[k], M)
    if extra_00:
        for col, M in extra_00:
            Mfull = np.zeros((n + nu, n + nu))
            Mfull[:n, :n] = M
            L.term(col, Mfull)
    # -A'H in the off-diagonal block: entry (i, n+b) gets -A[a,i] * H[a,b]
    aa, ii, bb = np.meshgrid(np.arange(m), np.arange(n), np.arange(nu), indexing="ij")
    aa, ii, bb = aa.ravel(), ii.ravel(), bb.ravel()
    vals = -A[aa, ii]
    keep = vals != 0.0
    L.term_entries(ii[keep], (n + bb)[keep], h_idx[aa[keep] * nu + bb[keep]], vals[keep])


def build_linear_estimate(prob: EstimationProblem, *, tol_gap: float = 1e-8,
                          tol_feas: float = 1e-8) -> LinearEstimate:
    """Solve the design problem and package the optimal (H, lam)."""
    A, B, ell = prob.A, prob.B, prob.ell
    m, n, nu, K = prob.m, ell.n, prob.nu, ell.K

    b = Builder()
    h = b.vars("H", m * nu)
    lam = b.vars("lam", K)
    u = b.vars("u", 1)
    b.nonneg(lam)
    b.objective(u, [prob.sigma ** 2])
    add_support_epigraph(b, ell.tset, lam)
    add_frobenius_epigraph(b, h, u[0])
    L = b.lmi(n + nu)
    add_design_lmi(L, A, B, ell.S, lam, h)

    prog = b.build()
    sol = solve_or_raise(prog, tol_gap=tol_gap, tol_feas=tol_feas)
    H = sol.var(prog, "H").reshape(m, nu)
    lam_v = np.maximum(sol.var(prog, "lam"), 0.0)
    opt = float(sol.objective)
    return LinearEstimate(H, lam_v, opt, float(np.sqrt(max(opt, 0.0))), sol)


def apply(est: LinearEstimate, omega: np.ndarray) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (est.H.shape[0],):
        raise ValueError("omega has wrong length")
    return est.H.T @ omega


def empirical_risk(est: LinearEstimate, prob: EstimationProblem, x: np.ndarray,
                   N: int, seed: int, batch: int = 100_000):
    """Monte-Carlo estimate of E ||H'(Ax + sigma xi) - Bx||^2.

    Returns (mean, standard error); deterministic under the seed.
    """
    x = np.asarray(x, dtype=float)
    if N < 100:
        raise ValueError("N must be at least 100")
    if not prob.ell.contains(x, tol=1e-7):
        raise ValueError("x is not in the signal set")
    bias = est.H.T @ (prob.A @ x) - prob.B @ x
    rng = stream(seed, 0)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < N:
        nb = min(batch, N - done)
        Z = rng.standard_normal((nb, prob.m))
        errs = bias[None, :] + prob.sigma * (Z @ est.H)
        vals = np.einsum("ij,ij->i", errs, errs)
        total += vals.sum()
        total_sq += (vals ** 2).sum()
        done += nb
    mean = total / N
    var = max(total_sq / N - mean ** 2, 0.0) * N / max(N - 1, 1)
    return mean, float(np.sqrt(var / N))


def exact_risk_on_ellipsoid(H: np.ndarray, prob: EstimationProblem) -> float:
    """Exact squared risk of w = H'omega when the signal set is an ellipsoid
    {x'S1 x <= 1}: sigma^2 Tr(H'H) + lam_max(S1^{-1/2} M'M S1^{-1/2}) with
    M = B - H'A."""
    ell = prob.ell
    if ell.K != 1 or ell.tset.variant != "unit_segment":
        raise ValueError("exact risk formula needs a K = 1 ellipsoid")
    M = prob.B - H.T @ prob.A
    R = psd_sqrt(ell.S[0])
    Rinv = np.linalg.inv(R)
    W = Rinv @ (M.T @ M) @ Rinv
    top = float(np.linalg.eigvalsh(W)[-1])
    return float(prob.sigma ** 2 * np.sum(H * H) + top)


def worst_case_signal(H: np.ndarray, prob: EstimationProblem) -> np.ndarray:
    """Boundary signal maximizing the bias term on a K = 1 ellipsoid."""
    ell = prob.ell
    if ell.K != 1 or ell.tset.variant != "unit_segment":
        raise ValueError("needs a K = 1 ellipsoid")
    M = prob.B - H.T @ prob.A
    R = psd_sqrt(ell.S[0])
    Rinv = np.linalg.inv(R)
    W = Rinv @ (M.T @ M) @ Rinv
    vals, vecs = np.linalg.eigh(W)
    x = Rinv @ vecs[:, -1]
    g = float(x @ ell.S[0] @ x)
    return x / np.sqrt(g) if g > 0 else x
