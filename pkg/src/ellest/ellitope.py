"""Ellitope signal sets.

An ellitope is a set {x = Py : exists t in T with y'S_k y <= t_k for all k}
where the S_k are PSD with positive-definite sum and T is a monotone compact
convex subset of the nonnegative orthant. The canonical case has P = I.

T is a closed enum of three families (unit segment, unit box, scaled p-norm
ball); every set used by the estimation routines is one of these, and the
closed-form support functions keep the downstream conic programs clean. The
enum is the extension point if more T's are ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import min_eig, psd_sqrt, psd_tolerance, sym
from .solver import Builder, solve

SEGMENT = "unit_segment"
BOX = "unit_box"
PBALL = "pnorm_ball"

_VARIANTS = (SEGMENT, BOX, PBALL)

# p values for which the homogenized cone of T has an exact conic encoding
CONIC_P = (2.0, 4.0)


@dataclass(frozen=True)
class TSet:
    """One of the admissible parameter sets T.

    unit_segment: [0, 1] (K = 1)
    unit_box:     [0, 1]^K
    pnorm_ball:   {t >= 0 : sum_k t_k^(p/2) <= 1}, p >= 2
    """

    variant: str
    K: int
    p: float | None = None

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown TSet variant {self.variant!r}")
        if self.K < 1:
            raise ValueError("K must be positive")
        if self.variant == SEGMENT and self.K != 1:
            raise ValueError("unit segment has K = 1")
        if self.variant == PBALL:
            if self.p is None or self.p < 2:
                raise ValueError("pnorm_ball requires p >= 2")
        elif self.p is not None:
            raise ValueError("p is only meaningful for pnorm_ball")

    @classmethod
    def unit_segment(cls) -> "TSet":
        return cls(SEGMENT, 1)

    @classmethod
    def unit_box(cls, K: int) -> "TSet":
        return cls(BOX, K)

    @classmethod
    def pnorm_ball(cls, K: int, p: float) -> "TSet":
        return cls(PBALL, K, float(p))

    def support(self, lam: np.ndarray) -> float:
        """max_{t in T} lam't for lam >= 0."""
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.K,):
            raise ValueError(f"lam must have length {self.K}")
        if np.any(lam < 0):
            raise ValueError("support function requires lam >= 0")
        if self.variant in (SEGMENT, BOX):
            return float(np.sum(lam))
        # dual norm of ||.||_{p/2} on the nonnegative orthant
        if self.p == 2.0:
            return float(np.max(lam))
        q = self.p / (self.p - 2.0)
        return float(np.sum(lam ** q) ** (1.0 / q))

    def contains(self, t: np.ndarray, tol: float = 1e-9) -> bool:
        """Relative membership test: t/(1+tol) in T."""
        t = np.asarray(t, dtype=float)
        if t.shape != (self.K,):
            raise ValueError(f"t must have length {self.K}")
        if np.any(t < -tol):
            return False
        ts = np.maximum(t, 0.0) / (1.0 + tol)
        if self.variant in (SEGMENT, BOX):
            return bool(np.all(ts <= 1.0))
        return bool(np.sum(ts ** (self.p / 2.0)) <= 1.0)

    def max_sum(self) -> float:
        """max_{t in T} sum_k t_k."""
        if self.variant in (SEGMENT, BOX):
            return float(self.K)
        return float(self.K ** (1.0 - 2.0 / self.p))

    def maximin(self) -> float:
        """max_{t in T} min_k t_k, attained at the symmetric point."""
        if self.variant in (SEGMENT, BOX):
            return 1.0
        return float(self.K ** (-2.0 / self.p))

    def cond(self) -> float:
        """sqrt(max_sum / maximin); 1 for the segment, sqrt(K) otherwise."""
        return float(np.sqrt(self.max_sum() / self.maximin()))

    def boundary_scale(self, g: np.ndarray) -> float:
        """sup{gamma >= 0 : gamma*g in T} for g >= 0 (inf when g = 0)."""
        g = np.maximum(np.asarray(g, dtype=float), 0.0)
        if self.variant in (SEGMENT, BOX):
            load = np.max(g)
        else:
            load = np.sum(g ** (self.p / 2.0)) ** (2.0 / self.p)
        if load <= 0.0:
            return np.inf
        return 1.0 / float(load)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Points of T, (size, K); uniform for box-family, rescaled for balls."""
        u = rng.random((size, self.K))
        if self.variant in (SEGMENT, BOX):
            return u
        nrm = np.sum(u ** (self.p / 2.0), axis=1) ** (2.0 / self.p)
        return u / np.maximum(nrm, 1.0)[:, None]

    def to_json_dict(self) -> dict:
        d = {"variant": self.variant, "K": self.K}
        if self.p is not None:
            d["p"] = self.p
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "TSet":
        if "variant" not in d or "K" not in d:
            raise ValueError("tset descriptor needs 'variant' and 'K'")
        return cls(d["variant"], int(d["K"]), d.get("p"))


def support_function(tset: TSet, lam: np.ndarray) -> float:
    return tset.support(lam)


def add_tset_cone(b: Builder, tset: TSet, t_idx: np.ndarray,
                  tau_idx: int | None = None, tau_const: float = 1.0) -> None:
    """Constrain [t; tau] to the closed cone {tau > 0, t/tau in T}.

    With tau_idx None the scale is the constant tau_const, which gives plain
    membership t in tau_const*T.
    """
    t_idx = np.asarray(t_idx, dtype=int)
    K = tset.K
    if len(t_idx) != K:
        raise ValueError("t_idx length mismatch")
    b.nonneg(t_idx)
    if tset.variant in (SEGMENT, BOX):
        for k in range(K):
            if tau_idx is None:
                b.ineq([t_idx[k]], [1.0], tau_const)
            else:
                b.ineq([t_idx[k], tau_idx], [1.0, -1.0], 0.0)
    elif tset.p == 2.0:
        if tau_idx is None:
            b.ineq(t_idx, np.ones(K), tau_const)
        else:
            b.ineq(np.concatenate([t_idx, [tau_idx]]),
                   np.concatenate([np.ones(K), [-1.0]]), 0.0)
    elif tset.p == 4.0:
        soc = b.soc(K + 1)
        if tau_idx is None:
            soc.set_row(0, [], [], tau_const)
        else:
            soc.set_row(0, [tau_idx], [1.0])
        soc.set_triplets(np.arange(1, K + 1), t_idx, np.ones(K))
    else:
        raise NotImplementedError(
            f"conic encoding of the p-norm ball cone needs p in {CONIC_P}, got p={tset.p}")


def phi_terms(b: Builder, tset: TSet, lam_idx: np.ndarray):
    """Linear terms (cols, vals) whose value dominates phi_T(lam) at any
    feasible point, assuming lam >= 0 is enforced by the caller. Linear for
    segment/box; introduces an epigraph variable for the p-norm ball
    variants (tight at the optimum whenever the terms are minimized)."""
    lam_idx = np.asarray(lam_idx, dtype=int)
    K = tset.K
    if tset.variant in (SEGMENT, BOX):
        return lam_idx, np.ones(K)
    w = b.vars(f"phi_epi_{len(b._table)}", 1)
    if tset.p == 2.0:
        for k in range(K):
            b.ineq([lam_idx[k], w[0]], [1.0, -1.0], 0.0)
    elif tset.p == 4.0:
        soc = b.soc(K + 1)
        soc.set_row(0, [w[0]], [1.0])
        soc.set_triplets(np.arange(1, K + 1), lam_idx, np.ones(K))
    else:
        raise NotImplementedError(
            f"support epigraph needs p in {CONIC_P}, got p={tset.p}")
    return w, np.ones(1)


def add_support_epigraph(b: Builder, tset: TSet, lam_idx: np.ndarray,
                         weight: float = 1.0) -> None:
    """Add weight * phi_T(lam) to the objective of b (lam >= 0 assumed)."""
    cols, vals = phi_terms(b, tset, lam_idx)
    b.objective(cols, weight * vals)


@dataclass(frozen=True)
class Ellitope:
    """Canonical ellitope (P = I): {x : exists t in T, x'S_k x <= t_k}."""

    n: int
    S: np.ndarray                 # (K, n, n), each PSD, sum positive definite
    tset: TSet
    kappa: float = field(init=False)

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        if S.ndim != 3 or S.shape[1] != self.n or S.shape[2] != self.n:
            raise ValueError("S must be (K, n, n)")
        if S.shape[0] != self.tset.K:
            raise ValueError("number of S blocks must equal tset.K")
        object.__setattr__(self, "S", S)
        for k in range(self.K):
            if not np.allclose(S[k], S[k].T, atol=1e-12, rtol=0.0):
                raise ValueError(f"S[{k}] is not symmetric")
            lo = min_eig(S[k])
            if lo < -psd_tolerance(S[k]):
                raise ValueError(f"S[{k}] is not PSD (min eig {lo:.3e})")
        total = S.sum(axis=0)
        kappa = min_eig(total)
        if kappa <= psd_tolerance(total):
            raise ValueError("sum of S_k must be positive definite")
        object.__setattr__(self, "kappa", float(kappa))

    @property
    def K(self) -> int:
        return self.S.shape[0]

    def loads(self, x: np.ndarray) -> np.ndarray:
        """g with g_k = x'S_k x."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"x must have length {self.n}")
        return np.einsum("i,kij,j->k", x, self.S, x)

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return self.tset.contains(self.loads(x), tol)

    def support(self, lam: np.ndarray) -> float:
        return self.tset.support(lam)

    def as_raw(self) -> "RawEllitope":
        return RawEllitope(self, np.eye(self.n))

    def sample(self, rng: np.random.Generator, size: int,
               boundary: bool = True) -> np.ndarray:
        """Random points of the set, scaled to the boundary by default."""
        Y = rng.standard_normal((size, self.n))
        out = np.empty_like(Y)
        for i in range(size):
            g = self.loads(Y[i])
            gam = self.tset.boundary_scale(g)
            c = 0.0 if not np.isfinite(gam) else np.sqrt(gam)
            if not boundary:
                c *= rng.random() ** (1.0 / max(self.n, 1))
            out[i] = c * Y[i]
        return out

    @classmethod
    def ellipsoid(cls, S1: np.ndarray) -> "Ellitope":
        """{x : x'S1 x <= 1} with S1 positive definite."""
        S1 = np.asarray(S1, dtype=float)
        return cls(S1.shape[0], S1[None, :, :], TSet.unit_segment())

    @classmethod
    def coordinate_box(cls, a: np.ndarray) -> "Ellitope":
        """{x : |x_k| <= 1/a_k} via S_k = a_k^2 e_k e_k'."""
        a = np.asarray(a, dtype=float)
        n = len(a)
        S = np.zeros((n, n, n))
        for k in range(n):
            S[k, k, k] = a[k] ** 2
        return cls(n, S, TSet.unit_box(n))


@dataclass(frozen=True)
class RawEllitope:
    """Ellitope with an explicit injection: {P y : y in core set}."""

    core: Ellitope
    P: np.ndarray                 # (n, nbar)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2 or P.shape[1] != self.core.n:
            raise ValueError("P must be (n, nbar) with nbar = core dimension")
        object.__setattr__(self, "P", P)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def nbar(self) -> int:
        return self.P.shape[1]

    def contains(self, x: np.ndarray, tol: float = 1e-7) -> bool:
        """Membership by conic feasibility: exists y with Py = x, y in core.

        Relative tolerance semantics as in Ellitope.contains: the point tested
        is x/(1+tol).
        """
        x = np.asarray(x, dtype=float) / (1.0 + tol)
        if x.shape != (self.n,):
            raise ValueError(f"x must have length {self.n}")
        core = self.core
        b = Builder()
        y = b.vars("y", core.n)
        t = b.vars("t", core.K)
        for r in range(self.n):
            cols = y[np.nonzero(self.P[r])[0]]
            b.eq(cols, self.P[r][np.nonzero(self.P[r])[0]], x[r])
        for k in range(core.K):
            L = psd_sqrt(core.S[k])
            keep = np.where(np.linalg.norm(L, axis=1) > 1e-14)[0]
            L = L[keep]
            soc = b.soc(2 + L.shape[0])
            soc.set_row(0, [t[k]], [1.0], 1.0)          # t_k + 1
            soc.set_row(1, [t[k]], [1.0], -1.0)         # t_k - 1
            rows, cols = np.nonzero(L)
            soc.set_triplets(rows + 2, y[cols], 2.0 * L[rows, cols])
        add_tset_cone(b, core.tset, t)
        sol = solve(b.build(), tol_gap=1e-7, tol_feas=1e-8)
        return sol.status == "optimal"


def canonicalize(raw: RawEllitope, A: np.ndarray, B: np.ndarray):
    """Push the injection into the problem data: estimate B(Py) from A(Py)y.

    Returns (core ellitope, A P, B P); risks are unchanged by construction.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[1] != raw.n or B.shape[1] != raw.n:
        raise ValueError("A and B must act on the ambient space of the raw ellitope")
    return raw.core, A @ raw.P, B @ raw.P


def _as_raw(op) -> RawEllitope:
    if isinstance(op, Ellitope):
        return op.as_raw()
    if isinstance(op, RawEllitope):
        return op
    raise TypeError("operands must be Ellitope or RawEllitope")


def _product_tset(tsets: list[TSet]) -> TSet:
    # products stay inside the closed three-variant family only for the
    # box-like members; a pnorm factor has no box-family product form
    for ts in tsets:
        if ts.variant == PBALL:
            raise NotImplementedError(
                "products of parameter sets are supported for segment/box factors only")
    K = sum(ts.K for ts in tsets)
    return TSet.unit_segment() if K == 1 else TSet.unit_box(K)


def _stacked_blocks(raws: list[RawEllitope]):
    """Block-embedded S list over the stacked lifted space, plus offsets."""
    dims = [r.nbar for r in raws]
    total = sum(dims)
    offs = np.cumsum([0] + dims)
    S_all = []
    for i, r in enumerate(raws):
        lo = offs[i]
        for k in range(r.core.K):
            Sk = np.zeros((total, total))
            Sk[lo:lo + dims[i], lo:lo + dims[i]] = r.core.S[k]
            S_all.append(Sk)
    return np.array(S_all), offs, total


def _restrict(S_all: np.ndarray, P: np.ndarray, N: np.ndarray,
              tset: TSet) -> RawEllitope:
    """Restrict a stacked representation to the subspace y = N z."""
    S_new = np.einsum("ia,kij,jb->kab", N, S_all, N)
    S_new = np.array([sym(Sk) for Sk in S_new])
    core = Ellitope(N.shape[1], S_new, tset)
    return RawEllitope(core, P @ N)


def intersect(ops: list) -> RawEllitope:
    """Intersection; all operands must share the ambient dimension."""
    raws = [_as_raw(o) for o in ops]
    if not raws:
        raise ValueError("empty operand list")
    if len({r.n for r in raws}) != 1:
        raise ValueError("ambient dimension mismatch")
    if len(raws) == 1:
        return raws[0]
    S_all, offs, total = _stacked_blocks(raws)
    n = raws[0].n
    # coupling rows P_i y^i = P_1 y^1, i >= 2
    C = np.zeros(((len(raws) - 1) * n, total))
    for i in range(1, len(raws)):
        rows = slice((i - 1) * n, i * n)
        C[rows, offs[0]:offs[1]] = raws[0].P
        C[rows, offs[i]:offs[i + 1]] -= raws[i].P
    N = _nullspace(C)
    P_first = np.zeros((n, total))
    P_first[:, offs[0]:offs[1]] = raws[0].P
    tset = _product_tset([r.core.tset for r in raws])
    return _restrict(S_all, P_first, N, tset)


def direct_product(ops: list) -> RawEllitope:
    raws = [_as_raw(o) for o in ops]
    if not raws:
        raise ValueError("empty operand list")
    S_all, offs, total = _stacked_blocks(raws)
    n_out = sum(r.n for r in raws)
    P = np.zeros((n_out, total))
    row = 0
    for i, r in enumerate(raws):
        P[row:row + r.n, offs[i]:offs[i + 1]] = r.P
        row += r.n
    tset = _product_tset([r.core.tset for r in raws])
    core = Ellitope(total, S_all, tset)
    return RawEllitope(core, P)


def linear_image(op, R: np.ndarray) -> RawEllitope:
    raw = _as_raw(op)
    R = np.asarray(R, dtype=float)
    if R.shape[1] != raw.n:
        raise ValueError("R must act on the ambient space")
    return RawEllitope(raw.core, R @ raw.P)


def inverse_image(op, R: np.ndarray) -> RawEllitope:
    """{z : Rz in X} for injective R."""
    raw = _as_raw(op)
    R = np.asarray(R, dtype=float)
    if R.shape[0] != raw.n:
        raise ValueError("R must map into the ambient space")
    if np.linalg.matrix_rank(R) < R.shape[1]:
        raise ValueError("inverse image requires R with trivial kernel")
    Rpinv = np.linalg.pinv(R)
    # subspace of lifted points whose image lands in Im R
    proj_out = (np.eye(raw.n) - R @ Rpinv) @ raw.P
    N = _nullspace(proj_out)
    S_all = raw.core.S
    return _restrict(S_all, Rpinv @ raw.P, N, raw.core.tset)


def minkowski_sum(ops: list) -> RawEllitope:
    raws = [_as_raw(o) for o in ops]
    if not raws:
        raise ValueError("empty operand list")
    if len({r.n for r in raws}) != 1:
        raise ValueError("ambient dimension mismatch")
    S_all, offs, total = _stacked_blocks(raws)
    P = np.hstack([r.P for r in raws])
    tset = _product_tset([r.core.tset for r in raws])
    core = Ellitope(total, S_all, tset)
    return RawEllitope(core, P)


def _nullspace(C: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ker C (the full space when C has no rows)."""
    if C.shape[0] == 0:
        return np.eye(C.shape[1])
    u, s, vt = np.linalg.svd(C, full_matrices=True)
    tol = max(C.shape) * np.finfo(float).eps * (s[0] if len(s) else 1.0)
    rank = int(np.sum(s > tol))
    N = vt[rank:].T
    if N.shape[1] == 0:
        raise ValueError("coupling constraints leave only the origin")
    return N
