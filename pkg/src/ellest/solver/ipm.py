"""Dense primal-dual interior-point engine for cone programs.

Solves the pair

    minimize  c'x                      maximize  -h'z - b'y
    s.t.      Gx + s = h, s in K       s.t.      G'z + A'y + c = 0, z in K
              Ax = b

over K = R_+^l x SOC(q_i) x PSD(s_j), via the homogeneous self-dual embedding
with Nesterov-Todd scaling and a Mehrotra predictor-corrector. Infeasible
problems terminate with a Farkas-type certificate instead of a solution:

  * primal infeasible: (y, z) with z in K*, A'y + G'z = 0, b'y + h'z = -1;
  * dual infeasible (primal unbounded direction): x with Ax = 0,
    Gx + s = 0 for some s in K, c'x = -1.

Everything is dense; problem sizes in this package stay modest by design.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .cones import ConeDims, Scaling, cone_margin, jordan_mul, max_step

STEP_FRACTION = 0.99


@dataclass
class EngineResult:
    status: str                      # optimal | primal_infeasible | dual_infeasible | max_iter
    x: np.ndarray | None
    y: np.ndarray | None
    z: np.ndarray | None
    s: np.ndarray | None
    pobj: float = np.nan
    dobj: float = np.nan
    gap: float = np.nan
    relgap: float = np.nan
    pres: float = np.nan
    dres: float = np.nan
    iterations: int = 0
    message: str = ""
    tau: float = np.nan
    kappa: float = np.nan

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


class _KKT:
    """Factor the scaled KKT saddle system once per iteration."""

    def __init__(self, G, A, scaling: Scaling):
        self.G = G
        self.A = A
        self.scaling = scaling
        self.Gs = scaling.scale_G(G)          # W^{-T} G
        d = G.shape[1]
        p = A.shape[0]
        H = self.Gs.T @ self.Gs
        M = np.zeros((d + p, d + p))
        M[:d, :d] = H
        if p:
            M[:d, d:] = A.T
            M[d:, :d] = A
        self.d, self.p = d, p
        self._factor(M)

    def _factor(self, M):
        d, p = self.d, self.p
        scale = max(np.abs(M).max(), 1.0)
        for reg in (0.0, 1e-12, 1e-9, 1e-6):
            Mr = M.copy()
            if reg:
                Mr[:d, :d] += reg * scale * np.eye(d)
                if p:
                    Mr[d:, d:] -= reg * scale * np.eye(p)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                    self.lu = scipy.linalg.lu_factor(Mr)
                # lu_factor tolerates exact singularity; probe it.
                if not np.all(np.isfinite(self.lu[0])) or np.abs(np.diag(self.lu[0])).min() < 1e-300:
                    continue
                return
            except (scipy.linalg.LinAlgError, ValueError):
                continue
        raise np.linalg.LinAlgError("KKT system is singular")

    def _solve_once(self, bx, by, bz):
        W = self.scaling
        bz_s = W.apply_Winvt(bz)
        rhs = np.concatenate([bx + self.Gs.T @ bz_s, by])
        sol = scipy.linalg.lu_solve(self.lu, rhs)
        u, v = sol[:self.d], sol[self.d:]
        w = W.apply_Winv(self.Gs @ u - bz_s)
        return u, v, w

    def solve3(self, bx, by, bz, refine: int = 1):
        """Solve [0 A' G'; A 0 0; G 0 -W'W] (u,v,w) = (bx,by,bz)."""
        W = self.scaling
        u, v, w = self._solve_once(bx, by, bz)
        for _ in range(refine):
            r1 = bx - (self.A.T @ v + self.G.T @ w)
            r2 = by - self.A @ u
            r3 = bz - (self.G @ u - W.apply_Wt(W.apply_W(w)))
            du, dv, dw = self._solve_once(r1, r2, r3)
            u, v, w = u + du, v + dv, w + dw
        return u, v, w


def conelp(
    c: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    dims: ConeDims,
    A: np.ndarray | None = None,
    b: np.ndarray | None = None,
    *,
    tol_gap: float = 1e-8,
    tol_feas: float = 1e-8,
    max_iter: int = 200,
    verbose: bool = False,
) -> EngineResult:
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    d = c.shape[0]
    if A is None:
        A = np.zeros((0, d))
        b = np.zeros(0)
    A = np.asarray(A, dtype=float).reshape(-1, d)
    b = np.asarray(b, dtype=float).reshape(-1)
    if G.shape != (dims.cone_len, d):
        raise ValueError(f"G has shape {G.shape}, expected {(dims.cone_len, d)}")
    if d == 0:
        raise ValueError("problem has no variables")

    deg = dims.degree
    e = dims.identity()
    norm_b = max(1.0, np.linalg.norm(b))
    norm_h = max(1.0, np.linalg.norm(h))
    norm_c = max(1.0, np.linalg.norm(c))

    # Starting point: least-norm primal/dual estimates pushed into the cone.
    kkt = _KKT(G, A, Scaling.identity(dims))
    x, _, w0 = kkt.solve3(np.zeros(d), b.copy(), h.copy())
    s = -w0
    m = cone_margin(dims, s)
    if m <= 0:
        s = s + (1.0 - m) * e
    _, y, z = kkt.solve3(-c, np.zeros(A.shape[0]), np.zeros(dims.cone_len))
    m = cone_margin(dims, z)
    if m <= 0:
        z = z + (1.0 - m) * e
    tau, kappa = 1.0, 1.0

    best = None
    stall = 0
    if verbose:
        print(" it        pobj        dobj       gap     pres     dres")

    for it in range(max_iter + 1):
        # Residuals of the embedding.
        rx = A.T @ y + G.T @ z + c * tau
        ry = A @ x - b * tau
        rz = G @ x + s - h * tau
        rt = kappa + c @ x + b @ y + h @ z

        # Unscaled candidate and its metrics.
        xs, ys, zs, ss = x / tau, y / tau, z / tau, s / tau
        pobj = float(c @ xs)
        dobj = float(-(b @ ys + h @ zs))
        gap = float(ss @ zs)
        relgap = gap / max(1.0, abs(pobj), abs(dobj))
        pres = max(
            np.linalg.norm(A @ xs - b) / norm_b,
            np.linalg.norm(G @ xs + ss - h) / norm_h,
        )
        dres = np.linalg.norm(A.T @ ys + G.T @ zs + c) / norm_c
        if verbose:
            print(f"{it:3d}  {pobj:10.3e}  {dobj:10.3e}  {gap:8.1e} {pres:8.1e} {dres:8.1e}")

        metric = max(pres, dres, relgap)
        if best is None or metric < best[0]:
            best = (metric, xs.copy(), ys.copy(), zs.copy(), ss.copy(),
                    pobj, dobj, gap, relgap, pres, dres, tau, kappa)

        if pres <= tol_feas and dres <= tol_feas and relgap <= tol_gap:
            return EngineResult("optimal", xs, ys, zs, ss, pobj, dobj, gap, relgap,
                                pres, dres, it, "converged", tau, kappa)

        # Farkas certificate checks.
        by_hz = b @ y + h @ z
        if by_hz < 0:
            t = -1.0 / by_hz
            cert_res = np.linalg.norm(A.T @ (t * y) + G.T @ (t * z))
            if cert_res <= tol_feas * norm_c:
                return EngineResult("primal_infeasible", None, t * y, t * z, None,
                                    np.nan, np.nan, np.nan, np.nan, cert_res, np.nan,
                                    it, "primal infeasibility certificate found", tau, kappa)
        cx = c @ x
        if cx < 0:
            t = -1.0 / cx
            res1 = np.linalg.norm(A @ (t * x))
            res2 = np.linalg.norm(G @ (t * x) + t * s)
            if res1 <= tol_feas * norm_b and res2 <= tol_feas * norm_h:
                return EngineResult("dual_infeasible", t * x, None, None, t * s,
                                    np.nan, np.nan, np.nan, np.nan, max(res1, res2), np.nan,
                                    it, "dual infeasibility certificate found", tau, kappa)

        def finish(msg: str) -> EngineResult:
            # Degenerate programs can stall short of full accuracy; accept the
            # best iterate when it clears a 100x-relaxed threshold.
            (metric_b, xs_b, ys_b, zs_b, ss_b, pobj_b, dobj_b, gap_b, relgap_b,
             pres_b, dres_b, tau_b, kappa_b) = best
            loose = (pres_b <= 100 * tol_feas and dres_b <= 100 * tol_feas
                     and relgap_b <= 100 * tol_gap)
            status = "optimal" if loose else "max_iter"
            if loose:
                msg = f"converged at reduced accuracy ({msg})"
            return EngineResult(status, xs_b, ys_b, zs_b, ss_b, pobj_b, dobj_b,
                                gap_b, relgap_b, pres_b, dres_b, it, msg,
                                tau_b, kappa_b)

        if it == max_iter or stall >= 3:
            return finish("stalled" if stall >= 3 else "iteration limit reached")

        mu = (s @ z + tau * kappa) / (deg + 1)

        try:
            scaling = Scaling.compute(dims, s, z)
            kkt = _KKT(G, A, scaling)

            x1, y1, z1 = kkt.solve3(-c, b.copy(), h.copy())
            den = c @ x1 + b @ y1 + h @ z1 - kappa / tau
            if not np.isfinite(den) or den >= -1e-300:
                den = -max(1e-300, abs(den))

            lam = scaling.lam

            def newton(dst, dkt, eta):
                bz2 = -eta * rz - scaling.apply_Wt(scaling.lam_div(dst))
                x2, y2, z2 = kkt.solve3(-eta * rx, -eta * ry, bz2)
                dtau = (-eta * rt - dkt / tau - (c @ x2 + b @ y2 + h @ z2)) / den
                dx = x2 + dtau * x1
                dy = y2 + dtau * y1
                dz = z2 + dtau * z1
                ds = scaling.apply_Wt(scaling.lam_div(dst)) - scaling.apply_Wt(scaling.apply_W(dz))
                dkap = (dkt - kappa * dtau) / tau
                return dx, dy, dz, ds, dtau, dkap

            # Predictor.
            dst_aff = -jordan_mul(dims, lam, lam)
            dx, dy, dz, ds, dtau, dkap = newton(dst_aff, -tau * kappa, 1.0)
            alpha_aff = _step_length(dims, s, z, tau, kappa, ds, dz, dtau, dkap, cap=1.0)
            mu_aff = ((s + alpha_aff * ds) @ (z + alpha_aff * dz)
                      + (tau + alpha_aff * dtau) * (kappa + alpha_aff * dkap)) / (deg + 1)
            sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

            # Corrector.
            corr = jordan_mul(dims, scaling.apply_Winvt(ds), scaling.apply_W(dz))
            dst = dst_aff - corr + sigma * mu * e
            dkt = -tau * kappa - dtau * dkap + sigma * mu
            dx, dy, dz, ds, dtau, dkap = newton(dst, dkt, 1.0 - sigma)

            alpha = STEP_FRACTION * _step_length(dims, s, z, tau, kappa, ds, dz, dtau, dkap,
                                                 cap=1.0 / STEP_FRACTION)
        except (np.linalg.LinAlgError, ValueError):
            # boundary/overflow wreckage in the scaling or the KKT solves
            return finish("numerical breakdown in step computation")
        if not np.isfinite(alpha):
            return finish("nonfinite step length")
        if alpha < 1e-10:
            stall += 3
        elif alpha < 1e-5:
            stall += 1
        else:
            stall = 0

        x += alpha * dx
        y += alpha * dy
        z += alpha * dz
        s += alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkap

    raise AssertionError("unreachable")


def _step_length(dims, s, z, tau, kappa, ds, dz, dtau, dkap, cap=1.0):
    alpha = cap
    alpha = min(alpha, max_step(dims, s, ds))
    alpha = min(alpha, max_step(dims, z, dz))
    if dtau < 0:
        alpha = min(alpha, tau / -dtau)
    if dkap < 0:
        alpha = min(alpha, kappa / -dkap)
    return min(alpha, cap)
