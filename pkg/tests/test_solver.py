"""Conic engine: hand-checkable programs, random LPs against scipy,
infeasibility certificates, and the Builder front end."""

import numpy as np
import pytest
from scipy.optimize import linprog

from ellest.linalg import svec
from ellest.rng import stream
from ellest.solver import Builder, SolverError, solve, solve_or_raise
from ellest.solver.cones import ConeDims
from ellest.solver.ipm import conelp


def test_lp_simplex_corner():
    # min -x1-x2 s.t. x1+x2 <= 1, x >= 0  ->  -1
    c = np.array([-1.0, -1.0])
    G = np.vstack([np.array([[1.0, 1.0]]), -np.eye(2)])
    h = np.array([1.0, 0.0, 0.0])
    res = conelp(c, G, h, ConeDims(l=3))
    assert res.status == "optimal"
    assert abs(res.pobj + 1.0) < 1e-7
    assert res.gap < 1e-7


def test_sdp_smallest_diagonal():
    # min u s.t. [[u, 3], [3, u]] >= 0  ->  3
    c = np.array([1.0])
    G = -svec(np.eye(2)).reshape(-1, 1)
    h = svec(np.array([[0.0, 3.0], [3.0, 0.0]]))
    res = conelp(c, G, h, ConeDims(s=(2,)))
    assert res.status == "optimal"
    assert abs(res.pobj - 3.0) < 1e-6


def test_soc_distance_with_equalities():
    # min t s.t. (t, x - a) in SOC, x = 0  ->  ||a|| = 5
    c = np.array([1.0, 0.0, 0.0])
    G = -np.eye(3)
    h = np.array([0.0, -3.0, -4.0])
    A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    b = np.zeros(2)
    res = conelp(c, G, h, ConeDims(q=(3,)), A, b)
    assert res.status == "optimal"
    assert abs(res.pobj - 5.0) < 1e-6


def test_random_lps_match_linprog():
    rng = stream(7, 1)
    matched = 0
    for k in range(25):
        n = int(rng.integers(2, 10))
        m = int(rng.integers(2, 10))
        Al = rng.normal(size=(m, n))
        xf = rng.uniform(0.5, 1.5, size=n)
        bl = Al @ xf + rng.uniform(0.1, 1.0, size=m)
        cl = rng.normal(size=n)
        ref = linprog(cl, A_ub=Al, b_ub=bl, bounds=[(0, 10)] * n, method="highs")
        if ref.status != 0:
            continue
        G = np.vstack([Al, -np.eye(n), np.eye(n)])
        h = np.concatenate([bl, np.zeros(n), 10.0 * np.ones(n)])
        res = conelp(cl, G, h, ConeDims(l=G.shape[0]))
        assert res.status == "optimal", (k, res.status, res.message)
        assert abs(res.pobj - ref.fun) < 1e-5 * (1 + abs(ref.fun)), (k, res.pobj, ref.fun)
        matched += 1
    assert matched >= 20


def test_primal_infeasible_certificate():
    # x >= 1 together with x <= 0 is infeasible
    c = np.array([1.0])
    G = np.array([[-1.0], [1.0]])
    h = np.array([-1.0, 0.0])
    res = conelp(c, G, h, ConeDims(l=2))
    assert res.status == "primal_infeasible"
    # Farkas: z >= 0 in the dual cone, G'z = 0, h'z = -1 after normalization
    z = res.z
    assert np.all(z >= -1e-9)
    assert float(np.abs(G.T @ z).max()) < 1e-6
    assert abs(float(h @ z) + 1.0) < 1e-9


def test_dual_infeasible_ray():
    # min -x with only x >= 0 is unbounded below
    c = np.array([-1.0])
    G = np.array([[-1.0]])
    h = np.array([0.0])
    res = conelp(c, G, h, ConeDims(l=1))
    assert res.status == "dual_infeasible"
    x = res.x
    assert abs(float(c @ x) + 1.0) < 1e-9
    assert float((G @ x)[0]) <= 1e-9


def test_sdp_trace_maximization():
    # max Tr(Q) s.t. Tr(diag(1,4) Q) <= 1, Q >= 0  ->  1 (all mass on Q_11)
    S1 = np.diag([1.0, 4.0])
    c = -svec(np.eye(2))
    G = np.vstack([svec(S1), -np.eye(3)])
    h = np.array([1.0, 0.0, 0.0, 0.0])
    res = conelp(c, G, h, ConeDims(l=1, s=(2,)))
    assert res.status == "optimal"
    assert abs(-res.pobj - 1.0) < 1e-6


@pytest.mark.parametrize("sigma", [0.1, 1.0, 10.0])
def test_mixed_soc_psd_scalar_design(sigma):
    # min sigma^2 u + lam s.t. (1-h)^2 <= lam (LMI), h^2 <= u (SOC)
    # optimum sigma^2 / (1 + sigma^2)
    c = np.array([0.0, 1.0, sigma ** 2])
    Glmi = np.zeros((3, 3))
    Glmi[:, 0] = -svec(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    Glmi[:, 1] = -svec(np.array([[1.0, 0.0], [0.0, 0.0]]))
    hlmi = svec(np.array([[0.0, 1.0], [1.0, 1.0]]))
    Gsoc = np.zeros((3, 3))
    Gsoc[0, 2] = -1.0
    Gsoc[1, 0] = -2.0
    Gsoc[2, 2] = -1.0
    hsoc = np.array([1.0, 0.0, -1.0])
    G = np.vstack([Gsoc, Glmi])
    h = np.concatenate([hsoc, hlmi])
    res = conelp(c, G, h, ConeDims(q=(3,), s=(2,)))
    expect = sigma ** 2 / (1.0 + sigma ** 2)
    assert res.status == "optimal"
    assert abs(res.pobj - expect) < 1e-7


def test_builder_lp_roundtrip():
    b = Builder()
    x = b.vars("x", 2)
    b.objective(x, [-1.0, -1.0])
    b.ineq(x, [1.0, 1.0], 1.0)
    b.nonneg(x)
    prog = b.build()
    sol = solve_or_raise(prog)
    assert abs(sol.objective + 1.0) < 1e-7
    xv = sol.var(prog, "x")
    assert abs(float(np.sum(xv)) - 1.0) < 1e-6


def test_builder_named_variable_extraction():
    b = Builder()
    u = b.vars("u", 1)
    v = b.vars("v", 2)
    b.objective(u, [1.0])
    b.eq(v, [1.0, 1.0], 2.0)
    b.ineq([v[0], u[0]], [1.0, -1.0], 0.0)   # v0 <= u
    b.ineq([v[1], u[0]], [1.0, -1.0], 0.0)   # v1 <= u
    b.nonneg(v)
    prog = b.build()
    sol = solve_or_raise(prog)
    assert abs(sol.objective - 1.0) < 1e-6
    uv = sol.var(prog, "u")
    vv = sol.var(prog, "v")
    assert uv.shape == (1,) and vv.shape == (2,)
    assert abs(float(vv.sum()) - 2.0) < 1e-6


def test_solve_or_raise_on_infeasible():
    b = Builder()
    x = b.vars("x", 1)
    b.objective(x, [1.0])
    b.ineq(x, [1.0], 0.0)    # x <= 0
    b.ineq(x, [-1.0], -1.0)  # x >= 1
    with pytest.raises(SolverError):
        solve_or_raise(b.build())
    sol = solve(b.build())
    assert sol.status == "primal_infeasible"


def test_random_conic_duality(rng):
    # random mixed-cone programs: strong duality and residual quality
    checked = 0
    for k in range(12):
        sub = stream(11, k)
        n = int(sub.integers(2, 7))
        b = Builder()
        x = b.vars("x", n)
        b.objective(x, sub.normal(size=n))
        b.nonneg(x)
        for _ in range(int(sub.integers(1, 4))):
            cols = np.arange(n)
            b.ineq(x[cols], sub.uniform(0.1, 1.0, size=n), float(sub.uniform(1.0, 3.0)))
        if n >= 3:
            soc = b.soc(3)
            soc.set_row(0, [x[0]], [1.0], 1.0)
            soc.set_row(1, [x[1]], [1.0])
            soc.set_row(2, [x[2]], [1.0])
        sol = solve(b.build())
        if sol.status != "optimal":
            continue
        assert sol.relgap <= 1e-6, (k, sol.relgap)
        assert sol.residuals["primal"] <= 1e-6
        assert sol.residuals["dual"] <= 1e-6
        checked += 1
    assert checked >= 8
