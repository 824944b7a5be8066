"""Relative risk with the (1 + x'Sx) normalization: design values,
duality against the Bayesian dual, whole-space closed forms, and the
bisection search over the normalizing matrix."""

import math

import numpy as np
import pytest

from ellest import (
    Ellitope,
    EstimationProblem,
    SRiskProblem,
    TSet,
    build_linear_estimate,
    build_srisk_estimate,
    optimize_S_bisection,
    solve_bayesian_sdp,
    srisk_lower_bound,
    whole_space_estimate,
)
from ellest.rng import stream

ELL1 = Ellitope.ellipsoid(np.array([[1.0]]))
A1 = np.array([[1.0]])
B1 = np.array([[1.0]])


def test_zero_s_reduces_to_plain_design():
    prob = EstimationProblem(A1, B1, 1.0, ELL1)
    sp = SRiskProblem(prob, np.zeros((1, 1)))
    est = build_srisk_estimate(sp)
    plain = build_linear_estimate(prob)
    assert est.tau == pytest.approx(plain.opt, rel=1e-7)


def test_scalar_unit_s_closed_form():
    # min over h of max_x [(1-h)^2 x^2 + sigma^2 h^2] / (1 + x^2) with
    # x free over [-1, 1] and S = 1: optimum tau = 1/4 at h = 1/2
    sp = SRiskProblem(EstimationProblem(A1, B1, 1.0, ELL1), np.eye(1))
    est = build_srisk_estimate(sp)
    assert est.tau == pytest.approx(0.25, rel=1e-6)
    assert float(est.H[0, 0]) == pytest.approx(0.5, abs=1e-4)
    assert est.srisk_bound == pytest.approx(0.5, rel=1e-6)


def test_tau_decreases_in_s():
    prob = EstimationProblem(A1, B1, 1.0, ELL1)
    tau1 = build_srisk_estimate(SRiskProblem(prob, np.eye(1))).tau
    tau100 = build_srisk_estimate(SRiskProblem(prob, 100.0 * np.eye(1))).tau
    assert tau100 < tau1


def test_scalar_lower_bound_sandwich():
    sp = SRiskProblem(EstimationProblem(A1, B1, 1.0, ELL1), np.eye(1))
    est = build_srisk_estimate(sp)
    rep = srisk_lower_bound(sp, tau=est.tau)
    assert 0 < rep.lb <= est.srisk_bound + 1e-9
    assert 0 < rep.details["s"] < 1.0


def test_zero_s_dual_equals_bayesian():
    prob = EstimationProblem(A1, B1, 1.0, ELL1)
    sp = SRiskProblem(prob, np.zeros((1, 1)))
    est = build_srisk_estimate(sp)
    rep = srisk_lower_bound(sp, tau=est.tau)
    bs = solve_bayesian_sdp(prob)
    assert rep.details["opt_star"] == pytest.approx(bs.opt_star, rel=1e-6)


def test_whole_space_scalar_closed_forms():
    ws = whole_space_estimate(A1, B1, 1.0, np.eye(1))
    assert ws.tau == pytest.approx(0.25, rel=1e-6)
    assert float(ws.H[0, 0]) == pytest.approx(0.5, abs=1e-4)
    # no observation: the best guess is 0, and sup_x x^2/(1+x^2) = 1
    ws0 = whole_space_estimate(np.array([[0.0]]), B1, 1.0, np.eye(1))
    assert ws0.tau == pytest.approx(1.0, rel=1e-6)
    assert float(ws0.H[0, 0]) == pytest.approx(0.0, abs=1e-4)


def test_whole_space_vs_ellipsoid_sandwich():
    # over the ellipsoid {x'Sx <= 1} the plain minimax risk is between the
    # whole-space relative risk and sqrt(2) times it
    for trial in range(4):
        rng = stream(41, trial)
        n, m, nu = 4, 3, 2
        A = rng.normal(size=(m, n))
        B = rng.normal(size=(nu, n))
        G = rng.normal(size=(n, n))
        S = G.T @ G + 0.2 * np.eye(n)
        wse = whole_space_estimate(A, B, 0.6, S)
        est = build_linear_estimate(
            EstimationProblem(A, B, 0.6, Ellitope.ellipsoid(S)))
        assert wse.srisk_bound <= est.risk_bound + 1e-7
        assert est.risk_bound <= math.sqrt(2.0) * wse.srisk_bound + 1e-7


def test_duality_random_tsets():
    for trial in range(4):
        rng = stream(42, trial)
        n, m, nu, K = 3, 3, 2, 2
        A = rng.normal(size=(m, n))
        B = rng.normal(size=(nu, n))
        Ss = np.zeros((K, n, n))
        for k in range(K):
            Gk = rng.normal(size=(n, 2))
            Ss[k] = Gk @ Gk.T
        Ss[0] += 0.3 * np.eye(n)
        tset = [TSet.unit_box(K), TSet.pnorm_ball(K, 4.0)][trial % 2]
        ell = Ellitope(n, Ss, tset)
        G = rng.normal(size=(n, n))
        S = 0.5 * (G.T @ G) / n
        sp = SRiskProblem(EstimationProblem(A, B, 0.5, ell), S)
        est = build_srisk_estimate(sp)
        rep = srisk_lower_bound(sp, tau=est.tau)
        assert rep.lb <= est.srisk_bound + 1e-9
        assert rep.details["opt_star"] > 0


def test_bisection_scalar_oracle():
    # over trace_cap = 1 the optimal normalization is S = 1 with tau = 1/4
    S_star, H_star, tau_star = optimize_S_bisection(
        A1, B1, 1.0, trace_cap=1.0, tol_tau=1e-5)
    assert tau_star == pytest.approx(0.25, rel=1e-3)
    assert float(S_star[0, 0]) == pytest.approx(1.0, rel=1e-2)
    assert float(H_star[0, 0]) == pytest.approx(0.5, abs=1e-2)


def test_srisk_validation():
    prob = EstimationProblem(A1, B1, 1.0, ELL1)
    with pytest.raises(ValueError):
        SRiskProblem(prob, np.eye(2))            # S shape mismatch
    with pytest.raises(ValueError):
        SRiskProblem(prob, -np.eye(1))           # S not PSD
