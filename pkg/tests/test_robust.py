"""Robust design under norm-bounded structured perturbations of (A, B):
reduction to the nominal problem at r = 0, domination of every fixed
perturbation, sampled feasibility, and monotonicity in the radius."""

import numpy as np
import pytest

from ellest import (
    Ellitope,
    EstimationProblem,
    SRiskProblem,
    UncertaintyModel,
    build_robust_estimate,
    build_srisk_estimate,
    verify_robust_feasibility,
)
from ellest.rng import stream

ELL1 = Ellitope.ellipsoid(np.array([[1.0]]))
A1 = np.array([[1.0]])
B1 = np.array([[1.0]])
S0 = np.zeros((1, 1))


def nominal_tau() -> float:
    sp = SRiskProblem(EstimationProblem(A1, B1, 1.0, ELL1), S0)
    return build_srisk_estimate(sp).tau


def test_zero_radius_equals_nominal():
    um = UncertaintyModel(A1, B1, np.array([[1.0, 1.0]]), np.array([[1.0]]), 0.0)
    _, _, _, opt = build_robust_estimate(um, 1.0, S0, ELL1)
    assert opt == pytest.approx(nominal_tau(), rel=1e-6)


def test_zero_left_factor_trivial_path():
    um = UncertaintyModel(A1, B1, np.zeros((1, 2)), np.array([[1.0]]), 0.5)
    _, _, mu, opt = build_robust_estimate(um, 1.0, S0, ELL1)
    assert opt == pytest.approx(nominal_tau(), rel=1e-6)
    assert mu == pytest.approx(0.0, abs=1e-9)


def test_robust_dominates_fixed_perturbations():
    um = UncertaintyModel(A1, B1, np.array([[1.0, 1.0]]), np.array([[1.0]]), 0.5)
    Hr, lamr, mur, optr = build_robust_estimate(um, 1.0, S0, ELL1)
    assert optr >= nominal_tau() - 1e-9
    worst = 0.0
    for d in np.linspace(-0.5, 0.5, 11):
        Ad, Bd = um.perturbed(np.array([[d]]))
        vd = build_srisk_estimate(
            SRiskProblem(EstimationProblem(Ad, Bd, 1.0, ELL1), S0)).tau
        worst = max(worst, vd)
    assert worst <= optr + 1e-7


def test_sampled_feasibility():
    um = UncertaintyModel(A1, B1, np.array([[1.0, 1.0]]), np.array([[1.0]]), 0.5)
    Hr, lamr, mur, optr = build_robust_estimate(um, 1.0, S0, ELL1)
    fr = verify_robust_feasibility(Hr, lamr, optr, um, S0, ELL1, N=500, seed=7)
    assert fr == 1.0
    # the nominal design must fail somewhere inside the uncertainty set
    sp = SRiskProblem(EstimationProblem(A1, B1, 1.0, ELL1), S0)
    nom = build_srisk_estimate(sp)
    fn = verify_robust_feasibility(nom.H, nom.lam, nom.tau, um, S0, ELL1,
                                   N=500, seed=7)
    assert fn < 1.0


def test_value_monotone_in_radius():
    prev = -1.0
    for r in np.linspace(0.0, 1.0, 6):
        um = UncertaintyModel(A1, B1, np.array([[1.0, 1.0]]), np.array([[1.0]]), r)
        _, _, _, v = build_robust_estimate(um, 1.0, S0, ELL1)
        assert v >= prev - 1e-7
        prev = v


def test_matrix_instance_with_srisk_and_box():
    rng = stream(51, 0)
    n, m, nu, p, q = 3, 3, 2, 2, 2
    ell = Ellitope.coordinate_box(np.array([1.0, 0.5, 2.0]))
    A = rng.normal(size=(m, n))
    B = rng.normal(size=(nu, n))
    E = rng.normal(size=(p, m + nu)) * 0.3
    F = rng.normal(size=(q, n)) * 0.3
    S = np.diag([0.1, 0.2, 0.05])
    um = UncertaintyModel(A, B, E, F, 0.4)
    H, lam, mu, opt = build_robust_estimate(um, 0.5, S, ell)
    feas = verify_robust_feasibility(H, lam, opt, um, S, ell, N=300, seed=1)
    nom = build_srisk_estimate(SRiskProblem(EstimationProblem(A, B, 0.5, ell), S))
    assert opt >= nom.tau - 1e-8
    assert feas == 1.0


def test_perturbed_respects_structure():
    rng = stream(51, 1)
    m, n, nu, p, q = 3, 2, 2, 2, 2
    A = rng.normal(size=(m, n))
    B = rng.normal(size=(nu, n))
    E = rng.normal(size=(p, m + nu))
    F = rng.normal(size=(q, n))
    um = UncertaintyModel(A, B, E, F, 0.7)
    D = rng.normal(size=(p, q))
    D *= 0.7 / max(np.linalg.norm(D, 2), 1e-12)
    Ad, Bd = um.perturbed(D)
    stacked = np.vstack([Ad - A, Bd - B])
    np.testing.assert_allclose(stacked, np.vstack([E[:, :m].T, E[:, m:].T]) @ D @ F,
                               atol=1e-12)


def test_uncertainty_model_validation():
    with pytest.raises(ValueError):
        UncertaintyModel(A1, B1, np.array([[1.0, 1.0]]), np.array([[1.0]]), -0.1)
    with pytest.raises(ValueError):
        UncertaintyModel(A1, B1, np.array([[1.0]]), np.array([[1.0]]), 0.5)
