"""Shared generators for randomized test instances."""

import numpy as np
import pytest

from ellest import Ellitope, TSet, EstimationProblem
from ellest.rng import stream


def random_psd(rng: np.random.Generator, n: int, rank: int | None = None) -> np.ndarray:
    """Random PSD matrix of the given size, full rank unless rank is set."""
    r = n if rank is None else rank
    G = rng.standard_normal((n, r))
    return G @ G.T / max(r, 1)


def random_tset(rng: np.random.Generator, K: int) -> TSet:
    if K == 1 and rng.random() < 0.5:
        return TSet.unit_segment()
    if rng.random() < 0.5:
        return TSet.unit_box(K)
    p = float(rng.choice([2.0, 4.0]))
    return TSet.pnorm_ball(K, p)


def random_ellitope(rng: np.random.Generator, n: int, K: int) -> Ellitope:
    """Random ellitope with well-conditioned sum of the S_k."""
    S = np.empty((K, n, n))
    for k in range(K):
        S[k] = random_psd(rng, n, rank=max(1, n // 2))
    # ridge keeps the sum positive definite
    S[0] += np.eye(n) * 0.1
    return Ellitope(n, S, random_tset(rng, K))


def random_problem(rng: np.random.Generator, n: int, m: int, nu: int,
                   K: int, sigma: float | None = None) -> EstimationProblem:
    A = rng.standard_normal((m, n)) / np.sqrt(n)
    B = rng.standard_normal((nu, n)) / np.sqrt(n)
    s = float(rng.uniform(0.05, 1.0)) if sigma is None else sigma
    return EstimationProblem(A=A, B=B, sigma=s, ell=random_ellitope(rng, n, K))


@pytest.fixture
def rng():
    return stream(20260819)
