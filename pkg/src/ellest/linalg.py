"""Small dense linear-algebra helpers shared across the package.

Symmetric matrices travel through the conic machinery in scaled-vector (svec)
form: the upper triangle in column-major order with off-diagonal entries
multiplied by sqrt(2), so that <svec(X), svec(Y)> = Tr(X Y).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

SQRT2 = float(np.sqrt(2.0))


def svec_len(n: int) -> int:
    return n * (n + 1) // 2


@lru_cache(maxsize=None)
def _tri_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    # Upper triangle, column-major: (0,0), (0,1), (1,1), (0,2), ...
    cols, rows = [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    return np.asarray(rows), np.asarray(cols)


@lru_cache(maxsize=None)
def _svec_scale(n: int) -> np.ndarray:
    rows, cols = _tri_indices(n)
    scale = np.where(rows == cols, 1.0, SQRT2)
    return scale


def svec(M: np.ndarray) -> np.ndarray:
    n = M.shape[0]
    rows, cols = _tri_indices(n)
    return M[rows, cols] * _svec_scale(n)


def smat(v: np.ndarray, n: int) -> np.ndarray:
    rows, cols = _tri_indices(n)
    vals = v / _svec_scale(n)
    M = np.zeros((n, n))
    M[rows, cols] = vals
    M[cols, rows] = vals
    return M


def svec_batch(Ms: np.ndarray) -> np.ndarray:
    """svec applied along the first axis of a (k, n, n) stack."""
    n = Ms.shape[-1]
    rows, cols = _tri_indices(n)
    return Ms[:, rows, cols] * _svec_scale(n)[None, :]


def smat_batch(V: np.ndarray, n: int) -> np.ndarray:
    """Inverse of svec_batch: (k, svec_len(n)) -> (k, n, n)."""
    rows, cols = _tri_indices(n)
    vals = V / _svec_scale(n)[None, :]
    out = np.zeros((V.shape[0], n, n))
    out[:, rows, cols] = vals
    out[:, cols, rows] = vals
    return out


def svec_index(i: int, j: int, n: int) -> int:
    """Position of symmetric entry (i, j), i <= j, in the svec vector."""
    if i > j:
        i, j = j, i
    return j * (j + 1) // 2 + i


def sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def psd_tolerance(M: np.ndarray, scale: float = 1e-9) -> float:
    """Default PSD slack: relative in the trace, per the library convention."""
    return scale * (1.0 + abs(float(np.trace(M))))


def assert_psd(M: np.ndarray, name: str = "matrix", tol: float | None = None) -> None:
    M = np.asarray(M, dtype=float)
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-10 * (1 + np.abs(M).max(initial=0.0))):
        raise ValueError(f"{name} must be symmetric")
    if tol is None:
        tol = psd_tolerance(M)
    w = np.linalg.eigvalsh(sym(M))
    if w.min(initial=0.0) < -tol:
        raise ValueError(f"{name} is not positive semidefinite (min eig {w.min():.3e}, tol {tol:.3e})")


def min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(sym(M)).min())


def psd_sqrt(M: np.ndarray, clip: float = 0.0) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clipped at `clip`."""
    w, V = np.linalg.eigh(sym(M))
    w = np.clip(w, clip, None)
    return (V * np.sqrt(w)) @ V.T


def safe_cholesky(M: np.ndarray, jitter: float = 0.0, max_tries: int = 5) -> np.ndarray:
    """Cholesky with escalating diagonal jitter. Raises after max_tries."""
    M = sym(np.asarray(M, dtype=float))
    scale = max(float(np.trace(M)) / max(M.shape[0], 1), 1e-300)
    eps = jitter
    for _ in range(max_tries):
        try:
            return np.linalg.cholesky(M if eps == 0.0 else M + eps * np.eye(M.shape[0]))
        except np.linalg.LinAlgError:
            eps = max(eps * 100.0, scale * 1e-14)
    raise np.linalg.LinAlgError("matrix not positive definite even with jitter")


def congruence_svec_map(V: np.ndarray) -> np.ndarray:
    """Matrix Mmap with svec(V smat(q) V') = Mmap @ q for every svec vector q.

    Shape (svec_len(V.shape[0]), svec_len(V.shape[1])).
    """
    V = np.asarray(V, dtype=float)
    ai, bi = _tri_indices(V.shape[1])
    R1 = V[:, ai]
    R2 = V[:, bi]
    O = np.einsum("ip,jp->pij", R1, R2)
    O = O + np.transpose(O, (0, 2, 1))
    O /= np.where(ai == bi, 2.0, SQRT2)[:, None, None]
    return svec_batch(O).T


def spectral_norm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


def frobenius_norm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M))
