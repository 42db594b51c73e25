"""Dense linear algebra used by the masking, PCA and readout stages.

Matrices are plain 2-D float64 numpy arrays in row-major order; vectors are
1-D arrays. Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a C-contiguous float64 2-D array with >= 1 row and column."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={a.ndim}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column, got shape {a.shape}")
    return np.ascontiguousarray(a)


def as_vector(a, name: str = "vector") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got ndim={a.ndim}")
    return np.ascontiguousarray(a)


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def sym_eig(s) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, eigenvectors) with eigenvalues ordered by
    decreasing magnitude and unit-norm eigenvectors in matching columns.
    The input is symmetrized as (S + S^T)/2 before decomposition; inputs
    asymmetric beyond 1e-9 (relative to the largest entry) are rejected.
    """
    s = as_matrix(s, "s")
    if s.shape[0] != s.shape[1]:
        raise ValueError(f"sym_eig requires a square matrix, got shape {s.shape}")
    scale = max(1.0, float(np.abs(s).max()))
    if float(np.abs(s - s.T).max()) > 1e-9 * scale:
        raise ValueError("matrix is not symmetric to tolerance 1e-9")
    w, v = np.linalg.eigh(0.5 * (s + s.T))
    order = np.argsort(-np.abs(w), kind="stable")
    return w[order], v[:, order]


def ridge_solve(mx, t, lam: float) -> np.ndarray:
    """Regularized least squares: solve (mx mx^T + lam I) W^T = mx t^T.

    mx holds one state vector per column (N x K), t the matching targets
    (Q x K). The result W (Q x N) maps a state to its target: y = W x.
    Solved through a Cholesky factorization of the normal equations.
    """
    mx = as_matrix(mx, "mx")
    t = as_matrix(t, "t")
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    if mx.shape[1] != t.shape[1]:
        raise ValueError(
            f"mx has {mx.shape[1]} sample columns but t has {t.shape[1]}"
        )
    n = mx.shape[0]
    gram = mx @ mx.T
    if lam > 0:
        gram[np.diag_indices(n)] += lam
    rhs = mx @ t.T
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True)
    except np.linalg.LinAlgError:
        if lam == 0:
            raise np.linalg.LinAlgError(
                "singular normal equations; supply λ>0"
            ) from None
        raise
    return scipy.linalg.cho_solve(factor, rhs).T
