"""Dense float64 kernels: validated arrays, SVD pseudoinverse, min-norm solve.

Everything here is a pure function over immutable inputs and is safe to
call from concurrent contexts without synchronization. All arithmetic is
64-bit; the near-square regimes simulated downstream involve amplification
factors that single precision would corrupt.
"""

from __future__ import annotations

import numpy as np

__all__ = ["as_matrix", "as_vector", "matmul", "pinv", "min_norm_solve"]

_EPS = float(np.finfo(np.float64).eps)


def as_matrix(entries) -> np.ndarray:
    """Coerce to a C-contiguous 2-D float64 array, rejecting NaN/Inf."""
    m = np.asarray(entries, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if not np.isfinite(m).all():
        raise ValueError("matrix entries must be finite")
    return np.ascontiguousarray(m)


def as_vector(entries) -> np.ndarray:
    """Coerce to a contiguous 1-D float64 array, rejecting NaN/Inf."""
    v = np.asarray(entries, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got ndim={v.ndim}")
    if not np.isfinite(v).all():
        raise ValueError("vector entries must be finite")
    return np.ascontiguousarray(v)


def matmul(a, b) -> np.ndarray:
    """Matrix product with explicit shape checking."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects two 2-D matrices")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def pinv(m) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below ``max(rows, cols) * eps * sigma_max`` are
    truncated to zero, so rank-deficient inputs are handled gracefully.
    """
    m = as_matrix(m)
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"SVD did not converge for a {m.shape[0]}x{m.shape[1]} matrix"
        ) from exc
    if s.size == 0 or s[0] <= 0.0:
        return np.zeros((m.shape[1], m.shape[0]))
    cutoff = max(m.shape) * _EPS * s[0]
    inv = np.zeros_like(s)
    np.divide(1.0, s, out=inv, where=s > cutoff)
    return (vt.T * inv) @ u.T


def min_norm_solve(a, y) -> np.ndarray:
    """Least-squares solution of ``a @ x = y`` with minimal Euclidean norm.

    Backed by LAPACK gelsd, a separate code path from :func:`pinv`; the
    same singular-value cutoff is applied.
    """
    a = as_matrix(a)
    y = as_vector(y)
    if a.shape[0] != y.shape[0]:
        raise ValueError(f"matrix has {a.shape[0]} rows but vector has length {y.shape[0]}")
    x, _, _, _ = np.linalg.lstsq(a, y, rcond=max(a.shape) * _EPS)
    return x
