"""Least squares via Householder QR, for single problems or stacks of small ones."""

from __future__ import annotations

import numpy as np

from greyqueue.errors import SingularFitError

# relative threshold on |R_ii| / max|R_jj| below which a column counts as dependent
RANK_RTOL = 1e-12


def lstsq_qr_batch(A: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``min ||y_i - A_i x_i||`` for a stack of tall matrices.

    ``A`` has shape ``(N, m, p)`` and ``y`` shape ``(N, m)``. Columns are
    scaled to unit norm before factorizing so the rank test ignores column
    units. Returns ``(x, ok)`` where rows with a non-finite or numerically
    rank-deficient problem have ``ok == False`` and ``x`` set to NaN.
    Each row is solved independently of the others.
    """
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    N, m, p = A.shape
    if y.shape != (N, m):
        raise ValueError(f"shape mismatch: A{A.shape}, y{y.shape}")
    x = np.full((N, p), np.nan)
    if m < p or N == 0:
        return x, np.zeros(N, dtype=bool)
    ok = np.isfinite(A).all(axis=(1, 2)) & np.isfinite(y).all(axis=1)
    scale = np.sqrt(np.einsum("nmp,nmp->np", A, A))
    ok &= (scale > 0).all(axis=1) & np.isfinite(scale).all(axis=1)
    safe = np.where(ok[:, None], scale, 1.0)
    As = np.where(ok[:, None, None], A / safe[:, None, :], np.eye(m, p))
    q, r = np.linalg.qr(As, mode="reduced")
    diag = np.abs(np.diagonal(r, axis1=1, axis2=2))
    ok &= diag.min(axis=1) > RANK_RTOL * diag.max(axis=1)
    rhs = np.einsum("nmp,nm->np", q, np.where(ok[:, None], y, 0.0))
    rr = np.where(ok[:, None, None], r, np.eye(p))
    sol = np.zeros((N, p))
    for i in range(p - 1, -1, -1):
        acc = rhs[:, i] - np.einsum("np,np->n", rr[:, i, i + 1:], sol[:, i + 1:])
        sol[:, i] = acc / rr[:, i, i]
    x[ok] = (sol / safe)[ok]
    return x, ok


def lstsq_qr(A: np.ndarray, y: np.ndarray, *, min_norm_fallback: bool = False) -> np.ndarray:
    """Solve ``min ||y - A x||`` for one tall design matrix.

    A numerically rank-deficient design raises :class:`SingularFitError`,
    unless ``min_norm_fallback`` is set, in which case the minimum-norm
    (SVD) solution is returned instead.
    """
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if A.ndim != 2 or y.shape != (A.shape[0],):
        raise ValueError(f"shape mismatch: A{A.shape}, y{y.shape}")
    x, ok = lstsq_qr_batch(A[None], y[None])
    if ok[0]:
        return x[0]
    if min_norm_fallback and np.isfinite(A).all() and np.isfinite(y).all():
        sol, *_ = np.linalg.lstsq(A, y, rcond=None)
        return sol
    raise SingularFitError(f"rank-deficient or non-finite design matrix of shape {A.shape}")


def solve_multi(A: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Least squares for one design and many right-hand sides (columns of ``Y``).

    Rank-deficient designs get the minimum-norm solution.
    """
    A = np.asarray(A, dtype=np.float64)
    scale = np.linalg.norm(A, axis=0)
    q, r = np.linalg.qr(A / np.where(scale > 0, scale, 1.0))
    diag = np.abs(np.diag(r))
    if A.shape[0] >= A.shape[1] and diag.size and diag.min() > RANK_RTOL * diag.max() and (scale > 0).all():
        return np.linalg.solve(r, q.T @ Y) / scale[:, None]
    return np.linalg.pinv(A) @ Y
