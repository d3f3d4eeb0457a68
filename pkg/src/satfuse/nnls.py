"""Nonnegative least squares via the Lawson-Hanson active-set method.

Solves min ||Ax - b||^2 subject to x >= 0 by moving columns between a passive
(free) and an active (clamped-at-zero) set until the Karush-Kuhn-Tucker
conditions hold: the gradient g = A^T(Ax - b) must vanish on the passive set
and be nonnegative on the active set, both within a tolerance scaled by
||A^T A||_inf.
"""

from __future__ import annotations

import numpy as np

from .errors import SolverError, ValidationError

__all__ = ["nnls", "kkt_residuals"]


def kkt_residuals(A: np.ndarray, b: np.ndarray, x: np.ndarray) -> tuple[float, float]:
    """KKT measures for a candidate solution.

    Returns ``(stationarity, feasck)`` where ``stationarity`` is
    max |g_j| over x_j > 0 and ``feasck`` is min g_j over x_j == 0
    (so a valid solution has small stationarity and feasck >= -tolerance).
    """
    g = A.T @ (A @ x - b)
    pos = x > 0
    stat = float(np.max(np.abs(g[pos]))) if pos.any() else 0.0
    feas = float(np.min(g[~pos])) if (~pos).any() else 0.0
    return stat, feas


def nnls(
    A: np.ndarray,
    b: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> np.ndarray:
    """Solve min ||Ax - b||^2 with x >= 0.

    `tol` is relative: KKT conditions are enforced within
    ``tol * ||A^T A||_inf``.  `max_iter` defaults to 3 times the column
    count; exceeding it raises :class:`SolverError` carrying the best
    iterate found so far in ``best_x``.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    if A.ndim != 2 or A.shape[1] < 1:
        raise ValidationError("A must be a 2-D matrix with at least one column")
    if b.shape[0] != A.shape[0]:
        raise ValidationError(f"b length {b.shape[0]} does not match {A.shape[0]} rows")
    m, n = A.shape
    if max_iter is None:
        max_iter = 3 * n

    AtA = A.T @ A
    Atb = A.T @ b
    scale = float(np.max(np.abs(AtA).sum(axis=1)))  # ||A^T A||_inf
    kkt_eps = tol * scale if scale > 0 else tol

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    outer = 0
    while True:
        w = Atb - AtA @ x  # negative gradient
        candidates = ~passive
        if not candidates.any():
            break
        w_masked = np.where(candidates, w, -np.inf)
        j = int(np.argmax(w_masked))  # ties resolve to the lowest index
        if w_masked[j] <= kkt_eps:
            break
        outer += 1
        if outer > max_iter:
            raise SolverError(
                f"no convergence after {max_iter} iterations", best_x=x.copy()
            )
        passive[j] = True

        # inner loop: keep the passive-set least-squares solution feasible
        while True:
            cols = np.flatnonzero(passive)
            z = np.zeros(n)
            z[cols], *_ = np.linalg.lstsq(A[:, cols], b, rcond=None)
            if z[cols].min() > 0:
                x = z
                break
            # step toward z until the first passive coordinate hits zero
            blocking = passive & (z <= 0)
            alpha = np.min(x[blocking] / (x[blocking] - z[blocking]))
            x = x + alpha * (z - x)
            hit_zero = passive & (x <= 1e-12 * max(1.0, float(np.max(np.abs(x)))))
            passive[hit_zero] = False
            x[~passive] = 0.0
            if not passive.any():
                break

    return x
