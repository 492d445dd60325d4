"""Active-set solver for sign-constrained least squares with a linear term.

Solves

    minimize_x  0.5 * ||A x - y||^2  +  q^T x
    subject to  x[j] >= 0  for j where nonneg[j] is True

in the Lawson-Hanson style: grow a passive set one most-violating
coordinate at a time, solve the equality-constrained subproblem on it, and
step back toward feasibility when a passive coordinate would go negative.
The linear term q is what lets the same routine handle an L1 penalty on
nonnegative coefficients (||a||_1 = sum(a) there), so the lasso-style
contact-map fits reduce to this single primitive.
"""

from __future__ import annotations

import numpy as np

# KKT tolerance; ties in the entering coordinate break toward lowest index.
TOL = 1e-10


def nnls_linear_term(
    A: np.ndarray,
    y: np.ndarray,
    q: np.ndarray | None = None,
    nonneg: np.ndarray | None = None,
    max_iter: int | None = None,
) -> np.ndarray:
    """Minimize 0.5*||Ax - y||^2 + q^T x subject to x[nonneg] >= 0.

    Parameters
    ----------
    A : (m, n) design matrix
    y : (m,) target
    q : (n,) linear cost term, default zero
    nonneg : (n,) boolean mask of constrained coordinates, default all True
    max_iter : safety cap on active-set changes, default 3n

    Returns
    -------
    x : (n,) solution. Unconstrained coordinates may be negative.
    """
    A = np.asarray(A, float)
    y = np.asarray(y, float)
    m, n = A.shape
    if q is None:
        q = np.zeros(n)
    q = np.asarray(q, float)
    if nonneg is None:
        nonneg = np.ones(n, dtype=bool)
    nonneg = np.asarray(nonneg, dtype=bool)
    if max_iter is None:
        max_iter = max(3 * n, 30)

    x = np.zeros(n)
    # Passive coordinates vary freely; constrained ones start active (at 0).
    passive = ~nonneg.copy()

    def solve_passive(p_mask: np.ndarray) -> np.ndarray:
        idx = np.flatnonzero(p_mask)
        z = np.zeros(n)
        if idx.size == 0:
            return z
        Ap = A[:, idx]
        # Normal equations with the linear term folded into the RHS;
        # lstsq gives the min-norm solution when columns are collinear.
        G = Ap.T @ Ap
        rhs = Ap.T @ y - q[idx]
        z[idx], *_ = np.linalg.lstsq(G, rhs, rcond=None)
        return z

    x = solve_passive(passive)
    scale = max(1.0, float(np.max(np.abs(A.T @ y), initial=0.0)))
    for _ in range(max_iter):
        grad = A.T @ (A @ x - y) + q
        w = -grad
        candidates = ~passive & nonneg & (w > TOL * scale)
        if not candidates.any():
            break
        # Most-violating coordinate enters; argmax breaks ties at lowest index.
        w_masked = np.where(candidates, w, -np.inf)
        passive[int(np.argmax(w_masked))] = True

        x_new = solve_passive(passive)
        for _ in range(max_iter):
            bad = passive & nonneg & (x_new <= 0.0)
            if not bad.any():
                break
            # Step from x toward x_new until the first coordinate hits zero.
            idx = np.flatnonzero(bad)
            denom = x[idx] - x_new[idx]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 0, x[idx] / denom, np.inf)
            step = min(1.0, float(np.min(ratios)))
            x = x + step * (x_new - x)
            drop = passive & nonneg & (x <= TOL * max(1.0, float(np.max(np.abs(x)))))
            x[drop] = 0.0
            passive[drop] = False
            x_new = solve_passive(passive)
        x = x_new
        x[nonneg & (x < 0.0)] = 0.0
    return x
