"""NPI-to-contact-rate map: representation, evaluation, constrained fitting.

The map h[u] sends a 12-component integer stringency vector to a contact
drive in 1/day. Two forms are supported: linear in the slack from maximum
stringency, and linear-plus-quadratic. Both are constrained so that more
stringency never increases the contact drive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from pandemic_fhoc.nnls import nnls_linear_term

# OxCGRT-style index codes, in the fixed order used throughout.
NPI_CODES = ["C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8", "H1", "H2", "H3", "H6"]
N_NPI = len(NPI_CODES)

U_MIN = np.zeros(N_NPI, dtype=int)
U_MAX = np.array([3, 3, 2, 4, 2, 3, 2, 4, 2, 3, 2, 4], dtype=int)

LINEAR = "linear"
QUADRATIC = "quadratic"

# Log grid for the L1 penalty search, and the chronological fold count.
MU_GRID = np.logspace(-4.0, 1.0, 13)
CV_FOLDS = 5

# Diagonal jitter restoring positive definiteness after a PSD projection.
PD_JITTER = 1e-8


def validate_npi_vector(u: np.ndarray) -> np.ndarray:
    """Check a stringency vector against the per-index bounds."""
    u = np.asarray(u, float)
    if u.shape[-1] != N_NPI:
        raise ValueError(f"NPI vector must have {N_NPI} entries, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("NPI vector has non-finite entries")
    low = u < U_MIN - 1e-9
    high = u > U_MAX + 1e-9
    if low.any() or high.any():
        k = int(np.argmax(low.reshape(-1, N_NPI).any(axis=0) | high.reshape(-1, N_NPI).any(axis=0)))
        raise ValueError(
            f"NPI {NPI_CODES[k]} out of bounds [{U_MIN[k]}, {U_MAX[k]}]"
        )
    return u


@dataclass(frozen=True)
class NpiSchedule:
    """A day-indexed sequence of admissible stringency vectors."""

    levels: np.ndarray  # (n_days, 12)

    def __post_init__(self):
        levels = np.asarray(self.levels)
        if levels.ndim != 2 or levels.shape[1] != N_NPI:
            raise ValueError(f"schedule must be (n_days, {N_NPI}), got {levels.shape}")
        validate_npi_vector(levels)
        object.__setattr__(self, "levels", levels)

    def __len__(self) -> int:
        return self.levels.shape[0]


@dataclass(frozen=True)
class ContactMap:
    """Trained mapping from an NPI vector to a contact drive (1/day).

    h(u) = b + a^T (u_max - u)                       (linear)
    h(u) = b + a^T d + 0.5 * d^T S d,  d = u_max - u (quadratic)

    a >= 0 and b >= 0 always; S is symmetric positive definite with
    non-negative entries in the quadratic form, so h is non-increasing in
    every coordinate of u and h(u_max) = b.
    """

    form: str
    a: np.ndarray
    b: float
    S: np.ndarray | None = None
    mu: float = 0.0
    degenerate: bool = False
    linear_fallback: bool = False
    fitted_at: str | None = None
    region_id: str | None = None

    def __post_init__(self):
        a = np.asarray(self.a, float)
        if a.shape != (N_NPI,):
            raise ValueError(f"a must have shape ({N_NPI},), got {a.shape}")
        if (a < -1e-12).any():
            raise ValueError("influence weights a must be non-negative")
        if self.b < -1e-12:
            raise ValueError("intercept b must be non-negative")
        object.__setattr__(self, "a", np.maximum(a, 0.0))
        object.__setattr__(self, "b", max(float(self.b), 0.0))
        if self.form == QUADRATIC:
            S = np.asarray(self.S, float)
            if S.shape != (N_NPI, N_NPI):
                raise ValueError(f"S must be ({N_NPI}, {N_NPI}), got {S.shape}")
            if not np.allclose(S, S.T, atol=1e-10):
                raise ValueError("S must be symmetric")
            np.linalg.cholesky(S)  # raises LinAlgError if not PD
            object.__setattr__(self, "S", S)
        elif self.form == LINEAR:
            object.__setattr__(self, "S", None)
        else:
            raise ValueError(f"unknown form {self.form!r}")

    def evaluate(self, u: np.ndarray) -> float | np.ndarray:
        """Contact drive at stringency u; accepts (12,) or (n, 12)."""
        u = validate_npi_vector(u)
        d = U_MAX - u
        out = self.b + d @ self.a
        if self.form == QUADRATIC:
            if d.ndim == 1:
                out = out + 0.5 * d @ self.S @ d
            else:
                out = out + 0.5 * np.einsum("ij,jk,ik->i", d, self.S, d)
        return np.maximum(out, 0.0) if np.ndim(out) else max(float(out), 0.0)

    def to_dict(self) -> dict:
        doc = {
            "form": self.form,
            "a": [float(v) for v in self.a],
            "b": float(self.b),
            "mu": float(self.mu),
            "degenerate": self.degenerate,
            "linear_fallback": self.linear_fallback,
            "fitted_at": self.fitted_at,
            "region_id": self.region_id,
        }
        if self.form == QUADRATIC:
            doc["S"] = [[float(v) for v in row] for row in self.S]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ContactMap":
        return cls(
            form=doc["form"],
            a=np.asarray(doc["a"], float),
            b=float(doc["b"]),
            S=np.asarray(doc["S"], float) if doc.get("S") is not None else None,
            mu=float(doc.get("mu", 0.0)),
            degenerate=bool(doc.get("degenerate", False)),
            linear_fallback=bool(doc.get("linear_fallback", False)),
            fitted_at=doc.get("fitted_at"),
            region_id=doc.get("region_id"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ContactMap":
        return cls.from_dict(json.loads(text))


def evaluate(cmap: ContactMap, u: np.ndarray) -> float | np.ndarray:
    """Functional alias for ContactMap.evaluate."""
    return cmap.evaluate(u)


def _lasso_fit(
    D: np.ndarray, y: np.ndarray, mu: float, weights: np.ndarray | None = None
) -> tuple[np.ndarray, float]:
    """Solve min ||W(y - b - D a)||^2 + mu*||a||_1 with a >= 0, b >= 0.

    With a >= 0 the L1 norm is a linear term, so the active-set routine
    applies directly. The objective above uses an unhalved residual sum of
    squares, hence the factor-of-two rescaling. Optional row weights let
    callers downweight low-information samples.
    """
    n_obs, n_feat = D.shape
    X = np.column_stack([np.ones(n_obs), D])
    if weights is not None:
        w = np.asarray(weights, float)
        X = X * w[:, None]
        y = y * w
    q = np.concatenate([[0.0], np.full(n_feat, mu / 2.0)])
    theta = nnls_linear_term(X, y, q=q)
    return theta[1:], float(theta[0])


def _chronological_folds(n: int, k: int) -> list[np.ndarray]:
    """Split 0..n-1 into k contiguous blocks (chronological CV folds)."""
    edges = np.linspace(0, n, k + 1).astype(int)
    return [np.arange(edges[j], edges[j + 1]) for j in range(k)]


def _select_mu(D: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Pick the L1 penalty by chronological cross-validation.

    Contiguous time blocks keep the validation sets out of the training
    window's immediate neighborhood; the smallest penalty wins ties.
    """
    n = len(y)
    w = np.ones(n) if weights is None else np.asarray(weights, float)
    folds = _chronological_folds(n, CV_FOLDS)
    scores = np.zeros(len(MU_GRID))
    for j, mu in enumerate(MU_GRID):
        err = 0.0
        for val_idx in folds:
            train = np.ones(n, dtype=bool)
            train[val_idx] = False
            a, b = _lasso_fit(D[train], y[train], mu, weights=w[train])
            resid = (y[val_idx] - b - D[val_idx] @ a) * w[val_idx]
            err += float(resid @ resid)
        scores[j] = err
    return float(MU_GRID[int(np.argmin(scores))])


def _is_degenerate(D: np.ndarray) -> bool:
    """True when the NPI series never moved, leaving no identifiable slope."""
    return bool(np.all(np.ptp(D, axis=0) < 1e-12))


def fit_linear(
    alpha_series: np.ndarray,
    npi_series: np.ndarray,
    mu: float | None = None,
    weights: np.ndarray | None = None,
    region_id: str | None = None,
    fitted_at: str | None = None,
) -> ContactMap:
    """Fit the linear map h(u) = b + a^T (u_max - u) to estimated contact rates.

    Minimizes sum (alpha_t - b - a^T(u_max - u_t))^2 + mu*||a||_1 subject
    to a >= 0 and b >= 0. When mu is None it is selected by 5-fold
    chronological cross-validation over MU_GRID. Optional per-sample
    weights (e.g. inverse posterior standard deviations) rescale the
    residuals. A constant NPI window cannot identify a and yields an
    intercept-only map flagged degenerate.
    """
    y = np.asarray(alpha_series, float)
    u = validate_npi_vector(np.asarray(npi_series, float))
    if y.ndim != 1 or u.shape != (len(y), N_NPI):
        raise ValueError("alpha_series and npi_series must be aligned (n,), (n, 12)")
    D = U_MAX - u
    if _is_degenerate(D):
        return ContactMap(
            form=LINEAR,
            a=np.zeros(N_NPI),
            b=max(float(np.mean(y)), 0.0) if len(y) else 0.0,
            mu=0.0,
            degenerate=True,
            region_id=region_id,
            fitted_at=fitted_at,
        )
    if mu is None:
        mu = _select_mu(D, y, weights)
    a, b = _lasso_fit(D, y, mu, weights=weights)
    return ContactMap(
        form=LINEAR, a=a, b=b, mu=mu, region_id=region_id, fitted_at=fitted_at
    )


def _quadratic_design(D: np.ndarray, diagonal: bool) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Columns for the 0.5*d^T S d term, linear in the entries of S.

    Returns the feature block and the (row, col) index of S each column
    multiplies. Off-diagonal features carry the symmetry factor of 2.
    """
    cols = []
    index = []
    for j in range(N_NPI):
        cols.append(0.5 * D[:, j] ** 2)
        index.append((j, j))
    if not diagonal:
        for j in range(N_NPI):
            for k in range(j + 1, N_NPI):
                cols.append(D[:, j] * D[:, k])
                index.append((j, k))
    return np.column_stack(cols), index


def fit_quadratic(
    alpha_series: np.ndarray,
    npi_series: np.ndarray,
    diagonal: bool = True,
    weights: np.ndarray | None = None,
    region_id: str | None = None,
    fitted_at: str | None = None,
) -> ContactMap:
    """Fit the quadratic map h(u) = b + a^T d + 0.5 d^T S d, d = u_max - u.

    The problem is linear in (b, a, S), so it is one constrained
    least-squares solve. By default S is restricted to a diagonal matrix
    (12 extra parameters instead of 78) so a single region's history can
    support the fit; pass diagonal=False for the full symmetric form.
    All parameters are constrained non-negative, which keeps the fitted
    map monotone, and S is projected/jittered back to positive definite
    when needed. With too few samples for the parameter count the fit
    falls back to the linear form and flags it.
    """
    y = np.asarray(alpha_series, float)
    u = validate_npi_vector(np.asarray(npi_series, float))
    if y.ndim != 1 or u.shape != (len(y), N_NPI):
        raise ValueError("alpha_series and npi_series must be aligned (n,), (n, 12)")
    D = U_MAX - u
    n_params = 1 + N_NPI + (N_NPI if diagonal else N_NPI * (N_NPI + 1) // 2)
    if len(y) < 10 * n_params:
        linear = fit_linear(
            alpha_series, npi_series, weights=weights, region_id=region_id, fitted_at=fitted_at
        )
        return ContactMap(
            form=linear.form,
            a=linear.a,
            b=linear.b,
            mu=linear.mu,
            degenerate=linear.degenerate,
            linear_fallback=True,
            region_id=region_id,
            fitted_at=fitted_at,
        )
    if _is_degenerate(D):
        return fit_linear(
            alpha_series, npi_series, weights=weights, region_id=region_id, fitted_at=fitted_at
        )

    quad_block, s_index = _quadratic_design(D, diagonal)
    X = np.column_stack([np.ones(len(y)), D, quad_block])
    if weights is not None:
        w = np.asarray(weights, float)
        X = X * w[:, None]
        y = y * w
    theta = nnls_linear_term(X, y)
    b = float(theta[0])
    a = theta[1 : 1 + N_NPI]
    S = np.zeros((N_NPI, N_NPI))
    for coef, (j, k) in zip(theta[1 + N_NPI :], s_index):
        S[j, k] = coef
        S[k, j] = coef
    if not diagonal:
        # Project onto the PSD cone; clip the tiny negative entries the
        # projection can introduce so monotonicity survives.
        eigval, eigvec = np.linalg.eigh(S)
        S = (eigvec * np.maximum(eigval, 0.0)) @ eigvec.T
        S = np.maximum((S + S.T) / 2.0, 0.0)
        S = (S + S.T) / 2.0
    if np.linalg.eigvalsh(S).min() < PD_JITTER:
        S = S + PD_JITTER * np.eye(N_NPI)
    return ContactMap(
        form=QUADRATIC, a=a, b=b, S=S, mu=0.0, region_id=region_id, fitted_at=fitted_at
    )
