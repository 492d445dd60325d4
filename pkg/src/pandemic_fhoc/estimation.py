"""Extended Kalman filter/smoother over the augmented epidemic model.

The filter tracks the six-dimensional state [s, i, alpha, lam1, lam2,
lam3] from a scalar daily case observation. Prediction linearizes the
Euler transition map; gaps in the observation series (holidays, report
corrections) are handled as prediction-only steps. A fixed-interval
Rauch-Tung-Striebel pass provides the smoother, and the innovation
sequence feeds the performance-monitoring checks.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from pandemic_fhoc.model import (
    IDX_ALPHA,
    IDX_I,
    IDX_S,
    AugmentedState,
    ModelParams,
    clamp_compartments,
    step_augmented,
    transition_jacobian,
)

NEW_CASES = "new_cases"
TOTAL_CASES = "total_cases"

# Hard bound on co-state estimates (step-10 range enforcement). Their
# forward dynamics are unstable, so far-from-converged prescription
# iterations would otherwise blow the means up to scales where the
# smoother's terminal re-anchoring cancels catastrophically.
COSTATE_CAP = 1e3

# Relative eigenvalue floor below which a covariance is treated as broken.
# The co-state block grows by (1 + dt*beta), (1 + dt*gamma) factors each
# step, so the tolerance must scale with the matrix.
PSD_RTOL = 1e-9


def _psd_floor(M: np.ndarray) -> float:
    return -PSD_RTOL * max(1.0, float(np.trace(M)))


class FilterDivergedError(RuntimeError):
    """Numerical breakdown of the filter (non-PSD covariance or bad innovation)."""


@dataclass(frozen=True)
class FilterConfig:
    """Noise model and initial condition for one filter run.

    Q is the process-noise covariance expressed as per-day diffusion
    rates: a step of dt days adds Q*dt to the predicted covariance. r is
    the observation-noise variance on the fraction scale. With
    observation_kind == "total_cases" the initial susceptible fraction s0
    anchors the cumulative observation map.
    """

    Q: np.ndarray
    r: float
    x0: AugmentedState
    P0: np.ndarray
    observation_kind: str = NEW_CASES
    s0: float = 1.0
    substeps: int = 1

    def __post_init__(self):
        Q = np.asarray(self.Q, float)
        P0 = np.asarray(self.P0, float)
        if Q.shape != (6, 6) or P0.shape != (6, 6):
            raise ValueError("Q and P0 must be 6x6")
        for name, M in (("Q", Q), ("P0", P0)):
            if not np.allclose(M, M.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() < _psd_floor(M):
                raise ValueError(f"{name} must be positive semi-definite")
        if not self.r > 0.0:
            raise ValueError(f"observation variance r must be > 0, got {self.r}")
        if self.observation_kind not in (NEW_CASES, TOTAL_CASES):
            raise ValueError(f"unknown observation kind {self.observation_kind!r}")
        if not 0.0 <= self.s0 <= 1.0:
            raise ValueError(f"s0 out of [0, 1]: {self.s0}")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "P0", P0)


def observe_mean(kind: str, x: np.ndarray, s0: float) -> float:
    if kind == NEW_CASES:
        return float(x[IDX_ALPHA] * x[IDX_S] * x[IDX_I])
    return float(s0 - x[IDX_S])


def observation_jacobian(kind: str, x: np.ndarray) -> np.ndarray:
    c = np.zeros(6)
    if kind == NEW_CASES:
        c[IDX_S] = x[IDX_ALPHA] * x[IDX_I]
        c[IDX_I] = x[IDX_ALPHA] * x[IDX_S]
        c[IDX_ALPHA] = x[IDX_S] * x[IDX_I]
    else:
        c[IDX_S] = -1.0
    return c


@dataclass
class FilterOutput:
    """Per-step filter (and optionally smoother) estimates.

    innovations and innovation_vars are NaN at steps without an
    observation, so the innovation count equals the number of updates.
    """

    steps: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    post_mean: np.ndarray
    post_cov: np.ndarray
    innovations: np.ndarray
    innovation_vars: np.ndarray
    clamped: np.ndarray
    drive: np.ndarray
    transitions: np.ndarray  # composite Jacobians post_k -> prior_{k+1}
    observation_kind: str
    r: float
    smoothed_mean: np.ndarray | None = None
    smoothed_cov: np.ndarray | None = None
    clamp_events: list = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def n_innovations(self) -> int:
        return int(np.sum(np.isfinite(self.innovations)))

    def to_csv(self, which: str = "posterior") -> str:
        """Columnar CSV of the estimates for plotting and the UI."""
        mean = self.smoothed_mean if which == "smoothed" else self.post_mean
        if mean is None:
            raise ValueError("no smoothed estimates on this output")
        buf = io.StringIO()
        buf.write("step,s,i,alpha,lambda1,lambda2,lambda3,innovation,innovation_var,clamped\n")
        for k in range(self.n_steps):
            row = mean[k]
            buf.write(
                f"{self.steps[k]},{row[0]:.12g},{row[1]:.12g},{row[2]:.12g},"
                f"{row[3]:.12g},{row[4]:.12g},{row[5]:.12g},"
                f"{self.innovations[k]:.12g},{self.innovation_vars[k]:.12g},"
                f"{int(self.clamped[k])}\n"
            )
        return buf.getvalue()


def _resolve_drive(inputs, k: int, x: np.ndarray) -> float:
    if callable(inputs):
        return float(inputs(k, x))
    return float(inputs[k])


def _propagate(
    x: np.ndarray,
    P: np.ndarray,
    drive: float,
    params: ModelParams,
    eps: float,
    Q: np.ndarray,
    substeps: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Advance mean and covariance over one observation interval.

    Returns (mean, cov, composite Jacobian, clamped flag). Each Euler
    substep contributes Q * dt_sub of process noise.
    """
    dt_sub = params.delta_t / substeps
    sub_params = ModelParams(
        beta=params.beta,
        gamma=params.gamma,
        population=params.population,
        delta_t=dt_sub,
        rt_generation_unit=params.rt_generation_unit,
    )
    A_total = np.eye(6)
    clamped = False
    for _ in range(substeps):
        A = transition_jacobian(x, sub_params, eps)
        x, cl = step_augmented(x, drive, sub_params, eps)
        P = A @ P @ A.T + Q * dt_sub
        A_total = A @ A_total
        clamped = clamped or cl
    P = (P + P.T) / 2.0
    return x, P, A_total, clamped


def _check_psd(P: np.ndarray, step: int, k_gain: np.ndarray, c: np.ndarray, P_prior: np.ndarray, r: float) -> np.ndarray:
    """Repair a non-PSD posterior covariance via the Joseph form, or abort."""
    if np.linalg.eigvalsh(P).min() >= _psd_floor(P):
        return P
    ikc = np.eye(6) - np.outer(k_gain, c)
    P_j = ikc @ P_prior @ ikc.T + r * np.outer(k_gain, k_gain)
    P_j = (P_j + P_j.T) / 2.0
    if np.linalg.eigvalsh(P_j).min() < _psd_floor(P_j):
        raise FilterDivergedError(f"posterior covariance not PSD at step {step}")
    return P_j


def ekf_run(
    cfg: FilterConfig,
    observations: np.ndarray,
    inputs,
    params: ModelParams,
    eps: float = 1.0,
) -> FilterOutput:
    """Run the extended Kalman filter over a daily observation series.

    observations is a 1-D array of case fractions with NaN marking
    missing reports; those steps propagate the prediction only. inputs is
    either a length-N array of contact-drive values h[u_k], or a callable
    (k, state) -> drive so the prescription loop can tie the drive to the
    filter's own co-state estimates.
    """
    obs = np.asarray(observations, float)
    if obs.ndim != 1:
        raise ValueError("observations must be one-dimensional")
    n = len(obs)
    x = cfg.x0.to_array()
    P = cfg.P0.copy()

    prior_mean = np.empty((n, 6))
    prior_cov = np.empty((n, 6, 6))
    post_mean = np.empty((n, 6))
    post_cov = np.empty((n, 6, 6))
    innovations = np.full(n, np.nan)
    innovation_vars = np.full(n, np.nan)
    clamped = np.zeros(n, dtype=bool)
    drive_used = np.empty(n)
    transitions = np.empty((max(n - 1, 0), 6, 6))
    clamp_events = []

    for k in range(n):
        drive = _resolve_drive(inputs, k, x)
        if not np.isfinite(drive) or drive < 0.0:
            raise ValueError(f"contact drive must be finite and >= 0 at step {k}")
        drive_used[k] = drive
        x, P, A, cl = _propagate(x, P, drive, params, eps, cfg.Q, cfg.substeps)
        if k > 0:
            transitions[k - 1] = A
        prior_mean[k] = x
        prior_cov[k] = P

        if np.isfinite(obs[k]):
            c = observation_jacobian(cfg.observation_kind, x)
            gamma = float(c @ P @ c + cfg.r)
            if gamma <= 0.0 or not np.isfinite(gamma):
                raise FilterDivergedError(
                    f"innovation variance {gamma} at step {k}; filter breakdown"
                )
            k_gain = P @ c / gamma
            innov = obs[k] - observe_mean(cfg.observation_kind, x, cfg.s0)
            x = x + k_gain * innov
            P_new = (np.eye(6) - np.outer(k_gain, c)) @ P
            P_new = (P_new + P_new.T) / 2.0
            P = _check_psd(P_new, k, k_gain, c, P, cfg.r)
            innovations[k] = innov
            innovation_vars[k] = gamma

        # Hard-constraint enforcement on the estimate.
        (s_c, i_c, a_c), cl_post = clamp_compartments(x[IDX_S], x[IDX_I], x[IDX_ALPHA])
        if cl_post:
            x = x.copy()
            x[IDX_S], x[IDX_I], x[IDX_ALPHA] = s_c, i_c, a_c
        if np.any(np.abs(x[3:]) > COSTATE_CAP):
            x = x.copy()
            x[3:] = np.clip(x[3:], -COSTATE_CAP, COSTATE_CAP)
            cl_post = True
        if not np.all(np.isfinite(x)):
            raise FilterDivergedError(f"non-finite state estimate at step {k}")
        clamped[k] = cl or cl_post
        if clamped[k]:
            clamp_events.append(k)
        post_mean[k] = x
        post_cov[k] = P

    return FilterOutput(
        steps=np.arange(n),
        prior_mean=prior_mean,
        prior_cov=prior_cov,
        post_mean=post_mean,
        post_cov=post_cov,
        innovations=innovations,
        innovation_vars=innovation_vars,
        clamped=clamped,
        drive=drive_used,
        transitions=transitions,
        observation_kind=cfg.observation_kind,
        r=cfg.r,
        clamp_events=clamp_events,
    )


def rts_pass(out: FilterOutput, terminal_mean: np.ndarray | None = None) -> FilterOutput:
    """Backward Rauch-Tung-Striebel sweep over a filter output.

    terminal_mean overrides the last filtered state as the smoother's
    starting point; the prescription loop uses this to re-anchor the
    terminal co-states at zero.
    """
    n = out.n_steps
    sm = out.post_mean.copy()
    sc = out.post_cov.copy()
    if terminal_mean is not None:
        sm[n - 1] = terminal_mean
    for k in range(n - 2, -1, -1):
        A = out.transitions[k]
        P_pred = out.prior_cov[k + 1]
        # C = P+ A^T P_pred^{-1}. The covariance blocks span many orders
        # of magnitude (the co-state block grows geometrically), so solve
        # the Jacobi-equilibrated system; fall back to the pseudo-inverse
        # when deterministic blocks make it singular.
        d = np.sqrt(np.abs(np.diag(P_pred)))
        d[d == 0.0] = 1.0
        P_tilde = P_pred / np.outer(d, d)
        W = (out.post_cov[k] @ A.T) / d
        try:
            C = np.linalg.solve(P_tilde, W.T).T / d
        except np.linalg.LinAlgError:
            C = out.post_cov[k] @ A.T @ np.linalg.pinv(P_pred)
        sm[k] = out.post_mean[k] + C @ (sm[k + 1] - out.prior_mean[k + 1])
        sc[k] = out.post_cov[k] + C @ (sc[k + 1] - P_pred) @ C.T
        sc[k] = (sc[k] + sc[k].T) / 2.0
    out.smoothed_mean = sm
    out.smoothed_cov = sc
    return out


def eks_run(
    cfg: FilterConfig,
    observations: np.ndarray,
    inputs,
    params: ModelParams,
    eps: float = 1.0,
) -> FilterOutput:
    """Extended Kalman smoother: forward EKF plus fixed-interval RTS pass."""
    return rts_pass(ekf_run(cfg, observations, inputs, params, eps))


@dataclass(frozen=True)
class Forecast:
    """Open-loop prediction with +-3 sigma envelopes on the observation scale."""

    steps: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    states: np.ndarray
    covs: np.ndarray


def forecast(
    cfg: FilterConfig,
    state: np.ndarray,
    cov: np.ndarray,
    inputs,
    horizon: int,
    params: ModelParams,
    eps: float = 1.0,
) -> Forecast:
    """Propagate the trained posterior forward with no measurement updates.

    Step 0 is the current posterior itself; steps 1..horizon are
    predictions. The envelope half-width at each step is
    3 * sqrt(c^T P c + r) around the predicted observation.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    x = np.asarray(state, float).copy()
    P = np.asarray(cov, float).copy()
    states = np.empty((horizon + 1, 6))
    covs = np.empty((horizon + 1, 6, 6))
    mean = np.empty(horizon + 1)
    half = np.empty(horizon + 1)
    states[0], covs[0] = x, P
    c = observation_jacobian(cfg.observation_kind, x)
    mean[0] = observe_mean(cfg.observation_kind, x, cfg.s0)
    half[0] = 3.0 * np.sqrt(max(float(c @ P @ c + cfg.r), 0.0))
    for k in range(1, horizon + 1):
        drive = _resolve_drive(inputs, k - 1, x)
        x, P, _, _ = _propagate(x, P, drive, params, eps, cfg.Q, cfg.substeps)
        states[k], covs[k] = x, P
        c = observation_jacobian(cfg.observation_kind, x)
        mean[k] = observe_mean(cfg.observation_kind, x, cfg.s0)
        half[k] = 3.0 * np.sqrt(max(float(c @ P @ c + cfg.r), 0.0))
    return Forecast(
        steps=np.arange(horizon + 1),
        mean=mean,
        lo=mean - half,
        hi=mean + half,
        states=states,
        covs=covs,
    )


@dataclass(frozen=True)
class MonitoringReport:
    """Innovation-based health checks of a filter run.

    p1: zero mean, p2: whiteness, p3: variance consistency. Each flag is
    True when the corresponding property is violated.
    """

    n: int
    mean_stat: float
    p1_violated: bool
    autocorrs: np.ndarray
    whiteness_band: float
    lags_outside: int
    ljung_box_stat: float
    ljung_box_pvalue: float
    p2_violated: bool
    nis_sum: float
    nis_lo: float
    nis_hi: float
    exceed_fraction: float
    p3_violated: bool

    @property
    def healthy(self) -> bool:
        return not (self.p1_violated or self.p2_violated or self.p3_violated)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean_stat": self.mean_stat,
            "p1_violated": self.p1_violated,
            "autocorrs": [float(v) for v in self.autocorrs],
            "whiteness_band": self.whiteness_band,
            "lags_outside": self.lags_outside,
            "ljung_box_stat": self.ljung_box_stat,
            "ljung_box_pvalue": self.ljung_box_pvalue,
            "p2_violated": self.p2_violated,
            "nis_sum": self.nis_sum,
            "nis_lo": self.nis_lo,
            "nis_hi": self.nis_hi,
            "exceed_fraction": self.exceed_fraction,
            "p3_violated": self.p3_violated,
            "healthy": self.healthy,
        }


N_LAGS = 10
# Two-sided significance levels for the P1/P3 flags. The whiteness flag
# uses an omnibus Ljung-Box test at the same level so a single stray lag
# does not condemn an otherwise healthy filter.
P1_Z = 2.576  # 99%
P2_ALPHA = 0.01
P3_COVERAGE = 0.99


def monitor(out: FilterOutput, min_samples: int = 30) -> MonitoringReport:
    """Check the innovation sequence for mean, whiteness, and scale health."""
    mask = np.isfinite(out.innovations)
    v = out.innovations[mask]
    g = out.innovation_vars[mask]
    n = len(v)
    if n < min_samples:
        raise ValueError(f"need at least {min_samples} innovations, got {n}")
    e = v / np.sqrt(g)

    # P1: zero mean, via the t-like statistic on standardized innovations.
    sd = float(np.std(e, ddof=1))
    mean_stat = 0.0 if sd == 0.0 else float(np.mean(e) / (sd / np.sqrt(n)))
    p1_violated = abs(mean_stat) > P1_Z

    # P2: whiteness. Per-lag autocorrelations are reported against the
    # 95% band; the violation flag comes from the Ljung-Box statistic.
    centered = e - np.mean(e)
    denom = float(centered @ centered)
    autocorrs = np.zeros(N_LAGS)
    if denom > 0.0:
        for h in range(1, N_LAGS + 1):
            autocorrs[h - 1] = float(centered[h:] @ centered[:-h]) / denom
    band = 1.96 / np.sqrt(n)
    lags_outside = int(np.sum(np.abs(autocorrs) > band))
    lb = float(n * (n + 2) * np.sum(autocorrs**2 / (n - np.arange(1, N_LAGS + 1))))
    lb_pvalue = float(stats.chi2.sf(lb, N_LAGS))
    p2_violated = lb_pvalue < P2_ALPHA

    # P3: variance consistency. The normalized innovation squared sum is
    # chi-squared with n dof when gamma_k matches reality; both inflated
    # (under-specified r) and collapsed (over-specified r) scales flag.
    nis_sum = float(np.sum(e**2))
    tail = (1.0 - P3_COVERAGE) / 2.0
    nis_lo = float(stats.chi2.ppf(tail, n))
    nis_hi = float(stats.chi2.ppf(1.0 - tail, n))
    exceed_fraction = float(np.mean(e**2 > stats.chi2.ppf(0.95, 1)))
    p3_violated = not (nis_lo <= nis_sum <= nis_hi)

    return MonitoringReport(
        n=n,
        mean_stat=mean_stat,
        p1_violated=bool(p1_violated),
        autocorrs=autocorrs,
        whiteness_band=float(band),
        lags_outside=lags_outside,
        ljung_box_stat=lb,
        ljung_box_pvalue=lb_pvalue,
        p2_violated=bool(p2_violated),
        nis_sum=nis_sum,
        nis_lo=nis_lo,
        nis_hi=nis_hi,
        exceed_fraction=exceed_fraction,
        p3_violated=bool(p3_violated),
    )
