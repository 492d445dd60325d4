"""Per-region model training: two filter passes around a contact-map fit.

Pass 1 smooths the case history with the contact drive switched off and
an inflated alpha process noise, so the NPI-driven movement of the
contact rate lands in the smoothed alpha estimate. That estimate is
regressed against the historic NPIs to train the contact map. Pass 2
re-smooths with the trained drive and the alpha noise shrunk back down,
and the map is refit on the improved estimate. The refined model, filter
configuration, final posterior and monitoring diagnostics are stored per
region.

Training runs the filter with eps = 1, which freezes the co-states at
zero: the control machinery is inert while fitting history.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from pandemic_fhoc.contact import ContactMap, fit_linear, fit_quadratic, validate_npi_vector
from pandemic_fhoc.estimation import (
    NEW_CASES,
    FilterConfig,
    FilterOutput,
    eks_run,
    monitor,
)
from pandemic_fhoc.model import (
    AugmentedState,
    CompartmentState,
    ModelParams,
    clamp_compartments,
)

# Fixed action-to-effect rate: one-week lag for any policy to bite.
GAMMA_FIXED = 1.0 / 7.0

# Pass-1 alpha process noise is this factor above the trained-map value.
ALPHA_NOISE_INFLATION = 100.0


def select_beta(contagion_prob: float, T: float) -> float:
    """Elimination rate from 'probability of still being contagious after T days'.

    The exponential decay i(t0+T)/i(t0) = exp(-beta*T) inverts to
    beta = -ln(p)/T.
    """
    if not 0.0 < contagion_prob < 1.0:
        raise ValueError(f"contagion probability must be in (0, 1), got {contagion_prob}")
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    return float(-np.log(contagion_prob) / T)


def select_alpha0(r0: float, beta: float, gen_unit: float = 1.0) -> float:
    """Outbreak contact rate from the reproduction number: beta + ln(R0)/gen_unit."""
    if r0 <= 0:
        raise ValueError(f"R0 must be positive, got {r0}")
    return float(beta + np.log(r0) / gen_unit)


@dataclass(frozen=True)
class TrainingHyper:
    """Tunables of the per-region training pipeline."""

    r0: float = 2.5
    contagion_prob: float = 0.01
    contagion_days: float = 21.0
    gamma: float = GAMMA_FIXED
    quadratic: bool = False
    mu: float | None = None  # None: chronological cross-validation
    min_days: int = 120
    min_cases: int = 100
    ma_window: int = 7
    si_process_noise: float = 1e-10
    alpha_noise_scale: float = 1e-4  # trained-map alpha row: scale * alpha0^2
    p0_scale: float = 1e-4
    p0_alpha_frac: float = 0.5  # initial alpha std as a fraction of alpha0
    p0_i_frac: float = 0.5  # initial i std as a fraction of the i estimate
    r_floor: float = 1e-18
    r_window: int = 28
    substeps: int = 1


@dataclass
class RegionModel:
    """Trained per-region model: parameters, contact map, filter setup."""

    region_id: str
    params: ModelParams
    cmap: ContactMap
    filter_cfg: FilterConfig
    training_window: tuple[str, str]
    diagnostics: dict
    final_state: np.ndarray
    final_cov: np.ndarray
    last_npi: np.ndarray

    def to_dict(self) -> dict:
        return {
            "region_id": self.region_id,
            "params": {
                "beta": self.params.beta,
                "gamma": self.params.gamma,
                "population": self.params.population,
                "delta_t": self.params.delta_t,
                "rt_generation_unit": self.params.rt_generation_unit,
            },
            "map": self.cmap.to_dict(),
            "filter_cfg": {
                "Q": self.filter_cfg.Q.tolist(),
                "r": self.filter_cfg.r,
                "x0": self.filter_cfg.x0.to_array().tolist(),
                "P0": self.filter_cfg.P0.tolist(),
                "observation_kind": self.filter_cfg.observation_kind,
                "s0": self.filter_cfg.s0,
                "substeps": self.filter_cfg.substeps,
            },
            "training_window": list(self.training_window),
            "diagnostics": self.diagnostics,
            "final_state": self.final_state.tolist(),
            "final_cov": self.final_cov.tolist(),
            "last_npi": self.last_npi.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "RegionModel":
        params = ModelParams(**doc["params"])
        fc = doc["filter_cfg"]
        x0 = AugmentedState.from_array(np.asarray(fc["x0"], float))
        cfg = FilterConfig(
            Q=np.asarray(fc["Q"], float),
            r=float(fc["r"]),
            x0=x0,
            P0=np.asarray(fc["P0"], float),
            observation_kind=fc["observation_kind"],
            s0=float(fc["s0"]),
            substeps=int(fc["substeps"]),
        )
        return cls(
            region_id=doc["region_id"],
            params=params,
            cmap=ContactMap.from_dict(doc["map"]),
            filter_cfg=cfg,
            training_window=tuple(doc["training_window"]),
            diagnostics=doc["diagnostics"],
            final_state=np.asarray(doc["final_state"], float),
            final_cov=np.asarray(doc["final_cov"], float),
            last_npi=np.asarray(doc["last_npi"], float),
        )

    @classmethod
    def from_json(cls, text: str) -> "RegionModel":
        return cls.from_dict(json.loads(text))


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average ignoring NaNs, shorter windows at the edges."""
    x = np.asarray(x, float)
    n = len(x)
    half = window // 2
    out = np.full(n, np.nan)
    for k in range(n):
        lo = max(0, k - half)
        hi = min(n, k + half + 1)
        seg = x[lo:hi]
        good = np.isfinite(seg)
        if good.any():
            out[k] = float(np.mean(seg[good]))
    return out


class InsufficientDataError(ValueError):
    pass


def _observation_noise_variance(
    raw: np.ndarray, smoothed: np.ndarray, window: int, ma_window: int, floor: float
) -> float:
    """Report-noise variance of the averaged series, from the residual of
    the raw counts around their own moving average.

    First differences of a growing epidemic measure the trend, not the
    noise, so the residual estimator is used instead; averaging over
    ma_window days divides the raw variance accordingly.
    """
    resid = (raw - smoothed)[: window + 1]
    resid = resid[np.isfinite(resid)]
    if len(resid) < 3:
        return max(floor, 1e-12)
    return max(float(np.var(resid, ddof=1)) / ma_window, floor)


def train_region(
    reports,
    npis: np.ndarray | None = None,
    hyper: TrainingHyper | None = None,
) -> RegionModel:
    """Train one region's model from its ingested report series.

    reports duck-types the ingested RegionSeries: attributes region_id,
    dates (ISO strings), new_cases and confirmed_cases (counts, NaN for
    missing), npis ((n, 12) with NaN rows possible), population. npis
    overrides the series' own NPI matrix when given.
    """
    model, _ = train_region_detailed(reports, npis, hyper)
    return model


def train_region_detailed(
    reports,
    npis: np.ndarray | None = None,
    hyper: TrainingHyper | None = None,
) -> tuple[RegionModel, dict]:
    """train_region plus the intermediate passes, for diagnostics and tests."""
    hyper = hyper or TrainingHyper()
    dates = list(reports.dates)
    new_cases = np.asarray(reports.new_cases, float)
    confirmed = np.asarray(reports.confirmed_cases, float)
    npi_matrix = np.asarray(reports.npis if npis is None else npis, float)
    population = float(reports.population)

    # Window start: the first day the cumulative count reaches min_cases.
    above = np.nonzero(np.nan_to_num(confirmed, nan=-1.0) >= hyper.min_cases)[0]
    if len(above) == 0:
        raise InsufficientDataError(
            f"{reports.region_id}: never reaches {hyper.min_cases} cumulative cases"
        )
    start = int(above[0])
    n_window = len(dates) - start
    if n_window < hyper.min_days:
        raise InsufficientDataError(
            f"{reports.region_id}: only {n_window} days past the "
            f"{hyper.min_cases}-case threshold, need {hyper.min_days}"
        )

    beta = select_beta(hyper.contagion_prob, hyper.contagion_days)
    gamma = hyper.gamma
    alpha0 = select_alpha0(hyper.r0, beta)
    params = ModelParams(
        beta=beta,
        gamma=gamma,
        population=population,
        delta_t=1.0,
        rt_generation_unit=1.0,
    )

    smoothed_counts = moving_average(new_cases, hyper.ma_window)
    obs = smoothed_counts[start:] / population

    # Missing NPI values persist from the last report; zero before any.
    u = npi_matrix.copy()
    for k in range(1, len(u)):
        gap = ~np.isfinite(u[k])
        u[k, gap] = u[k - 1, gap]
    u = np.nan_to_num(u, nan=0.0)
    u_window = validate_npi_vector(u[start:])

    # State initialization: infections during the trailing contagious
    # period are still active; everything confirmed before that is gone.
    trailing = int(np.ceil(1.0 / beta))
    lo = max(0, start - trailing + 1)
    recent = np.nansum(new_cases[lo : start + 1])
    cum_start = confirmed[start]
    s0 = min(max(1.0 - float(cum_start) / population, 0.0), 1.0)
    i0 = min(max(float(recent) / population, 1.0 / population), 0.5, 1.0 - s0)
    x0 = AugmentedState(CompartmentState(s=s0, i=i0, alpha=alpha0))

    raw_frac = new_cases[start:] / population
    r_var = _observation_noise_variance(
        raw_frac, obs, hyper.r_window, hyper.ma_window, hyper.r_floor
    )
    alpha_q3 = hyper.alpha_noise_scale * alpha0**2
    alpha_q1 = ALPHA_NOISE_INFLATION * alpha_q3

    def make_cfg(alpha_q: float) -> FilterConfig:
        Q = np.diag(
            [hyper.si_process_noise, hyper.si_process_noise, alpha_q, 0.0, 0.0, 0.0]
        )
        P0 = np.diag(
            [
                hyper.p0_scale,
                max((hyper.p0_i_frac * i0) ** 2, 1e-12),
                (hyper.p0_alpha_frac * alpha0) ** 2,
                0.0,
                0.0,
                0.0,
            ]
        )
        return FilterConfig(
            Q=Q,
            r=r_var,
            x0=x0,
            P0=P0,
            observation_kind=NEW_CASES,
            s0=s0,
            substeps=hyper.substeps,
        )

    fit = fit_quadratic if hyper.quadratic else fit_linear
    fit_kwargs = {} if hyper.quadratic else {"mu": hyper.mu}

    # alpha responds to the NPIs through the gamma-relaxation, so the
    # regression design is the relaxed NPI path (the relaxation is linear,
    # so it commutes with the linear-in-features map forms). The first
    # 3/gamma days carry the transient from the unknown initial contact
    # rate and are dropped from the fit.
    u_relaxed = np.empty_like(u_window)
    u_relaxed[0] = u_window[0]
    for k in range(1, len(u_window)):
        u_relaxed[k] = u_relaxed[k - 1] + gamma * params.delta_t * (
            u_window[k - 1] - u_relaxed[k - 1]
        )
    burn = min(int(np.ceil(3.0 / (gamma * params.delta_t))), max(len(u_window) - 30, 0))

    def fit_drive(out: FilterOutput) -> tuple[ContactMap, np.ndarray]:
        """Fit the contact map to the smoothed contact-rate estimate.

        Rows are weighted by the inverse posterior standard deviation of
        alpha: low-incidence stretches carry little information about the
        contact rate.
        """
        alpha_sm = out.smoothed_mean[:, 2]
        var = np.maximum(out.smoothed_cov[burn:, 2, 2], 1e-14)
        w = 1.0 / np.sqrt(var)
        w = w / np.mean(w)
        cmap_fit = fit(
            alpha_sm[burn:],
            u_relaxed[burn:],
            weights=w,
            region_id=reports.region_id,
            fitted_at=dates[-1],
            **fit_kwargs,
        )
        return cmap_fit, alpha_sm

    # Pass 1: blind smoothing, drive off, alpha noise inflated.
    cfg1 = make_cfg(alpha_q1)
    out1 = eks_run(cfg1, obs, np.zeros(len(obs)), params, eps=1.0)
    cmap1, alpha_pass1 = fit_drive(out1)

    # Pass 2: informed smoothing with the trained drive, starting from the
    # backward-refined initial state of the blind pass (the reduced alpha
    # noise could no longer absorb a bad outbreak guess).
    drive = np.asarray(cmap1.evaluate(u_window), float)
    (s_r, i_r, a_r), _ = clamp_compartments(*out1.smoothed_mean[0, :3])
    x0_refined = AugmentedState(CompartmentState(s=s_r, i=i_r, alpha=a_r))
    cfg3 = replace(make_cfg(alpha_q3), x0=x0_refined)
    out3 = eks_run(cfg3, obs, drive, params, eps=1.0)
    cmap, alpha_pass3 = fit_drive(out3)

    diagnostics = {"degenerate_map": cmap.degenerate, "linear_fallback": cmap.linear_fallback}
    try:
        report = monitor(out3)
        diagnostics.update(report.to_dict())
        diagnostics["low_confidence"] = bool(report.p3_violated)
    except ValueError as exc:
        diagnostics["monitoring_error"] = str(exc)
        diagnostics["low_confidence"] = True

    model = RegionModel(
        region_id=reports.region_id,
        params=params,
        cmap=cmap,
        filter_cfg=cfg3,
        training_window=(dates[start], dates[-1]),
        diagnostics=diagnostics,
        final_state=out3.post_mean[-1].copy(),
        final_cov=out3.post_cov[-1].copy(),
        last_npi=u_window[-1].copy(),
    )
    extras = {
        "start": start,
        "obs": obs,
        "u_window": u_window,
        "alpha_pass1": alpha_pass1,
        "alpha_pass3": alpha_pass3,
        "map_pass2": cmap1,
        "map_pass4": cmap,
        "out_pass1": out1,
        "out_pass3": out3,
    }
    return model, extras


__all__ = [
    "GAMMA_FIXED",
    "ALPHA_NOISE_INFLATION",
    "InsufficientDataError",
    "RegionModel",
    "TrainingHyper",
    "moving_average",
    "select_alpha0",
    "select_beta",
    "train_region",
    "train_region_detailed",
]
