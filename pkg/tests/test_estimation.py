import numpy as np
import pytest

from pandemic_fhoc.estimation import (
    NEW_CASES,
    TOTAL_CASES,
    FilterConfig,
    FilterDivergedError,
    ekf_run,
    eks_run,
    forecast,
    monitor,
    observation_jacobian,
    observe_mean,
)
from pandemic_fhoc.model import (
    AugmentedState,
    CompartmentState,
    ModelParams,
    step_augmented,
)

PARAMS = ModelParams(beta=0.219, gamma=0.1429, population=1e6, delta_t=1.0)
X0 = AugmentedState(CompartmentState(s=0.99, i=0.005, alpha=0.9))


def generate_truth(n, drive=0.9, x0=X0, eps=1.0, q_diag=None, r=0.0, seed=None, params=PARAMS):
    """Simulate the model forward, optionally with process/observation noise.

    Per-step process noise has covariance q_diag * dt (matching the
    filter's per-day diffusion convention), injected through the Euler
    noise channel.
    """
    rng = np.random.default_rng(seed)
    x = x0.to_array()
    states = np.empty((n, 6))
    obs = np.empty(n)
    for k in range(n):
        if q_diag is None:
            noise = None
        else:
            # step noise enters as dt * w, so Var(dt*w) = q*dt => w ~ N(0, q/dt)
            noise = rng.normal(0.0, np.sqrt(np.asarray(q_diag) / params.delta_t))
        x, _ = step_augmented(x, drive, params, eps, noise=noise)
        states[k] = x
        v = rng.normal(0.0, np.sqrt(r)) if r > 0 else 0.0
        obs[k] = observe_mean(NEW_CASES, x, 1.0) + v
    return states, obs


def make_cfg(q_diag=0.0, r=1e-8, x0=X0, kind=NEW_CASES, P0_scale=1e-4, s0=1.0):
    q = np.zeros(6) if np.isscalar(q_diag) and q_diag == 0.0 else np.asarray(q_diag, float)
    if q.ndim == 0:
        q = np.full(6, float(q.item()))
        q[3:] = 0.0  # co-states deterministic unless a test says otherwise
    P0 = np.diag([P0_scale, P0_scale, P0_scale, 0.0, 0.0, 0.0])
    return FilterConfig(
        Q=np.diag(q),
        r=r,
        x0=x0,
        P0=P0,
        observation_kind=kind,
        s0=s0,
    )


class TestEkf:
    def test_self_consistency_noise_free(self):
        # filter fed the model's own output must lock on after burn-in
        truth, obs = generate_truth(80)
        cfg = make_cfg(q_diag=0.0, r=1e-10)
        out = ekf_run(cfg, obs, np.full(80, 0.9), PARAMS, eps=1.0)
        err = np.abs(out.post_mean[20:, :3] - truth[20:, :3])
        assert err.max() < 1e-8

    def test_all_missing_equals_open_loop(self):
        truth, _ = generate_truth(40)
        cfg = make_cfg(q_diag=1e-6)
        out = ekf_run(cfg, np.full(40, np.nan), np.full(40, 0.9), PARAMS, eps=1.0)
        assert out.n_innovations == 0
        assert np.allclose(out.post_mean[:, :3], truth[:, :3], atol=1e-12)
        assert np.allclose(out.post_mean, out.prior_mean)

    def test_gap_steps_skip_update(self):
        _, obs = generate_truth(50)
        obs[10:15] = np.nan
        cfg = make_cfg(q_diag=1e-7)
        out = ekf_run(cfg, obs, np.full(50, 0.9), PARAMS)
        assert out.n_innovations == 45
        assert np.all(np.isnan(out.innovations[10:15]))

    def test_gain_bounded(self):
        _, obs = generate_truth(60, q_diag=np.full(6, 1e-7), seed=1)
        cfg = make_cfg(q_diag=1e-7, r=1e-8)
        out = ekf_run(cfg, obs, np.full(60, 0.9), PARAMS)
        for k in range(60):
            c = observation_jacobian(NEW_CASES, out.prior_mean[k])
            gamma = c @ out.prior_cov[k] @ c + cfg.r
            k_gain = out.prior_cov[k] @ c / gamma
            assert -1e-12 <= c @ k_gain <= 1.0

    def test_posterior_covariance_psd(self):
        _, obs = generate_truth(60, q_diag=np.full(6, 1e-6), seed=2, r=1e-8)
        cfg = make_cfg(q_diag=1e-6, r=1e-8)
        out = ekf_run(cfg, obs, np.full(60, 0.9), PARAMS)
        for k in range(60):
            assert np.linalg.eigvalsh(out.post_cov[k]).min() > -1e-9
            assert np.allclose(out.post_cov[k], out.post_cov[k].T)

    def test_linear_equivalence_with_textbook_kf(self):
        # with i = 0, zero co-states and eps = 1, the model is exactly
        # affine and the total-cases map is linear; a hand-rolled
        # textbook Kalman filter must agree to machine precision
        n = 30
        rng = np.random.default_rng(3)
        drive = 0.4
        dt, g, beta = PARAMS.delta_t, PARAMS.gamma, PARAMS.beta
        q = np.zeros(6)
        q[0] = 1e-6
        r = 1e-6
        P0 = np.diag([1e-4, 0, 0, 0, 0, 0]).astype(float)
        x0 = AugmentedState(CompartmentState(s=0.95, i=0.0, alpha=0.5))
        obs = 1.0 - 0.95 + rng.normal(0, np.sqrt(r), n)
        cfg = FilterConfig(
            Q=np.diag(q), r=r, x0=x0, P0=P0, observation_kind=TOTAL_CASES, s0=1.0
        )
        out = ekf_run(cfg, obs, np.full(n, drive), PARAMS, eps=1.0)

        def jac(x):
            # transition Jacobian written out independently (eps = 1)
            s, i, al, l1, l2, l3 = x
            b = l1 - l2
            F = np.eye(6)
            F[0, 0] = 1 - dt * al * i
            F[0, 1] = -dt * al * s
            F[0, 2] = -dt * s * i
            F[1, 0] = dt * al * i
            F[1, 1] = 1 + dt * al * s - dt * beta
            F[1, 2] = dt * s * i
            F[2, 2] = 1 - dt * g
            F[3, 1] = dt * b * al
            F[3, 2] = dt * b * i
            F[3, 3] = 1 + dt * al * i
            F[3, 4] = -dt * al * i
            F[4, 0] = dt * b * al
            F[4, 2] = dt * b * s
            F[4, 3] = dt * al * s
            F[4, 4] = 1 - dt * al * s + dt * beta
            F[5, 0] = dt * b * i
            F[5, 1] = dt * b * s
            F[5, 3] = dt * s * i
            F[5, 4] = -dt * s * i
            F[5, 5] = 1 + dt * g
            return F

        x = x0.to_array()
        P = P0.copy()
        c = np.array([-1.0, 0, 0, 0, 0, 0])
        u_aff = np.zeros(6)
        u_aff[2] = dt * g * drive
        for k in range(n):
            F = jac(x)
            x = F @ x + u_aff  # affine on the i=0, lam=0 manifold
            P = F @ P @ F.T + np.diag(q) * dt
            P = (P + P.T) / 2
            gamma = c @ P @ c + r
            k_gain = P @ c / gamma
            x = x + k_gain * (obs[k] - (1.0 - x[0]))
            P = (np.eye(6) - np.outer(k_gain, c)) @ P
            P = (P + P.T) / 2
            assert np.allclose(x, out.post_mean[k], atol=1e-12)
            assert np.allclose(P, out.post_cov[k], atol=1e-12)

    def test_zero_gain_with_zero_covariance(self):
        cfg = FilterConfig(
            Q=np.zeros((6, 6)),
            r=1e-12,
            x0=X0,
            P0=np.zeros((6, 6)),
            observation_kind=NEW_CASES,
        )
        obs = np.full(5, 1e9)  # absurd observations, but zero state uncertainty
        out = ekf_run(cfg, obs, np.full(5, 0.9), PARAMS)
        assert out.n_innovations == 5
        assert np.all(np.isfinite(out.post_mean))

    def test_rejects_negative_drive(self):
        with pytest.raises(ValueError):
            ekf_run(make_cfg(), np.zeros(3), np.full(3, -0.1), PARAMS)


class TestEks:
    def test_noise_free_smoother_matches_truth(self):
        truth, obs = generate_truth(60)
        cfg = make_cfg(q_diag=0.0, r=1e-10)
        out = eks_run(cfg, obs, np.full(60, 0.9), PARAMS)
        assert np.allclose(out.smoothed_mean[20:, :3], truth[20:, :3], atol=1e-7)

    def test_final_step_boundary(self):
        _, obs = generate_truth(40, q_diag=np.full(6, 1e-7), seed=4, r=1e-8)
        cfg = make_cfg(q_diag=1e-7, r=1e-8)
        out = eks_run(cfg, obs, np.full(40, 0.9), PARAMS)
        assert np.allclose(out.smoothed_mean[-1], out.post_mean[-1])
        assert np.allclose(out.smoothed_cov[-1], out.post_cov[-1])

    def test_smoothed_trace_not_larger(self):
        _, obs = generate_truth(80, q_diag=np.full(6, 1e-7), seed=5, r=1e-8)
        cfg = make_cfg(q_diag=1e-7, r=1e-8)
        out = eks_run(cfg, obs, np.full(80, 0.9), PARAMS)
        for k in range(80):
            assert np.trace(out.smoothed_cov[k]) <= np.trace(out.post_cov[k]) + 1e-12

    def test_smoother_beats_filter_rmse_on_average(self):
        # near-critical regime: the observation stays informative so the
        # comparison is about estimation, not signal collapse
        q = np.zeros(6)
        q[2] = 1e-5  # alpha wanders; filter must track it
        x0 = AugmentedState(CompartmentState(s=0.95, i=0.01, alpha=0.22))
        filt_rmses, smooth_rmses = [], []
        for seed in range(8):
            truth, obs = generate_truth(
                150, q_diag=q, r=1e-9, seed=seed, drive=0.22, x0=x0
            )
            cfg = make_cfg(q_diag=q, r=1e-9, x0=x0)
            out = eks_run(cfg, obs, np.full(150, 0.22), PARAMS)
            filt_rmses.append(np.sqrt(np.mean((out.post_mean[:, 2] - truth[:, 2]) ** 2)))
            smooth_rmses.append(
                np.sqrt(np.mean((out.smoothed_mean[:, 2] - truth[:, 2]) ** 2))
            )
        assert np.mean(smooth_rmses) <= np.mean(filt_rmses)


class TestForecast:
    def test_horizon_zero_returns_posterior(self):
        cfg = make_cfg(q_diag=1e-6)
        x = X0.to_array()
        P = np.eye(6) * 1e-4
        fc = forecast(cfg, x, P, np.zeros(0), horizon=0, params=PARAMS)
        assert len(fc.mean) == 1
        assert fc.mean[0] == pytest.approx(observe_mean(NEW_CASES, x, 1.0))

    def test_envelope_grows_with_positive_q(self):
        # near-critical regime so the observation map does not collapse
        cfg = make_cfg(q_diag=1e-6, r=1e-8)
        x = AugmentedState(CompartmentState(s=0.97, i=0.01, alpha=0.22)).to_array()
        P = np.diag([1e-6, 1e-6, 1e-6, 0, 0, 0]).astype(float)
        fc = forecast(cfg, x, P, np.full(40, 0.22), horizon=40, params=PARAMS)
        width = fc.hi - fc.lo
        assert width[40] > width[1]

    def test_envelope_bounded_with_zero_q(self):
        cfg = make_cfg(q_diag=0.0, r=1e-8)
        x = AugmentedState(CompartmentState(s=0.9, i=0.001, alpha=0.1)).to_array()
        P = np.eye(6) * 1e-8
        fc = forecast(cfg, x, P, np.full(60, 0.1), horizon=60, params=PARAMS)
        width = fc.hi - fc.lo
        # stable regime: the envelope cannot blow up without process noise
        assert width.max() < 10 * width[0]

    def test_negative_horizon_rejected(self):
        cfg = make_cfg()
        with pytest.raises(ValueError):
            forecast(cfg, X0.to_array(), np.eye(6), np.zeros(0), horizon=-1, params=PARAMS)


class TestMonitor:
    def _well_specified_run(self, seed, n=250, r_filter=None):
        # near-critical so the observation map keeps its gain throughout
        q = np.zeros(6)
        q[:3] = [1e-10, 1e-10, 1e-6]
        r = 1e-10
        x0 = AugmentedState(CompartmentState(s=0.95, i=0.01, alpha=0.22))
        _, obs = generate_truth(n, q_diag=q, r=r, seed=seed, drive=0.22, x0=x0)
        cfg = make_cfg(q_diag=q, r=r if r_filter is None else r_filter, x0=x0)
        return ekf_run(cfg, obs, np.full(n, 0.22), PARAMS)

    def test_well_specified_passes(self):
        healthy = sum(monitor(self._well_specified_run(seed)).healthy for seed in range(20))
        assert healthy >= 18

    def test_underspecified_r_flagged(self):
        flagged = 0
        for seed in range(10):
            # filter believes 10x less observation noise than reality
            rep = monitor(self._well_specified_run(seed, r_filter=1e-11))
            flagged += rep.p3_violated
        assert flagged >= 9

    def test_constant_zero_innovations(self):
        # an exact model with an over-specified r: P1/P2 pass, P3 flags
        _, obs = generate_truth(60)
        cfg = make_cfg(q_diag=0.0, r=1e-4)
        rep = monitor(ekf_run(cfg, obs, np.full(60, 0.9), PARAMS))
        assert not rep.p1_violated
        assert not rep.p2_violated
        assert rep.p3_violated

    def test_too_few_samples(self):
        _, obs = generate_truth(20)
        out = ekf_run(make_cfg(), obs, np.full(20, 0.9), PARAMS)
        with pytest.raises(ValueError):
            monitor(out)


class TestOutputCsv:
    def test_csv_shape(self):
        _, obs = generate_truth(10)
        out = ekf_run(make_cfg(), obs, np.full(10, 0.9), PARAMS)
        lines = out.to_csv().strip().splitlines()
        assert lines[0].startswith("step,s,i,alpha")
        assert len(lines) == 11
