"""Finite-horizon optimal NPI control.

Two solvers produce the same object: a daily stringency schedule that
minimizes (1 - eps) * J0 + eps * J1 over the admissible box, where J0 is
the infection toll and J1 the weighted intervention cost.

* solve_fhoc_eks runs the augmented filter/smoother: the contact drive at
  each step comes from the co-state-dependent branch rule, and the free
  terminal co-state condition is enforced by re-anchoring the terminal
  co-states at zero before each smoother pass and iterating to a fixed
  point.
* solve_fhoc_fbs is the deterministic forward-backward sweep used as an
  independent cross-check: states integrate forward, co-states integrate
  backward from zero by exactly inverting the forward Euler recursion
  (which is linear in the co-states), and the input update is damped.

A sweep over eps traces the Pareto front; fixed and random comparison
scenarios are costed by plain simulation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from pandemic_fhoc.contact import (
    LINEAR,
    N_NPI,
    QUADRATIC,
    U_MAX,
    U_MIN,
    ContactMap,
    NpiSchedule,
)
from pandemic_fhoc.estimation import FilterConfig, ekf_run, rts_pass
from pandemic_fhoc.model import AugmentedState, CompartmentState, ModelParams, simulate

# Dominance comparisons treat cost differences below this as ties.
DOMINANCE_TOL = 1e-6


@dataclass(frozen=True)
class ControlProblem:
    """One finite-horizon prescription instance.

    weights may be a single 12-vector (constant in time) or an
    (horizon, 12) array of per-day NPI cost weights.
    """

    params: ModelParams
    cmap: ContactMap
    weights: np.ndarray
    eps: float
    horizon: int
    x0: CompartmentState

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"eps out of [0, 1]: {self.eps}")
        if self.horizon < 1:
            raise ValueError("horizon must be at least one day")
        w = np.asarray(self.weights, float)
        if w.ndim == 1:
            w = np.tile(w, (self.horizon, 1))
        if w.shape != (self.horizon, N_NPI):
            raise ValueError(f"weights must be ({self.horizon}, {N_NPI}), got {w.shape}")
        if (w < 0).any():
            raise ValueError("weights must be non-negative")
        object.__setattr__(self, "weights", w)


@dataclass
class ScenarioResult:
    """A costed schedule: trajectory, bi-objective pair, co-states.

    The optimizer works with continuous stringency levels; the integer
    schedule is its round-half-down projection and both cost pairs are
    kept. j0/j1 always refer to the continuous solution.
    """

    label: str
    eps: float | None
    schedule: NpiSchedule
    schedule_continuous: np.ndarray
    s: np.ndarray
    i: np.ndarray
    alpha: np.ndarray
    costates: np.ndarray  # (horizon + 1, 3): day starts then terminal
    j0: float
    j1: float
    j0_rounded: float
    j1_rounded: float
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        if self.j0 < -1e-12 or self.j1 < -1e-12:
            raise ValueError("costs must be non-negative")
        if self.j0 > 1.0 + 1e-9:
            raise ValueError(f"j0={self.j0} exceeds the whole population")


def hamiltonian(a: AugmentedState, u: np.ndarray, prob: ControlProblem, t_index: int = 0) -> float:
    """Control Hamiltonian at augmented state a and input u.

    H = (1-eps)*alpha*s*i + eps*w^T u - lam1*alpha*s*i
        + lam2*(alpha*s*i - beta*i) - gamma*lam3*(alpha - h[u])
    """
    x = a.state
    w = prob.weights[t_index]
    flow = x.alpha * x.s * x.i
    return float(
        (1.0 - prob.eps) * flow
        + prob.eps * w @ np.asarray(u, float)
        - a.lam1 * flow
        + a.lam2 * (flow - prob.params.beta * x.i)
        - prob.params.gamma * a.lam3 * (x.alpha - prob.cmap.evaluate(u))
    )


def optimal_input_linear(
    lambda3: float, w: np.ndarray, cmap: ContactMap, eps: float, gamma: float
) -> np.ndarray:
    """Pointwise Hamiltonian minimizer for a linear contact map.

    Each coordinate lands on an extreme of its admissible range:
    u_min when eps*w_k > gamma*lam3*a_k, u_max when the inequality is
    reversed, u_min on the measure-zero tie.
    """
    cost = eps * np.asarray(w, float)
    gain = gamma * lambda3 * cmap.a
    return np.where(cost < gain, U_MAX, U_MIN).astype(float)


def optimal_input_quadratic(
    lambda3: float, w: np.ndarray, cmap: ContactMap, eps: float, gamma: float
) -> np.ndarray:
    """Three-branch rule for a quadratic contact map.

    For lam3 > 0 the Hamiltonian is convex in u and an interior stationary
    point u~ = u_max - S^{-1}(eps*w/(gamma*lam3) - a) exists; each
    coordinate picks u_min, u~ or u_max according to where eps*w_k falls
    relative to gamma*lam3*a_k and gamma*lam3*(a_k + s_k), with s_k from
    S(u_max - u_min). For lam3 <= 0 the interior point is a maximum or
    saddle, so the extreme-point rule applies.
    """
    if cmap.form != QUADRATIC:
        raise ValueError("optimal_input_quadratic needs a quadratic map")
    if lambda3 <= 0.0:
        return optimal_input_linear(lambda3, w, cmap, eps, gamma)
    cost = eps * np.asarray(w, float)
    gl = gamma * lambda3
    s_vec = cmap.S @ (U_MAX - U_MIN)
    lo = gl * cmap.a
    hi = gl * (cmap.a + s_vec)
    u_interior = U_MAX - np.linalg.solve(cmap.S, cost / gl - cmap.a)
    u = np.clip(u_interior, U_MIN, U_MAX)
    u = np.where(cost <= lo, U_MAX.astype(float), u)
    u = np.where(cost >= hi, U_MIN.astype(float), u)
    return u


def optimal_input(
    lambda3: float, w: np.ndarray, cmap: ContactMap, eps: float, gamma: float
) -> np.ndarray:
    if cmap.form == LINEAR:
        return optimal_input_linear(lambda3, w, cmap, eps, gamma)
    return optimal_input_quadratic(lambda3, w, cmap, eps, gamma)


def round_schedule(u_cont: np.ndarray) -> NpiSchedule:
    """Round-half-down to integer levels (2.5 -> 2), clipped to bounds."""
    levels = np.ceil(np.asarray(u_cont, float) - 0.5).astype(int)
    return NpiSchedule(levels=np.clip(levels, U_MIN, U_MAX))


def npi_cost(schedule: np.ndarray, weights: np.ndarray) -> float:
    """J1: sum over days of w(t)^T u(t), one-day quadrature."""
    return float(np.sum(np.asarray(schedule, float) * weights))


def simulate_schedule(
    prob: ControlProblem, schedule: np.ndarray, substeps: int = 10, label: str = "scenario"
) -> ScenarioResult:
    """Cost a fixed schedule by noise-free simulation.

    j0 is the discrete integral of alpha*s*i dt, which telescopes to
    s(t0) - s(t1) for the Euler scheme; j1 is the weighted stringency sum.
    """
    sched = np.asarray(schedule, float)
    if sched.shape != (prob.horizon, N_NPI):
        raise ValueError(f"schedule must be ({prob.horizon}, {N_NPI})")
    drive = np.asarray(prob.cmap.evaluate(sched), float)
    traj = simulate(prob.x0, drive, prob.params, substeps=substeps)
    rounded = round_schedule(sched)
    drive_r = np.asarray(prob.cmap.evaluate(rounded.levels.astype(float)), float)
    traj_r = simulate(prob.x0, drive_r, prob.params, substeps=substeps)
    return ScenarioResult(
        label=label,
        eps=None,
        schedule=rounded,
        schedule_continuous=sched,
        s=traj["s"],
        i=traj["i"],
        alpha=traj["alpha"],
        costates=np.zeros((prob.horizon + 1, 3)),
        j0=float(traj["infected_total"]),
        j1=npi_cost(sched, prob.weights),
        j0_rounded=float(traj_r["infected_total"]),
        j1_rounded=npi_cost(rounded.levels, prob.weights),
    )


def _costate_coeffs(s: float, i: float, alpha: float, p: ModelParams, eps: float):
    """Linear form of the co-state rates: lam_dot = M(x) lam + c(x)."""
    M = np.array(
        [
            [alpha * i, -alpha * i, 0.0],
            [alpha * s, -alpha * s + p.beta, 0.0],
            [s * i, -s * i, p.gamma],
        ]
    )
    c = (eps - 1.0) * np.array([alpha * i, alpha * s, s * i])
    return M, c


def _backward_costates(
    s: np.ndarray, i: np.ndarray, alpha: np.ndarray, p: ModelParams, eps: float, dt: float
) -> np.ndarray:
    """Integrate co-states backward from zero terminal values.

    Inverts the forward Euler recursion lam_{k+1} = (I + dt M_k) lam_k
    + dt c_k exactly, one 3x3 solve per substep; backward integration of
    the co-state system is stable.
    """
    n = len(s)
    lam = np.zeros((n, 3))
    eye = np.eye(3)
    for k in range(n - 2, -1, -1):
        M, c = _costate_coeffs(s[k], i[k], alpha[k], p, eps)
        lam[k] = np.linalg.solve(eye + dt * M, lam[k + 1] - dt * c)
    return lam


def solve_fhoc_fbs(
    prob: ControlProblem,
    substeps: int = 10,
    damping: float = 0.5,
    tol: float = 1e-8,
    max_iter: int = 500,
) -> ScenarioResult:
    """Deterministic forward-backward sweep solution of the control problem.

    Alternates: forward state integration under the current schedule,
    exact backward co-state integration from the zero terminal condition,
    pointwise input minimization, and a relaxed schedule update. Serves as
    the independent oracle for the filter-based solver.
    """
    n_days = prob.horizon
    dt = prob.params.delta_t / substeps
    gamma = prob.params.gamma
    u = np.tile(U_MIN.astype(float), (n_days, 1))
    converged = False
    iterations = 0
    damp = damping
    prev_delta = np.inf
    for it in range(max_iter):
        iterations = it + 1
        drive = np.asarray(prob.cmap.evaluate(u), float)
        # substep-resolution state path for the backward pass
        s_sub, i_sub, a_sub = _substep_path(prob, drive, substeps)
        lam = _backward_costates(s_sub, i_sub, a_sub, prob.params, prob.eps, dt)
        u_rule = np.array(
            [
                optimal_input(lam[d * substeps, 2], prob.weights[d], prob.cmap, prob.eps, gamma)
                for d in range(n_days)
            ]
        )
        u_next = (1.0 - damp) * u + damp * u_rule
        delta = float(np.max(np.abs(u_next - u)))
        u = u_next
        if delta < tol:
            converged = True
            break
        if delta > prev_delta:
            damp = max(damp / 2.0, 1.0 / 64.0)  # calm bang-bang chattering
        prev_delta = delta
    # final undamped schedule from the converged co-states
    drive = np.asarray(prob.cmap.evaluate(np.clip(u, U_MIN, U_MAX)), float)
    s_sub, i_sub, a_sub = _substep_path(prob, drive, substeps)
    lam = _backward_costates(s_sub, i_sub, a_sub, prob.params, prob.eps, dt)
    u_final = np.array(
        [
            optimal_input(lam[d * substeps, 2], prob.weights[d], prob.cmap, prob.eps, gamma)
            for d in range(n_days)
        ]
    )
    result = simulate_schedule(prob, u_final, substeps=substeps, label=f"fbs eps={prob.eps:g}")
    result.eps = prob.eps
    result.costates = lam[::substeps]
    result.converged = converged
    result.iterations = iterations
    return result


def _substep_path(prob: ControlProblem, drive: np.ndarray, substeps: int):
    """States at every Euler substep (length n_days*substeps + 1)."""
    from pandemic_fhoc.model import step_state

    p_sub = ModelParams(
        beta=prob.params.beta,
        gamma=prob.params.gamma,
        population=prob.params.population,
        delta_t=prob.params.delta_t / substeps,
        rt_generation_unit=prob.params.rt_generation_unit,
    )
    n = len(drive) * substeps
    s = np.empty(n + 1)
    i = np.empty(n + 1)
    a = np.empty(n + 1)
    cur = prob.x0
    s[0], i[0], a[0] = cur.s, cur.i, cur.alpha
    for k in range(n):
        cur, _ = step_state(cur, drive[k // substeps], p_sub)
        s[k + 1], i[k + 1], a[k + 1] = cur.s, cur.i, cur.alpha
    return s, i, a


def default_prescription_config(x0: CompartmentState, substeps: int = 10) -> FilterConfig:
    """Filter configuration for prescription-over-horizon runs.

    No observations arrive during a what-if horizon, so r is nominal. The
    co-state block carries zero process noise (their dynamics are exact
    given the states) and an O(1) initial variance so the terminal anchor
    can re-shape the whole co-state path through the smoother.
    """
    Q = np.diag([1e-9, 1e-9, 1e-9, 0.0, 0.0, 0.0])
    P0 = np.diag([1e-8, 1e-8, 1e-8, 1.0, 1.0, 1.0])
    return FilterConfig(
        Q=Q,
        r=1e-6,
        x0=AugmentedState(state=x0),
        P0=P0,
        observation_kind="new_cases",
        substeps=substeps,
    )


def solve_fhoc_eks(
    prob: ControlProblem,
    cfg: FilterConfig | None = None,
    tol: float = 1e-6,
    max_iter: int = 50,
) -> ScenarioResult:
    """Filter/smoother solution of the control problem.

    Each iteration runs the augmented EKF forward over the horizon with
    the contact drive given by the branch rule applied to the current
    co-state trajectory (zero on the first pass), re-anchors the terminal
    co-states at zero, and smooths backward. The smoothed co-state path
    feeds the next pass; iteration stops when it changes by less than tol
    in max-norm. Non-convergence returns the best iterate, flagged.
    """
    n_days = prob.horizon
    gamma = prob.params.gamma
    if cfg is None:
        cfg = default_prescription_config(prob.x0)
    else:
        cfg = replace(cfg, x0=AugmentedState(state=prob.x0))
    substeps = cfg.substeps
    obs = np.full(n_days, np.nan)  # what-if horizon: prediction only

    lam_traj = np.zeros((n_days, 3))
    lam0 = np.zeros(3)
    best = None
    best_delta = np.inf
    converged = False
    iterations = 0
    damp = 1.0
    prev_delta = np.inf
    for it in range(max_iter):
        iterations = it + 1
        day_lambda3 = np.concatenate([[lam0[2]], lam_traj[:-1, 2]])
        schedule = np.array(
            [
                optimal_input(day_lambda3[d], prob.weights[d], prob.cmap, prob.eps, gamma)
                for d in range(n_days)
            ]
        )
        drive = np.asarray(prob.cmap.evaluate(schedule), float)
        run_cfg = replace(
            cfg,
            x0=AugmentedState(
                state=prob.x0, lam1=float(lam0[0]), lam2=float(lam0[1]), lam3=float(lam0[2])
            ),
        )
        out = ekf_run(run_cfg, obs, drive, prob.params, eps=prob.eps)
        terminal = out.post_mean[-1].copy()
        terminal[3:] = 0.0
        out = rts_pass(out, terminal_mean=terminal)
        lam_sm = out.smoothed_mean[:, 3:]
        # pull the smoothed co-states back one day to the horizon start
        s_sub, i_sub, a_sub = _substep_path(prob, drive[:1], substeps)
        lam0_sm = _anchor_initial_costates(
            lam_sm[0], s_sub, i_sub, a_sub, prob.params, prob.eps, substeps
        )
        lam_next = lam_traj + damp * (lam_sm - lam_traj)
        lam0_next = lam0 + damp * (lam0_sm - lam0)
        delta = float(
            max(np.max(np.abs(lam_next - lam_traj)), np.max(np.abs(lam0_next - lam0)))
        )
        lam_traj = lam_next
        lam0 = lam0_next
        if delta < best_delta:
            best_delta = delta
            best = (lam_traj.copy(), lam0.copy())
        if delta < tol:
            converged = True
            break
        if delta > prev_delta:
            damp = max(damp / 2.0, 1.0 / 32.0)
        prev_delta = delta
    if not converged and best is not None:
        lam_traj, lam0 = best

    day_lambda3 = np.concatenate([[lam0[2]], lam_traj[:-1, 2]])
    u_final = np.array(
        [
            optimal_input(day_lambda3[d], prob.weights[d], prob.cmap, prob.eps, gamma)
            for d in range(n_days)
        ]
    )
    result = simulate_schedule(prob, u_final, substeps=substeps, label=f"optimal eps={prob.eps:g}")
    result.eps = prob.eps
    result.costates = np.vstack([lam0[None, :], lam_traj])
    result.converged = converged
    result.iterations = iterations
    return result


def _anchor_initial_costates(lam_day1, s_sub, i_sub, a_sub, params, eps, substeps):
    """Invert the day-0 co-state recursion to recover lam at the horizon start."""
    dt = params.delta_t / substeps
    lam = np.asarray(lam_day1, float)
    eye = np.eye(3)
    for k in range(substeps - 1, -1, -1):
        M, c = _costate_coeffs(s_sub[k], i_sub[k], a_sub[k], params, eps)
        lam = np.linalg.solve(eye + dt * M, lam - dt * c)
    return lam


@dataclass
class SweepPoint:
    label: str
    kind: str  # optimal | fixed | random
    eps: float | None
    j0: float
    j1: float
    converged: bool
    dominated: bool = False
    schedule: NpiSchedule | None = None
    schedule_continuous: np.ndarray | None = None


@dataclass
class SweepResult:
    points: list[SweepPoint]
    chosen: SweepPoint | None

    def non_dominated(self) -> list[SweepPoint]:
        return [p for p in self.points if not p.dominated]

    def to_csv(self) -> str:
        lines = ["label,kind,eps,j0,j1,converged,dominated"]
        for p in self.points:
            eps_txt = "" if p.eps is None else f"{p.eps:.12g}"
            lines.append(
                f"{p.label},{p.kind},{eps_txt},{p.j0:.12g},{p.j1:.12g},"
                f"{int(p.converged)},{int(p.dominated)}"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "points": [
                {
                    "label": p.label,
                    "kind": p.kind,
                    "eps": p.eps,
                    "j0": p.j0,
                    "j1": p.j1,
                    "converged": p.converged,
                    "dominated": p.dominated,
                }
                for p in self.points
            ],
            "chosen": self.chosen.label if self.chosen else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def dominates(q: SweepPoint, p: SweepPoint, tol: float = DOMINANCE_TOL) -> bool:
    """q dominates p: no worse in both costs, strictly better in one (mod tol)."""
    return (
        q.j0 <= p.j0 + tol
        and q.j1 <= p.j1 + tol
        and (q.j0 < p.j0 - tol or q.j1 < p.j1 - tol)
    )


def strictly_dominates(q: SweepPoint, p: SweepPoint) -> bool:
    """q strictly better than p in both objectives."""
    return q.j0 < p.j0 and q.j1 < p.j1


def mark_dominated(points: list[SweepPoint], tol: float = DOMINANCE_TOL) -> None:
    for p in points:
        p.dominated = any(dominates(q, p, tol) for q in points if q is not p)


def closest_to_origin(points: list[SweepPoint]) -> SweepPoint | None:
    """Converged optimal point nearest the origin of the normalized plane."""
    cand = [p for p in points if p.kind == "optimal" and p.converged]
    if not cand:
        return None
    j0_max = max(max(p.j0 for p in cand), 1e-300)
    j1_max = max(max(p.j1 for p in cand), 1e-300)
    dist = [np.hypot(p.j0 / j0_max, p.j1 / j1_max) for p in cand]
    return cand[int(np.argmin(dist))]


def random_schedule(rng: np.random.Generator, horizon: int, constant: bool) -> np.ndarray:
    """Uniform integer stringencies, constant over time or redrawn daily."""
    if constant:
        u = rng.integers(U_MIN, U_MAX + 1, size=N_NPI)
        return np.tile(u, (horizon, 1)).astype(float)
    return rng.integers(U_MIN, U_MAX + 1, size=(horizon, N_NPI)).astype(float)


def pareto_sweep(
    prob: ControlProblem,
    eps_values: np.ndarray,
    scenarios: list[tuple[str, np.ndarray]] | None = None,
    cfg: FilterConfig | None = None,
    keep_schedules: bool = True,
) -> SweepResult:
    """Sweep eps over [0, 1] and cost the comparison scenarios.

    Each eps value produces one optimal point via solve_fhoc_eks; each
    (label, schedule) scenario is costed by simulation. Solve failures are
    recorded as non-converged points and the sweep continues.
    """
    eps_values = np.asarray(eps_values, float)
    if ((eps_values < 0) | (eps_values > 1)).any():
        raise ValueError("eps values must lie in [0, 1]")
    points: list[SweepPoint] = []
    for eps in eps_values:
        prob_eps = replace(prob, eps=float(eps))
        try:
            res = solve_fhoc_eks(prob_eps, cfg=cfg)
            points.append(
                SweepPoint(
                    label=f"optimal eps={eps:.6g}",
                    kind="optimal",
                    eps=float(eps),
                    j0=res.j0,
                    j1=res.j1,
                    converged=res.converged,
                    schedule=res.schedule if keep_schedules else None,
                    schedule_continuous=res.schedule_continuous if keep_schedules else None,
                )
            )
        except Exception:
            points.append(
                SweepPoint(
                    label=f"optimal eps={eps:.6g}",
                    kind="optimal",
                    eps=float(eps),
                    j0=np.inf,
                    j1=np.inf,
                    converged=False,
                )
            )
    for label, schedule in scenarios or []:
        kind = "random" if label.startswith("random") else "fixed"
        res = simulate_schedule(prob, np.asarray(schedule, float), label=label)
        points.append(
            SweepPoint(
                label=label,
                kind=kind,
                eps=None,
                j0=res.j0,
                j1=res.j1,
                converged=True,
                schedule=res.schedule if keep_schedules else None,
                schedule_continuous=res.schedule_continuous if keep_schedules else None,
            )
        )
    mark_dominated(points)
    return SweepResult(points=points, chosen=closest_to_origin(points))
