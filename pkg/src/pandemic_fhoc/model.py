"""Contact-controlled susceptible-infected compartmental model.

The model tracks the susceptible fraction s, the infected-contagious
fraction i, and a time-varying contagion rate alpha that relaxes toward an
exogenous contact drive (the output of a trained NPI-to-contact map) at
rate gamma. Three co-state variables ride along for the optimal-control
solvers; together they form the six-dimensional augmented state used by
the filter and the prescriptor.

State ordering everywhere in this package: [s, i, alpha, lam1, lam2, lam3].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Hard cap applied to alpha when clamping filter/simulation states (1/day).
ALPHA_CAP = 10.0

# Indices into the augmented state vector.
IDX_S, IDX_I, IDX_ALPHA, IDX_L1, IDX_L2, IDX_L3 = range(6)


@dataclass(frozen=True)
class CompartmentState:
    """Fractions of population plus the current contagion rate.

    s and i are population fractions in [0, 1] with s + i <= 1; alpha is
    the contagion rate in 1/day, non-negative.
    """

    s: float
    i: float
    alpha: float

    def __post_init__(self):
        for name in ("s", "i", "alpha"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0.0 <= self.s <= 1.0:
            raise ValueError(f"s out of [0, 1]: {self.s}")
        if not 0.0 <= self.i <= 1.0:
            raise ValueError(f"i out of [0, 1]: {self.i}")
        if self.s + self.i > 1.0 + 1e-12:
            raise ValueError(f"s + i exceeds 1: {self.s + self.i}")
        if self.alpha < 0.0:
            raise ValueError(f"alpha negative: {self.alpha}")


@dataclass(frozen=True)
class ModelParams:
    """Fixed model parameters for one region.

    beta
        Elimination rate from the contagious group (1/day).
    gamma
        Action-to-effect rate: inverse lag between an NPI change and its
        effect on the contact rate (1/day).
    population
        Region population size N, used to convert case counts to fractions.
    delta_t
        Euler discretization step in days. Must be small relative to the
        model time constants (enforced: delta_t <= min(1/beta, 1/gamma)).
    rt_generation_unit
        Generation time-unit (days) used by the reproduction-rate formula.
        Deliberately a separate field from delta_t: the two play different
        roles even though both are measured in days.
    """

    beta: float
    gamma: float
    population: float
    delta_t: float = 1.0
    rt_generation_unit: float = 1.0

    def __post_init__(self):
        for name in ("beta", "gamma", "population", "delta_t", "rt_generation_unit"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be strictly positive, got {v}")
        cap = min(1.0 / self.beta, 1.0 / self.gamma)
        if self.delta_t > cap + 1e-12:
            raise ValueError(
                f"delta_t={self.delta_t} too coarse; must be <= min(1/beta, 1/gamma)={cap:.4g}"
            )


@dataclass(frozen=True)
class AugmentedState:
    """Compartment state plus the three co-states of the control problem.

    lam1 and lam2 are the adjoints of s and i (dimensionless); lam3 is the
    adjoint of alpha and carries units of days.
    """

    state: CompartmentState
    lam1: float = 0.0
    lam2: float = 0.0
    lam3: float = 0.0

    def __post_init__(self):
        for name in ("lam1", "lam2", "lam3"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def to_array(self) -> np.ndarray:
        x = self.state
        return np.array([x.s, x.i, x.alpha, self.lam1, self.lam2, self.lam3], float)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "AugmentedState":
        arr = np.asarray(arr, float)
        if arr.shape != (6,):
            raise ValueError(f"expected shape (6,), got {arr.shape}")
        return cls(
            state=CompartmentState(float(arr[0]), float(arr[1]), float(arr[2])),
            lam1=float(arr[3]),
            lam2=float(arr[4]),
            lam3=float(arr[5]),
        )


def _require_finite(*values: float) -> None:
    for v in values:
        if not np.isfinite(v):
            raise ValueError("non-finite input")


def step_state(
    x: CompartmentState,
    h_u: float,
    p: ModelParams,
    noise: np.ndarray | None = None,
) -> tuple[CompartmentState, bool]:
    """One forward Euler step of (s, i, alpha) under contact drive h_u.

        s'     = s - dt * alpha * s * i             + dt * w_s
        i'     = i + dt * alpha * s * i - dt*beta*i + dt * w_i
        alpha' = alpha - dt*gamma*alpha + dt*gamma*h_u + dt * w_alpha

    Results are clamped back onto the physical ranges (s, i in [0, 1] with
    s + i <= 1, alpha in [0, ALPHA_CAP]); the returned flag is True when
    any clamping occurred.
    """
    if noise is None:
        noise = np.zeros(3)
    _require_finite(x.s, x.i, x.alpha, h_u, *np.asarray(noise, float))
    if h_u < 0.0:
        raise ValueError(f"contact drive must be non-negative, got {h_u}")
    dt = p.delta_t
    flow = x.alpha * x.s * x.i
    s_new = x.s - dt * flow + dt * noise[0]
    i_new = x.i + dt * flow - dt * p.beta * x.i + dt * noise[1]
    a_new = x.alpha - dt * p.gamma * x.alpha + dt * p.gamma * h_u + dt * noise[2]
    (s_c, i_c, a_c), clamped = clamp_compartments(s_new, i_new, a_new)
    return CompartmentState(s_c, i_c, a_c), clamped


def clamp_compartments(s: float, i: float, a: float) -> tuple[tuple[float, float, float], bool]:
    """Clamp (s, i, alpha) onto the physical simplex and alpha cap.

    s is clamped to [0, 1] first, then i to [0, 1 - s] so the pair stays on
    the simplex; noise is the only way out of it, so the excess is taken
    from whichever coordinate broke the bound.
    """
    s_c = float(min(max(s, 0.0), 1.0))
    i_c = float(min(max(i, 0.0), 1.0 - s_c))
    a_c = float(min(max(a, 0.0), ALPHA_CAP))
    clamped = bool(s_c != s or i_c != i or a_c != a)
    return (s_c, i_c, a_c), clamped


def step_costates(
    a: AugmentedState,
    p: ModelParams,
    eps: float,
    noise: np.ndarray | None = None,
) -> tuple[float, float, float]:
    """One forward Euler step of the three co-states.

    The shared bracket is B = lam1 - lam2 - 1 + eps:

        lam1' = lam1 + dt * B * alpha * i          + dt * eta1
        lam2' = lam2 + dt * B * alpha * s + dt*beta*lam2 + dt * eta2
        lam3' = lam3 + dt * B * s * i     + dt*gamma*lam3 + dt * eta3
    """
    if noise is None:
        noise = np.zeros(3)
    x = a.state
    _require_finite(x.s, x.i, x.alpha, a.lam1, a.lam2, a.lam3, eps, *np.asarray(noise, float))
    dt = p.delta_t
    b = a.lam1 - a.lam2 - 1.0 + eps
    l1 = a.lam1 + dt * b * x.alpha * x.i + dt * noise[0]
    l2 = a.lam2 + dt * b * x.alpha * x.s + dt * p.beta * a.lam2 + dt * noise[1]
    l3 = a.lam3 + dt * b * x.s * x.i + dt * p.gamma * a.lam3 + dt * noise[2]
    return float(l1), float(l2), float(l3)


def step_augmented(
    x: np.ndarray,
    h_u: float,
    p: ModelParams,
    eps: float,
    noise: np.ndarray | None = None,
    clamp: bool = True,
) -> tuple[np.ndarray, bool]:
    """Euler step of the full six-dimensional augmented state (array form).

    This is the transition map f used by the filter; it composes
    step_state and step_costates on raw arrays to keep the filter loop
    allocation-light.
    """
    if noise is None:
        noise = np.zeros(6)
    dt = p.delta_t
    s, i, al, l1, l2, l3 = x
    flow = al * s * i
    b = l1 - l2 - 1.0 + eps
    out = np.empty(6)
    out[IDX_S] = s - dt * flow + dt * noise[0]
    out[IDX_I] = i + dt * flow - dt * p.beta * i + dt * noise[1]
    out[IDX_ALPHA] = al - dt * p.gamma * al + dt * p.gamma * h_u + dt * noise[2]
    out[IDX_L1] = l1 + dt * b * al * i + dt * noise[3]
    out[IDX_L2] = l2 + dt * b * al * s + dt * p.beta * l2 + dt * noise[4]
    out[IDX_L3] = l3 + dt * b * s * i + dt * p.gamma * l3 + dt * noise[5]
    clamped = False
    if clamp:
        (out[IDX_S], out[IDX_I], out[IDX_ALPHA]), clamped = clamp_compartments(
            out[IDX_S], out[IDX_I], out[IDX_ALPHA]
        )
    return out, clamped


def transition_jacobian(x: np.ndarray, p: ModelParams, eps: float) -> np.ndarray:
    """Jacobian of step_augmented with respect to the state (drive exogenous)."""
    dt = p.delta_t
    s, i, al, l1, l2, l3 = x
    b = l1 - l2 - 1.0 + eps
    A = np.zeros((6, 6))
    A[IDX_S, IDX_S] = 1.0 - dt * al * i
    A[IDX_S, IDX_I] = -dt * al * s
    A[IDX_S, IDX_ALPHA] = -dt * s * i

    A[IDX_I, IDX_S] = dt * al * i
    A[IDX_I, IDX_I] = 1.0 + dt * al * s - dt * p.beta
    A[IDX_I, IDX_ALPHA] = dt * s * i

    A[IDX_ALPHA, IDX_ALPHA] = 1.0 - dt * p.gamma

    A[IDX_L1, IDX_I] = dt * b * al
    A[IDX_L1, IDX_ALPHA] = dt * b * i
    A[IDX_L1, IDX_L1] = 1.0 + dt * al * i
    A[IDX_L1, IDX_L2] = -dt * al * i

    A[IDX_L2, IDX_S] = dt * b * al
    A[IDX_L2, IDX_ALPHA] = dt * b * s
    A[IDX_L2, IDX_L1] = dt * al * s
    A[IDX_L2, IDX_L2] = 1.0 - dt * al * s + dt * p.beta

    A[IDX_L3, IDX_S] = dt * b * i
    A[IDX_L3, IDX_I] = dt * b * s
    A[IDX_L3, IDX_L1] = dt * s * i
    A[IDX_L3, IDX_L2] = -dt * s * i
    A[IDX_L3, IDX_L3] = 1.0 + dt * p.gamma
    return A


def observe_new_cases(x: CompartmentState, noise: float = 0.0) -> float:
    """Daily new-case fraction: alpha * s * i + v."""
    _require_finite(noise)
    return x.alpha * x.s * x.i + noise


def observe_total_cases(x: CompartmentState, s0: float, noise: float = 0.0) -> float:
    """Cumulative confirmed-case fraction: s0 - s + v."""
    _require_finite(s0, noise)
    if not 0.0 <= s0 <= 1.0:
        raise ValueError(f"s0 out of [0, 1]: {s0}")
    if x.s > s0 + 1e-12:
        raise ValueError(f"s={x.s} exceeds s0={s0}: inconsistent initial condition")
    return s0 - x.s + noise


def reproduction_rate(alpha: float, p: ModelParams) -> float:
    """Reproduction rate exp(gen_unit * (alpha - beta)); > 1 means growth."""
    if alpha < 0.0:
        raise ValueError(f"alpha negative: {alpha}")
    return float(np.exp(p.rt_generation_unit * (alpha - p.beta)))


def simulate(
    x0: CompartmentState,
    drive: np.ndarray,
    p: ModelParams,
    substeps: int = 10,
) -> dict:
    """Noise-free simulation of (s, i, alpha) under a daily contact drive.

    drive is a length-N array of h[u] values, one per day, held constant
    within each day while the integrator takes `substeps` Euler substeps.

    Returns dict with daily samples `s`, `i`, `alpha` (length N + 1,
    including the initial state), the per-day new-infection fractions
    `new_cases` (length N), and `infected_total`: the exact discrete
    integral of alpha*s*i dt, which equals s[0] - s[-1] for the Euler
    scheme in the absence of clamping.
    """
    drive = np.asarray(drive, float)
    n_days = len(drive)
    sub_p = ModelParams(
        beta=p.beta,
        gamma=p.gamma,
        population=p.population,
        delta_t=p.delta_t / substeps,
        rt_generation_unit=p.rt_generation_unit,
    )
    s = np.empty(n_days + 1)
    i = np.empty(n_days + 1)
    alpha = np.empty(n_days + 1)
    new_cases = np.zeros(n_days)
    s[0], i[0], alpha[0] = x0.s, x0.i, x0.alpha
    cur = x0
    total = 0.0
    any_clamp = False
    for k in range(n_days):
        for _ in range(substeps):
            total += cur.alpha * cur.s * cur.i * sub_p.delta_t
            new_cases[k] += cur.alpha * cur.s * cur.i * sub_p.delta_t
            cur, clamped = step_state(cur, drive[k], sub_p)
            any_clamp = any_clamp or clamped
        s[k + 1], i[k + 1], alpha[k + 1] = cur.s, cur.i, cur.alpha
    return {
        "s": s,
        "i": i,
        "alpha": alpha,
        "new_cases": new_cases,
        "infected_total": total,
        "clamped": any_clamp,
    }
