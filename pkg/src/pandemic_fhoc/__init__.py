"""Epidemic forecasting and Pareto-efficient NPI prescription toolkit."""

from pandemic_fhoc.model import (
    AugmentedState,
    CompartmentState,
    ModelParams,
    observe_new_cases,
    observe_total_cases,
    reproduction_rate,
    simulate,
    step_costates,
    step_state,
)

__all__ = [
    "AugmentedState",
    "CompartmentState",
    "ModelParams",
    "observe_new_cases",
    "observe_total_cases",
    "reproduction_rate",
    "simulate",
    "step_costates",
    "step_state",
]

__version__ = "0.1.0"
