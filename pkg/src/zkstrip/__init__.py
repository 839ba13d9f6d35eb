"""Galerkin simulator for the critical Zakharov-Kuznetsov equation on a half-strip,
with numerical checks of its energy estimates and decay bounds."""

__version__ = "0.1.0"

from .domain import StripGrid, WeightSpec, build_grid, weight_table
from .spectral import GridField, ModeField, eigenpair, to_modes, to_physical
from .dynamics import (
    BlowUpError,
    ImexStepper,
    SolverState,
    cfl_suggest,
    evolve,
    imex_step,
    linear_operator,
    nonlinear_rhs,
)
from .functionals import (
    ConditionReport,
    EnergyReport,
    check_decay_conditions,
    check_smallness,
    energy_report,
)
from .experiments import ExperimentConfig, fit_decay_rate, run_decay_experiment

__all__ = [
    "BlowUpError",
    "ConditionReport",
    "EnergyReport",
    "ExperimentConfig",
    "GridField",
    "ImexStepper",
    "ModeField",
    "SolverState",
    "StripGrid",
    "WeightSpec",
    "build_grid",
    "cfl_suggest",
    "check_decay_conditions",
    "check_smallness",
    "eigenpair",
    "energy_report",
    "evolve",
    "fit_decay_rate",
    "imex_step",
    "linear_operator",
    "nonlinear_rhs",
    "run_decay_experiment",
    "to_modes",
    "to_physical",
    "weight_table",
]
