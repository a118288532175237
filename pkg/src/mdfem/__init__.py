"""Multivariate decomposition finite element method for a 1D random-coefficient PDE."""

from .activeset import ActiveSet, build_active_set
from .driver import (ParameterPlan, make_plan, plan_for_epsilon, run_deterministic, run_randomized,
                     single_level_baseline)
from .fem1d import FemSolver, Mesh1D
from .polylattice import DigitalShift, PolyLatticeRule, generate_points, search_generating_vector
from .problemspec import DiffusionModel, Functional, ProblemSpec, SmoothSineFamily, derive_rates

__all__ = [
    "ActiveSet", "build_active_set", "ParameterPlan", "make_plan", "plan_for_epsilon",
    "run_deterministic", "run_randomized", "single_level_baseline", "FemSolver", "Mesh1D",
    "DigitalShift", "PolyLatticeRule", "generate_points", "search_generating_vector",
    "DiffusionModel", "Functional", "ProblemSpec", "SmoothSineFamily", "derive_rates",
]
