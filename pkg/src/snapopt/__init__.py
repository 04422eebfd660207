"""Second-order stationary points of smooth objectives over polyhedra."""

from snapopt.eigen import EigenPairResult, Flag, SpGdConfig, default_spgd_config
from snapopt.errors import (
    CapabilityError,
    ContractError,
    FeasibilityError,
    LineSearchError,
    ParameterError,
    ProjectionError,
    SnapError,
)
from snapopt.oracle import ObjectiveOracle, ProblemInstance, example1, load_preset, make_problem
from snapopt.poly import Polyhedron, active_set, free_space_basis, project_feasible
from snapopt.solver import SolveResult, SolverConfig, solve
from snapopt.stationarity import check_sosp1, check_sosp2_bruteforce

__version__ = "0.1.0"

__all__ = [
    "CapabilityError", "ContractError", "EigenPairResult", "FeasibilityError", "Flag",
    "LineSearchError", "ObjectiveOracle", "ParameterError", "Polyhedron", "ProblemInstance",
    "ProjectionError", "SnapError", "SolveResult", "SolverConfig", "SpGdConfig",
    "active_set", "check_sosp1", "check_sosp2_bruteforce", "default_spgd_config", "example1",
    "free_space_basis", "load_preset", "make_problem", "project_feasible", "solve",
]
