"""Closed-loop model predictive control of wind-farm power with load equalization."""

from .exceptions import (DegenerateBaselineError, InternalConsistencyError,
                         InvalidParameterError, ScenarioError)
from .metrics import FatigueReport, fatigue_report, normalize
from .mpc import ConstraintSpec, MpcController, MpcWeights, discretize_filter
from .qp import QpProblem, QpSolution, QpSolver, Status, solve
from .scenario import ScenarioConfig, dump_scenario, load_scenario
from .simulation import ResultsBundle, run, sweep, write_outputs

__version__ = "0.1.0"

__all__ = [
    "ConstraintSpec", "DegenerateBaselineError", "FatigueReport", "InternalConsistencyError",
    "InvalidParameterError", "MpcController", "MpcWeights", "QpProblem", "QpSolution",
    "QpSolver", "ResultsBundle", "ScenarioConfig", "ScenarioError", "Status",
    "discretize_filter", "dump_scenario", "fatigue_report", "load_scenario", "normalize",
    "run", "solve", "sweep", "write_outputs",
]
