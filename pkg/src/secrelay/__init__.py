"""Joint UAV relay trajectory and resource allocation for worst-case
secrecy-rate maximization against an in-network eavesdropper."""

from .model import (AccumulatedMetrics, EveRegion, Position3, Scenario,
                    Violation, accumulated_metrics, channel_gain,
                    closer_to_bob, eve_distance_bounds, per_slot_secrecy_rate,
                    perspective_rate, validate_scenario)
from .sca import (InfeasibleProblem, IterationRecord, Solution, SolveFailure,
                  SolverOptions, init_iterate, recover_schedule, run_sca)
from .evaluate import (ComparisonRow, EveScanResult, FeasibilityReport,
                       exact_secrecy_objective, feasibility_report,
                       run_baseline, sweep_uncertainty, worst_case_eve_scan)
from .cli import RunConfig, ScenarioError, load_scenario

__version__ = "0.1.0"

__all__ = [
    "AccumulatedMetrics", "ComparisonRow", "EveRegion", "EveScanResult",
    "FeasibilityReport", "InfeasibleProblem", "IterationRecord", "Position3",
    "RunConfig", "Scenario", "ScenarioError", "Solution", "SolveFailure",
    "SolverOptions", "Violation", "accumulated_metrics", "channel_gain",
    "closer_to_bob", "eve_distance_bounds", "exact_secrecy_objective",
    "feasibility_report", "init_iterate", "load_scenario",
    "per_slot_secrecy_rate", "perspective_rate", "recover_schedule",
    "run_baseline", "run_sca", "sweep_uncertainty", "validate_scenario",
    "worst_case_eve_scan",
]
