"""Planning tool for PV expansion under dynamic feed-in limitation.

Given a radial grid, the package answers one question: by what single factor
can every candidate PV site be scaled before a voltage band or a line rating
stops the expansion, when feed-in above a fraction FL of installed capacity
(net of concurrent local demand) is curtailed. Two engines answer it
independently: a MILP over a linearized power flow, and a closed-form rule
evaluation with bisection. An AC sweep validates the linearization.
"""

from .analysis import (
    BindingReport,
    EnergyAccount,
    SweepSpec,
    check_monotonicity,
    emit_report,
    energy_account,
    find_bottlenecks,
    run_sweep,
)
from .formulation import (
    Costs,
    PlanResult,
    Scenario,
    build_problem,
    curtailment_rule,
    extract_solution,
    residual_demand,
    scenario_from_json,
    scenario_to_json,
)
from .fixtures import FixtureProfile, example_grid_7kwp, synth_grid, synth_profiles
from .grid import (
    Bus,
    CandidatePolicy,
    GenUnit,
    Grid,
    GridFormatError,
    Line,
    add_candidates,
    parse_grid,
    scale_demand,
    serialize_grid,
    validate_grid,
)
from .milp import MILProblem, SolverConfig, solve_lp, solve_milp
from .network import ac_sweep, build_linear_model, compare_models, evaluate_linear
from .oracle import (
    annual_simulate,
    enumerate_alpha,
    feasible_at,
    max_scal_bisection,
    oracle_plan,
    rule_injections,
)

__version__ = "0.1.0"

__all__ = [
    "BindingReport", "Bus", "CandidatePolicy", "Costs", "EnergyAccount",
    "FixtureProfile", "GenUnit", "Grid", "GridFormatError", "Line",
    "MILProblem", "PlanResult", "Scenario", "SolverConfig", "SweepSpec",
    "ac_sweep", "add_candidates", "annual_simulate", "build_linear_model",
    "build_problem", "check_monotonicity", "compare_models",
    "curtailment_rule", "emit_report", "energy_account", "enumerate_alpha",
    "example_grid_7kwp", "extract_solution", "feasible_at",
    "find_bottlenecks", "max_scal_bisection", "oracle_plan", "parse_grid",
    "residual_demand", "rule_injections", "run_sweep", "scale_demand",
    "scenario_from_json", "scenario_to_json", "serialize_grid", "solve_lp",
    "solve_milp", "synth_grid", "synth_profiles", "validate_grid",
    "__version__",
]
