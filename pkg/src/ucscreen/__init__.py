"""Screening of inactive line limits in multi-interval unit commitment.

The package builds the unit-commitment MILP and a family of screening LPs
from one instance description, proves line-limit rows unreachable by
maximising their flows over relaxed regions, and solves the reduced
problem with its own simplex and branch-and-bound engines.
"""

from .errors import UCScreenError
from .formulation import ScreeningTarget, TargetSense, VariableLayout, all_targets, build_uc
from .lp import LinearProgram, LPOptions, LPSolution, Sense, Status, solve_lp, solve_lp_restricted
from .milp import MIPOptions, MIPSolution, MIPStatus, MixedIntegerProgram, extract_schedule, solve_mip
from .model import (
    CommitmentSchedule,
    FlowModel,
    LoadProfile,
    UCInstance,
    build_flow_model,
    load_case,
    load_loads,
    parse_case,
    parse_loads,
)
from .screening import (
    MethodKind,
    ReducedInstance,
    ScreeningMethod,
    ScreeningResult,
    Verdict,
    compare_results,
    reduce,
    screen,
    solve_reduced,
)

__version__ = "0.1.0"

__all__ = [
    "CommitmentSchedule",
    "FlowModel",
    "LPOptions",
    "LPSolution",
    "LinearProgram",
    "LoadProfile",
    "MIPOptions",
    "MIPSolution",
    "MIPStatus",
    "MethodKind",
    "MixedIntegerProgram",
    "ReducedInstance",
    "ScreeningMethod",
    "ScreeningResult",
    "ScreeningTarget",
    "Sense",
    "Status",
    "TargetSense",
    "UCInstance",
    "UCScreenError",
    "VariableLayout",
    "Verdict",
    "all_targets",
    "build_flow_model",
    "build_uc",
    "compare_results",
    "extract_schedule",
    "load_case",
    "load_loads",
    "parse_case",
    "parse_loads",
    "reduce",
    "screen",
    "solve_lp",
    "solve_lp_restricted",
    "solve_mip",
    "solve_reduced",
]
