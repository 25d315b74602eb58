"""Gate Control List synthesis for IEEE 802.1Qbv networks.

Pipeline: :mod:`netmodel` (problem) -> :mod:`encoder` (constraints) ->
:mod:`smtlib` (solver round trip) -> :mod:`validator` (independent check) ->
:mod:`simulator` (replay under clock offsets and frame loss).
"""

from .encoder import EncoderConfig, assertion_count, encode
from .netmodel import ModelError, Problem, Schedule, load_problem, problem_from_dict
from .simulator import SimConfig, isolation_probe, simulate
from .smtlib import decode_model, optimize_by_bisection, solve, solver_available
from .validator import brute_force_feasible, brute_force_minimum, check_schedule

__version__ = "0.1.0"

__all__ = [
    "EncoderConfig", "ModelError", "Problem", "Schedule", "SimConfig",
    "assertion_count", "brute_force_feasible", "brute_force_minimum", "check_schedule",
    "decode_model", "encode", "isolation_probe", "load_problem", "optimize_by_bisection",
    "problem_from_dict", "simulate", "solve", "solver_available",
]
