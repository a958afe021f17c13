# src/qmpx/__init__.py

"""qmpx: quadratic matrix programming with an LMMSE transceiver layer."""

from .lowering import lower_convex_sdp, lower_socp
from .qmp import (
    QMFunction,
    QMPProblem,
    evaluate,
    homogenize_t2,
    lift_t1,
    load_problem,
    problem_from_json,
    problem_to_json,
    save_problem,
    tightness_hint,
)
from .solvers import (
    SolveReport,
    g_mu,
    solve_auto,
    solve_sdr,
    solve_single_constraint,
    solve_socp,
    solve_convex_sdp,
    solve_unconstrained,
    solve_weighted,
)

__all__ = [
    "QMFunction",
    "QMPProblem",
    "SolveReport",
    "evaluate",
    "g_mu",
    "homogenize_t2",
    "lift_t1",
    "load_problem",
    "lower_convex_sdp",
    "lower_socp",
    "problem_from_json",
    "problem_to_json",
    "save_problem",
    "solve_auto",
    "solve_convex_sdp",
    "solve_sdr",
    "solve_single_constraint",
    "solve_socp",
    "solve_unconstrained",
    "solve_weighted",
    "tightness_hint",
]

__version__ = "0.1.0"
