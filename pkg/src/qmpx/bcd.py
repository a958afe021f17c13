# src/qmpx/bcd.py

"""Block-coordinate descent driver for transceiver design.

Each sweep visits all equalizers (exact Wiener step), then the sources
upstream-to-downstream, then the relay matrices. Constrained sub-steps
take the bisection path when the subproblem has a single power constraint
and the semidefinite-relaxation path otherwise. Every sub-step must not
increase the sum MSE: exact paths raise on violation (that is a solver
bug), while a relaxation step whose recovery fails to beat the incumbent
keeps the incumbent and flags the sweep, preserving monotonicity.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import network as net
from .errors import InvalidParams, NonMonotoneDetected
from .solvers import solve_sdr, solve_single_constraint, solve_unconstrained

INITIALIZERS = (
    "FullRankIdentityFeasible",
    "FullRankIdentityInfeasible",
    "RankDeficientFeasible",
    "Custom",
)

MONOTONE_SLACK = 1e-9
FEAS_SLACK = 1e-7


@dataclass
class IterationConfig:
    max_sweeps: int = 50
    tolerance: float = 1e-6
    initializer: str = "FullRankIdentityFeasible"
    custom: dict | None = None  # variable id -> matrix, for Custom
    sdr_seed: int = 0

    def __post_init__(self):
        if self.tolerance <= 0:
            raise InvalidParams("tolerance must be positive")
        if self.max_sweeps < 1:
            raise InvalidParams("max_sweeps must be at least 1")
        if self.initializer not in INITIALIZERS:
            raise InvalidParams(f"unknown initializer {self.initializer!r}")


@dataclass
class RunReport:
    objective_trace: list
    sweep_paths: list  # per sweep: list of (var, path)
    kkt_residuals: dict
    wall_clock: float
    converged: bool
    flagged_sweeps: list = field(default_factory=list)
    pre_projection_mse: float | None = None
    stopping_rule: str = "relative objective decrease below tolerance over a full sweep"


def _identity_like(shape, deficient: bool) -> np.ndarray:
    mat = np.eye(*shape, dtype=complex)
    if deficient:
        last = min(shape) - 1
        mat[last, last] = 0.0
    return mat


def _scale_transmit_to_equality(s: net.NetworkScenario, d: net.DesignState, only_violating: bool = False) -> None:
    """Scale transmit matrices to power equality, upstream first so the
    relay scaling sees the final forwarded covariance."""
    budgets = net.power_budgets(s)

    def scale_group(vars_for_node, node):
        usage = net.power_usage(s, d)[node]
        if usage <= 0:
            return
        if only_violating and usage <= budgets[node]:
            return
        factor = np.sqrt(budgets[node] / usage)
        for var in vars_for_node:
            d.mats[var] = d.mats[var] * factor

    if s.family == "oneway":
        for i in range(s.n_src):
            group = [("P", ii, k) for (ii, k) in sorted(s.streams) if ii == i and s.streams[(ii, k)] > 0]
            scale_group(group, ("src", i))
        for j in range(s.n_relay):
            scale_group([("F", j)], ("relay", j))
    elif s.family == "chain":
        for idx in range(len(s.node_tx)):
            scale_group([("F", idx)], ("node", idx))
    else:
        for t in range(2):
            scale_group([("P", t)], ("term", t))
        for j in range(len(s.relay_rx)):
            scale_group([("F", j)], ("relay", j))


def _wiener_pass(s: net.NetworkScenario, d: net.DesignState) -> None:
    for var in net.equalizer_variables(s):
        sub = net.qm_for_variable(s, d, var)
        rep = solve_unconstrained(sub.problem.objective)
        d.mats[var] = sub.to_native(rep.x_opt)


def initialize(s: net.NetworkScenario, cfg: IterationConfig) -> net.DesignState:
    """Build the starting design state for the configured initializer.

    Feasible variants scale identity-proportional transmit matrices to
    exact power equality; the infeasible variant leaves them unscaled.
    Equalizers always get one Wiener pass.
    """
    d = net.zero_state(s)
    deficient = cfg.initializer == "RankDeficientFeasible"
    for var in net.transmit_variables(s):
        if cfg.initializer == "Custom":
            if cfg.custom is None or var not in cfg.custom:
                raise InvalidParams(f"Custom initializer must provide {var!r}")
            d.mats[var] = np.asarray(cfg.custom[var], dtype=complex).copy()
        else:
            d.mats[var] = _identity_like(net.variable_shape(s, var), deficient)
    if cfg.initializer != "FullRankIdentityInfeasible":
        _scale_transmit_to_equality(s, d, only_violating=(cfg.initializer == "Custom"))
    _wiener_pass(s, d)
    return d


def uniform_power_allocation(s: net.NetworkScenario) -> net.DesignState:
    """Identity-proportional transmit matrices at exact power equality with
    Wiener equalizers (the baseline strategy)."""
    return initialize(s, IterationConfig(initializer="FullRankIdentityFeasible"))


def sweep(
    s: net.NetworkScenario,
    d: net.DesignState,
    cfg: IterationConfig | None = None,
) -> tuple:
    """One pass over all variables. Returns (state, paths, flagged, residual)."""
    cfg = cfg or IterationConfig()
    moments = s.moments()
    cur = net.sum_mse(s, d, moments)
    paths = []
    flagged = False
    worst_kkt = 0.0
    for var in net.equalizer_variables(s) + net.transmit_variables(s):
        sub = net.qm_for_variable(s, d, var, moments)
        prob = sub.problem
        if not prob.inequalities and not prob.equalities:
            rep = solve_unconstrained(prob.objective)
        elif len(prob.inequalities) == 1 and not prob.equalities:
            rep = solve_single_constraint(prob)
        else:
            rep = solve_sdr(prob, seed=cfg.sdr_seed)
        slack = MONOTONE_SLACK * max(1.0, abs(cur))
        accept = rep.objective <= cur + slack
        if rep.path == "SDR" and (rep.constraint_violation > FEAS_SLACK or rep.objective > cur):
            # recovery failed to beat the feasible incumbent; keep it
            accept = rep.constraint_violation <= FEAS_SLACK and rep.objective <= cur
            if not accept:
                flagged = True
                paths.append((var, rep.path + ":kept-incumbent"))
                continue
        if not accept:
            raise NonMonotoneDetected(
                f"sub-step {var} raised the objective from {cur:.12g} to {rep.objective:.12g}"
            )
        d = d.replaced(var, sub.to_native(rep.x_opt))
        cur = rep.objective
        worst_kkt = max(worst_kkt, rep.kkt_residual)
        paths.append((var, rep.path))
    d.objective_trace = d.objective_trace + [cur]
    d.sweeps += 1
    return d, paths, flagged, worst_kkt


def run(
    s: net.NetworkScenario,
    cfg: IterationConfig | None = None,
) -> tuple:
    """Full block-coordinate run. Returns (final_state, RunReport).

    Stops when the relative objective decrease over a full sweep falls
    below the tolerance or ``max_sweeps`` is reached. Infeasible starting
    points are recorded and then projected onto the power constraints so
    the monotonicity assertion is meaningful from the first sub-step.
    """
    cfg = cfg or IterationConfig()
    t0 = time.perf_counter()
    d = initialize(s, cfg)
    pre = None
    if cfg.initializer == "FullRankIdentityInfeasible":
        pre = net.sum_mse(s, d)
        _scale_transmit_to_equality(s, d, only_violating=True)
        _wiener_pass(s, d)
        d.pre_projection_mse = pre
    start = net.sum_mse(s, d)
    d.objective_trace = [start]
    sweep_paths = []
    flagged = []
    worst_kkt = 0.0
    last_kkt = 0.0
    converged = False
    for it in range(cfg.max_sweeps):
        prev = d.objective_trace[-1]
        d, paths, was_flagged, kkt = sweep(s, d, cfg)
        sweep_paths.append(paths)
        if was_flagged:
            flagged.append(it)
        worst_kkt = max(worst_kkt, kkt)
        last_kkt = kkt
        cur = d.objective_trace[-1]
        if (prev - cur) < cfg.tolerance * max(1.0, abs(prev)):
            converged = True
            break
    report = RunReport(
        objective_trace=list(d.objective_trace),
        sweep_paths=sweep_paths,
        kkt_residuals={"worst_substep": worst_kkt, "last_sweep": last_kkt},
        wall_clock=time.perf_counter() - t0,
        converged=converged,
        flagged_sweeps=flagged,
        pre_projection_mse=pre,
    )
    return d, report
