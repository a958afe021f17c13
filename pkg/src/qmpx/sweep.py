# src/qmpx/sweep.py

"""Monte-Carlo SNR sweep harness.

Each grid point averages the analytic sum MSE and the empirical
QPSK-symbol MSE over independent channel realizations. Channel draws are
paired across strategies and initializers at the same trial index, and
every trial reseeds independently (seed sequence spawned from the master
seed and the trial index), so results are reproducible and identical
regardless of worker count.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bcd
from . import network as net
from .errors import ConfigError, QmpxError

log = logging.getLogger(__name__)

CSV_HEADER = "snr_db,strategy,initializer,analytic_mse,empirical_mse,trials,skipped"

STRATEGIES = ("Proposed", "UniformPA")


@dataclass
class SweepSpec:
    scenario: net.NetworkScenario
    snr_grid: list
    trials: int = 50
    symbols: int = 10000
    strategies: tuple = ("Proposed", "UniformPA")
    initializers: tuple = ("FullRankIdentityFeasible",)
    seed: int = 0
    max_sweeps: int = 15
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not list(self.snr_grid):
            raise ConfigError("SNR grid must be non-empty")
        for strat in self.strategies:
            if strat not in STRATEGIES:
                raise ConfigError(f"unknown strategy {strat!r}")
        for init in self.initializers:
            if init not in bcd.INITIALIZERS:
                raise ConfigError(f"unknown initializer {init!r}")


def parse_grid(text: str) -> list:
    """Parse 'start:step:stop' (inclusive) or a comma-separated list of dB values."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad SNR grid {text!r}; expected start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("SNR grid step must be positive")
        grid = list(np.arange(start, stop + step / 2, step))
        return [float(g) for g in grid]
    return [float(p) for p in text.split(",") if p.strip()]


def trial_seed(master: int, trial: int) -> int:
    """Deterministic per-trial seed derived from (master, trial index)."""
    return int(np.random.SeedSequence([master, trial]).generate_state(1)[0])


def uniform_pa(s: net.NetworkScenario) -> net.DesignState:
    """Identity-proportional transmit matrices at exact power equality with
    Wiener equalizers for that fixed transmit side."""
    return bcd.uniform_power_allocation(s)


@dataclass
class _PointResult:
    analytic: list = field(default_factory=list)
    empirical: list = field(default_factory=list)
    skipped: int = 0
    traces: list = field(default_factory=list)


def _design_for(strategy: str, initializer: str, scen, spec: SweepSpec):
    if strategy == "UniformPA":
        d = uniform_pa(scen)
        return d, [net.sum_mse(scen, d)]
    cfg = bcd.IterationConfig(
        max_sweeps=spec.max_sweeps,
        tolerance=spec.tolerance,
        initializer=initializer,
    )
    d, rep = bcd.run(scen, cfg)
    return d, rep.objective_trace


def _run_trial(spec: SweepSpec, snr_db: float, idx_point: int, trial: int, combos):
    scen = spec.scenario.redraw(trial_seed(spec.seed, trial)).with_snr(snr_db)
    out = []
    for ci, (strategy, initializer) in enumerate(combos):
        rng_emp = np.random.default_rng(
            np.random.SeedSequence([spec.seed, trial, idx_point, ci])
        )
        try:
            d, trace = _design_for(strategy, initializer, scen, spec)
            analytic = net.sum_mse(scen, d)
            empirical = net.simulate_empirical_mse(scen, d, rng_emp, spec.symbols)
            out.append((analytic, empirical, trace, None))
        except QmpxError as exc:  # trial logged and skipped
            log.warning(
                "skipping trial %d at %.1f dB (%s/%s): %s: %s",
                trial, snr_db, strategy, initializer, type(exc).__name__, exc,
            )
            out.append((None, None, None, f"{type(exc).__name__}: {exc}"))
    return out


def run_sweep(spec: SweepSpec, collect_traces: bool = False):
    """Run the full sweep; returns (rows, traces).

    ``rows`` are dicts matching the CSV header. ``traces`` maps
    (snr_db, strategy, initializer) to the per-sweep averaged objective
    when ``collect_traces`` is set.
    """
    combos = []
    for strategy in spec.strategies:
        if strategy == "UniformPA":
            combos.append((strategy, ""))
        else:
            for initializer in spec.initializers:
                combos.append((strategy, initializer))

    workers = int(os.environ.get("QMPX_THREADS", "0")) or (os.cpu_count() or 1)
    rows = []
    traces = {}
    for idx_point, snr_db in enumerate(spec.snr_grid):
        results = [
            _PointResult() for _ in combos
        ]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                trial_out = list(
                    pool.map(
                        lambda t: _run_trial(spec, snr_db, idx_point, t, combos),
                        range(spec.trials),
                    )
                )
        else:
            trial_out = [
                _run_trial(spec, snr_db, idx_point, t, combos) for t in range(spec.trials)
            ]
        for per_trial in trial_out:  # fixed trial order keeps aggregation deterministic
            for ci, (analytic, empirical, trace, err) in enumerate(per_trial):
                if err is not None:
                    results[ci].skipped += 1
                    continue
                results[ci].analytic.append(analytic)
                results[ci].empirical.append(empirical)
                results[ci].traces.append(trace)
        for ci, (strategy, initializer) in enumerate(combos):
            res = results[ci]
            n_ok = len(res.analytic)
            rows.append(
                {
                    "snr_db": snr_db,
                    "strategy": strategy,
                    "initializer": initializer,
                    "analytic_mse": float(np.mean(res.analytic)) if n_ok else float("nan"),
                    "empirical_mse": float(np.mean(res.empirical)) if n_ok else float("nan"),
                    "trials": n_ok,
                    "skipped": res.skipped,
                }
            )
            if collect_traces and res.traces:
                longest = max(len(t) for t in res.traces)
                padded = np.array(
                    [t + [t[-1]] * (longest - len(t)) for t in res.traces]
                )
                traces[(snr_db, strategy, initializer)] = padded.mean(axis=0).tolist()
    return rows, traces


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def emit_csv(rows, path) -> None:
    """Write sweep rows with the fixed column order, one row per point."""
    if not rows:
        raise ConfigError("no rows to emit")
    cols = CSV_HEADER.split(",")
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in cols))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_traces_csv(traces, path) -> None:
    """Per-sweep averaged objective traces: snr_db,initializer,sweep,avg_mse."""
    lines = ["snr_db,initializer,sweep,avg_mse"]
    for (snr_db, strategy, initializer), trace in sorted(traces.items()):
        label = initializer or strategy
        for sweep_idx, val in enumerate(trace):
            lines.append(
                ",".join([_fmt(float(snr_db)), label, str(sweep_idx), _fmt(float(val))])
            )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
