"""Competitor schemes for side-by-side convergence studies.

Two fixed-point families frame the least-squares solver:

* Picard iterates of the operator K: each step controls the linear
  equation with the frozen coefficient hat_g(y_k) = (g(y_k) - g(0))/y_k
  and source -g(0), keeping the original data.
* Newton: either the damped least-squares loop with the step forced to
  lambda = 1 (`newton`, identical code path), or the re-controlled
  linearization (`newton_alt`) where each iterate is itself the
  minimal-norm controlled pair of the equation with potential g'(y_k) and
  source g'(y_k) y_k - g(y_k).

Stopping rules are choices (the originals give none) and are carried in
each run's `stopping_rule`: Picard and newton_alt start from the zero
guess and stop when the sup-norm increment falls below `increment_tol`;
`newton` inherits the least-squares E threshold.  For increment-based
runs, `iterations` counts productive applications: the final application
that merely confirms the fixed point is excluded.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .core import Grid, SpaceTimeField, StatePair
from .hum import LinearControlProblem, minimal_norm_control
from .least_squares import (
    BlowUp,
    IterateRecord,
    LSConfig,
    Stagnation,
    TrajectoryControlPair,
    error_functional,
    solve,
)
from .nonlinearity import Nonlinearity, hat_g

__all__ = ["BaselineRecord", "BaselineRun", "picard_iterate", "newton_iterate"]


@dataclass
class BaselineRecord:
    k: int
    increment_inf: float
    E: float | None
    terminal_miss: float
    wallclock: float
    contraction: float | None = None
    lambda_: float | None = None
    descent_norm: float | None = None
    rate: float | None = None


@dataclass
class BaselineRun:
    method: str
    records: list[BaselineRecord]
    outcome: str                      # converged | diverged | max_iter
    pair: TrajectoryControlPair | None
    stopping_rule: str

    @property
    def iterations(self) -> int:
        if self.method == "newton" or self.outcome != "converged":
            return len(self.records)
        return max(len(self.records) - 1, 0)


def picard_iterate(init: StatePair, target: StatePair, nl: Nonlinearity, grid: Grid,
                   cfg: LSConfig | None = None, increment_tol: float = 1e-8,
                   clock=time.perf_counter) -> BaselineRun:
    """Fixed-point iterates y_{k+1} = K(y_k) through minimal-norm controls.

    Starts from the zero guess.  Each step solves the control problem with
    potential hat_g(y_k) and source -g(0); contraction ratios of successive
    sup-norm increments are recorded.  Divergence is flagged when an
    iterate breaches the guard.
    """
    cfg = cfg or LSConfig()
    g0 = float(nl.g(np.zeros(1))[0])
    source = SpaceTimeField.constant(grid, -g0) if g0 else None
    y_prev = np.zeros((grid.nt + 1, grid.nx))
    records: list[BaselineRecord] = []
    t_start = clock()
    prev_inc: float | None = None
    rule = f"stop when sup-norm increment <= {increment_tol:g}; iterate cap {cfg.max_outer}"
    pair_k: TrajectoryControlPair | None = None

    for k in range(1, cfg.max_outer + 1):
        a = SpaceTimeField(grid, hat_g(nl, y_prev))
        sol = minimal_norm_control(LinearControlProblem(grid, a, source, init, target),
                                   tol=cfg.inner_tol, max_iter=cfg.inner_max_iter)
        inc = float(np.abs(sol.state.values - y_prev).max())
        pair_k = TrajectoryControlPair(y=sol.state, f=sol.control, init=init, target=target,
                                       terminal_miss=sol.terminal_residual, admissible=True)
        records.append(BaselineRecord(
            k=k, increment_inf=inc, E=error_functional(pair_k, nl),
            terminal_miss=sol.terminal_residual, wallclock=clock() - t_start,
            contraction=None if prev_inc in (None, 0.0) else inc / prev_inc))
        y_prev = sol.state.values
        if inc <= increment_tol:
            return BaselineRun("picard", records, "converged", pair_k, rule)
        if float(np.abs(y_prev).max()) > cfg.blowup_guard:
            return BaselineRun("picard", records, "diverged", pair_k, rule)
        prev_inc = inc
    return BaselineRun("picard", records, "max_iter", pair_k, rule)


def newton_iterate(init: StatePair, target: StatePair, nl: Nonlinearity, grid: Grid,
                   cfg: LSConfig | None = None, variant: str = "newton",
                   increment_tol: float = 1e-8, clock=time.perf_counter) -> BaselineRun:
    """Undamped Newton, either as the forced-step least-squares loop or re-controlled.

    variant="newton": least_squares.solve with lambda forced to 1 (same
    code path, forced step); the log carries E_k.  variant="newton_alt":
    each iterate is the controlled pair of the linearization, with source
    g'(y_k) y_k - g(y_k); accuracy is tracked on increments and terminal
    miss, not on the E scale.
    """
    cfg = cfg or LSConfig()
    if variant == "newton":
        forced = replace(cfg, forced_lambda=1.0)
        rule = f"stop when E <= {forced.effective_E_tol:g}; iterate cap {forced.max_outer}"
        try:
            pair, ls_records = solve(init, target, nl, grid, forced, clock=clock)
        except BlowUp as exc:
            return BaselineRun("newton", _from_ls(exc.records), "diverged", None, rule)
        except Stagnation as exc:
            return BaselineRun("newton", _from_ls(exc.records), "max_iter", exc.pair, rule)
        outcome = "converged" if error_functional(pair, nl) <= forced.effective_E_tol else "max_iter"
        return BaselineRun("newton", _from_ls(ls_records), outcome, pair, rule)

    if variant != "newton_alt":
        raise ValueError(f"unknown newton variant {variant!r}")
    rule = f"stop when sup-norm increment <= {increment_tol:g}; iterate cap {cfg.max_outer}"
    y_prev = np.zeros((grid.nt + 1, grid.nx))
    records: list[BaselineRecord] = []
    t_start = clock()
    pair_k: TrajectoryControlPair | None = None
    for k in range(1, cfg.max_outer + 1):
        a = SpaceTimeField(grid, nl.gprime(y_prev))
        b_vals = a.values * y_prev - nl.g(y_prev)
        b = SpaceTimeField(grid, b_vals) if np.any(b_vals) else None
        sol = minimal_norm_control(LinearControlProblem(grid, a, b, init, target),
                                   tol=cfg.inner_tol, max_iter=cfg.inner_max_iter)
        inc = float(np.abs(sol.state.values - y_prev).max())
        records.append(BaselineRecord(
            k=k, increment_inf=inc, E=None, terminal_miss=sol.terminal_residual,
            wallclock=clock() - t_start))
        y_prev = sol.state.values
        pair_k = TrajectoryControlPair(y=sol.state, f=sol.control, init=init, target=target,
                                       terminal_miss=sol.terminal_residual, admissible=True)
        if inc <= increment_tol:
            return BaselineRun("newton_alt", records, "converged", pair_k, rule)
        if float(np.abs(y_prev).max()) > cfg.blowup_guard:
            return BaselineRun("newton_alt", records, "diverged", pair_k, rule)
    return BaselineRun("newton_alt", records, "max_iter", pair_k, rule)


def _from_ls(ls_records: list[IterateRecord]) -> list[BaselineRecord]:
    return [BaselineRecord(k=r.k, increment_inf=r.increment_inf, E=r.E,
                           terminal_miss=r.terminal_miss, wallclock=r.wallclock,
                           lambda_=r.lambda_, descent_norm=r.descent_norm, rate=r.rate)
            for r in ls_records]
