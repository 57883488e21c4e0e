"""Scenario execution: runs, persistence, figures, exit codes.

Every run writes delimited output (iterate CSV, field dumps, a one-line
JSON summary) plus rendered figures into its output directory.  All
numeric output is deterministic for a fixed scenario and seed; the
wallclock columns are the one exception, and an injectable `clock`
makes them reproducible too (the determinism tests pass a frozen clock).

Exit codes: 0 converged/ok, 2 parse error, 3 no convergence (inner HUM),
4 stagnation, 5 diverged or blow-up, 6 iterate cap reached.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import figures
from .baselines import BaselineRun, newton_iterate, picard_iterate
from .config import Scenario
from .core import write_field
from .hum import LinearControlProblem, NoConvergence, minimal_norm_control, observability_probe
from .least_squares import (
    BlowUp,
    DescentFailure,
    IterateRecord,
    Stagnation,
    error_functional,
    solve,
)

__all__ = ["RunResult", "run", "compare", "EXIT_CODES", "exit_code_for"]

EXIT_CODES = {
    "converged": 0,
    "ok": 0,
    "parse_error": 2,
    "no_convergence": 3,
    "stagnation": 4,
    "diverged": 5,
    "max_iter": 6,
}


def exit_code_for(outcome: str) -> int:
    return EXIT_CODES.get(outcome, 1)


@dataclass
class RunResult:
    outcome: str
    exit_code: int
    summary: dict
    out_dir: Path


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True) + "\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_ls_csv(path: Path, records: list[IterateRecord]) -> None:
    lines = ["k,E,lambda,descent_norm,rate,terminal_miss,wallclock"]
    for r in records:
        lines.append(",".join(_fmt(v) for v in (
            r.k, r.E, r.lambda_, r.descent_norm, r.rate, r.terminal_miss, r.wallclock)))
    path.write_text("\n".join(lines) + "\n")


def _write_baseline_csv(path: Path, run_: BaselineRun) -> None:
    lines = [f"# method={run_.method} {run_.stopping_rule}",
             "method,k,E,lambda,descent_norm,rate,terminal_miss,wallclock"]
    for r in run_.records:
        descent = r.descent_norm if r.descent_norm is not None else r.increment_inf
        rate = r.rate if r.rate is not None else r.contraction
        lines.append(",".join(_fmt(v) for v in (
            run_.method, r.k, r.E, r.lambda_, descent, rate, r.terminal_miss, r.wallclock)))
    path.write_text("\n".join(lines) + "\n")


def _summary(method: str, outcome: str, final_e, final_miss, iterations, wallclock) -> dict:
    return {
        "method": method,
        "outcome": outcome,
        "final_E": final_e,
        "final_terminal_miss": final_miss,
        "iterations": iterations,
        "wallclock": wallclock,
    }


def run(scenario: Scenario, out_dir=None, clock=time.perf_counter,
        threads: int | None = None) -> RunResult:
    """Execute the scenario, writing CSVs, dumps, JSON summary, and figures."""
    out = Path(out_dir if out_dir is not None else scenario.out)
    out.mkdir(parents=True, exist_ok=True)
    if threads is None:
        threads = max(1, int(os.environ.get("WAVECONTROL_THREADS", "1")))
    grid = scenario.grid()
    nl = scenario.nonlinearity()
    init = scenario.state(scenario.init, grid)
    target = scenario.state(scenario.target, grid)
    t0 = clock()

    if scenario.method == "probe":
        report = observability_probe(grid, list(scenario.probe_magnitudes),
                                     scenario.probe_samples, seed=scenario.seed,
                                     tol=scenario.inner_tol, max_iter=scenario.inner_max_iter,
                                     threads=threads)
        lines = ["magnitude,sample,ratio"]
        for mag, j, ratio in report.rows():
            lines.append(f"{_fmt(mag)},{j},{_fmt(ratio)}")
        (out / "probe.csv").write_text("\n".join(lines) + "\n")
        _write_json(out / "probe.json", {"slope": report.slope, "intercept": report.intercept})
        figures.save_probe(report, out / "probe.png")
        summary = _summary("probe", "ok", None, None,
                           len(report.magnitudes) * report.samples, clock() - t0)
        _write_json(out / "summary.json", summary)
        return RunResult("ok", 0, summary, out)

    if scenario.method == "hum_linear":
        gp0 = float(nl.gprime(np.zeros(1))[0])
        g0 = float(nl.g(np.zeros(1))[0])
        from .core import SpaceTimeField

        a = SpaceTimeField.constant(grid, gp0) if gp0 else None
        b = SpaceTimeField.constant(grid, -g0) if g0 else None
        problem = LinearControlProblem(grid, a, b, init, target)
        try:
            sol = minimal_norm_control(problem, tol=scenario.inner_tol,
                                       max_iter=scenario.inner_max_iter)
        except NoConvergence as exc:
            summary = _summary("hum_linear", "no_convergence", None, None,
                               exc.max_iter, clock() - t0)
            _write_json(out / "summary.json", summary)
            return RunResult("no_convergence", exit_code_for("no_convergence"), summary, out)
        write_field(sol.control, out / "control.dat")
        write_field(sol.state, out / "state.dat")
        _write_json(out / "hum_diagnostics.json", {
            "cg_iterations": sol.cg_iterations,
            "terminal_residual": sol.terminal_residual,
            "control_norm": sol.control_norm,
        })
        figures.save_heatmap(sol.control, out / "control.png", "control")
        figures.save_heatmap(sol.state, out / "state.png", "state")
        summary = _summary("hum_linear", "converged", None, sol.terminal_residual,
                           sol.cg_iterations, clock() - t0)
        _write_json(out / "summary.json", summary)
        return RunResult("converged", 0, summary, out)

    if scenario.method == "ls":
        cfg = scenario.ls_config()
        records: list[IterateRecord] = []
        pair = None
        try:
            pair, records = solve(init, target, nl, grid, cfg, clock=clock)
            outcome = "converged"
        except DescentFailure:
            outcome = "no_convergence"
        except Stagnation as exc:
            records, pair, outcome = exc.records, exc.pair, "stagnation"
        except BlowUp as exc:
            records, outcome = exc.records, "diverged"
        _write_ls_csv(out / "iterates.csv", records)
        final_e = final_miss = None
        if pair is not None:
            write_field(pair.y, out / "state.dat")
            write_field(pair.f, out / "control.dat")
            figures.save_heatmap(pair.y, out / "state.png", "state")
            figures.save_heatmap(pair.f, out / "control.png", "control")
            final_e = error_functional(pair, nl)
            final_miss = pair.terminal_miss
        if records:
            figures.save_convergence(records, out / "convergence.png", "least-squares")
        summary = _summary("ls", outcome, final_e, final_miss, len(records), clock() - t0)
        _write_json(out / "summary.json", summary)
        return RunResult(outcome, exit_code_for(outcome), summary, out)

    # baselines
    try:
        if scenario.method == "picard":
            run_ = picard_iterate(init, target, nl, grid, scenario.ls_config(),
                                  increment_tol=scenario.increment_tol, clock=clock)
        else:
            run_ = newton_iterate(init, target, nl, grid, scenario.ls_config(),
                                  variant=scenario.method,
                                  increment_tol=scenario.increment_tol, clock=clock)
    except (NoConvergence, DescentFailure):
        summary = _summary(scenario.method, "no_convergence", None, None, 0, clock() - t0)
        _write_json(out / "summary.json", summary)
        return RunResult("no_convergence", exit_code_for("no_convergence"), summary, out)
    _write_baseline_csv(out / "iterates.csv", run_)
    final_e = final_miss = None
    if run_.pair is not None:
        write_field(run_.pair.y, out / "state.dat")
        write_field(run_.pair.f, out / "control.dat")
        figures.save_heatmap(run_.pair.y, out / "state.png", "state")
        figures.save_heatmap(run_.pair.f, out / "control.png", "control")
        final_e = error_functional(run_.pair, nl)
        final_miss = run_.pair.terminal_miss
    if run_.records:
        figures.save_convergence(run_.records, out / "convergence.png", run_.method)
    summary = _summary(run_.method, run_.outcome, final_e, final_miss,
                       run_.iterations, clock() - t0)
    _write_json(out / "summary.json", summary)
    return RunResult(run_.outcome, exit_code_for(run_.outcome), summary, out)


def compare(scenario: Scenario, methods: list[str], out_dir=None,
            clock=time.perf_counter) -> RunResult:
    """Run several methods on one scenario; write per-method outputs and a report."""
    from dataclasses import replace as dc_replace

    out = Path(out_dir if out_dir is not None else scenario.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    series = []
    worst = 0
    for method in methods:
        sub = dc_replace(scenario, method=method, warnings=list(scenario.warnings))
        result = run(sub, out / method, clock=clock)
        s = result.summary
        rows.append((method, s["outcome"], s["final_E"], s["final_terminal_miss"],
                     s["iterations"], s["wallclock"]))
        worst = max(worst, result.exit_code)
        csv_path = out / method / "iterates.csv"
        if csv_path.exists():
            ks, vals = _series_from_csv(csv_path)
            if ks:
                series.append((method, ks, vals))
    lines = ["method,outcome,final_E,final_terminal_miss,iterations,wallclock"]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    (out / "comparison.csv").write_text("\n".join(lines) + "\n")
    if series:
        figures.save_comparison(series, out / "comparison.png")
    summary = {"methods": list(methods), "outcomes": {r[0]: r[1] for r in rows}}
    _write_json(out / "summary.json", summary)
    outcome = "ok" if worst == 0 else "mixed"
    return RunResult(outcome, worst, summary, out)


def _series_from_csv(path: Path) -> tuple[list[int], list[float]]:
    ks: list[int] = []
    vals: list[float] = []
    with open(path) as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                k_i = header.index("k")
                e_i = header.index("E")
                d_i = header.index("descent_norm")
                continue
            parts = line.split(",")
            ks.append(int(parts[k_i]))
            val = parts[e_i] or parts[d_i]
            vals.append(float(val) if val else float("nan"))
    return ks, vals
