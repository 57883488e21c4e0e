"""Damped-Newton least-squares construction of exact controls.

The error functional

    E(y, f) = 1/2 || y_tt - y_xx + g(y) - f 1_omega ||^2_{L2(Q_T)}

is driven to zero along the descent pair (Y1, F1): the null-controlled
solution of the linearization at (y, f) with potential g'(y) and the
residual as source, with F1 of minimal L2(q_T) norm.  Each step takes

    (y_{k+1}, f_{k+1}) = (y_k, f_k) - lambda_k (Y1_k, F1_k),

with lambda_k from a line search over (0, m].  Iterates are updated
additively (sums of controlled pairs), not re-simulated; the residual is
evaluated by the same leapfrog stencil the solver uses, so a descent
increment consumes the residual exactly at interior time levels and the
directional derivative of E along -(Y1, F1) is -2E.

Residual convention: the residual field carries zeros at time levels 0
and nt (no centered stencil there); consequently descent increments have
exactly zero first two levels and the iterates' initial data never moves.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    Grid,
    SpaceTimeField,
    StatePair,
    l2_QT,
    l2_qT,
    t_exceeds_geometric,
    terminal_encode,
    v_norm,
)
from .hum import LinearControlProblem, NoConvergence, minimal_norm_control
from .nonlinearity import Nonlinearity

__all__ = [
    "TrajectoryControlPair",
    "IterateRecord",
    "LSConfig",
    "DescentPair",
    "DescentFailure",
    "Stagnation",
    "BlowUp",
    "InsufficientData",
    "RateReport",
    "residual",
    "error_functional",
    "descent_pair",
    "line_search",
    "initialize",
    "solve",
    "rate_diagnostics",
    "terminal_miss",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class DescentFailure(RuntimeError):
    """The inner HUM solve failed while building the descent pair at step k."""

    def __init__(self, k: int, cause: NoConvergence):
        super().__init__(f"descent pair failed at outer iteration {k}: {cause}")
        self.k = k
        self.cause = cause


class Stagnation(RuntimeError):
    """E dropped by less than 1% over five consecutive iterations while above E_tol."""

    def __init__(self, records: list["IterateRecord"], pair: "TrajectoryControlPair"):
        super().__init__(f"stagnation after {len(records)} iterations, E={records[-1].E:.3e}")
        self.records = records
        self.pair = pair


class BlowUp(RuntimeError):
    """An iterate exceeded the sup-norm guard."""

    def __init__(self, records: list["IterateRecord"], sup: float):
        super().__init__(f"iterate sup-norm {sup:.3e} exceeded the guard")
        self.records = records


class InsufficientData(ValueError):
    """rate_diagnostics needs at least three iterate records."""


@dataclass(frozen=True)
class TrajectoryControlPair:
    """A candidate pair (y, f): y a space-time field, f supported in omega."""

    y: SpaceTimeField
    f: SpaceTimeField
    init: StatePair
    target: StatePair
    terminal_miss: float
    admissible: bool

    @property
    def grid(self) -> Grid:
        return self.y.grid


@dataclass
class IterateRecord:
    k: int
    E: float
    lambda_: float
    descent_norm: float
    terminal_miss: float
    wallclock: float
    rate: float | None = None
    increment_inf: float = 0.0


@dataclass(frozen=True)
class LSConfig:
    m: float = 2.0
    ls_grid_points: int = 25
    golden_iters: int = 20
    E_tol: float = 1e-12
    max_outer: int = 50
    inner_tol: float = 1e-8
    inner_max_iter: int = 500
    init_mode: str = "linear_star"
    blowup_guard: float = 1e6
    forced_lambda: float | None = None
    stagnation_window: int = 5
    stagnation_drop: float = 0.01

    def __post_init__(self):
        if self.m < 1.0:
            raise ValueError("line-search cap m must be >= 1")
        if min(self.E_tol, self.inner_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.init_mode not in ("linear_star", "affine_star", "user"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")

    @property
    def effective_E_tol(self) -> float:
        """Practical floor coupling E_tol with the inner HUM tolerance."""
        return max(self.E_tol, self.inner_tol ** 2)


@dataclass
class DescentPair:
    Y: SpaceTimeField
    F: SpaceTimeField
    cg_iterations: int
    terminal_residual: float

    def a0_norm(self) -> float:
        """Discrete surrogate of the A0 norm: ||Y||_2 + stencil(Y) + data + ||F||_{2,q_T}."""
        g = self.Y.grid
        sten = _stencil(g, self.Y.values)
        data_sq = v_norm(StatePair(g, self.Y.values[0],
                                   (self.Y.values[1] - self.Y.values[0]) / g.dt)) ** 2
        return math.sqrt(l2_QT(self.Y) ** 2 + data_sq +
                         g.dx * g.dt * float(np.sum(sten[1:-1] ** 2)) +
                         l2_qT(self.F) ** 2)


# -- residual and functional ----------------------------------------------------

def _stencil(grid: Grid, y: np.ndarray) -> np.ndarray:
    """Leapfrog y_tt - y_xx on interior time levels; levels 0 and nt are zero."""
    out = np.zeros_like(y)
    dt2 = grid.dt * grid.dt
    dx2 = grid.dx * grid.dx
    mid = y[1:-1]
    out[1:-1] = (y[2:] - 2.0 * mid + y[:-2]) / dt2 + 2.0 * mid / dx2
    out[1:-1, 1:] -= y[1:-1, :-1] / dx2
    out[1:-1, :-1] -= y[1:-1, 1:] / dx2
    return out


def residual(pair: TrajectoryControlPair, nl: Nonlinearity) -> SpaceTimeField:
    """The field y_tt - y_xx + g(y) - f 1_omega on interior time levels."""
    g = pair.grid
    r = _stencil(g, pair.y.values)
    r[1:-1] += nl.g(pair.y.values[1:-1]) - pair.f.values[1:-1]
    return SpaceTimeField(g, r)


def _residual_raw(grid: Grid, y: np.ndarray, f: np.ndarray, nl: Nonlinearity) -> np.ndarray:
    r = _stencil(grid, y)
    r[1:-1] += nl.g(y[1:-1]) - f[1:-1]
    return r


def error_functional(pair: TrajectoryControlPair, nl: Nonlinearity) -> float:
    return 0.5 * l2_QT(residual(pair, nl)) ** 2


def _e_of_raw(grid: Grid, r: np.ndarray) -> float:
    return 0.5 * grid.dx * grid.dt * float(np.sum(r[1:-1] ** 2))


def terminal_miss(grid: Grid, y_values: np.ndarray, target: StatePair) -> float:
    """V-norm of the terminal deviation from the homogeneous target encoding (A = 0)."""
    xi_m1, xi_last = terminal_encode(grid, None, target)
    a = y_values[-1] - xi_last
    b = y_values[-2] - xi_m1
    return v_norm(StatePair(grid, a, (a - b) / grid.dt))


# -- descent pair and line search ------------------------------------------------

def descent_pair(pair: TrajectoryControlPair, nl: Nonlinearity, cfg: LSConfig) -> DescentPair:
    """Null-controlled solution of the linearization driven by the residual.

    Solves Y_tt - Y_xx + g'(y) Y = F 1_omega + residual with zero data and
    zero target, F of minimal L2(q_T) norm.  Because the state is marched
    by the same stencil, the increment consumes the residual exactly at
    interior time levels whatever the inner CG tolerance.
    """
    g = pair.grid
    a = SpaceTimeField(g, nl.gprime(pair.y.values))
    r = residual(pair, nl)
    problem = LinearControlProblem(g, a, r, StatePair.zeros(g), StatePair.zeros(g))
    sol = minimal_norm_control(problem, tol=cfg.inner_tol, max_iter=cfg.inner_max_iter)
    return DescentPair(Y=sol.state, F=sol.control,
                       cg_iterations=sol.cg_iterations,
                       terminal_residual=sol.terminal_residual)


def line_search(pair: TrajectoryControlPair, nl: Nonlinearity, direction: DescentPair,
                m: float, grid_points: int = 25, golden_iters: int = 20) -> tuple[float, float]:
    """argmin over (0, m] of E((y,f) - lambda (Y,F)) by scan + golden section.

    Log-spaced scan always including lambda = 1 and lambda = m, then
    golden-section refinement of the bracketing interval.  Ties break
    toward lambda = 1 (the asymptotically optimal step).  The returned E
    never exceeds any sampled value, in particular E at lambda = 1.
    """
    g = pair.grid
    y0, f0 = pair.y.values, pair.f.values
    dy, df = direction.Y.values, direction.F.values

    def e_of(lam: float) -> float:
        return _e_of_raw(g, _residual_raw(g, y0 - lam * dy, f0 - lam * df, nl))

    lams = np.geomspace(m * 1e-3, m, grid_points)
    lams = np.unique(np.concatenate([lams, [1.0, m]]))
    lams = lams[(lams > 0) & (lams <= m)]
    vals = np.array([e_of(l) for l in lams])
    i = int(np.argmin(vals))
    best_lam, best_val = float(lams[i]), float(vals[i])
    e_at_1 = float(vals[np.searchsorted(lams, 1.0)])

    lo = float(lams[i - 1]) if i > 0 else best_lam / 2.0
    hi = float(lams[i + 1]) if i + 1 < len(lams) else m
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    ec, ed = e_of(c), e_of(d)
    for _ in range(golden_iters):
        if ec < ed:
            hi, d, ed = d, c, ec
            c = hi - _GOLDEN * (hi - lo)
            ec = e_of(c)
        else:
            lo, c, ec = c, d, ed
            d = lo + _GOLDEN * (hi - lo)
            ed = e_of(d)
        for lam, val in ((c, ec), (d, ed)):
            if val < best_val and 0 < lam <= m:
                best_lam, best_val = float(lam), float(val)

    if e_at_1 <= best_val * (1.0 + 1e-9) + 1e-300:
        best_lam, best_val = 1.0, e_at_1
    if best_lam >= 0.99 * m:
        warnings.warn(f"line search hit the cap region: lambda={best_lam:.4g} with m={m}",
                      stacklevel=2)
    return best_lam, best_val


# -- initialization and outer loop ------------------------------------------------

def initialize(init: StatePair, target: StatePair, nl: Nonlinearity, grid: Grid,
               cfg: LSConfig, user_pair: TrajectoryControlPair | None = None
               ) -> TrajectoryControlPair:
    """Starting pair per cfg.init_mode.

    linear_star: the minimal-norm controlled pair of the pure wave equation
    (g dropped entirely).  affine_star: the controlled pair of the affine
    linearization at 0 (potential g'(0), source -g(0)).
    """
    if cfg.init_mode == "user":
        if user_pair is None:
            raise ValueError("init_mode='user' requires a starting pair")
        return user_pair
    if cfg.init_mode == "linear_star":
        a = None
        b = None
    else:
        gp0 = float(nl.gprime(np.zeros(1))[0])
        g0 = float(nl.g(np.zeros(1))[0])
        a = SpaceTimeField.constant(grid, gp0) if gp0 else None
        b = SpaceTimeField.constant(grid, -g0) if g0 else None
    sol = minimal_norm_control(LinearControlProblem(grid, a, b, init, target),
                               tol=cfg.inner_tol, max_iter=cfg.inner_max_iter)
    scale = 1.0 + v_norm(init) + v_norm(target)
    return TrajectoryControlPair(
        y=sol.state, f=sol.control, init=init, target=target,
        terminal_miss=sol.terminal_residual,
        admissible=sol.terminal_residual <= 10.0 * cfg.inner_tol * scale)


def solve(init: StatePair, target: StatePair, nl: Nonlinearity, grid: Grid,
          cfg: LSConfig | None = None, user_pair: TrajectoryControlPair | None = None,
          clock=time.perf_counter) -> tuple[TrajectoryControlPair, list[IterateRecord]]:
    """Run the line-searched minimizing sequence until E <= the E floor.

    Returns the final pair and the per-iteration log.  Raises
    DescentFailure, Stagnation (log attached), or BlowUp.
    """
    cfg = cfg or LSConfig()
    if not t_exceeds_geometric(grid):
        warnings.warn("T does not exceed the geometric control time; "
                      "the inner HUM solves are expected to fail", stacklevel=2)
    pair = initialize(init, target, nl, grid, cfg, user_pair)
    records: list[IterateRecord] = []
    e_floor = cfg.effective_E_tol
    scale = 1.0 + v_norm(init) + v_norm(target)
    e_curr = error_functional(pair, nl)
    t_start = clock()

    for k in range(cfg.max_outer):
        if e_curr <= e_floor:
            break
        try:
            direction = descent_pair(pair, nl, cfg)
        except NoConvergence as exc:
            raise DescentFailure(k, exc) from exc
        if cfg.forced_lambda is not None:
            lam = cfg.forced_lambda
            e_new = _e_of_raw(grid, _residual_raw(
                grid, pair.y.values - lam * direction.Y.values,
                pair.f.values - lam * direction.F.values, nl))
        else:
            lam, e_new = line_search(pair, nl, direction, cfg.m,
                                     cfg.ls_grid_points, cfg.golden_iters)
            assert e_new <= e_curr + 1e-14, "line search must not increase E"
        y_new = pair.y.values - lam * direction.Y.values
        f_new = pair.f.values - lam * direction.F.values
        miss = terminal_miss(grid, y_new, target)
        pair = TrajectoryControlPair(
            y=SpaceTimeField(grid, y_new), f=SpaceTimeField(grid, f_new),
            init=init, target=target, terminal_miss=miss,
            admissible=miss <= 10.0 * cfg.inner_tol * scale)
        records.append(IterateRecord(
            k=k, E=e_curr, lambda_=lam, descent_norm=direction.a0_norm(),
            terminal_miss=miss, wallclock=clock() - t_start,
            increment_inf=lam * float(np.abs(direction.Y.values).max())))
        sup = float(np.abs(y_new).max())
        if sup > cfg.blowup_guard:
            _fill_rates(records, e_new)
            raise BlowUp(records, sup)
        e_prev, e_curr = e_curr, e_new
        if _stagnated(records, e_curr, cfg, e_floor):
            _fill_rates(records, e_curr)
            raise Stagnation(records, pair)

    _fill_rates(records, e_curr)
    return pair, records


def _stagnated(records: list[IterateRecord], e_curr: float, cfg: LSConfig,
               e_floor: float) -> bool:
    w = cfg.stagnation_window
    if e_curr <= e_floor or len(records) < w:
        return False
    es = [r.E for r in records[-w:]] + [e_curr]
    drops = [(es[i] - es[i + 1]) / es[i] if es[i] > 0 else 1.0 for i in range(w)]
    return all(d < cfg.stagnation_drop for d in drops)


def _fill_rates(records: list[IterateRecord], e_final: float) -> None:
    """Two-point order estimates log E_{k+1} / log E_k (only when both < 1)."""
    es = [r.E for r in records] + [e_final]
    for i, rec in enumerate(records):
        a, b = es[i], es[i + 1]
        if 0 < a < 1 and 0 < b < 1:
            rec.rate = math.log(b) / math.log(a)


# -- convergence diagnostics -----------------------------------------------------

@dataclass
class RateReport:
    orders: list[tuple[int, float]]         # three-point order estimates per k
    k0: int | None                          # onset of sustained superlinear decay
    lambdas: list[float]
    cumulative_step_norms: list[float]      # running sum of lambda_k * ||(Y1,F1)||_A0
    rates_two_point: list[tuple[int, float]]


def rate_diagnostics(records: list[IterateRecord], s: float = 1.0,
                     e_final: float | None = None) -> RateReport:
    """Per-iteration convergence orders and the superlinear onset index.

    The order estimate at k is log(E_{k+1}/E_k) / log(E_k/E_{k-1}) (exactly
    1 for a geometric sequence, 2 for a squaring one); k0 is the first k
    from which every order stays >= 1 + s/2.
    """
    if len(records) < 3:
        raise InsufficientData(f"need at least 3 iterate records, got {len(records)}")
    es = [r.E for r in records]
    if e_final is not None:
        es = es + [e_final]
    orders: list[tuple[int, float]] = []
    for k in range(1, len(es) - 1):
        num = math.log(es[k + 1] / es[k]) if es[k + 1] > 0 and es[k] > 0 else math.nan
        den = math.log(es[k] / es[k - 1]) if es[k] > 0 and es[k - 1] > 0 else math.nan
        if math.isfinite(num) and math.isfinite(den) and den != 0:
            orders.append((k, num / den))
    threshold = 1.0 + s / 2.0
    k0 = None
    for idx in range(len(orders)):
        if all(o >= threshold for _, o in orders[idx:]):
            k0 = orders[idx][0]
            break
    csum: list[float] = []
    acc = 0.0
    for r in records:
        acc += r.lambda_ * r.descent_norm
        csum.append(acc)
    two_point = [(r.k, r.rate) for r in records if r.rate is not None]
    return RateReport(orders=orders, k0=k0, lambdas=[r.lambda_ for r in records],
                      cumulative_step_norms=csum, rates_two_point=two_point)
