"""Minimal-L2-norm controls for the linear wave equation with potential.

Conjugate-gradient minimization of the dual (HUM) functional

    J(phi0, phi1) = 1/2 ||phi||^2_{L2(q_T)} + (B, phi)_{L2(Q_T)}
                    - <(z0, z1), (phi0, phi1)>_{V,H},

over H = L^2 x H^-1, where phi is the homogeneous solution with data
(phi0, phi1) at t=0.  The control is u = phi 1_omega.

All pairings are realized through the scheme-exact transposition of
`core` (duality_inner / terminal_pairing), so the Gramian is symmetric
positive to rounding and its Euler equation is exactly the discrete
optimality condition.  Controls live on time levels 1..nt-1 (the Taylor
start reads no control, level nt is never read), which makes the
minimized quadratic form agree with the reported left-rectangle
L2(q_T) norm.

General targets are folded into equivalent data by subtracting the free
(homogeneous, uncontrolled) solution that hits the target at T; the dual
functional then keeps exactly the null-control form above.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Grid,
    SpaceTimeField,
    StatePair,
    continue_backward,
    duality_inner,
    initial_velocity_trace,
    l2_qT,
    solve_adjoint,
    solve_forward,
    t_exceeds_geometric,
    terminal_encode,
    v_norm,
)

__all__ = [
    "AdjointData",
    "LinearControlProblem",
    "ControlSolution",
    "NoConvergence",
    "BreakdownPD",
    "riesz_hminus1",
    "h_inner",
    "h_norm",
    "dual_functional",
    "gramian_apply",
    "dual_rhs",
    "minimal_norm_control",
    "observability_probe",
    "ProbeReport",
]


class NoConvergence(RuntimeError):
    """CG failed to meet the tolerance; carries the residual history."""

    def __init__(self, max_iter: int, residual_history: list[float], message: str = ""):
        super().__init__(message or f"no convergence after {max_iter} CG iterations")
        self.max_iter = max_iter
        self.residual_history = residual_history


class BreakdownPD(RuntimeError):
    """CG met nonpositive curvature <Lambda p, p> (a discretization bug)."""


@dataclass(frozen=True)
class AdjointData:
    """HUM dual variable (phi0, phi1) in H = L^2 x H^-1 (phi1 stored as a grid function)."""

    grid: Grid
    phi0: np.ndarray
    phi1: np.ndarray

    def __post_init__(self):
        if self.phi0.shape != (self.grid.nx,) or self.phi1.shape != (self.grid.nx,):
            raise ValueError("adjoint arrays do not match grid")
        if not (np.all(np.isfinite(self.phi0)) and np.all(np.isfinite(self.phi1))):
            raise ValueError("adjoint data contains non-finite entries")

    @classmethod
    def zeros(cls, grid: Grid) -> "AdjointData":
        return cls(grid, np.zeros(grid.nx), np.zeros(grid.nx))

    def as_state(self) -> StatePair:
        return StatePair(self.grid, self.phi0, self.phi1)


@dataclass(frozen=True)
class LinearControlProblem:
    """Steer z_tt - z_xx + A z = u 1_omega + B from `init` to `target` at T."""

    grid: Grid
    A: SpaceTimeField | None
    B: SpaceTimeField | None
    init: StatePair
    target: StatePair

    def __post_init__(self):
        for f in (self.A, self.B):
            if f is not None and f.grid != self.grid:
                raise ValueError("coefficient grid does not match")
        if self.init.grid != self.grid or self.target.grid != self.grid:
            raise ValueError("data grid does not match")
        if not t_exceeds_geometric(self.grid):
            l1, l2 = self.grid.omega
            warnings.warn(
                f"T={self.grid.T} does not exceed the geometric control time "
                f"2*max(l1, 1-l2)={2 * max(l1, 1 - l2)}; the control problem is ill-posed",
                stacklevel=2,
            )


@dataclass
class ControlSolution:
    control: SpaceTimeField
    state: SpaceTimeField
    adjoint: AdjointData
    cg_iterations: int
    terminal_residual: float
    residual_history: list[float] = field(default_factory=list)

    @property
    def control_norm(self) -> float:
        return l2_qT(self.control)


# -- H = L^2 x H^-1 inner product ----------------------------------------------

_GREEN_CACHE: dict[tuple[int, float], np.ndarray] = {}


def _green_matrix(nx: int, dx: float) -> np.ndarray:
    """Exact inverse of the Dirichlet second-difference matrix, scaled by dx^2."""
    key = (nx, dx)
    got = _GREEN_CACHE.get(key)
    if got is None:
        i = np.arange(1, nx + 1, dtype=float)
        n_tot = nx + 1
        got = dx * dx * np.minimum.outer(i, i) * (n_tot - np.maximum.outer(i, i)) / n_tot
        _GREEN_CACHE[key] = got
    return got


def riesz_hminus1(grid: Grid, w: np.ndarray) -> np.ndarray:
    """Solve the discrete Dirichlet problem -v_xx = w; then ||w||^2_{H^-1} = dx sum(w v)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (grid.nx,):
        raise ValueError(f"expected length-{grid.nx} array, got shape {w.shape}")
    return _green_matrix(grid.nx, grid.dx) @ w


def _neg_laplacian(grid: Grid, v: np.ndarray) -> np.ndarray:
    out = 2.0 * v
    out[1:] -= v[:-1]
    out[:-1] -= v[1:]
    return out / (grid.dx * grid.dx)


def h_inner(a: AdjointData, b: AdjointData) -> float:
    g = a.grid
    return g.dx * (float(np.dot(a.phi0, b.phi0)) + float(np.dot(riesz_hminus1(g, a.phi1), b.phi1)))


def h_norm(a: AdjointData) -> float:
    return math.sqrt(max(h_inner(a, a), 0.0))


# -- transposition -------------------------------------------------------------

def _masked_control(grid: Grid, phi: np.ndarray) -> np.ndarray:
    """Control field phi 1_omega on levels 1..nt-1 (zero elsewhere)."""
    u = np.zeros_like(phi)
    sl = grid.omega_slice
    u[1:-1, sl] = phi[1:-1, sl]
    return u


def _transpose_terminal(grid: Grid, A: SpaceTimeField | None,
                        w_last_minus_1: np.ndarray, w_last: np.ndarray) -> AdjointData:
    """H-representative of ad -> terminal_pairing(w, phi_ad).

    Runs the homogeneous backward problem seeded by w's terminal levels;
    the t=0 traces give the pairing against (phi0, phi1), and the H^-1
    slot is mapped through the Riesz isomorphism (here its inverse, the
    negative Laplacian applied to -psi(0)).
    """
    psi = continue_backward(grid, A, w_last_minus_1, w_last)
    mu0 = initial_velocity_trace(grid, A, psi)
    return AdjointData(grid, mu0, _neg_laplacian(grid, -psi[0]))


def gramian_apply(problem: LinearControlProblem, ad: AdjointData) -> AdjointData:
    """Apply the HUM Gramian: <Lambda a, b>_H = sum_{q_T} phi_a phi_b exactly.

    (i) phi = homogeneous adjoint solve from ad at t=0; (ii) w = forward
    solve with rhs phi 1_omega and zero data; (iii) transpose w's terminal
    state back to H-coordinates.
    """
    g = problem.grid
    phi = solve_adjoint(g, problem.A, ad.as_state(), at="t0")
    u = _masked_control(g, phi.values)
    w = solve_forward(g, problem.A, SpaceTimeField(g, u), StatePair.zeros(g))
    return _transpose_terminal(g, problem.A, w.values[-2], w.values[-1])


def _effective_data(problem: LinearControlProblem) -> tuple[np.ndarray, np.ndarray, SpaceTimeField | None]:
    """Fold the target into null-control data: subtract the free solution hitting it.

    Returns (z0_eff, z1_eff, xi) where xi is the homogeneous backward
    solution from the target (None when the target is zero).
    """
    g = problem.grid
    if not (np.any(problem.target.pos) or np.any(problem.target.vel)):
        return problem.init.pos.copy(), problem.init.vel.copy(), None
    xi = solve_adjoint(g, problem.A, problem.target, at="T")
    z0 = problem.init.pos - xi.values[0]
    z1 = problem.init.vel - initial_velocity_trace(g, problem.A, xi.values)
    return z0, z1, xi


def dual_rhs(problem: LinearControlProblem) -> AdjointData:
    """Right-hand side of the CG system Lambda ad = b (the negated J-gradient offset)."""
    g = problem.grid
    z0, z1, _ = _effective_data(problem)
    rhs0 = -z1
    rhs1 = _neg_laplacian(g, z0)
    if problem.B is not None and np.any(problem.B.values):
        w_b = solve_forward(g, problem.A, problem.B, StatePair.zeros(g))
        tb = _transpose_terminal(g, problem.A, w_b.values[-2], w_b.values[-1])
        rhs0 = rhs0 - tb.phi0
        rhs1 = rhs1 - tb.phi1
    return AdjointData(g, rhs0, rhs1)


def dual_functional(problem: LinearControlProblem, ad: AdjointData) -> float:
    """Value of J at ad, with the target folded into equivalent data.

    Quadrature matches the transposition identity (half weight on the
    level-0 source term, control levels 1..nt-1), so the gradient of J in
    the H metric is exactly gramian_apply(ad) - dual_rhs(problem).
    """
    g = problem.grid
    z0, z1, _ = _effective_data(problem)
    phi = solve_adjoint(g, problem.A, ad.as_state(), at="t0")
    sl = g.omega_slice
    quad = 0.5 * g.dx * g.dt * float(np.sum(phi.values[1:-1, sl] ** 2))
    lin = 0.0
    if problem.B is not None and np.any(problem.B.values):
        lin = duality_inner(g, problem.B.values, phi.values)
    pairing = g.dx * (float(np.dot(z0, ad.phi1)) - float(np.dot(z1, ad.phi0)))
    return quad + lin - pairing


def _terminal_miss(grid: Grid, state_values: np.ndarray,
                   xi_last_minus_1: np.ndarray, xi_last: np.ndarray) -> float:
    """V-norm of the terminal deviation from the target encoding."""
    a = state_values[-1] - xi_last
    b = state_values[-2] - xi_last_minus_1
    return v_norm(StatePair(grid, a, (a - b) / grid.dt))


def minimal_norm_control(problem: LinearControlProblem, tol: float = 1e-8,
                         max_iter: int = 500, x0: AdjointData | None = None,
                         tikhonov: float = 0.0) -> ControlSolution:
    """Control of minimal L2(q_T) norm via CG on the HUM Gramian in H.

    Stops when the H-norm of the CG residual falls below tol times the
    H-norm of the right-hand side, or when the re-simulated controlled
    state misses the target by at most tol in V.  `tikhonov` adds
    eps*||ad||_H^2 to the dual functional (off by default; a knob for
    coarse grids).
    """
    g = problem.grid
    if tol <= 0:
        raise ValueError("tol must be positive")
    rhs = dual_rhs(problem)
    rhs_norm = h_norm(rhs)
    scale = 1.0 + v_norm(problem.target) + v_norm(problem.init)
    miss_bound = 10.0 * tol * scale
    xi_m1, xi_last = terminal_encode(g, problem.A, problem.target)

    def apply_op(p: AdjointData) -> AdjointData:
        q = gramian_apply(problem, p)
        if tikhonov:
            return AdjointData(g, q.phi0 + tikhonov * p.phi0, q.phi1 + tikhonov * p.phi1)
        return q

    def resimulate(ad: AdjointData) -> tuple[SpaceTimeField, SpaceTimeField, float]:
        phi = solve_adjoint(g, problem.A, ad.as_state(), at="t0")
        u = SpaceTimeField(g, _masked_control(g, phi.values))
        rhs_total = u if problem.B is None else SpaceTimeField(g, u.values + problem.B.values)
        state = solve_forward(g, problem.A, rhs_total, problem.init)
        return u, state, _terminal_miss(g, state.values, xi_m1, xi_last)

    history: list[float] = []
    if rhs_norm == 0.0:
        x = AdjointData.zeros(g)
        u, state, miss = resimulate(x)
        return ControlSolution(control=u, state=state, adjoint=x, cg_iterations=0,
                               terminal_residual=miss, residual_history=history)

    x = x0 if x0 is not None else AdjointData.zeros(g)
    r0 = rhs.phi0.copy()
    r1 = rhs.phi1.copy()
    if x0 is not None and (np.any(x.phi0) or np.any(x.phi1)):
        ax = apply_op(x)
        r0 -= ax.phi0
        r1 -= ax.phi1
    r = AdjointData(g, r0, r1)
    p = AdjointData(g, r.phi0.copy(), r.phi1.copy())
    rho = h_inner(r, r)
    history.append(math.sqrt(max(rho, 0.0)))
    iterations = 0
    # The residual target tightens whenever it is met but the re-simulated
    # terminal miss still exceeds the promised bound 10*tol*(1+|t|+|i|).
    res_target = tol * rhs_norm
    best: tuple[float, SpaceTimeField, SpaceTimeField, AdjointData] | None = None
    while True:
        if history[-1] <= res_target or iterations >= max_iter:
            u, state, miss = resimulate(x)
            if best is None or miss < best[0]:
                best = (miss, u, state, x)
            if miss <= miss_bound or miss <= tol:
                return ControlSolution(control=u, state=state, adjoint=x,
                                       cg_iterations=iterations, terminal_residual=miss,
                                       residual_history=history)
            if iterations >= max_iter or history[-1] <= 1e4 * np.finfo(float).eps * rhs_norm:
                msg = (f"terminal miss {best[0]:.3e} exceeds 10*tol*(1+|target|+|init|)="
                       f"{miss_bound:.3e} after {iterations} CG iterations")
                if not t_exceeds_geometric(g):
                    l1, l2 = g.omega
                    msg += (f"; note T={g.T} <= 2*max(l1,1-l2)={2 * max(l1, 1 - l2)}"
                            " (geometric control condition violated)")
                raise NoConvergence(max_iter, history, msg)
            res_target *= 0.1
        q = apply_op(p)
        kappa = h_inner(p, q)
        if kappa <= 0.0:
            raise BreakdownPD(f"nonpositive CG curvature {kappa} at iteration {iterations}")
        alpha = rho / kappa
        x = AdjointData(g, x.phi0 + alpha * p.phi0, x.phi1 + alpha * p.phi1)
        r = AdjointData(g, r.phi0 - alpha * q.phi0, r.phi1 - alpha * q.phi1)
        rho_new = h_inner(r, r)
        iterations += 1
        history.append(math.sqrt(max(rho_new, 0.0)))
        beta = rho_new / rho
        rho = rho_new
        p = AdjointData(g, r.phi0 + beta * p.phi0, r.phi1 + beta * p.phi1)


# -- empirical observability probe ---------------------------------------------

@dataclass
class ProbeReport:
    magnitudes: list[float]
    samples: int
    ratios: np.ndarray          # shape (len(magnitudes), samples)
    slope: float                # fit of log(ratio) against sqrt(magnitude)
    intercept: float

    def rows(self):
        for i, m in enumerate(self.magnitudes):
            for j in range(self.samples):
                yield m, j, self.ratios[i, j]


def _random_unit_state(grid: Grid, rng: np.random.Generator) -> StatePair:
    """Smooth random data normalized to unit V-norm."""
    x = grid.x
    pos = np.zeros(grid.nx)
    vel = np.zeros(grid.nx)
    for k in range(1, 7):
        pos += rng.standard_normal() / k ** 2 * np.sin(k * np.pi * x)
        vel += rng.standard_normal() / k * np.sin(k * np.pi * x)
    s = StatePair(grid, pos, vel)
    n = v_norm(s)
    return StatePair(grid, pos / n, vel / n)


def observability_probe(grid: Grid, A_magnitudes: list[float], samples: int,
                        seed: int = 0, tol: float = 1e-8, max_iter: int = 500,
                        threads: int = 1) -> ProbeReport:
    """Measured control-cost ratios ||u||_{2,q_T} / ||data||_V for constant potentials.

    For each magnitude, `samples` draws of random unit data are driven to
    zero under the potential (random sign) * magnitude; the report carries
    the ratio table and a least-squares fit of log(ratio) against
    sqrt(magnitude).  The fitted slope is a diagnostic, not an assertion.
    """
    if any(m < 0 for m in A_magnitudes):
        raise ValueError("potential magnitudes must be nonnegative")
    datasets = []
    for j in range(samples):
        rng = np.random.default_rng((seed, j))
        datasets.append((_random_unit_state(grid, rng), 1.0 if rng.random() < 0.5 else -1.0))

    def one(ij):
        i, j = ij
        data, sign = datasets[j]
        mag = A_magnitudes[i]
        a = None if mag == 0.0 else SpaceTimeField.constant(grid, sign * mag)
        problem = LinearControlProblem(grid, a, None, data, StatePair.zeros(grid))
        sol = minimal_norm_control(problem, tol=tol, max_iter=max_iter)
        return sol.control_norm

    jobs = [(i, j) for i in range(len(A_magnitudes)) for j in range(samples)]
    ratios = np.empty((len(A_magnitudes), samples))
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(ij) for ij in jobs]
    for (i, j), val in zip(jobs, results):
        ratios[i, j] = val

    sq = np.repeat(np.sqrt(np.asarray(A_magnitudes, dtype=float)), samples)
    logr = np.log(ratios.ravel())
    if np.ptp(sq) == 0.0:
        slope, intercept = 0.0, float(np.mean(logr))
    else:
        coeffs = np.polyfit(sq, logr, 1)
        slope, intercept = float(coeffs[0]), float(coeffs[1])
    return ProbeReport(magnitudes=[float(m) for m in A_magnitudes], samples=samples,
                       ratios=ratios, slope=slope, intercept=intercept)
