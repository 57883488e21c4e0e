"""Space-time discretization of the 1D wave operator on (0,1).

Grids, fields, forward/backward leapfrog solves of

    y_tt - y_xx + A(x,t) y = rhs,   y(0,t) = y(1,t) = 0,

and the discrete norms used everywhere else in the package.

Conventions
-----------
* Interior storage: fields hold values at the nx interior nodes
  x_i = i*dx, i = 1..nx, dx = 1/(nx+1).  Boundary values are zero by
  construction and never stored.
* Time levels t_n = n*dt, n = 0..nt.  The default dt = dx propagates 1D
  characteristics exactly (the "magic" time step), which keeps the
  discrete control problem free of spurious high-frequency modes.
* Quadrature: trapezoid in space over interior+boundary nodes (which
  reduces to dx * sum over interior nodes since boundary values vanish),
  left rectangle in time (levels 0..nt-1).
* The scheme-exact space-time pairing used for transposition weights
  level 0 by one half and drops level nt; see `duality_inner`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "SpaceTimeField",
    "StatePair",
    "CFLViolation",
    "NonFiniteSolution",
    "t_exceeds_geometric",
    "solve_forward",
    "solve_adjoint",
    "continue_backward",
    "terminal_encode",
    "initial_velocity_trace",
    "terminal_velocity_trace",
    "l2_QT",
    "l2_qT",
    "v_norm",
    "energy",
    "duality_inner",
    "terminal_pairing",
    "dalembert",
    "write_field",
    "read_field",
]


class CFLViolation(ValueError):
    """Raised when dt exceeds dx (the explicit scheme would be unstable)."""


class NonFiniteSolution(RuntimeError):
    """A solve produced non-finite values; `level` is the first bad time level."""

    def __init__(self, level: int):
        super().__init__(f"non-finite values at time level {level}")
        self.level = level


@dataclass(frozen=True)
class Grid:
    """Space-time grid for Q_T = (0,1) x (0,T) with control window omega.

    nx interior points (dx = 1/(nx+1)), nt time steps of size dt covering
    [0, T]; omega = (l1, l2) is the control window.
    """

    nx: int
    nt: int
    T: float
    omega: tuple[float, float]
    dt: float

    @classmethod
    def make(cls, nx: int, T: float, omega: tuple[float, float], dt: float | None = None) -> "Grid":
        dx = 1.0 / (nx + 1)
        if dt is None:
            dt = dx
        nt = int(round(T / dt))
        return cls(nx=nx, nt=nt, T=float(T), omega=(float(omega[0]), float(omega[1])), dt=float(dt))

    def __post_init__(self):
        l1, l2 = self.omega
        if self.nx < 3:
            raise ValueError(f"nx must be >= 3, got {self.nx}")
        if self.T <= 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not (0.0 <= l1 < l2 <= 1.0):
            raise ValueError(f"need 0 <= l1 < l2 <= 1, got omega={self.omega}")
        if self.dt > self.dx * (1.0 + 1e-12):
            raise CFLViolation(f"dt={self.dt} exceeds dx={self.dx}")
        if abs(self.nt * self.dt - self.T) > self.dt / 2 + 1e-12:
            raise ValueError(f"nt*dt={self.nt * self.dt} is not within dt/2 of T={self.T}")

    @property
    def dx(self) -> float:
        return 1.0 / (self.nx + 1)

    @property
    def x(self) -> np.ndarray:
        """Interior node coordinates, shape (nx,)."""
        return np.arange(1, self.nx + 1) * self.dx

    @property
    def t(self) -> np.ndarray:
        """Time levels, shape (nt+1,)."""
        return np.arange(self.nt + 1) * self.dt

    @property
    def omega_slice(self) -> slice:
        """Interior-array slice of the half-open node interval [ceil(l1/dx), floor(l2/dx))."""
        l1, l2 = self.omega
        i1 = int(math.ceil(l1 / self.dx - 1e-9))
        i2 = int(math.floor(l2 / self.dx + 1e-9))
        i1 = max(i1, 1)
        i2 = min(i2, self.nx + 1)
        return slice(i1 - 1, i2 - 1)

    @property
    def omega_mask(self) -> np.ndarray:
        mask = np.zeros(self.nx, dtype=bool)
        mask[self.omega_slice] = True
        return mask


def t_exceeds_geometric(grid: Grid) -> bool:
    """True iff T > 2*max(l1, 1-l2), the 1D geometric control condition."""
    l1, l2 = grid.omega
    return grid.T > 2.0 * max(l1, 1.0 - l2)


@dataclass(frozen=True)
class SpaceTimeField:
    """Scalar function on the grid: values[n, i] at time level n, interior node i+1."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        expected = (self.grid.nt + 1, self.grid.nx)
        if self.values.shape != expected:
            raise ValueError(f"field shape {self.values.shape} does not match grid {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite entries")

    @classmethod
    def zeros(cls, grid: Grid) -> "SpaceTimeField":
        return cls(grid, np.zeros((grid.nt + 1, grid.nx)))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "SpaceTimeField":
        return cls(grid, np.full((grid.nt + 1, grid.nx), float(value)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "SpaceTimeField":
        """Sample fn(x, t) pointwise; fn must broadcast over arrays."""
        xx = grid.x[None, :]
        tt = grid.t[:, None]
        return cls(grid, np.asarray(fn(xx, tt), dtype=float) + np.zeros((grid.nt + 1, grid.nx)))


@dataclass(frozen=True)
class StatePair:
    """Snapshot (position, velocity) in V = H^1_0 x L^2, interior storage."""

    grid: Grid
    pos: np.ndarray
    vel: np.ndarray

    def __post_init__(self):
        if self.pos.shape != (self.grid.nx,) or self.vel.shape != (self.grid.nx,):
            raise ValueError("state arrays do not match grid")
        if not (np.all(np.isfinite(self.pos)) and np.all(np.isfinite(self.vel))):
            raise ValueError("state contains non-finite entries")

    @classmethod
    def zeros(cls, grid: Grid) -> "StatePair":
        z = np.zeros(grid.nx)
        return cls(grid, z, z.copy())


# -- low-level kernels --------------------------------------------------------

def _laplacian(v: np.ndarray, dx: float) -> np.ndarray:
    """Dirichlet second difference on interior storage (boundary values zero)."""
    out = -2.0 * v
    out[..., 1:] += v[..., :-1]
    out[..., :-1] += v[..., 1:]
    return out / (dx * dx)


def _as_values(grid: Grid, field: SpaceTimeField | None) -> np.ndarray | None:
    if field is None:
        return None
    if field.grid != grid:
        raise ValueError("field grid does not match")
    return field.values


def _march(grid: Grid, a: np.ndarray | None, r: np.ndarray | None,
           pos: np.ndarray, vel: np.ndarray) -> np.ndarray:
    """Run the explicit leapfrog recurrence; returns raw (nt+1, nx) values.

    Level 1 is the second-order Taylor start
        y^1 = y^0 + dt v + (dt^2/2)(y^0_xx - A^0 y^0 + r^0);
    levels 2..nt follow
        y^{n+1} = 2 y^n - y^{n-1} + dt^2 (y^n_xx - A^n y^n + r^n).
    """
    nt, nx, dx, dt = grid.nt, grid.nx, grid.dx, grid.dt
    y = np.empty((nt + 1, nx))
    y[0] = pos
    acc = _laplacian(pos, dx)
    if a is not None:
        acc = acc - a[0] * pos
    if r is not None:
        acc = acc + r[0]
    y[1] = pos + dt * vel + 0.5 * dt * dt * acc
    dt2 = dt * dt
    for n in range(1, nt):
        acc = _laplacian(y[n], dx)
        if a is not None:
            acc = acc - a[n] * y[n]
        if r is not None:
            acc = acc + r[n]
        y[n + 1] = 2.0 * y[n] - y[n - 1] + dt2 * acc
        if not np.all(np.isfinite(y[n + 1])):
            raise NonFiniteSolution(n + 1)
    return y


def solve_forward(grid: Grid, A: SpaceTimeField | None, rhs: SpaceTimeField | None,
                  init: StatePair) -> SpaceTimeField:
    """Leapfrog solve of y_tt - y_xx + A y = rhs from initial data `init`."""
    if init.grid != grid:
        raise ValueError("initial data grid does not match")
    a = _as_values(grid, A)
    r = _as_values(grid, rhs)
    return SpaceTimeField(grid, _march(grid, a, r, init.pos, init.vel))


def solve_adjoint(grid: Grid, A: SpaceTimeField | None, data: StatePair,
                  at: str = "t0") -> SpaceTimeField:
    """Homogeneous solve with data prescribed at one end of [0, T].

    at="t0": same as solve_forward with rhs = 0.
    at="T": backward solve, realized as the forward solve under time
    reflection t -> T - t with data (pos, -vel) and the potential reversed.
    """
    if at == "t0":
        return solve_forward(grid, A, None, data)
    if at != "T":
        raise ValueError(f"at must be 't0' or 'T', got {at!r}")
    a = _as_values(grid, A)
    a_rev = None if a is None else a[::-1]
    y = _march(grid, a_rev, None, data.pos, -data.vel)
    return SpaceTimeField(grid, y[::-1].copy())


def continue_backward(grid: Grid, A: SpaceTimeField | None,
                      level_last_minus_1: np.ndarray, level_last: np.ndarray) -> np.ndarray:
    """Extend a homogeneous solution backward from its last two levels.

    Returns raw values (nt+1, nx) satisfying the interior leapfrog
    recurrence with psi^{nt-1}, psi^{nt} as given.  This is the exact
    transposition partner of `solve_forward`: the discrete Wronskian
    <psi^{n+1}, phi^n> - <psi^n, phi^{n+1}> is conserved between any two
    homogeneous solutions.
    """
    nt, dx, dt = grid.nt, grid.dx, grid.dt
    a = _as_values(grid, A)
    psi = np.empty((nt + 1, grid.nx))
    psi[nt - 1] = level_last_minus_1
    psi[nt] = level_last
    dt2 = dt * dt
    for n in range(nt - 1, 0, -1):
        acc = _laplacian(psi[n], dx)
        if a is not None:
            acc = acc - a[n] * psi[n]
        psi[n - 1] = 2.0 * psi[n] - psi[n + 1] + dt2 * acc
        if not np.all(np.isfinite(psi[n - 1])):
            raise NonFiniteSolution(n - 1)
    return psi


def terminal_encode(grid: Grid, A: SpaceTimeField | None, state: StatePair) -> tuple[np.ndarray, np.ndarray]:
    """Last two levels of the homogeneous solution with data `state` at t=T.

    Mirrors the Taylor start under time reflection, so a backward solve
    seeded with these levels reproduces solve_adjoint(..., at="T").
    """
    a = _as_values(grid, A)
    dt, dx = grid.dt, grid.dx
    acc = _laplacian(state.pos, dx)
    if a is not None:
        acc = acc - a[grid.nt] * state.pos
    level_nm1 = state.pos - dt * state.vel + 0.5 * dt * dt * acc
    return level_nm1, state.pos.copy()


def initial_velocity_trace(grid: Grid, A: SpaceTimeField | None, values: np.ndarray) -> np.ndarray:
    """Velocity at t=0 consistent with the Taylor start of a homogeneous solution."""
    a = _as_values(grid, A)
    dt, dx = grid.dt, grid.dx
    acc = _laplacian(values[0], dx)
    if a is not None:
        acc = acc - a[0] * values[0]
    return (values[1] - values[0]) / dt - 0.5 * dt * acc


def terminal_velocity_trace(grid: Grid, A: SpaceTimeField | None, values: np.ndarray) -> np.ndarray:
    """Velocity at t=T consistent with the reflected Taylor start."""
    a = _as_values(grid, A)
    dt, dx = grid.dt, grid.dx
    acc = _laplacian(values[-1], dx)
    if a is not None:
        acc = acc - a[grid.nt] * values[-1]
    return (values[-1] - values[-2]) / dt + 0.5 * dt * acc


# -- norms and pairings -------------------------------------------------------

def l2_QT(field: SpaceTimeField) -> float:
    """L2(Q_T) norm: trapezoid in space, left rectangle in time."""
    g = field.grid
    return math.sqrt(g.dx * g.dt * float(np.sum(field.values[:-1] ** 2)))


def l2_qT(field: SpaceTimeField) -> float:
    """L2(q_T) norm: restriction to the omega index mask."""
    g = field.grid
    sl = g.omega_slice
    return math.sqrt(g.dx * g.dt * float(np.sum(field.values[:-1, sl] ** 2)))


def _h1_seminorm_sq(v: np.ndarray, dx: float) -> float:
    """Sum over all edges (including boundary edges) of (forward diff)^2 / dx."""
    d = np.diff(v, prepend=0.0, append=0.0)
    return float(np.sum(d * d)) / dx


def v_norm(state: StatePair) -> float:
    """Norm of V = H^1_0 x L^2: (||d_x pos||^2 + ||vel||^2)^(1/2)."""
    g = state.grid
    return math.sqrt(_h1_seminorm_sq(state.pos, g.dx) + g.dx * float(np.sum(state.vel ** 2)))


def energy(field: SpaceTimeField, n: int) -> float:
    """Discrete wave energy at the staggered level n+1/2, n in 0..nt-1.

    E = 1/2 ||(y^{n+1}-y^n)/dt||^2 + 1/2 a(y^{n+1}, y^n) with
    a(u,v) = sum over edges of Du Dv / dx; exactly conserved by the
    leapfrog scheme when A = 0 and rhs = 0.
    """
    g = field.grid
    if not (0 <= n < g.nt):
        raise ValueError(f"staggered level n must be in 0..{g.nt - 1}")
    u, w = field.values[n + 1], field.values[n]
    kin = 0.5 * g.dx * float(np.sum(((u - w) / g.dt) ** 2))
    du = np.diff(u, prepend=0.0, append=0.0)
    dw = np.diff(w, prepend=0.0, append=0.0)
    pot = 0.5 * float(np.sum(du * dw)) / g.dx
    return kin + pot


def duality_inner(grid: Grid, u: np.ndarray, v: np.ndarray) -> float:
    """Scheme-exact space-time pairing: dx*dt*(u^0.v^0/2 + sum_{0<n<nt} u^n.v^n).

    This is the quadrature under which the discrete transposition identity
        duality_inner(u, phi) == terminal_pairing(solve_forward(rhs=u), phi)
    holds to rounding for every homogeneous adjoint solution phi.  It is
    the left-rectangle rule except for the half weight the Taylor start
    gives the level-0 source (level nt is never read by the scheme).
    """
    s = 0.5 * float(np.dot(u[0], v[0])) + float(np.sum(u[1:-1] * v[1:-1]))
    return grid.dx * grid.dt * s


def terminal_pairing(grid: Grid, w: np.ndarray, phi: np.ndarray) -> float:
    """Discrete Wronskian at T: (dx/dt)(<w^nt, phi^{nt-1}> - <w^{nt-1}, phi^nt>)."""
    s = float(np.dot(w[-1], phi[-2])) - float(np.dot(w[-2], phi[-1]))
    return grid.dx / grid.dt * s


# -- exact-solution oracle ----------------------------------------------------

def dalembert(grid: Grid, u0) -> SpaceTimeField:
    """d'Alembert evaluation for A=0, rhs=0, zero initial velocity.

    y(x,t) = (u0~(x+t) + u0~(x-t))/2 with u0~ the odd 2-periodic extension
    of the initial position.  Evaluated directly at grid points; with
    dt = dx this equals the leapfrog solution to rounding.
    """
    n_period = 2 * (grid.nx + 1)
    base = np.zeros(n_period)
    base[1:grid.nx + 1] = u0(grid.x)
    base[grid.nx + 2:] = -u0(grid.x)[::-1]
    out = np.empty((grid.nt + 1, grid.nx))
    idx = np.arange(1, grid.nx + 1)
    if abs(grid.dt - grid.dx) > 1e-12 * grid.dx:
        raise ValueError("dalembert oracle assumes dt = dx (integer characteristics)")
    for n in range(grid.nt + 1):
        out[n] = 0.5 * (base[(idx + n) % n_period] + base[(idx - n) % n_period])
    return SpaceTimeField(grid, out)


# -- field dump format --------------------------------------------------------

def write_field(field: SpaceTimeField, path) -> None:
    """Text dump: header line with grid metadata, then nt+1 rows of nx values."""
    g = field.grid
    header = (f"# wavefield nx={g.nx} nt={g.nt} dx={g.dx!r} dt={g.dt!r} "
              f"T={g.T!r} l1={g.omega[0]!r} l2={g.omega[1]!r}")
    with open(path, "w") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, field.values, fmt="%.17e")


def read_field(path) -> SpaceTimeField:
    """Parse a field dump written by `write_field`."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# wavefield "):
            raise ValueError(f"{path}: not a wavefield dump")
        meta = dict(item.split("=") for item in header[len("# wavefield "):].split())
        values = np.loadtxt(fh, ndmin=2)
    grid = Grid(nx=int(meta["nx"]), nt=int(meta["nt"]), T=float(meta["T"]),
                omega=(float(meta["l1"]), float(meta["l2"])), dt=float(meta["dt"]))
    if abs(grid.dx - float(meta["dx"])) > 1e-12:
        raise ValueError(f"{path}: inconsistent dx in header")
    return SpaceTimeField(grid, values)
