import numpy as np
import pytest

from wavecontrol import Grid, SpaceTimeField, StatePair
from wavecontrol.least_squares import TrajectoryControlPair


@pytest.fixture(scope="session")
def grid_ref():
    """Reference grid of the acceptance suite: nx=200, omega=(0.2,0.8), T=1, dt=dx."""
    return Grid.make(nx=200, T=1.0, omega=(0.2, 0.8))


@pytest.fixture(scope="session")
def grid_small():
    return Grid.make(nx=60, T=1.0, omega=(0.2, 0.8))


def smooth_field(grid, seed, amplitude=1.0, modes=4):
    """Random smooth space-time field from a few Fourier modes."""
    rng = np.random.default_rng(seed)
    vals = np.zeros((grid.nt + 1, grid.nx))
    for k in range(1, modes + 1):
        for j in range(1, modes + 1):
            vals += rng.standard_normal() / (k * j) * np.outer(
                np.sin(j * np.pi * grid.t / grid.T), np.sin(k * np.pi * grid.x))
    return SpaceTimeField(grid, amplitude * vals)


def random_state(grid, seed, amplitude=1.0, modes=4):
    rng = np.random.default_rng(seed)
    pos = np.zeros(grid.nx)
    vel = np.zeros(grid.nx)
    for k in range(1, modes + 1):
        pos += rng.standard_normal() / k ** 2 * np.sin(k * np.pi * grid.x)
        vel += rng.standard_normal() / k * np.sin(k * np.pi * grid.x)
    return StatePair(grid, amplitude * pos, amplitude * vel)


def rough_pair(grid, seed, amplitude=0.5, control_amplitude=0.3):
    """A non-admissible trajectory/control pair with O(1) residual."""
    y = smooth_field(grid, seed, amplitude).values
    rng = np.random.default_rng((seed, 1))
    f = np.zeros_like(y)
    sl = grid.omega_slice
    f[:, sl] = control_amplitude * rng.standard_normal((grid.nt + 1, sl.stop - sl.start))
    init = StatePair(grid, y[0], (y[1] - y[0]) / grid.dt)
    return TrajectoryControlPair(
        y=SpaceTimeField(grid, y), f=SpaceTimeField(grid, f),
        init=init, target=StatePair.zeros(grid),
        terminal_miss=np.inf, admissible=False)
