import math

import numpy as np
import pytest

from wavecontrol import core
from wavecontrol import least_squares as ls
from wavecontrol import nonlinearity as nlmod
from wavecontrol.core import Grid, SpaceTimeField, StatePair, l2_QT, l2_qT, v_norm
from wavecontrol.hum import LinearControlProblem, minimal_norm_control

from conftest import rough_pair, smooth_field


@pytest.fixture(scope="module")
def grid():
    return Grid.make(nx=80, T=1.0, omega=(0.2, 0.8))


@pytest.fixture(scope="module")
def sine_nl():
    return nlmod.sine(1.0, 0.5)


def small_init(grid, amp=0.3):
    return StatePair(grid, amp * np.sin(np.pi * grid.x), np.zeros(grid.nx))


class TestResidual:
    def test_simulated_pair_residual_zero(self, grid):
        # a pair marched by the solver with rhs f - g(y) has zero stencil residual
        f = smooth_field(grid, 1, amplitude=0.4)
        y = core.solve_forward(grid, None, f, small_init(grid))
        pair = ls.TrajectoryControlPair(y, f, small_init(grid), StatePair.zeros(grid),
                                        np.inf, False)
        r = ls.residual(pair, nlmod.zero())
        assert np.abs(r.values).max() <= 1e-8

    def test_levels_zero_at_time_endpoints(self, grid, sine_nl):
        r = ls.residual(rough_pair(grid, 2), sine_nl)
        assert np.all(r.values[0] == 0.0)
        assert np.all(r.values[-1] == 0.0)

    def test_perturbation_changes_by_stencil(self, grid):
        # adding delta to y adds stencil(delta) + c*delta for linear g
        nl = nlmod.linear(0.7)
        pair = rough_pair(grid, 3)
        delta = smooth_field(grid, 4, amplitude=0.1)
        r0 = ls.residual(pair, nl)
        pair2 = ls.TrajectoryControlPair(
            SpaceTimeField(grid, pair.y.values + delta.values), pair.f,
            pair.init, pair.target, np.inf, False)
        r1 = ls.residual(pair2, nl)
        expect = ls._stencil(grid, delta.values)
        expect[1:-1] += 0.7 * delta.values[1:-1]
        assert np.abs((r1.values - r0.values) - expect).max() <= 1e-9 * np.abs(expect).max()

    def test_linear_shift_identity(self, grid):
        # residual with linear(c) minus residual with zero g equals c*y levelwise
        pair = rough_pair(grid, 5)
        r_lin = ls.residual(pair, nlmod.linear(1.3))
        r_zero = ls.residual(pair, nlmod.zero())
        diff = r_lin.values - r_zero.values
        assert np.allclose(diff[1:-1], 1.3 * pair.y.values[1:-1])


class TestErrorFunctional:
    def test_controlled_linear_pair_is_zero(self, grid):
        sol = minimal_norm_control(LinearControlProblem(
            grid, None, None, small_init(grid), StatePair.zeros(grid)), tol=1e-9)
        pair = ls.TrajectoryControlPair(sol.state, sol.control, small_init(grid),
                                        StatePair.zeros(grid), sol.terminal_residual, True)
        assert ls.error_functional(pair, nlmod.zero()) <= 1e-25

    def test_linear_star_value_identity(self, grid):
        # E(y*, f*) = 1/2 ||g(y*)||^2 for the pure-wave initialization
        nl = nlmod.loglimit(0.0, 0.1)
        cfg = ls.LSConfig()
        pair = ls.initialize(small_init(grid), StatePair.zeros(grid), nl, grid, cfg)
        e = ls.error_functional(pair, nl)
        gy = np.zeros_like(pair.y.values)
        gy[1:-1] = nl.g(pair.y.values[1:-1])
        expected = 0.5 * l2_QT(SpaceTimeField(grid, gy)) ** 2
        assert e == pytest.approx(expected, rel=1e-12)

    def test_quadratic_scaling(self, grid):
        # doubling the deviation from the zero pair quadruples E (linear g)
        nl = nlmod.linear(0.9)
        base = rough_pair(grid, 6)
        e1 = ls.error_functional(base, nl)
        doubled = ls.TrajectoryControlPair(
            SpaceTimeField(grid, 2.0 * base.y.values), SpaceTimeField(grid, 2.0 * base.f.values),
            StatePair(grid, 2 * base.init.pos, 2 * base.init.vel), base.target, np.inf, False)
        e2 = ls.error_functional(doubled, nl)
        assert e2 == pytest.approx(4.0 * e1, rel=1e-12)


class TestDescentPair:
    def test_zero_residual_gives_zero(self, grid):
        sol = minimal_norm_control(LinearControlProblem(
            grid, None, None, small_init(grid), StatePair.zeros(grid)), tol=1e-9)
        pair = ls.TrajectoryControlPair(sol.state, sol.control, small_init(grid),
                                        StatePair.zeros(grid), sol.terminal_residual, True)
        d = ls.descent_pair(pair, nlmod.zero(), ls.LSConfig())
        assert np.abs(d.Y.values).max() <= 1e-10
        assert np.abs(d.F.values).max() <= 1e-10

    def test_zero_initial_levels(self, grid, sine_nl):
        # increments start exactly at rest: levels 0 and 1 vanish
        d = ls.descent_pair(rough_pair(grid, 7), sine_nl, ls.LSConfig())
        assert np.all(d.Y.values[0] == 0.0)
        assert np.all(d.Y.values[1] == 0.0)

    def test_sqrt_e_scaling(self, grid):
        # scaling the pair scales (Y1, F1) exactly for linear g: slope 1 in sqrt(E)
        nl = nlmod.linear(0.7)
        cfg = ls.LSConfig()
        base = rough_pair(grid, 8)
        sides, sqes = [], []
        for fac in (1.0, 0.5, 0.25):
            pair = ls.TrajectoryControlPair(
                SpaceTimeField(grid, fac * base.y.values),
                SpaceTimeField(grid, fac * base.f.values),
                StatePair(grid, fac * base.init.pos, fac * base.init.vel),
                base.target, np.inf, False)
            e = ls.error_functional(pair, nl)
            d = ls.descent_pair(pair, nl, cfg)
            sup_v = max(v_norm(StatePair(grid, d.Y.values[n],
                                         (d.Y.values[n + 1] - d.Y.values[n]) / grid.dt))
                        for n in range(0, grid.nt, 10))
            sides.append(l2_qT(d.F) + sup_v)
            sqes.append(math.sqrt(e))
        slope = np.polyfit(np.log(sqes), np.log(sides), 1)[0]
        assert slope == pytest.approx(1.0, abs=0.05)

    @pytest.mark.parametrize("seed", [10, 11])
    def test_directional_derivative_is_minus_2e(self, grid, sine_nl, seed):
        pair = rough_pair(grid, seed)
        e = ls.error_functional(pair, sine_nl)
        d = ls.descent_pair(pair, sine_nl, ls.LSConfig())
        lam = 1e-4
        e_lam = ls._e_of_raw(grid, ls._residual_raw(
            grid, pair.y.values - lam * d.Y.values, pair.f.values - lam * d.F.values, sine_nl))
        quotient = (e_lam - e) / lam
        assert quotient == pytest.approx(-2.0 * e, rel=1e-3)


class TestLineSearch:
    def test_linear_newton_exact(self, grid):
        nl = nlmod.linear(1.0)
        cfg = ls.LSConfig()
        pair = ls.initialize(small_init(grid), StatePair.zeros(grid), nl, grid, cfg)
        d = ls.descent_pair(pair, nl, cfg)
        lam, e_new = ls.line_search(pair, nl, d, cfg.m)
        assert lam == 1.0
        assert e_new <= 1e-20

    def test_zero_direction_tie_breaks_to_one(self, grid, sine_nl):
        pair = rough_pair(grid, 12)
        zero_dir = ls.DescentPair(SpaceTimeField.zeros(grid), SpaceTimeField.zeros(grid), 0, 0.0)
        lam, e_new = ls.line_search(pair, sine_nl, zero_dir, 2.0)
        assert lam == 1.0
        assert e_new == pytest.approx(ls.error_functional(pair, sine_nl))

    def test_never_worse_than_lambda_one(self, grid, sine_nl):
        pair = rough_pair(grid, 13)
        d = ls.descent_pair(pair, sine_nl, ls.LSConfig())
        lam, e_new = ls.line_search(pair, sine_nl, d, 2.0)
        e_at_1 = ls._e_of_raw(grid, ls._residual_raw(
            grid, pair.y.values - d.Y.values, pair.f.values - d.F.values, sine_nl))
        assert e_new <= e_at_1 * (1 + 1e-9)
        assert 0.0 < lam <= 2.0

    def test_model_bound_s1(self, grid, sine_nl):
        # E(lambda) <= E(|1-lam| + lam^2 c sqrt(E))^2 with c fitted at lambda=1
        pair = rough_pair(grid, 14)
        e = ls.error_functional(pair, sine_nl)
        d = ls.descent_pair(pair, sine_nl, ls.LSConfig())
        lams = np.unique(np.concatenate([np.geomspace(2e-3, 2.0, 25), [1.0]]))
        evals = np.array([ls._e_of_raw(grid, ls._residual_raw(
            grid, pair.y.values - l * d.Y.values, pair.f.values - l * d.F.values, sine_nl))
            for l in lams])
        e1 = evals[np.searchsorted(lams, 1.0)]
        c_fit = math.sqrt(e1) / e
        bound = e * (np.abs(1 - lams) + lams ** 2 * c_fit * math.sqrt(e)) ** 2
        assert np.sum(evals > bound * (1 + 1e-9)) == 0

    def test_model_bound_s_half(self, grid):
        nl = nlmod.sqrtcap(1.0)
        pair = rough_pair(grid, 15, amplitude=0.8)
        e = ls.error_functional(pair, nl)
        d = ls.descent_pair(pair, nl, ls.LSConfig())
        s = 0.5
        lams = np.unique(np.concatenate([np.geomspace(2e-3, 2.0, 25), [1.0]]))
        evals = np.array([ls._e_of_raw(grid, ls._residual_raw(
            grid, pair.y.values - l * d.Y.values, pair.f.values - l * d.F.values, nl))
            for l in lams])
        e1 = evals[np.searchsorted(lams, 1.0)]
        c_fit = math.sqrt(e1) / e ** ((1 + s) / 2)
        bound = e * (np.abs(1 - lams) + lams ** (1 + s) * c_fit * e ** (s / 2)) ** 2
        assert np.sum(evals > bound * (1 + 1e-9)) == 0


class TestSolve:
    def test_zero_g_converges_at_k0(self, grid):
        pair, records = ls.solve(small_init(grid), StatePair.zeros(grid), nlmod.zero(), grid)
        assert records == []
        assert ls.error_functional(pair, nlmod.zero()) <= 1e-24

    def test_linear_one_step(self, grid):
        nl = nlmod.linear(1.0)
        pair, records = ls.solve(small_init(grid), StatePair.zeros(grid), nl, grid)
        assert len(records) == 1
        assert records[0].lambda_ == 1.0
        assert ls.error_functional(pair, nl) <= ls.LSConfig().effective_E_tol

    def test_sine_run_monotone_lambda_to_one(self, grid, sine_nl):
        pair, records = ls.solve(small_init(grid), StatePair.zeros(grid), sine_nl, grid)
        es = [r.E for r in records] + [ls.error_functional(pair, sine_nl)]
        assert all(es[i + 1] <= es[i] + 1e-14 for i in range(len(es) - 1))
        assert es[-1] <= 1e-10
        assert abs(records[-1].lambda_ - 1.0) <= 0.1
        assert pair.terminal_miss <= 1e-5

    def test_initial_data_pinned_exactly(self, grid, sine_nl):
        init = small_init(grid)
        cfg = ls.LSConfig()
        start = ls.initialize(init, StatePair.zeros(grid), sine_nl, grid, cfg)
        pair, records = ls.solve(init, StatePair.zeros(grid), sine_nl, grid, cfg)
        # additive updates never touch the first two time levels
        assert np.array_equal(pair.y.values[0], start.y.values[0])
        assert np.array_equal(pair.y.values[1], start.y.values[1])
        assert np.array_equal(pair.y.values[0], init.pos)

    def test_admissibility_accumulation(self, grid, sine_nl):
        cfg = ls.LSConfig()
        init = small_init(grid)
        pair, records = ls.solve(init, StatePair.zeros(grid), sine_nl, grid, cfg)
        scale = 1.0 + v_norm(init)
        k = len(records)
        assert pair.terminal_miss <= (k + 1) * 10.0 * cfg.inner_tol * scale
        assert pair.admissible

    def test_affine_star_initialization(self, grid):
        # affine linearization at 0 is exact for linear g: converges at k=0
        nl = nlmod.linear(1.0)
        cfg = ls.LSConfig(init_mode="affine_star")
        pair, records = ls.solve(small_init(grid), StatePair.zeros(grid), nl, grid, cfg)
        assert records == []
        assert ls.error_functional(pair, nl) <= 1e-20

    def test_stagnation_guard(self, grid, sine_nl):
        cfg = ls.LSConfig(forced_lambda=1e-9, max_outer=20)
        with pytest.raises(ls.Stagnation) as exc_info:
            ls.solve(small_init(grid), StatePair.zeros(grid), sine_nl, grid, cfg)
        assert len(exc_info.value.records) >= cfg.stagnation_window

    def test_blowup_guard(self, grid, sine_nl):
        cfg = ls.LSConfig(blowup_guard=1e-9)
        with pytest.raises(ls.BlowUp):
            ls.solve(small_init(grid), StatePair.zeros(grid), sine_nl, grid, cfg)

    def test_forced_lambda_skips_line_search(self, grid, sine_nl):
        cfg = ls.LSConfig(forced_lambda=1.0)
        pair, records = ls.solve(small_init(grid), StatePair.zeros(grid), sine_nl, grid, cfg)
        assert all(r.lambda_ == 1.0 for r in records)
        assert ls.error_functional(pair, sine_nl) <= cfg.effective_E_tol

    def test_descent_failure_when_inner_cap_too_small(self, grid, sine_nl):
        cfg = ls.LSConfig(inner_max_iter=2, init_mode="user")
        start = rough_pair(grid, 77)
        with pytest.raises(ls.DescentFailure) as exc_info:
            ls.solve(start.init, start.target, sine_nl, grid, cfg, user_pair=start)
        assert exc_info.value.k == 0


@pytest.fixture(scope="module")
def hard_run():
    """Strong curvature: several damped steps, then the quadratic tail."""
    g = Grid.make(nx=100, T=1.0, omega=(0.2, 0.8))
    nl = nlmod.sine(1.0, 100.0)
    init = StatePair(g, 3.0 * np.sin(np.pi * g.x), np.zeros(g.nx))
    cfg = ls.LSConfig(max_outer=30, inner_max_iter=4000)
    pair, records = ls.solve(init, StatePair.zeros(g), nl, g, cfg)
    return nl, pair, records


class TestDampedRegime:

    def test_multi_iteration_with_damping(self, hard_run):
        nl, pair, records = hard_run
        assert len(records) >= 3
        assert records[0].lambda_ < 0.95
        assert abs(records[-1].lambda_ - 1.0) <= 0.05

    def test_record_invariants(self, hard_run):
        nl, pair, records = hard_run
        m = ls.LSConfig().m
        assert all(r.E >= 0.0 for r in records)
        assert all(0.0 < r.lambda_ <= m for r in records)
        assert all(r.descent_norm > 0.0 for r in records)

    def test_rate_report(self, hard_run):
        nl, pair, records = hard_run
        rep = ls.rate_diagnostics(records, s=1.0, e_final=ls.error_functional(pair, nl))
        assert rep.k0 is not None and rep.k0 <= 5
        assert rep.orders[-1][1] >= 1.5
        assert rep.cumulative_step_norms == sorted(rep.cumulative_step_norms)
        # the lambda trajectory climbs to 1
        assert rep.lambdas[-1] == pytest.approx(1.0, abs=0.05)


class TestRateDiagnostics:
    def test_geometric_sequence_order_one(self):
        records = [ls.IterateRecord(k=k, E=10.0 ** (-k - 1), lambda_=1.0, descent_norm=1.0,
                                    terminal_miss=0.0, wallclock=0.0) for k in range(6)]
        rep = ls.rate_diagnostics(records, s=1.0, e_final=1e-7)
        for _, order in rep.orders:
            assert order == pytest.approx(1.0, abs=1e-12)

    def test_squaring_sequence_order_two(self):
        records = [ls.IterateRecord(k=k, E=10.0 ** (-(2.0 ** k)), lambda_=1.0, descent_norm=1.0,
                                    terminal_miss=0.0, wallclock=0.0) for k in range(6)]
        rep = ls.rate_diagnostics(records, s=1.0, e_final=10.0 ** (-(2.0 ** 6)))
        for _, order in rep.orders:
            assert order == pytest.approx(2.0, abs=1e-12)

    def test_insufficient_data(self):
        records = [ls.IterateRecord(k=0, E=1.0, lambda_=1.0, descent_norm=1.0,
                                    terminal_miss=0.0, wallclock=0.0)]
        with pytest.raises(ls.InsufficientData):
            ls.rate_diagnostics(records)
