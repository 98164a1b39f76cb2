import math

import numpy as np
import pytest

from conftest import make_kset
from coagfrag.config import build_problem
from coagfrag.diagnostics import (
    apriori_bounds,
    higher_moment_trace,
    moment,
    perturbation_closeness,
    truncation_study,
    weak_residual,
    weighted_l1_distance,
)
from coagfrag.errors import ConfigurationError, DiagnosticsError
from coagfrag.grid import build_grid, grid_from_edges
from coagfrag.integrator import TimeControl, integrate
from coagfrag.operators import NumberDensity, build_tables


def exponential_density(grid, scale=1.0):
    a, b = grid.edges[:-1], grid.edges[1:]
    return NumberDensity(grid, (np.exp(-a / scale) - np.exp(-b / scale)) / grid.widths)


class TestMoment:
    def test_zero_density(self):
        grid = build_grid(1e-3, 1.0, 5)
        nd = NumberDensity(grid, np.zeros(5))
        for r in (0.0, 1.0, 2.5):
            assert moment(nd, r) == 0.0

    def test_single_cell(self):
        grid = grid_from_edges([1.0, 2.0])
        nd = NumberDensity(grid, np.array([1.0]))
        assert moment(nd, 0.0) == 1.0
        assert moment(nd, 1.0) == 1.5

    def test_exponential_unit_moments(self):
        grid = build_grid(1e-4, 50.0, 200)
        nd = exponential_density(grid)
        assert moment(nd, 0.0) == pytest.approx(1.0, abs=2e-3)
        assert moment(nd, 1.0) == pytest.approx(1.0, abs=2e-3)

    def test_linear_in_density(self):
        grid = build_grid(1e-2, 5.0, 12)
        rng = np.random.default_rng(3)
        a = rng.uniform(0, 2, 12)
        b = rng.uniform(0, 2, 12)
        for r in (0.0, 1.0, 1.7):
            lhs = moment(NumberDensity(grid, a + b), r)
            rhs_ = moment(NumberDensity(grid, a), r) + moment(NumberDensity(grid, b), r)
            assert lhs == pytest.approx(rhs_, rel=1e-12)


class TestAprioriBounds:
    def _density_with_unit_norms(self):
        # two cells tuned so that both the count and the mass equal 1
        grid = grid_from_edges([0.5, 1.5, 4.5])
        return NumberDensity(grid, np.array([1.0, 0.0]))

    def test_collisionless_reduces_to_initial_norms(self):
        nd = self._density_with_unit_norms()
        b = apriori_bounds(nd, make_kset(k2=0.0, nu=0.0, n=4.5), T=1.0)
        assert b.V1 == pytest.approx(1.0)
        assert b.V == pytest.approx(1.0 + 2.0)

    def test_spot_value_binary_fragmentation(self):
        nd = self._density_with_unit_norms()
        b = apriori_bounds(nd, make_kset(k2=1.0, nu=0.0, n=4.5), T=1.0)
        expected = math.exp(8.0) + 0.5 * (math.exp(8.0) - 1.0)
        assert b.V1 == pytest.approx(expected, rel=1e-6)
        assert b.V1 == pytest.approx(4470.936980562592, rel=1e-6)
        assert b.V == pytest.approx(expected + 2.0, rel=1e-6)

    def test_zero_horizon(self):
        nd = self._density_with_unit_norms()
        b = apriori_bounds(nd, make_kset(k2=1.0, nu=0.0, n=4.5), T=0.0)
        assert b.V1 == pytest.approx(1.0)

    def test_overflow_reported_not_raised(self):
        nd = self._density_with_unit_norms()
        b = apriori_bounds(nd, make_kset(k2=1e3, nu=-0.9, n=4.5), T=100.0)
        assert b.overflowed
        assert math.isinf(b.V1) and math.isinf(b.V)


class TestWeakResidual:
    def test_zero_kernels_zero_residual(self):
        grid = build_grid(1e-3, 10.0, 20)
        kset = make_kset(k1=0.0, k2=0.0, n=10.0)
        g = exponential_density(grid)
        ctl = TimeControl(t_end=0.5, dt_init=0.01, dt_max=0.05)
        traj = integrate(kset, g, ctl)
        rep = weak_residual(traj, kset, [2, 10, 18])
        assert rep.max_normalized == 0.0

    def test_insufficient_snapshots(self):
        grid = build_grid(1e-3, 10.0, 20)
        kset = make_kset(n=10.0)
        g = exponential_density(grid)
        traj = integrate(kset, g, TimeControl(t_end=0.0, dt_init=1e-3))
        with pytest.raises(DiagnosticsError):
            weak_residual(traj, kset, [5])

    def test_probe_bounds_checked(self):
        grid = build_grid(1e-3, 10.0, 20)
        kset = make_kset(n=10.0)
        g = exponential_density(grid)
        traj = integrate(kset, g, TimeControl(t_end=0.1, dt_init=1e-3, dt_max=0.02))
        with pytest.raises(DiagnosticsError):
            weak_residual(traj, kset, [99])

    def test_constant_kernel_fine_run_stays_under_frozen_threshold(self, configs):
        # calibrated once on the stock pure-coagulation setup: a fine fixed
        # step keeps the normalized residual two orders below this ceiling
        grid, kset, g0, _ = build_problem(configs["pure_coagulation"])
        tables = build_tables(grid, kset)
        ctl = TimeControl(t_end=1.0, dt_init=0.01, dt_min=0.0025, dt_max=0.01, rel_tol=1e12)
        traj = integrate(kset, g0, ctl, tables=tables)
        rep = weak_residual(traj, kset, [10, 30, 50, 70, 90])
        assert rep.max_normalized <= 1e-4

    def test_second_order_in_log_density(self):
        grid = build_grid(1e-3, 10.0, 40)
        kset = make_kset(k1=1.0, k2=0.3, alpha=0.5, beta=0.5, nu=0.0, n=10.0)
        tables = build_tables(grid, kset)
        g = exponential_density(grid)
        res = []
        for h in (0.02, 0.01):
            ctl = TimeControl(t_end=0.5, dt_init=h, dt_min=h / 4, dt_max=h, rel_tol=1e12)
            traj = integrate(kset, g, ctl, tables=tables)
            res.append(weak_residual(traj, kset, [5, 15, 25, 35]).max_normalized)
        assert np.log2(res[0] / res[1]) >= 1.0

    def test_residual_scales_linearly_under_time_rescaled_amplitude(self):
        # the rate is quadratic in the density, so amplitude alpha with time
        # compressed by 1/alpha maps trajectories onto each other and the
        # (unnormalized) residual scales linearly with alpha
        grid = build_grid(1e-3, 10.0, 30)
        kset = make_kset(k1=0.8, k2=0.4, alpha=0.5, beta=0.5, nu=0.0, n=10.0)
        tables = build_tables(grid, kset)
        g = exponential_density(grid)
        probes = [5, 15, 25]

        def raw_residual(amplitude):
            h = 0.01 / amplitude
            ctl = TimeControl(
                t_end=0.5 / amplitude, dt_init=h, dt_min=h / 4, dt_max=h, rel_tol=1e12
            )
            traj = integrate(
                kset, g.with_values(amplitude * g.values), ctl, tables=tables
            )
            rep = weak_residual(traj, kset, probes)
            return float(rep.residuals.max())

        r1 = raw_residual(1.0)
        r2 = raw_residual(2.0)
        assert r2 / r1 == pytest.approx(2.0, rel=0.05)


class TestWeightedL1Distance:
    def test_identical_on_same_grid(self):
        grid = build_grid(1e-2, 8.0, 16)
        v = np.linspace(0, 1, 16)
        assert weighted_l1_distance(grid, v, grid, v, 8.0) == 0.0

    def test_known_constant_difference(self):
        grid = build_grid(1.0, 2.0, 4)
        a = np.ones(4)
        b = np.zeros(4)
        # int_1^2 (1+z) dz = 1 + 3/2
        assert weighted_l1_distance(grid, a, grid, b, 2.0) == pytest.approx(2.5, rel=1e-12)

    def test_mismatched_grids(self):
        ga = build_grid(1.0, 4.0, 4)
        gb = build_grid(1.0, 4.0, 8)
        a = np.ones(4)
        b = np.ones(8)
        assert weighted_l1_distance(ga, a, gb, b, 4.0) <= 1e-14


class TestTruncationStudy:
    def test_zero_kernels_all_distances_zero(self, configs):
        cfg = configs["mixed"].model_copy(deep=True)
        cfg.kernels.k1 = 0.0
        cfg.kernels.k2 = 0.0
        study = truncation_study(cfg, doublings=2)
        assert study.distances == [0.0, 0.0]

    def test_mixed_config_distances_strictly_decreasing(self, configs):
        study = truncation_study(configs["mixed"], doublings=3)
        d = study.distances
        assert len(d) == 3
        assert all(a > b for a, b in zip(d, d[1:]))
        assert d[-1] <= 1e-4
        assert [round(lv.n) for lv in study.levels] == [10, 20, 40, 80]

    def test_breakage_only_tiny_once_domain_covers_support(self, configs):
        # fragments never exceed their parent, so once the base domain covers
        # the (compact) initial support, enlarging it changes next to nothing
        cfg = configs["pure_breakage"].model_copy(deep=True)
        cfg.initial.kind = "gaussian_bump"
        cfg.initial.center = 1.0
        cfg.initial.width = 0.25
        cfg.initial.amplitude = 1.0
        study = truncation_study(cfg, doublings=2)
        assert all(dist <= 1e-6 for dist in study.distances)

    def test_doublings_floor(self, configs):
        with pytest.raises(ConfigurationError):
            truncation_study(configs["mixed"], doublings=0)


class TestHigherMoments:
    def test_order_one_reduces_to_mass(self):
        grid = build_grid(1e-3, 10.0, 30)
        kset = make_kset(k1=0.5, k2=0.5, alpha=0.5, beta=0.5, nu=0.0, n=10.0)
        g = exponential_density(grid)
        traj = integrate(kset, g, TimeControl(t_end=0.5, dt_init=1e-3, dt_max=0.05))
        # eta = -0.5 from alpha=beta=0.5; eps = 0.5 gives order exactly 1
        hm = higher_moment_trace(traj, eta=-0.5, eps=0.5)
        assert hm.order == 1.0
        np.testing.assert_allclose(hm.values, traj.moment_trace(1.0), rtol=1e-12)
        assert np.max(np.abs(hm.values - hm.values[0])) <= 1e-9 * hm.values[0]

    def test_zero_density_zero_trace(self):
        grid = build_grid(1e-3, 10.0, 10)
        kset = make_kset(n=10.0)
        g = NumberDensity(grid, np.zeros(10))
        traj = integrate(kset, g, TimeControl(t_end=0.2, dt_init=1e-2, dt_max=0.05))
        hm = higher_moment_trace(traj, eta=-0.5, eps=0.1)
        assert np.all(hm.values == 0.0)
        assert hm.integral == 0.0

    def test_eps_range_validated(self):
        grid = build_grid(1e-3, 10.0, 10)
        kset = make_kset(n=10.0)
        g = exponential_density(grid)
        traj = integrate(kset, g, TimeControl(t_end=0.1, dt_init=1e-2, dt_max=0.05))
        with pytest.raises(ConfigurationError):
            higher_moment_trace(traj, eta=-0.5, eps=0.6)
        with pytest.raises(ConfigurationError):
            higher_moment_trace(traj, eta=-0.5, eps=0.0)

    def test_integral_stabilizes_under_domain_doubling(self, configs):
        from coagfrag.config import build_initial_density
        from coagfrag.diagnostics import _kset_with_cut
        from coagfrag.grid import extend_grid

        cfg = configs["mixed"]
        grid, kset0, _, ctl = build_problem(cfg)
        integrals = []
        for _ in range(3):
            kset = _kset_with_cut(cfg, grid.z_max)
            g0 = build_initial_density(cfg, grid)
            traj = integrate(kset, g0, ctl)
            integrals.append(higher_moment_trace(traj, eta=kset.eta, eps=0.1).integral)
            grid = extend_grid(grid, 10)
        changes = [abs(b - a) / a for a, b in zip(integrals, integrals[1:])]
        assert all(c <= 0.05 for c in changes)


class TestPerturbation:
    def test_zero_delta_identical(self, configs):
        rep = perturbation_closeness(configs["mixed"], 0.0)
        assert np.all(rep.u == 0.0)
        assert rep.envelope_ok()

    def test_linear_response(self, configs):
        big = perturbation_closeness(configs["mixed"], 1e-2)
        small = perturbation_closeness(configs["mixed"], 5e-3)
        assert big.max_u / small.max_u == pytest.approx(2.0, rel=0.1)

    def test_exponential_envelope(self, configs):
        rep = perturbation_closeness(configs["mixed"], 1e-3)
        assert rep.envelope_ok()
        assert math.isfinite(rep.lambda_fit)

    def test_negative_delta_rejected(self, configs):
        with pytest.raises(ConfigurationError):
            perturbation_closeness(configs["mixed"], -0.1)
