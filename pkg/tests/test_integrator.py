import numpy as np
import pytest

from conftest import make_kset
from coagfrag.config import build_problem
from coagfrag.errors import ConfigurationError, StiffnessError
from coagfrag.grid import build_grid
from coagfrag.integrator import TimeControl, integrate, step, weighted_norm
from coagfrag.operators import NumberDensity, build_tables


def exponential_density(grid, scale=1.0):
    a, b = grid.edges[:-1], grid.edges[1:]
    return NumberDensity(grid, (np.exp(-a / scale) - np.exp(-b / scale)) / grid.widths)


def count_of(grid, values):
    return float(np.sum(values * grid.widths))


def mass_of(grid, values):
    return float(np.sum(grid.pivots * values * grid.widths))


class TestTimeControl:
    def test_dt_ordering_enforced(self):
        with pytest.raises(ConfigurationError, match="dt ordering"):
            TimeControl(t_end=1.0, dt_init=1e-3, dt_min=1e-2, dt_max=1.0)

    def test_snapshot_outside_horizon_rejected(self):
        with pytest.raises(ConfigurationError, match="snapshot_times"):
            TimeControl(t_end=1.0, dt_init=1e-3, snapshot_times=(2.0,))

    def test_safety_range(self):
        with pytest.raises(ConfigurationError, match="safety"):
            TimeControl(t_end=1.0, dt_init=1e-3, safety=1.0)


class TestStep:
    def test_zero_kernels_identity(self):
        grid = build_grid(1e-3, 10.0, 30)
        kset = make_kset(k1=0.0, k2=0.0, n=10.0)
        g = exponential_density(grid)
        out = step(kset, g, 0.25)
        assert np.array_equal(out.values, g.values)
        assert out.time == 0.25

    def test_nonpositive_dt_rejected(self):
        grid = build_grid(1e-3, 10.0, 10)
        g = exponential_density(grid)
        with pytest.raises(ConfigurationError, match="dt"):
            step(make_kset(n=10.0), g, 0.0)

    def test_mass_preserved_per_step(self):
        grid = build_grid(1e-3, 10.0, 60)
        kset = make_kset(k1=1.0, omega=0.3, k2=0.6, alpha=0.4, beta=0.6, nu=-0.5, n=10.0)
        g = exponential_density(grid)
        out = step(kset, g, 0.01)
        m_in = mass_of(grid, g.values)
        assert abs(mass_of(grid, out.values) - m_in) <= 1e-12 * m_in

    def test_count_matches_moment_law_to_fifth_order(self):
        # constant merge rate: the count satisfies dM0/dt = -M0^2/2 exactly
        # at the discrete level (away from the upper boundary), so a single
        # step must match the closed form with O(dt^5) local error
        grid = build_grid(1e-4, 50.0, 80)
        kset = make_kset(k1=1.0, omega=0.0, k2=0.0, n=50.0)
        tables = build_tables(grid, kset)
        g = exponential_density(grid)
        m0 = count_of(grid, g.values)

        def local_error(dt):
            out = step(kset, g, dt, tables)
            exact = m0 / (1.0 + 0.5 * m0 * dt)
            return abs(count_of(grid, out.values) - exact)

        e1, e2 = local_error(0.2), local_error(0.1)
        order = np.log2(e1 / e2)
        assert order > 4.3


class TestIntegrate:
    def test_zero_horizon_returns_initial_only(self):
        grid = build_grid(1e-3, 10.0, 20)
        g = exponential_density(grid)
        ctl = TimeControl(t_end=0.0, dt_init=1e-3)
        traj = integrate(make_kset(n=10.0), g, ctl)
        assert traj.times.size == 1
        assert np.array_equal(traj.densities[0], g.values)

    def test_constant_coagulation_count_ratio(self):
        grid = build_grid(1e-4, 50.0, 100)
        kset = make_kset(k1=1.0, omega=0.0, k2=0.0, n=50.0)
        g = exponential_density(grid)
        ctl = TimeControl(t_end=1.0, dt_init=1e-3, dt_max=0.05)
        traj = integrate(kset, g, ctl)
        m0 = traj.moment_trace(0.0)
        assert m0[-1] / m0[0] == pytest.approx(2.0 / 3.0, abs=1e-3)

    def test_pure_breakage_mass_and_count(self):
        grid = build_grid(1e-4, 10.0, 80)
        kset = make_kset(k1=0.0, k2=1.0, alpha=0.5, beta=0.5, nu=0.0, n=10.0)
        g = exponential_density(grid)
        ctl = TimeControl(t_end=1.0, dt_init=1e-3, dt_max=0.05)
        traj = integrate(kset, g, ctl)
        m1 = traj.moment_trace(1.0)
        assert np.max(np.abs(m1 - m1[0])) <= 1e-9 * m1[0]
        m0 = traj.moment_trace(0.0)
        assert np.all(np.diff(m0) >= 0.0)

    def test_snapshots_hit_exactly(self):
        grid = build_grid(1e-3, 10.0, 30)
        kset = make_kset(k1=1.0, k2=0.3, n=10.0)
        g = exponential_density(grid)
        ctl = TimeControl(
            t_end=0.5, dt_init=1e-3, dt_max=0.03, snapshot_times=(0.0, 0.17, 0.34, 0.5)
        )
        traj = integrate(kset, g, ctl)
        assert set(traj.snapshots) == {0.0, 0.17, 0.34, 0.5}
        for t_req in (0.17, 0.34, 0.5):
            assert np.any(np.abs(traj.times - t_req) < 1e-12)

    def test_self_convergence_at_least_fourth_order(self):
        grid = build_grid(1e-3, 20.0, 40)
        kset = make_kset(k1=1.0, omega=0.2, k2=0.5, alpha=0.4, beta=0.6, nu=-0.5, n=20.0)
        tables = build_tables(grid, kset)
        g = exponential_density(grid)

        def final_at(h):
            ctl = TimeControl(t_end=0.5, dt_init=h, dt_min=h / 4, dt_max=h, rel_tol=1e12)
            return integrate(kset, g, ctl, tables=tables).final.values

        ref = final_at(0.00625)
        d1 = weighted_norm(grid, final_at(0.05) - ref)
        d2 = weighted_norm(grid, final_at(0.025) - ref)
        order = np.log2(d1 / d2)
        assert order >= 3.8  # fourth order up to reference contamination

    def test_moment_traces_logged_every_accepted_step(self):
        grid = build_grid(1e-3, 10.0, 20)
        kset = make_kset(k1=0.5, k2=0.2, n=10.0)
        g = exponential_density(grid)
        ctl = TimeControl(t_end=0.3, dt_init=1e-3, dt_max=0.05)
        traj = integrate(kset, g, ctl, moment_orders=(1.5,))
        accepted = [r for r in traj.step_log if r.accepted]
        assert traj.times.size == len(accepted) + 1
        assert traj.moments.shape == (traj.times.size, 4)
        assert 1.5 in traj.moment_orders
        assert np.all(np.diff(traj.times) > 0)

    def test_mass_residual_trace_tiny(self):
        grid = build_grid(1e-3, 10.0, 40)
        kset = make_kset(k1=0.8, omega=0.1, k2=0.9, alpha=0.3, beta=0.7, nu=-0.25, n=10.0)
        g = exponential_density(grid)
        ctl = TimeControl(t_end=1.0, dt_init=1e-3, dt_max=0.05)
        traj = integrate(kset, g, ctl)
        assert np.max(np.abs(traj.mass_residuals)) <= 1e-12

    def test_stiffness_error_when_dt_floor_hit(self):
        grid = build_grid(1e-3, 10.0, 20)
        kset = make_kset(k1=50.0, k2=0.0, n=10.0)
        g = exponential_density(grid)
        # absurd accuracy demand with no room to shrink the step
        ctl = TimeControl(t_end=1.0, dt_init=0.05, dt_min=0.04, dt_max=0.05, rel_tol=1e-16)
        with pytest.raises(StiffnessError):
            integrate(kset, g, ctl)

    def test_blow_up_reports_time_and_step(self):
        from coagfrag.errors import BlowUpError

        grid = build_grid(1e-3, 10.0, 10)
        kset = make_kset(k1=1.0, k2=0.0, n=10.0)
        g = NumberDensity(grid, np.full(10, 1e200), time=0.5)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(BlowUpError) as exc_info:
                step(kset, g, 1.0)
        assert exc_info.value.t == 0.5
        assert exc_info.value.dt == 1.0

    def test_controller_recovers_through_rejections(self):
        grid = build_grid(1e-3, 10.0, 30)
        kset = make_kset(k1=1.0, k2=0.5, n=10.0)
        g = exponential_density(grid)
        # start far too large; the controller must halve its way down
        ctl = TimeControl(t_end=0.2, dt_init=0.2, dt_min=1e-8, dt_max=0.2, rel_tol=1e-10)
        traj = integrate(kset, g, ctl)
        assert any(not r.accepted for r in traj.step_log)
        assert traj.times[-1] == pytest.approx(0.2, abs=1e-12)
        assert np.max(np.abs(traj.mass_residuals)) <= 1e-11

    def test_a_priori_norm_containment_along_run(self, configs):
        from coagfrag.diagnostics import apriori_bounds, check_apriori_containment

        grid, kset, g0, ctl = build_problem(configs["mixed"])
        traj = integrate(kset, g0, ctl)
        bounds = apriori_bounds(g0, kset, ctl.t_end)
        ok, peak = check_apriori_containment(traj, bounds)
        assert ok
        assert peak < bounds.V
