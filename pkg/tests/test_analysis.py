import io

import numpy as np
import pytest

from impulsesim.analysis import (
    fit_loglog_slope,
    run_convergence_study,
    sup_error,
    write_report_csv,
)
from impulsesim.dynamics import ImpulseSchedule, make_model, pendulum_model
from impulsesim.integrate import (
    CadlagTrajectory,
    build_grid,
    integrate_deterministic,
)

from test_integrate import constant_model, linear_model


def normal_equation_fit(xs, ys):
    """Independent OLS oracle via the closed-form normal equations."""
    xs = np.asarray(xs, float)
    ly = np.log2(np.asarray(ys, float))
    n = len(xs)
    sx, sy = xs.sum(), ly.sum()
    sxx, sxy = (xs * xs).sum(), (xs * ly).sum()
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    intercept = (sy - slope * sx) / n
    return slope, intercept


class TestSupError:
    def _traj(self, grid, values, pre=()):
        return CadlagTrajectory(grid=grid, values=np.asarray(values, float),
                                pre_reset=tuple(pre))

    def test_identical_trajectories(self):
        grid = build_grid(2.0, 2, ImpulseSchedule(1.0))
        m = pendulum_model()
        t = integrate_deterministic(m, grid, np.array([0.5, 0.5]))
        assert np.all(sup_error(t, t) == 0.0)

    def test_constant_versus_zero(self):
        grid = build_grid(1.0, 1, ImpulseSchedule(1.0))
        v = np.array([2.0, -3.0])
        a = self._traj(grid, np.tile(v, (3, 1)))
        b = self._traj(grid, np.zeros((3, 2)))
        assert np.array_equal(sup_error(a, b), np.abs(v))

    def test_left_limits_participate(self):
        # trajectories equal on all nodes but differing in a pre-reset record
        grid = build_grid(2.0, 1, ImpulseSchedule(1.0))
        vals = np.zeros((5, 1))
        a = self._traj(grid, vals, pre=[(1, np.array([0.9])), (2, np.array([0.0]))])
        b = self._traj(grid, vals, pre=[(1, np.array([0.0])), (2, np.array([0.0]))])
        assert sup_error(a, b)[0] == pytest.approx(0.9)

    def test_shift_applied(self):
        grid = build_grid(1.0, 1, ImpulseSchedule(1.0))
        a = self._traj(grid, np.full((3, 1), 5.0))
        b = self._traj(grid, np.full((3, 1), 1.0))
        shift = self._traj(grid, np.full((3, 1), 2.0))
        assert sup_error(a, b, shift=shift, shift_scale=2.0)[0] == pytest.approx(0.0)

    def test_grid_mismatch_rejected(self):
        g1 = build_grid(1.0, 1, ImpulseSchedule(1.0))
        g2 = build_grid(1.0, 2, ImpulseSchedule(1.0))
        a = self._traj(g1, np.zeros((3, 1)))
        b = self._traj(g2, np.zeros((5, 1)))
        with pytest.raises(ValueError):
            sup_error(a, b)


class TestFitLoglogSlope:
    def test_exact_quadratic(self):
        xs = np.array([-1.0, -2.0, -3.0, -4.0])
        ys = 2.0 ** (2 * xs)
        slope, _, r2 = fit_loglog_slope(xs, ys)
        assert slope == pytest.approx(2.0, abs=1e-12)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_exact_linear_with_prefactor(self):
        xs = np.array([-1.0, -2.0, -5.0])
        ys = 3.7 * 2.0**xs
        slope, intercept, _ = fit_loglog_slope(xs, ys)
        assert slope == pytest.approx(1.0, abs=1e-12)
        assert intercept == pytest.approx(np.log2(3.7), abs=1e-12)

    def test_matches_normal_equation_oracle(self):
        xs = [-1.0, -2.0, -3.0]
        ys = [0.41, 0.19, 0.11]
        slope, intercept, _ = fit_loglog_slope(xs, ys)
        os_, oi = normal_equation_fit(xs, ys)
        assert slope == pytest.approx(os_, abs=1e-12)
        assert intercept == pytest.approx(oi, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            fit_loglog_slope([1.0], [2.0])
        with pytest.raises(ValueError):
            fit_loglog_slope([1.0, 2.0], [1.0, -1.0])


class TestConvergenceStudy:
    def small_grid(self):
        return build_grid(4.0, 6, ImpulseSchedule(1.0))

    def test_linear_model_clt_error_vanishes(self):
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])
        M = np.array([[1.0, 0.0], [0.1, 1.0]])
        m = linear_model(A, M)
        sched = ImpulseSchedule(1.0)
        grid = build_grid(4.0, 6, sched)
        rep = run_convergence_study(
            m, sched, grid, np.array([0.5, 0.5]), [1, 2, 3], 4, 17, mode="clt",
        )
        assert np.all(rep.mean_clt <= 1e-9)

    def test_determinism_and_seed_sensitivity(self):
        m = pendulum_model()
        sched = ImpulseSchedule(1.0)
        grid = self.small_grid()
        x0 = np.array([0.5, 0.5])
        a = run_convergence_study(m, sched, grid, x0, [1, 2, 3], 2, 5)
        b = run_convergence_study(m, sched, grid, x0, [1, 2, 3], 2, 5)
        c = run_convergence_study(m, sched, grid, x0, [1, 2, 3], 2, 6)
        assert a.mean_lln.tobytes() == b.mean_lln.tobytes()
        assert a.mean_clt.tobytes() == b.mean_clt.tobytes()
        assert not np.array_equal(a.mean_lln, c.mean_lln)

    def test_thread_count_does_not_change_report(self):
        m = pendulum_model()
        sched = ImpulseSchedule(1.0)
        grid = self.small_grid()
        x0 = np.array([0.5, 0.5])
        reports = [
            run_convergence_study(m, sched, grid, x0, [1, 2, 3, 4], 260, 13,
                                  threads=t)
            for t in (1, 2, 8)
        ]
        for r in reports[1:]:
            assert r.mean_lln.tobytes() == reports[0].mean_lln.tobytes()
            assert r.clt_paths.tobytes() == reports[0].clt_paths.tobytes()

    def test_error_monotone_in_eps(self):
        m = pendulum_model()
        sched = ImpulseSchedule(1.0)
        rep = run_convergence_study(
            m, sched, self.small_grid(), np.array([0.5, 0.5]),
            range(1, 11), 60, 3,
        )
        assert np.all(rep.mean_lln[0] > rep.mean_lln[-1])
        assert np.all(rep.mean_clt[0] > rep.mean_clt[-1])

    def test_correction_strictly_helps_per_path(self):
        # first-order correction beats the raw deviation for eps <= 2^-2
        m = pendulum_model()
        sched = ImpulseSchedule(1.0)
        rep = run_convergence_study(
            m, sched, self.small_grid(), np.array([0.5, 0.5]),
            [2, 3, 4, 5, 6], 40, 29,
        )
        assert np.all(rep.clt_paths < rep.lln_paths)

    def test_validation(self):
        m = pendulum_model()
        sched = ImpulseSchedule(1.0)
        grid = self.small_grid()
        x0 = np.array([0.5, 0.5])
        with pytest.raises(ValueError):
            run_convergence_study(m, sched, grid, x0, [1, 2], 1, 0)
        with pytest.raises(ValueError):
            run_convergence_study(m, sched, grid, x0, [0, 1], 4, 0)
        with pytest.raises(ValueError):
            run_convergence_study(m, sched, grid, x0, [1, 2], 4, 0, mode="bad")


class TestReportCsv:
    def test_layout(self):
        m = pendulum_model()
        sched = ImpulseSchedule(1.0)
        grid = build_grid(2.0, 5, sched)
        rep = run_convergence_study(m, sched, grid, np.array([0.5, 0.5]),
                                    [1, 2, 3], 4, 1)
        buf = io.StringIO()
        write_report_csv(rep, buf)
        lines = buf.getvalue().splitlines()
        header = lines[0].split(",")
        assert header[:8] == [
            "i", "eps", "e1_lln", "e2_lln", "norm_lln",
            "e1_clt", "e2_clt", "norm_clt",
        ]
        assert len(lines) == 1 + 3 + 4  # header, data rows, footer rows
        footers = [ln.split(",")[0] for ln in lines[4:]]
        assert footers == ["slope_lln", "slope_clt", "r2_lln", "r2_clt"]
        slope_row = lines[4].split(",")
        assert float(slope_row[2]) == pytest.approx(rep.slope_lln[0])
