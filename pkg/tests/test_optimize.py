import numpy as np
import pytest

from impact.errors import AbstractionError
from impact.grid import Cell
from impact.optimize import (nelder_mead_batch, optimize_over_cell,
                             start_points)


def cell1d(lo, hi):
    return Cell(lo=np.array([lo]), hi=np.array([hi]))


class TestStartPoints:
    def test_center_first(self):
        c = Cell(lo=np.array([0.0, 0.0]), hi=np.array([2.0, 4.0]))
        pts = start_points(c, 5)
        assert np.allclose(pts[0], [1.0, 2.0])
        assert len(pts) == 5
        # faces along each dimension follow the center
        assert np.allclose(pts[1], [0.0, 2.0])
        assert np.allclose(pts[2], [2.0, 2.0])

    def test_extra_starts_stay_in_box(self):
        c = Cell(lo=np.array([-1.0]), hi=np.array([1.0]))
        pts = start_points(c, 9)
        assert np.all(pts >= -1.0) and np.all(pts <= 1.0)

    def test_deterministic(self):
        c = Cell(lo=np.array([0.0]), hi=np.array([1.0]))
        assert np.array_equal(start_points(c, 4), start_points(c, 4))


class TestScalarWrapper:
    def test_quadratic_interior_minimum(self):
        val = optimize_over_cell(lambda x: (x[0] - 0.3) ** 2,
                                 cell1d(-1, 1), "min")
        assert val == pytest.approx(0.0, abs=1e-7)

    def test_max_at_boundary(self):
        val = optimize_over_cell(lambda x: x[0], cell1d(-2, 5), "max")
        assert val == pytest.approx(5.0, abs=1e-8)

    def test_never_leaves_box(self):
        seen = []

        def f(x):
            seen.append(x.copy())
            return np.sin(3 * x[0])

        optimize_over_cell(f, cell1d(0.0, 1.0), "min")
        pts = np.array(seen)
        assert np.all(pts >= 0.0) and np.all(pts <= 1.0)

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            optimize_over_cell(lambda x: 0.0, cell1d(0, 1), "argmax")

    def test_nonfinite_objective_raises(self):
        with pytest.raises(AbstractionError):
            optimize_over_cell(lambda x: np.nan, cell1d(0, 1), "min")

    def test_degenerate_cell(self):
        val = optimize_over_cell(lambda x: x[0] ** 2, cell1d(2.0, 2.0), "min")
        assert val == 4.0


class TestGridScanOracle:
    def test_matches_dense_scan_on_smooth_1d(self):
        # smooth unimodal-per-window functions of the kind the abstraction
        # optimizes (Gaussian interval probabilities of an affine mean)
        rng = np.random.default_rng(31)
        from scipy.special import ndtr
        for trial in range(100):
            a = rng.uniform(-2, 2)
            b = rng.uniform(-3, 3)
            lo_c = rng.uniform(-2, 2)
            hi_c = lo_c + rng.uniform(0.1, 2.0)
            d_lo = rng.uniform(-4, 4)
            d_hi = d_lo + rng.uniform(0.2, 2.0)
            sigma = rng.uniform(0.3, 2.0)

            def f(x, a=a, b=b, d_lo=d_lo, d_hi=d_hi, sigma=sigma):
                m = a * x[0] + b
                return float(ndtr((d_hi - m) / sigma)
                             - ndtr((d_lo - m) / sigma))

            xs = np.linspace(lo_c, hi_c, 1001)
            dense = np.array([f([x]) for x in xs])
            cell = cell1d(lo_c, hi_c)
            assert optimize_over_cell(f, cell, "min") == \
                pytest.approx(dense.min(), abs=1e-6), f"trial {trial}"
            assert optimize_over_cell(f, cell, "max") == \
                pytest.approx(dense.max(), abs=1e-6), f"trial {trial}"


class TestBatch:
    def test_independent_instances_in_lockstep(self):
        # instance i minimizes (x - t_i)^2 with its own target
        targets = np.linspace(-0.8, 0.8, 5)

        def obj(points, rows):
            return (points[:, 0] - targets[rows]) ** 2

        starts = np.zeros((5, 1))
        vals, pts = nelder_mead_batch(obj, np.array([-1.0]), np.array([1.0]),
                                      starts, max_evals=200, tol=1e-12)
        assert np.allclose(vals, 0.0, atol=1e-9)
        assert np.allclose(pts[:, 0], targets, atol=1e-4)

    def test_2d_rosenbrock_like(self):
        def obj(points, rows):
            x, y = points[:, 0], points[:, 1]
            return (x - 0.5) ** 2 + 10 * (y - x ** 2) ** 2

        starts = start_points(Cell(lo=np.zeros(2), hi=np.ones(2)), 5)
        vals, _ = nelder_mead_batch(obj, np.zeros(2), np.ones(2), starts,
                                    max_evals=800, tol=1e-12)
        assert vals.min() == pytest.approx(0.0, abs=1e-6)

    def test_eval_budget_respected(self):
        calls = {"n": 0}

        def obj(points, rows):
            calls["n"] += len(points)
            return points[:, 0] ** 2

        nelder_mead_batch(obj, np.array([-1.0]), np.array([1.0]),
                          np.array([[0.7]]), max_evals=30, tol=0.0)
        assert calls["n"] <= 40  # budget plus one trailing iteration
