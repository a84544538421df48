import numpy as np
import pytest

from impact.errors import InfeasibleError
from impact.feasible import (FeasibleProblem, solve_bruteforce, solve_sorted,
                             sorted_values_rows)


def random_problem(rng, n):
    lower = rng.uniform(0, 0.3, size=n)
    upper = lower + rng.uniform(0, 0.5, size=n)
    # rescale so a distribution fits strictly inside the bounds
    s_lo, s_hi = lower.sum(), upper.sum()
    if s_lo > 0.95:
        lower *= 0.9 / s_lo
    if upper.sum() < 1.05:
        upper += (1.1 - upper.sum()) / n
    weights = rng.uniform(-1, 2, size=n)
    direction = "max" if rng.random() < 0.5 else "min"
    return FeasibleProblem(lower, upper, weights, direction)


class TestSolveSorted:
    def test_simple_max(self):
        p = FeasibleProblem(lower=[0.1, 0.1, 0.1], upper=[0.8, 0.8, 0.8],
                            weights=[1.0, 2.0, 3.0], direction="max")
        val, dist = solve_sorted(p)
        assert np.allclose(dist, [0.1, 0.1, 0.8])
        assert val == pytest.approx(0.1 + 0.2 + 2.4)

    def test_simple_min(self):
        p = FeasibleProblem(lower=[0.1, 0.1, 0.1], upper=[0.8, 0.8, 0.8],
                            weights=[1.0, 2.0, 3.0], direction="min")
        val, dist = solve_sorted(p)
        assert np.allclose(dist, [0.8, 0.1, 0.1])

    def test_distribution_is_valid(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            p = random_problem(rng, 6)
            _, dist = solve_sorted(p)
            assert dist.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(dist >= p.lower - 1e-12)
            assert np.all(dist <= p.upper + 1e-12)

    def test_infeasible_rejected(self):
        with pytest.raises(InfeasibleError):
            solve_sorted(FeasibleProblem([0.6, 0.6], [0.7, 0.7],
                                         [1.0, 1.0], "max"))
        with pytest.raises(InfeasibleError):
            solve_sorted(FeasibleProblem([0.0, 0.0], [0.3, 0.3],
                                         [1.0, 1.0], "max"))

    def test_lower_above_upper_rejected(self):
        with pytest.raises(InfeasibleError):
            FeasibleProblem([0.5], [0.4], [1.0], "max")

    def test_tie_breaks_toward_lowest_slot(self):
        p = FeasibleProblem(lower=[0.0, 0.0], upper=[1.0, 1.0],
                            weights=[1.0, 1.0], direction="max")
        _, dist = solve_sorted(p)
        assert np.allclose(dist, [1.0, 0.0])


class TestAgainstBruteForce:
    def test_thousand_random_instances(self):
        rng = np.random.default_rng(2024)
        for trial in range(1000):
            n = int(rng.integers(2, 9))
            p = random_problem(rng, n)
            val_sorted, _ = solve_sorted(p)
            val_brute, _ = solve_bruteforce(p)
            assert abs(val_sorted - val_brute) <= 1e-9, \
                f"trial {trial}: {val_sorted} vs {val_brute}"

    def test_bruteforce_size_cap(self):
        p = FeasibleProblem(np.zeros(13), np.ones(13), np.ones(13), "max")
        with pytest.raises(ValueError):
            solve_bruteforce(p)


class TestVectorizedRows:
    def test_matches_scalar_solver(self):
        rng = np.random.default_rng(5)
        n = 7
        weights = rng.uniform(-1, 2, size=n)
        lower = np.empty((40, n))
        upper = np.empty((40, n))
        for r in range(40):
            p = random_problem(rng, n)
            lower[r], upper[r] = p.lower, p.upper
        for direction in ("min", "max"):
            vals = sorted_values_rows(lower, upper, weights, direction)
            for r in range(40):
                ref, _ = solve_sorted(FeasibleProblem(lower[r], upper[r],
                                                      weights, direction))
                assert vals[r] == pytest.approx(ref, abs=1e-12)

    def test_degenerate_equal_bounds(self):
        dist = np.array([[0.25, 0.25, 0.5]])
        weights = np.array([1.0, 2.0, 3.0])
        for direction in ("min", "max"):
            vals = sorted_values_rows(dist, dist, weights, direction)
            assert vals[0] == pytest.approx(dist[0] @ weights, abs=1e-15)
