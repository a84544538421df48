import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impact.errors import GridError
from impact.expr import parse_predicate
from impact.grid import (build_space, cell_of, domain_box, label_states,
                         quantize, rep_point)


def space1d(lb=0.0, ub=10.0, eta=1.0):
    return build_space([lb], [ub], [eta])


class TestBuildSpace:
    def test_counts_inclusive_endpoints(self):
        sp = build_space([-10, -10], [10, 10], [1, 1])
        assert list(sp.counts) == [21, 21]
        assert sp.total == 441

    def test_degenerate_single_point(self):
        sp = build_space([0.0], [0.0], [1.0])
        assert sp.total == 1
        assert rep_point(sp, 0)[0] == 0.0

    def test_misfit_eta_rejected(self):
        with pytest.raises(GridError):
            build_space([0.0], [1.0], [0.3])

    def test_negative_eta_rejected(self):
        with pytest.raises(GridError):
            build_space([0.0], [1.0], [-0.5])

    def test_ub_below_lb_rejected(self):
        with pytest.raises(GridError):
            build_space([1.0], [0.0], [0.5])

    def test_benchmark_cardinalities(self):
        # these mirror the shipped benchmark configs
        cases = [
            (([-10, -10], [10, 10], [1, 1]), 441),
            (([-10, -10], [10, 10], [0.5, 0.5]), 1681),
            (([-1, -1], [1, 1], [0.2, 0.2]), 121),
            (([-1, -1], [1, 1], [0.1, 0.1]), 441),
            (([-0.5], [0.5], [0.1]), 11),
            (([-5, -5, -3.4], [5, 5, 3.4], [0.5, 0.5, 0.4]), 7938),
            (([-1, -0.4], [4, 0.4], [1, 0.2]), 30),
            (([19] * 3, [21] * 3, [0.1] * 3), 9261),
            (([19] * 5, [21] * 5, [0.4] * 5), 7776),
            (([19, 19, 30, 30], [21, 21, 36, 36], [0.5, 0.5, 1, 1]), 1225),
            (([17], [20], [1.0]), 4),
            (([-0.5] * 7, [0.5] * 7, [0.05, 0.05, 0.5, 0.5, 0.5, 0.5, 0.5]),
             107163),
            (([-0.5] * 14, [0.5] * 14, [1.0] * 14), 16384),
        ]
        for (lb, ub, eta), total in cases:
            assert build_space(lb, ub, eta).total == total


class TestIndexing:
    def test_row_major_dim0_slowest(self):
        sp = build_space([0, 0], [1, 2], [1, 1])  # counts 2 x 3
        pts = [rep_point(sp, i) for i in range(sp.total)]
        assert np.allclose(pts[0], [0, 0])
        assert np.allclose(pts[1], [0, 1])
        assert np.allclose(pts[3], [1, 0])

    def test_rep_points_matches_rep_point(self):
        sp = build_space([-1, 0], [1, 1], [0.5, 0.5])
        all_pts = sp.rep_points()
        for i in range(sp.total):
            assert np.allclose(all_pts[i], rep_point(sp, i))

    def test_index_out_of_range(self):
        sp = space1d()
        with pytest.raises(GridError):
            rep_point(sp, sp.total)

    def test_cell_halfwidth(self):
        sp = space1d(eta=2.0, ub=10.0)
        c = cell_of(sp, 1)
        assert np.allclose(c.lo, [1.0])
        assert np.allclose(c.hi, [3.0])

    def test_domain_box_extends_half_pitch(self):
        sp = build_space([0, 0], [4, 4], [2, 2])
        box = domain_box(sp)
        assert np.allclose(box.lo, [-1, -1])
        assert np.allclose(box.hi, [5, 5])


class TestQuantize:
    def test_round_trip_rep_points(self):
        sp = build_space([-2, 1], [2, 3], [0.5, 0.25])
        for i in range(0, sp.total, 7):
            assert quantize(sp, rep_point(sp, i)) == i

    def test_tie_goes_to_lower_index(self):
        sp = space1d(0, 10, 1)
        assert quantize(sp, [0.5]) == 0
        assert quantize(sp, [1.5]) == 1

    def test_boundary_of_covered_box(self):
        sp = space1d(0, 10, 1)
        assert quantize(sp, [-0.5]) == 0
        assert quantize(sp, [10.5]) == 10

    def test_outside_domain_rejected(self):
        sp = space1d(0, 10, 1)
        with pytest.raises(GridError):
            quantize(sp, [10.6])

    @given(st.floats(min_value=-2.2499, max_value=2.2499))
    @settings(max_examples=200, deadline=None)
    def test_quantized_point_is_nearest(self, x):
        sp = space1d(-2, 2, 0.5)
        i = quantize(sp, [x])
        dists = [abs(x - rep_point(sp, j)[0]) for j in range(sp.total)]
        assert abs(x - rep_point(sp, i)[0]) <= min(dists) + 1e-12


class TestLabels:
    def test_partition_is_disjoint_and_complete(self):
        sp = build_space([-10, -10], [10, 10], [1, 1])
        target = parse_predicate(
            "(x1 >= 5) & (x1 <= 7) & (x2 >= 5) & (x2 <= 7)", 2)
        avoid = parse_predicate(
            "(x1 >= -2) & (x1 <= 2) & (x2 >= -2) & (x2 <= 2)", 2)
        labels = label_states(sp, target, avoid)
        all_idx = np.concatenate([labels.safe, labels.target, labels.avoid])
        assert len(all_idx) == sp.total
        assert len(np.unique(all_idx)) == sp.total
        assert len(labels.target) == 9   # lattice points in [5,7]^2
        assert len(labels.avoid) == 25   # lattice points in [-2,2]^2

    def test_avoid_wins_overlap(self):
        sp = space1d(0, 4, 1)
        both = parse_predicate("x1 >= 1", 1)
        labels = label_states(sp, both, both)
        assert len(labels.target) == 0
        assert len(labels.avoid) == 4

    def test_no_predicates_all_safe(self):
        sp = space1d(0, 4, 1)
        labels = label_states(sp)
        assert len(labels.safe) == 5
