"""Exact optimization over feasible distributions inside interval bounds.

A feasible distribution is any vector q with lower <= q <= upper and
sum(q) = 1.  Optimizing a linear objective w . q over that polytope is solved
exactly by a greedy fill: start every slot at its lower bound and hand out the
remaining slack in weight order (descending for max, ascending for min),
raising each slot to its upper bound before moving on.

`solve_bruteforce` enumerates candidate vertices and exists purely as an
independent test oracle for the greedy method.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError

__all__ = ["FeasibleProblem", "solve_sorted", "solve_bruteforce",
           "sorted_values_rows", "RowsSolver"]

_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class FeasibleProblem:
    lower: np.ndarray
    upper: np.ndarray
    weights: np.ndarray
    direction: str  # "min" | "max"

    def __post_init__(self):
        for name in ("lower", "upper", "weights"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        if not (self.lower.shape == self.upper.shape == self.weights.shape):
            raise ValueError("lower, upper, weights must have equal length")
        if self.direction not in ("min", "max"):
            raise ValueError(f"bad direction {self.direction!r}")
        if np.any(self.lower > self.upper + 1e-12):
            raise InfeasibleError("lower > upper in some slot")


def _check_feasible(lower, upper):
    lo_sum = float(np.sum(lower))
    hi_sum = float(np.sum(upper))
    if lo_sum > 1 + _FEAS_TOL or hi_sum < 1 - _FEAS_TOL:
        raise InfeasibleError(
            f"no distribution fits the bounds (sum lower={lo_sum!r}, "
            f"sum upper={hi_sum!r})")


def weight_order(weights, direction):
    """Greedy fill order; ties broken by ascending slot index (stable sort)."""
    weights = np.asarray(weights, dtype=float)
    if direction == "max":
        return np.argsort(-weights, kind="stable")
    return np.argsort(weights, kind="stable")


def solve_sorted(p: FeasibleProblem):
    """Exact optimum of the feasible-distribution LP via the greedy fill.

    Returns (value, dist) with lower <= dist <= upper and sum(dist) = 1.
    """
    _check_feasible(p.lower, p.upper)
    order = weight_order(p.weights, p.direction)
    dist = p.lower.copy()
    slack = 1.0 - float(np.sum(dist))
    for s in order:
        if slack <= 0:
            break
        room = p.upper[s] - p.lower[s]
        take = min(room, slack)
        dist[s] += take
        slack -= take
    return float(np.dot(p.weights, dist)), dist


class RowsSolver:
    """Greedy-fill LP values for many rows, evaluated repeatedly.

    The bounds are fixed while the weight vector changes every call (the
    interval iteration reprices the same matrix rows against fresh value
    vectors), so everything that does not depend on the weights -- the
    per-slot headroom, the per-row slack, the scratch buffer -- is computed
    once here instead of per sweep.
    """

    def __init__(self, lower, upper):
        self.lower = np.ascontiguousarray(lower, dtype=float)
        self.headroom = np.asarray(upper, dtype=float) - self.lower
        self.slack = np.maximum(0.0, 1.0 - self.lower.sum(axis=1))
        self._buf = np.empty_like(self.headroom)

    def values(self, weights, direction):
        """(rows,) optimal values of w . q over the feasible distributions."""
        weights = np.asarray(weights, dtype=float)
        order = weight_order(weights, direction)
        w = weights[order]
        # Greedy fill in weight order: slot j receives
        #   min(cumhead_j, slack) - min(cumhead_{j-1}, slack)
        # on top of its lower bound.  Abel summation turns the filled part
        # of the objective into a single matvec against the weight drops.
        np.take(self.headroom, order, axis=1, out=self._buf)
        np.cumsum(self._buf, axis=1, out=self._buf)
        np.minimum(self._buf, self.slack[:, None], out=self._buf)
        dw = np.empty_like(w)
        dw[:-1] = w[:-1] - w[1:]
        dw[-1] = w[-1]
        return self.lower @ weights + self._buf @ dw


def sorted_values_rows(lower, upper, weights, direction):
    """Greedy-fill LP values for many rows sharing one weight vector.

    lower/upper are (rows, slots); weights is (slots,).  The permutation is
    computed once and shared across rows.  Returns the (rows,) value vector.
    """
    return RowsSolver(lower, upper).values(weights, direction)


def solve_bruteforce(p: FeasibleProblem):
    """Vertex-enumeration oracle; exponential, restricted to <= 12 slots."""
    n = len(p.lower)
    if n > 12:
        raise ValueError("brute force limited to 12 slots")
    _check_feasible(p.lower, p.upper)
    best_val = None
    best_dist = None
    sign = 1.0 if p.direction == "max" else -1.0
    others = np.arange(n)
    for s in range(n):
        rest = others[others != s]
        for bits in range(1 << (n - 1)):
            q = p.lower.copy()
            for j, slot in enumerate(rest):
                if bits >> j & 1:
                    q[slot] = p.upper[slot]
            resid = 1.0 - (np.sum(q) - q[s])
            if resid < p.lower[s] - _FEAS_TOL or resid > p.upper[s] + _FEAS_TOL:
                continue
            q[s] = min(max(resid, p.lower[s]), p.upper[s])
            val = float(np.dot(p.weights, q))
            if best_val is None or sign * val > sign * best_val:
                best_val = val
                best_dist = q
    if best_val is None:
        raise InfeasibleError("no vertex of the bound polytope sums to 1")
    return best_val, best_dist
