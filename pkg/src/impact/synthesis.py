"""Controller synthesis and verification over the interval abstraction.

Everything reduces to interval iteration of a robust Bellman operator: two
value vectors run in lockstep, one from all zeros and one from all ones, and
the sup-norm gap between them certifies convergence.  Reachability and
reach-avoid are the same dynamic program (the avoid column just carries
weight zero); safety is the complement of reaching the unsafe mass, so the
safety routines run the avoid-reach iteration and return one minus its value.

Each synthesis runs two phases.  Phase 1 optimizes the input while the
feasible distribution is resolved adversarially (min LP for pessimistic
mode) and records the policy; phase 2 freezes that policy and reruns with
the opposite LP direction, which prices the same controller against the
friendly distribution.  Together the phases bracket the true satisfaction
probability of the returned controller.

Finite horizons iterate both phases exactly K steps from the zero vector
(the all-ones iterate has no meaning over a truncated horizon).

The per-state updates are expressed as one vectorized greedy-LP sweep over
all matrix rows (see feasible.sorted_values_rows), so results are
independent of any worker count by construction.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ImpactError
from .feasible import RowsSolver

log = logging.getLogger(__name__)

__all__ = ["ValuePair", "Controller", "bellman_step", "synthesize_reach",
           "synthesize_safe", "verify", "diagnose_convergence"]

DEFAULT_EPS = 1e-6
DEFAULT_MAX_ITERATIONS = 10**6

_BRACKET_TOL = 1e-9
_MONOTONE_TOL = 1e-12


@dataclass
class ValuePair:
    """Twin interval-iteration iterates (v0 from zeros, v1 from ones)."""
    v0: np.ndarray
    v1: np.ndarray

    def gap(self):
        return float(np.max(self.v1 - self.v0))

    def check_bracket(self):
        if np.any(self.v0 > self.v1 + _BRACKET_TOL):
            raise ImpactError("interval iteration bracket violated "
                              "(v0 > v1); abstraction bounds inconsistent")


@dataclass
class Controller:
    """Synthesis output: a lookup table over the safe states.

    policy/inputs are None in verification mode (no input space).
    """
    states: np.ndarray            # safe-state flat indices
    coords: np.ndarray            # (n_s, n) representative points
    policy: np.ndarray | None     # (n_s,) input indices
    inputs: np.ndarray | None     # (n_s, m) input representative points
    p_min: np.ndarray
    p_max: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.p_min > self.p_max):
            raise ImpactError("controller has p_min > p_max")


def _stack_bounds(imdp):
    """Bounds with the target and avoid columns appended as virtual slots."""
    lower = np.hstack([imdp.t_min, imdp.r_min[:, None], imdp.a_min[:, None]])
    upper = np.hstack([imdp.t_max, imdp.r_max[:, None], imdp.a_max[:, None]])
    return lower, upper


def _phase_solver(imdp, bounds, fixed_policy=None):
    """Row-LP solver for a phase; with a fixed policy only its rows load."""
    lower, upper = bounds
    if fixed_policy is None:
        return RowsSolver(lower, upper)
    n_s, n_u, n_w = imdp.n_s, imdp.n_u, imdp.n_w
    base = (np.arange(n_s) * n_u + np.asarray(fixed_policy)) * n_w
    rows_idx = (base[:, None] + np.arange(n_w)).ravel()
    return RowsSolver(lower[rows_idx], upper[rows_idx])


def bellman_step(imdp, values, lp_direction, u_objective, spec,
                 fixed_policy=None, bounds=None, solver=None):
    """One robust Bellman update over all safe states.

    spec selects the terminal weights: reach gives the target column weight
    1 and the avoid column 0; safety runs the avoid-reach program (target 0,
    avoid 1).  The disturbance always plays against u_objective.  Returns
    (new_values, chosen_input_indices); ties break toward the lowest index.
    With fixed_policy only that input's rows are ever priced.  A prebuilt
    solver (matching fixed_policy) skips the row setup on repeated calls.
    """
    if solver is None:
        if bounds is None:
            bounds = _stack_bounds(imdp)
        solver = _phase_solver(imdp, bounds, fixed_policy)
    if spec not in ("reach", "safety"):
        raise ValueError(f"bad spec {spec!r}")
    d1, d2 = (1.0, 0.0) if spec == "reach" else (0.0, 1.0)
    weights = np.concatenate([np.asarray(values, dtype=float), [d1, d2]])
    n_s, n_u, n_w = imdp.n_s, imdp.n_u, imdp.n_w

    vals = solver.values(weights, lp_direction)
    if fixed_policy is not None:
        per_uw = vals.reshape(n_s, 1, n_w)
    else:
        per_uw = vals.reshape(n_s, n_u, n_w)

    if u_objective == "max":
        per_u = per_uw.min(axis=2)      # adversarial disturbance
        chosen = np.argmax(per_u, axis=1)
    elif u_objective == "min":
        per_u = per_uw.max(axis=2)
        chosen = np.argmin(per_u, axis=1)
    else:
        raise ValueError(f"bad u_objective {u_objective!r}")
    new_values = per_u[np.arange(n_s), chosen]
    if fixed_policy is not None:
        chosen = np.asarray(fixed_policy).copy()
    return new_values, chosen


def _report_k(k):
    """Self-convergence iterations are reported as the first k whose value
    vector V^(k) is already converged, one before the sub-eps step that
    detected it (an immediately absorbing chain reports k = 1)."""
    return None if k is None else max(k - 1, 1)


def _run_phase(imdp, bounds, spec, lp_direction, u_objective, eps, horizon,
               max_iterations, fixed_policy=None):
    """Iterate the twin Bellman pair to the gap criterion or for K steps.

    Returns (ValuePair, policy, iterations, (k0, k1), fallback).  k0/k1 are
    the first iterations at which each iterate self-converged (None if
    never).  When both iterates have self-converged but the gap between
    them has stopped moving (absorbing safe states keep the upper iterate
    pinned), the phase stops and flags fallback: the caller should then read
    the result off the lower track, which is plain value iteration run for
    the self-convergence horizon.
    """
    n_s = imdp.n_s
    solver = _phase_solver(imdp, bounds, fixed_policy)
    pair = ValuePair(v0=np.zeros(n_s), v1=np.ones(n_s))
    policy = np.zeros(n_s, dtype=np.int64)
    k0 = k1 = None
    prev_gap = None
    it = 0
    while True:
        it += 1
        new0, policy = bellman_step(imdp, pair.v0, lp_direction, u_objective,
                                    spec, fixed_policy, solver=solver)
        new1, _ = bellman_step(imdp, pair.v1, lp_direction, u_objective,
                               spec, fixed_policy, solver=solver)
        if np.any(new0 < pair.v0 - _MONOTONE_TOL) or \
                np.any(new1 > pair.v1 + _MONOTONE_TOL):
            raise ImpactError("value iterates lost monotonicity; "
                              "abstraction bounds inconsistent")
        if k0 is None and np.max(np.abs(new0 - pair.v0)) <= eps:
            k0 = it
        if k1 is None and np.max(np.abs(new1 - pair.v1)) <= eps:
            k1 = it
        pair = ValuePair(v0=new0, v1=new1)
        pair.check_bracket()
        if horizon is not None:
            if it >= horizon:
                return pair, policy, it, (k0, k1), False
        else:
            gap = pair.gap()
            if gap <= eps:
                return pair, policy, it, (k0, k1), False
            stalled = prev_gap is not None and \
                prev_gap - gap <= 1e-15 * max(1.0, gap)
            if k0 is not None and k1 is not None and stalled:
                log.warning(
                    "gap stuck at %.3e with both bounds self-converged "
                    "(k0=%s, k1=%s); falling back to the value-iteration "
                    "result on the lower track", gap,
                    _report_k(k0), _report_k(k1))
                return pair, policy, it, (k0, k1), True
            prev_gap = gap
            if it >= max_iterations:
                raise ConvergenceError(
                    f"gap {gap!r} above eps={eps!r} after "
                    f"{it} iterations; per-bound self-convergence "
                    f"k0={_report_k(k0)}, k1={_report_k(k1)} (use the "
                    "larger as a finite horizon for plain value iteration)",
                    k0=_report_k(k0), k1=_report_k(k1))
        if it % 1000 == 0:
            log.info("iteration %d: gap %.3e", it, pair.gap())


def _check_args(eps, horizon, mode):
    if mode not in ("pessimistic", "optimistic"):
        raise ValueError(f"bad mode {mode!r}")
    if horizon is None:
        if not eps > 0:
            raise ValueError("eps must be positive for infinite horizon")
    elif not (isinstance(horizon, (int, np.integer)) and horizon >= 1):
        raise ValueError("horizon must be a positive integer or None")


def _make_controller(imdp, policy, p_min, p_max, kind, mode, eps, horizon,
                     iterations, with_policy=True, fallback=(False, False)):
    # The phases agree only to eps; widen the upper bound so the pair always
    # brackets, leaving the phase-1 value (and its complement identity for
    # safety) untouched.
    p_max = np.maximum(p_min, p_max)
    coords = imdp.state_space.rep_points()[imdp.labels.safe]
    if with_policy and imdp.input_space is not None:
        inputs = imdp.input_space.rep_points()[policy]
    else:
        policy = None
        inputs = None
    meta = {"spec": kind, "mode": mode, "eps": eps,
            "horizon": "infinite" if horizon is None else int(horizon),
            "iterations": iterations, "fallback": tuple(fallback)}
    return Controller(states=np.asarray(imdp.labels.safe).copy(),
                      coords=coords, policy=policy, inputs=inputs,
                      p_min=p_min, p_max=p_max, meta=meta)


def synthesize_reach(imdp, mode="pessimistic", eps=DEFAULT_EPS, horizon=None,
                     max_iterations=DEFAULT_MAX_ITERATIONS,
                     _with_policy=True, _kind="reach"):
    """Reachability / reach-avoid synthesis (identical program; the avoid
    set only matters through the abstraction's avoid column)."""
    _check_args(eps, horizon, mode)
    bounds = _stack_bounds(imdp)
    lp1 = "min" if mode == "pessimistic" else "max"
    lp2 = "max" if lp1 == "min" else "min"
    pair1, policy, it1, _, fb1 = _run_phase(imdp, bounds, "reach", lp1,
                                            "max", eps, horizon,
                                            max_iterations)
    pair2, _, it2, _, fb2 = _run_phase(imdp, bounds, "reach", lp2, "max",
                                       eps, horizon, max_iterations,
                                       fixed_policy=policy)
    # min-LP phase yields the lower-bound iterate, max-LP the upper; finite
    # horizons and the stalled-gap fallback read the value-iteration track.
    if horizon is not None or fb1:
        val1 = pair1.v0
    else:
        val1 = pair1.v0 if lp1 == "min" else pair1.v1
    if horizon is not None or fb2:
        val2 = pair2.v0
    else:
        val2 = pair2.v1 if lp2 == "max" else pair2.v0
    p_min, p_max = (val1, val2) if lp1 == "min" else (val2, val1)
    return _make_controller(imdp, policy, p_min, p_max, _kind, mode, eps,
                            horizon, (it1, it2), with_policy=_with_policy,
                            fallback=(fb1, fb2))


def synthesize_safe(imdp, mode="pessimistic", eps=DEFAULT_EPS, horizon=None,
                    max_iterations=DEFAULT_MAX_ITERATIONS,
                    _with_policy=True):
    """Safety synthesis via the complement: maximize the probability of
    staying safe by minimizing the adversarial probability of reaching the
    avoid mass, then return one minus the avoid-reach value."""
    _check_args(eps, horizon, mode)
    if len(imdp.labels.target) != 0:
        raise ValueError("safety requires an empty target set")
    bounds = _stack_bounds(imdp)
    # Pessimistic safety prices the avoid-reach against the max LP first.
    lp1 = "max" if mode == "pessimistic" else "min"
    lp2 = "min" if lp1 == "max" else "max"
    pair1, policy, it1, _, fb1 = _run_phase(imdp, bounds, "safety", lp1,
                                            "min", eps, horizon,
                                            max_iterations)
    pair2, _, it2, _, fb2 = _run_phase(imdp, bounds, "safety", lp2, "min",
                                       eps, horizon, max_iterations,
                                       fixed_policy=policy)
    if horizon is not None or fb1:
        avoid1 = pair1.v0
    else:
        avoid1 = pair1.v0 if lp1 == "max" else pair1.v1
    if horizon is not None or fb2:
        avoid2 = pair2.v0
    else:
        avoid2 = pair2.v1 if lp2 == "min" else pair2.v0
    # max-LP avoid value complements to the safety lower bound.
    if lp1 == "max":
        p_min, p_max = 1.0 - avoid1, 1.0 - avoid2
    else:
        p_min, p_max = 1.0 - avoid2, 1.0 - avoid1
    return _make_controller(imdp, policy, p_min, p_max, "safety", mode, eps,
                            horizon, (it1, it2), with_policy=_with_policy,
                            fallback=(fb1, fb2))


def verify(imdp, mode="pessimistic", eps=DEFAULT_EPS, horizon=None,
           spec="safety", max_iterations=DEFAULT_MAX_ITERATIONS):
    """Verification: the same iterations over an abstraction built without
    an input space; the result is a lookup table without a policy."""
    if imdp.input_space is not None:
        raise ValueError("verify requires an abstraction without inputs")
    if spec == "safety":
        return synthesize_safe(imdp, mode, eps, horizon, max_iterations,
                               _with_policy=False)
    if spec in ("reach", "reach-avoid"):
        return synthesize_reach(imdp, mode, eps, horizon, max_iterations,
                                _with_policy=False, _kind=spec)
    raise ValueError(f"bad spec {spec!r}")


def diagnose_convergence(imdp, spec="reach", mode="pessimistic",
                         eps=DEFAULT_EPS,
                         max_iterations=DEFAULT_MAX_ITERATIONS):
    """Self-convergence iteration of each phase-1 iterate, independently.

    Returns (k0, k1), the first iterations k at which each bound's V^(k)
    is already eps-converged (the step into V^(k+1) is the one that drops
    below eps; an immediately absorbing chain reports 1).  When the pair's
    mutual gap refuses to close, the larger of the two is a usable horizon
    for plain value iteration.
    """
    bounds = _stack_bounds(imdp)
    if spec == "safety":
        lp = "max" if mode == "pessimistic" else "min"
        u_obj = "min"
        prog = "safety"
    else:
        lp = "min" if mode == "pessimistic" else "max"
        u_obj = "max"
        prog = "reach"
    n_s = imdp.n_s
    solver = _phase_solver(imdp, bounds)
    v0 = np.zeros(n_s)
    v1 = np.ones(n_s)
    k0 = k1 = None
    for it in range(1, max_iterations + 1):
        if k0 is None:
            new0, _ = bellman_step(imdp, v0, lp, u_obj, prog, solver=solver)
            if np.max(np.abs(new0 - v0)) <= eps:
                k0 = it
            v0 = new0
        if k1 is None:
            new1, _ = bellman_step(imdp, v1, lp, u_obj, prog, solver=solver)
            if np.max(np.abs(new1 - v1)) <= eps:
                k1 = it
            v1 = new1
        if k0 is not None and k1 is not None:
            return _report_k(k0), _report_k(k1)
    raise ConvergenceError(
        f"no self-convergence within {max_iterations} iterations",
        k0=_report_k(k0), k1=_report_k(k1))
