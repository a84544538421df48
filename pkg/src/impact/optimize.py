"""Derivative-free simplex search, box-constrained by projection.

The core runs a whole batch of independent Nelder-Mead instances in lockstep
over numpy arrays, so one objective call evaluates candidate points for every
still-active instance at once.  The abstraction engine feeds it thousands of
instances per matrix row (one per destination cell, direction, and start
point); `optimize_over_cell` is the scalar single-problem wrapper.

Every candidate point is clipped into the box before evaluation, so returned
values always lie between the true minimum and maximum of the objective over
the cell.
"""

import numpy as np

from .errors import AbstractionError
from .grid import Cell

__all__ = ["optimize_over_cell", "nelder_mead_batch", "start_points"]

# Standard Nelder-Mead coefficients.
_ALPHA = 1.0   # reflection
_GAMMA = 2.0   # expansion
_RHO = 0.5     # contraction
_SIGMA = 0.5   # shrink


def start_points(cell: Cell, multistart: int) -> np.ndarray:
    """Deterministic start list: cell center, then the two faces per
    dimension, then midpoints between earlier starts and the center."""
    lo = np.asarray(cell.lo, dtype=float)
    hi = np.asarray(cell.hi, dtype=float)
    center = (lo + hi) / 2
    starts = [center]
    for d in range(len(lo)):
        for bound in (lo, hi):
            pt = center.copy()
            pt[d] = bound[d]
            starts.append(pt)
    k = 1
    while len(starts) < multistart:
        starts.append((starts[k % (1 + 2 * len(lo))] + center) / 2)
        k += 1
    return np.asarray(starts[:multistart])


def nelder_mead_batch(objective, lo, hi, starts, max_evals, tol):
    """Minimize a batch of instances sharing one search box.

    objective(points, rows) maps an (A, dim) array plus the (A,) batch
    indices the points belong to onto (A,) values, letting callers attach
    per-instance data (destination cells, min/max signs).  Returns
    (best_values (B,), best_points (B, dim)).
    """
    starts = np.asarray(starts, dtype=float)
    B, dim = starts.shape
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    width = hi - lo

    # Initial simplex: the start plus one shifted point per dimension,
    # stepping a quarter cell width away from the nearer face.
    simplex = np.repeat(starts[:, None, :], dim + 1, axis=1)
    for d in range(dim):
        step = 0.25 * width[d]
        up = starts[:, d] + step <= hi[d]
        simplex[:, d + 1, d] = np.where(up, starts[:, d] + step,
                                        starts[:, d] - step)
    all_rows = np.arange(B)
    fvals = np.empty((B, dim + 1))
    for v in range(dim + 1):
        fvals[:, v] = _checked(objective, simplex[:, v, :], all_rows)
    evals = np.full(B, dim + 1)

    while True:
        order = np.argsort(fvals, axis=1, kind="stable")
        fvals = np.take_along_axis(fvals, order, axis=1)
        simplex = np.take_along_axis(simplex, order[:, :, None], axis=1)

        spread = fvals[:, -1] - fvals[:, 0]
        active = (spread > tol) & (evals < max_evals)
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]

        sub = simplex[idx]
        fsub = fvals[idx]
        centroid = sub[:, :-1, :].mean(axis=1)
        worst = sub[:, -1, :]

        xr = np.clip(centroid + _ALPHA * (centroid - worst), lo, hi)
        fr = _checked(objective, xr, idx)
        evals[idx] += 1

        new_pt = xr.copy()
        new_f = fr.copy()
        shrink = np.zeros(len(idx), dtype=bool)

        expand = fr < fsub[:, 0]
        contract = fr >= fsub[:, -2]
        # Second candidate: expansion where the reflection won outright,
        # contraction (outside/inside) where it lost; one batched eval.
        second = expand | contract
        if np.any(second):
            cand = np.empty((len(idx), dim))
            cand[expand] = np.clip(
                centroid[expand] + _GAMMA * (centroid[expand] - worst[expand]),
                lo, hi)
            outside = contract & (fr < fsub[:, -1])
            inside = contract & ~outside
            cand[outside] = np.clip(
                centroid[outside] + _RHO * (xr[outside] - centroid[outside]),
                lo, hi)
            cand[inside] = np.clip(
                centroid[inside] + _RHO * (worst[inside] - centroid[inside]),
                lo, hi)
            fc = np.full(len(idx), np.inf)
            fc[second] = _checked(objective, cand[second], idx[second])
            evals[idx[second]] += 1

            take = expand & (fc < fr)
            new_pt[take] = cand[take]
            new_f[take] = fc[take]
            # Strict improvement only: a clipped candidate that lands back
            # on the centroid would otherwise collapse the simplex onto the
            # box boundary; ties fall through to a shrink, which keeps the
            # simplex alive and moving inward.
            ok_out = outside & (fc < fr)
            new_pt[ok_out] = cand[ok_out]
            new_f[ok_out] = fc[ok_out]
            ok_in = inside & (fc < fsub[:, -1])
            new_pt[ok_in] = cand[ok_in]
            new_f[ok_in] = fc[ok_in]
            shrink = (outside & ~ok_out) | (inside & ~ok_in)

        keep = ~shrink
        rows = idx[keep]
        simplex[rows, -1, :] = new_pt[keep]
        fvals[rows, -1] = new_f[keep]

        if np.any(shrink):
            srows = idx[shrink]
            best = simplex[srows, 0:1, :]
            shrunk = best + _SIGMA * (simplex[srows, 1:, :] - best)
            flat = shrunk.reshape(-1, dim)
            fshr = _checked(objective, flat,
                            np.repeat(srows, dim)).reshape(len(srows), dim)
            simplex[srows, 1:, :] = shrunk
            fvals[srows, 1:] = fshr
            evals[srows] += dim

    best_idx = np.argmin(fvals, axis=1)
    best_vals = fvals[np.arange(B), best_idx]
    best_pts = simplex[np.arange(B), best_idx, :]
    return best_vals, best_pts


def _checked(objective, points, rows):
    vals = np.asarray(objective(points, rows), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise AbstractionError("non-finite objective value encountered")
    return vals


def optimize_over_cell(objective, cell: Cell, direction, *, max_evals=None,
                       tol=1e-8, multistart=None) -> float:
    """Approximate min or max of a scalar objective over a box cell.

    Local simplex search from `multistart` deterministic start points
    (default 1 + 2*dim); only feasible points are ever evaluated, so the
    result is always within [true min, true max] of the objective.
    """
    lo = np.asarray(cell.lo, dtype=float)
    hi = np.asarray(cell.hi, dtype=float)
    dim = len(lo)
    if max_evals is None:
        max_evals = 200 * dim
    if multistart is None:
        multistart = 1 + 2 * dim
    if direction not in ("min", "max"):
        raise ValueError(f"direction must be 'min' or 'max', got {direction!r}")
    sign = 1.0 if direction == "min" else -1.0

    def batch(points, rows):
        return np.array([sign * objective(p) for p in points])

    starts = start_points(cell, multistart)
    vals, _ = nelder_mead_batch(batch, lo, hi, starts, max_evals, tol)
    return float(sign * np.min(vals))
