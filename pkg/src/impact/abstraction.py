"""Parallel construction of the interval abstraction.

Every (safe state, input, disturbance) triple is one matrix row.  For each
row the transition probability into each destination cell is bracketed by
optimizing over the source cell (clipped to the state box, since the system
state always lies in it).  Destination cells keep their full half-pitch
extent, and mass escaping the covered box [lb - eta/2, ub + eta/2] is
credited to the avoid vector.

Two computation paths share the same semantics for diagonal noise:

* coordinate-separable dynamics (each next-state coordinate reads only its
  own state coordinate): the box probability factorizes per dimension, so
  the per-destination extremes follow exactly from the per-dimension mean
  ranges and no per-destination search is needed;
* the general path runs the batched projected Nelder-Mead per destination,
  restricted to the window of destinations whose interval-arithmetic upper
  bound exceeds the zero cutoff (entries outside are provably below it and
  are recorded as zero).

Monte Carlo noise models (full covariance, custom density) always use the
per-destination search with seeds derived from (row, destination), so the
output never depends on scheduling.

Rows are independent work items; a fork-based process pool maps over row
chunks and each worker fills only its own slice, so results are bit-identical
for any worker count.
"""

import logging
import multiprocessing
from dataclasses import dataclass

import numpy as np

from .errors import AbstractionError
from .expr import DynamicsSpec
from .grid import Cell, LabeledStates, Space, cell_of, domain_box
from .noise import (CustomNoise, DiagonalNormal, FullNormal, derive_seed,
                    interval_probability, mc_box_probability)
from .optimize import nelder_mead_batch, optimize_over_cell, start_points

log = logging.getLogger(__name__)

__all__ = ["Imdp", "RowIndex", "AbstractionOptions", "build_abstraction",
           "estimate_cost", "optimize_over_cell"]

_ROW_SUM_TOL = 1e-9
_ROW_SUM_HARD = 1e-6


@dataclass(frozen=True)
class AbstractionOptions:
    low_cost: bool = False
    optimizer_max_evals: int = 0      # 0 -> 200 * dim
    optimizer_tol: float = 1e-8
    zero_cutoff: float = 1e-12
    multistart: int = 0               # 0 -> 1 + 2 * dim
    workers: int = 1
    mc_seed: int = 0

    def __post_init__(self):
        if not self.zero_cutoff < 1e-6:
            raise ValueError("zero_cutoff must be < 1e-6")

    def max_evals_for(self, dim):
        return self.optimizer_max_evals or 200 * max(dim, 1)

    def multistart_for(self, dim):
        return self.multistart or 1 + 2 * dim


@dataclass(frozen=True)
class RowIndex:
    """Bijection (safe position k, input j, disturbance i) <-> row index."""
    n_u: int
    n_w: int

    def row(self, k, j=0, i=0):
        return (k * self.n_u + j) * self.n_w + i

    def kji(self, row):
        i = row % self.n_w
        rest = row // self.n_w
        return rest // self.n_u, rest % self.n_u, i


@dataclass
class Imdp:
    state_space: Space
    input_space: Space | None
    disturb_space: Space | None
    labels: LabeledStates
    t_min: np.ndarray
    t_max: np.ndarray
    r_min: np.ndarray
    r_max: np.ndarray
    a_min: np.ndarray
    a_max: np.ndarray

    @property
    def n_s(self):
        return len(self.labels.safe)

    @property
    def n_u(self):
        return self.input_space.total if self.input_space is not None else 1

    @property
    def n_w(self):
        return self.disturb_space.total if self.disturb_space is not None else 1

    @property
    def n_rows(self):
        return self.n_s * self.n_u * self.n_w

    @property
    def rows(self):
        return RowIndex(self.n_u, self.n_w)

    def validate(self):
        """Check the interval and row-sum invariants; raises on violation."""
        for name, lo, hi in (("t", self.t_min, self.t_max),
                             ("r", self.r_min, self.r_max),
                             ("a", self.a_min, self.a_max)):
            if np.any(lo < 0) or np.any(hi > 1) or np.any(lo > hi):
                raise AbstractionError(f"{name} bounds violate 0<=min<=max<=1")
        s_min = self.t_min.sum(axis=1) + self.r_min + self.a_min
        s_max = self.t_max.sum(axis=1) + self.r_max + self.a_max
        bad = np.nonzero((s_min > 1 + _ROW_SUM_TOL) |
                         (s_max < 1 - _ROW_SUM_TOL))[0]
        if len(bad):
            r = int(bad[0])
            raise AbstractionError(
                f"row {r} sum invariant violated (sum_min={s_min[r]!r}, "
                f"sum_max={s_max[r]!r}); inconsistent noise model or "
                "too-coarse Monte Carlo")


def estimate_cost(n_s, n_u=1, n_w=1):
    """Decision-variable count and memory footprint of the abstraction.

    Returns (d, bytes, overflow): d = rows * columns; bytes covers the two
    bound matrices plus the six row vectors at 8 bytes per real.  Counts are
    exact Python integers; results beyond 2**63 - 1 are reported saturated
    with the overflow flag set.
    """
    n_u = n_u or 1
    n_w = n_w or 1
    if min(n_s, n_u, n_w) < 0:
        raise ValueError("counts must be non-negative")
    rows = n_s * n_u * n_w
    d = rows * n_s
    nbytes = 2 * d * 8 + 6 * rows * 8
    limit = 2**63 - 1
    overflow = d > limit or nbytes > limit
    return min(d, limit), min(nbytes, limit), overflow


# --- Build context (read-only, inherited by forked workers) ---------------

@dataclass
class _BuildContext:
    dyn: DynamicsSpec
    noise: object
    state_space: Space
    input_space: Space | None
    disturb_space: Space | None
    labels: LabeledStates
    opts: AbstractionOptions
    separable: bool
    input_reps: np.ndarray     # (n_u, m)
    disturb_reps: np.ndarray   # (n_w, p)
    safe_multi: np.ndarray     # (n_s, n) per-dimension lattice indices
    target_multi: np.ndarray
    avoid_multi: np.ndarray
    edges: list                # per dim, cell edge coordinates (counts+1,)
    cover: Cell                # box covered by the union of cells

    @property
    def n_u(self):
        return len(self.input_reps)

    @property
    def n_w(self):
        return len(self.disturb_reps)


def _multi_indices(space, flat):
    out = np.empty((len(flat), space.dim), dtype=np.int64)
    rem = np.asarray(flat, dtype=np.int64).copy()
    for d in range(space.dim - 1, -1, -1):
        out[:, d] = rem % space.counts[d]
        rem //= space.counts[d]
    return out


def _make_context(dyn, noise, spaces, labels, opts):
    state_space, input_space, disturb_space = spaces
    n, m, p = dyn.dims
    if state_space.dim != n:
        raise AbstractionError("state space dimension mismatch")
    if m and (input_space is None or input_space.dim != m):
        raise AbstractionError("input space dimension mismatch")
    if p and (disturb_space is None or disturb_space.dim != p):
        raise AbstractionError("disturbance space dimension mismatch")
    if isinstance(noise, DiagonalNormal) and noise.dim != n:
        raise AbstractionError("noise dimension mismatch")
    if len(labels.safe) < 1:
        raise AbstractionError("no safe states to abstract")

    input_reps = (input_space.rep_points() if input_space is not None
                  else np.zeros((1, 0)))
    disturb_reps = (disturb_space.rep_points() if disturb_space is not None
                    else np.zeros((1, 0)))
    edges = [state_space.lb[d] - state_space.eta[d] / 2 +
             state_space.eta[d] * np.arange(state_space.counts[d] + 1)
             for d in range(n)]
    separable = isinstance(noise, DiagonalNormal) and dyn.is_separable()
    return _BuildContext(
        dyn=dyn, noise=noise, state_space=state_space,
        input_space=input_space, disturb_space=disturb_space, labels=labels,
        opts=opts, separable=separable, input_reps=input_reps,
        disturb_reps=disturb_reps,
        safe_multi=_multi_indices(state_space, labels.safe),
        target_multi=_multi_indices(state_space, labels.target),
        avoid_multi=_multi_indices(state_space, labels.avoid),
        edges=edges, cover=domain_box(state_space))


def _source_cell(ctx, state_index):
    """Source cell clipped to the state box (the true state lies in X)."""
    cell = cell_of(ctx.state_space, state_index)
    return Cell(lo=np.maximum(cell.lo, ctx.state_space.lb),
                hi=np.minimum(cell.hi, ctx.state_space.ub))


class _SignedExprObjective:
    """Minimizes sign * f_d(x) for per-instance signs (lockstep min & max)."""

    def __init__(self, expr, deps, base_env, signs):
        self.expr = expr
        self.deps = deps
        self.base_env = base_env
        self.signs = signs

    def __call__(self, points, rows):
        env = dict(self.base_env)
        for j, e in enumerate(self.deps):
            env[f"x{e + 1}"] = points[:, j]
        vals = np.asarray(self.expr.evaluate_env(env), dtype=float)
        vals = np.broadcast_to(vals, (len(points),))
        return vals * self.signs[rows]


def _mean_ranges(ctx, cell, base_env):
    """Per-dimension [min, max] of each f_d over the (clipped) source cell."""
    dyn = ctx.dyn
    n = dyn.dims[0]
    opts = ctx.opts
    m_lo = np.empty(n)
    m_hi = np.empty(n)
    center = (cell.lo + cell.hi) / 2
    for d in range(n):
        deps = sorted(dyn.state_dependencies(d))
        if not deps:
            env = dict(base_env)
            val = float(dyn.exprs[d].evaluate(env))
            m_lo[d], m_hi[d] = val, val
            continue
        sub = Cell(lo=cell.lo[list(deps)], hi=cell.hi[list(deps)])
        ms = opts.multistart_for(len(deps))
        starts = start_points(sub, ms)
        starts = np.vstack([starts, starts])
        signs = np.repeat([1.0, -1.0], ms)
        obj = _SignedExprObjective(dyn.exprs[d], deps, base_env, signs)
        vals, _ = nelder_mead_batch(obj, sub.lo, sub.hi, starts,
                                    opts.max_evals_for(len(deps)),
                                    opts.optimizer_tol)
        m_lo[d] = float(np.min(vals[:ms]))
        m_hi[d] = float(-np.min(vals[ms:]))
        if not np.isfinite(center[deps[0]]):  # pragma: no cover - paranoia
            raise AbstractionError("non-finite source cell")
    return m_lo, m_hi


def _dim_prob_extremes(sigma_d, eta_d, edges_d, ml, mh):
    """Min/max over mean in [ml, mh] of the 1-D interval probability, for
    every lattice bin along one dimension.  Exact: the interval probability
    is unimodal in the mean, peaking when the mean sits at the bin center."""
    p_lo = interval_probability(sigma_d, ml, edges_d[:-1], edges_d[1:])
    p_hi = interval_probability(sigma_d, mh, edges_d[:-1], edges_d[1:])
    gmin = np.minimum(p_lo, p_hi)
    centers = (edges_d[:-1] + edges_d[1:]) / 2
    peak = interval_probability(sigma_d, 0.0, -eta_d / 2, eta_d / 2)
    gmax = np.where(centers < ml, p_lo, np.where(centers > mh, p_hi, peak))
    return gmin, gmax


def _box_prob_extremes(sigma, lo_box, hi_box, ml, mh):
    """Per-dim-decomposed bounds on the probability of one box over the mean
    rectangle [ml, mh]; exact when the mean coordinates vary independently."""
    center = (lo_box + hi_box) / 2
    mu_max = np.clip(center, ml, mh)
    p_max = float(np.prod(interval_probability(sigma, mu_max, lo_box, hi_box)))
    p_at_lo = interval_probability(sigma, ml, lo_box, hi_box)
    p_at_hi = interval_probability(sigma, mh, lo_box, hi_box)
    p_min = float(np.prod(np.minimum(p_at_lo, p_at_hi)))
    return p_min, p_max


def _gather_products(per_dim, multi):
    """prod_d per_dim[d][multi[:, d]] for a (k, n) multi-index array."""
    if len(multi) == 0:
        return np.zeros(0)
    out = per_dim[0][multi[:, 0]].copy()
    for d in range(1, multi.shape[1]):
        out *= per_dim[d][multi[:, d]]
    return out


class _BoxProbObjective:
    """Minimizes sign * P(f(x) + noise in box) for per-instance boxes."""

    def __init__(self, ctx, base_env, box_lo, box_hi, signs, ms):
        self.ctx = ctx
        self.base_env = base_env
        self.box_lo = box_lo      # (items, n)
        self.box_hi = box_hi
        self.signs = signs        # (items,)
        self.ms = ms              # starts per item; instance -> item map

    def __call__(self, points, rows):
        ctx = self.ctx
        n = ctx.dyn.dims[0]
        env = dict(self.base_env)
        for d in range(n):
            env[f"x{d + 1}"] = points[:, d]
        means = ctx.dyn.eval_env(env)
        items = rows // self.ms
        prob = np.ones(len(points))
        sigma = ctx.noise.sigma
        for d in range(n):
            mean_d = np.broadcast_to(np.asarray(means[d], dtype=float),
                                     (len(points),))
            prob *= interval_probability(sigma[d], mean_d,
                                         self.box_lo[items, d],
                                         self.box_hi[items, d])
        return prob * self.signs[items]


def _optimize_boxes(ctx, cell, base_env, box_lo, box_hi):
    """Heuristic [min, max] of the box probability for each box, by batched
    simplex search over the source cell.  Returns (mins, maxes)."""
    items = len(box_lo)
    if items == 0:
        return np.zeros(0), np.zeros(0)
    n = ctx.dyn.dims[0]
    opts = ctx.opts
    ms = opts.multistart_for(n)
    base_starts = start_points(cell, ms)
    # Instance layout: for each box, a min block then a max block of starts.
    signs = np.empty(2 * items)
    signs[0::2] = 1.0
    signs[1::2] = -1.0
    lo2 = np.repeat(box_lo, 2, axis=0)
    hi2 = np.repeat(box_hi, 2, axis=0)
    starts = np.tile(base_starts, (2 * items, 1))
    obj = _BoxProbObjective(ctx, base_env, lo2, hi2, signs, ms)
    vals, _ = nelder_mead_batch(obj, cell.lo, cell.hi, starts,
                                opts.max_evals_for(n), opts.optimizer_tol)
    vals = vals.reshape(2 * items, ms).min(axis=1)
    mins = vals[0::2]
    maxes = -vals[1::2]
    return mins, maxes


def _mc_prob_extremes(ctx, cell, u, w, box_cell, row, dest):
    """[min, max] of the Monte Carlo cell probability over the source cell."""
    opts = ctx.opts
    seed = derive_seed(opts.mc_seed, row, dest)
    dyn = ctx.dyn

    def objective(x):
        mean = dyn.eval(x, u, w)
        return mc_box_probability(ctx.noise, mean, box_cell, seed)[0]

    n = dyn.dims[0]
    pmin = optimize_over_cell(objective, cell, "min",
                              max_evals=opts.max_evals_for(n),
                              tol=opts.optimizer_tol,
                              multistart=opts.multistart_for(n))
    pmax = optimize_over_cell(objective, cell, "max",
                              max_evals=opts.max_evals_for(n),
                              tol=opts.optimizer_tol,
                              multistart=opts.multistart_for(n))
    return pmin, pmax


def _state_cells(ctx, multi):
    lo = np.empty((len(multi), ctx.state_space.dim))
    hi = np.empty_like(lo)
    for d in range(ctx.state_space.dim):
        lo[:, d] = ctx.edges[d][multi[:, d]]
        hi[:, d] = ctx.edges[d][multi[:, d] + 1]
    return lo, hi


def _compute_rows(row_range):
    """Compute a contiguous chunk of abstraction rows (worker entry)."""
    ctx = _CTX
    n_s = len(ctx.labels.safe)
    rows = list(row_range)
    t_min = np.zeros((len(rows), n_s))
    t_max = np.zeros((len(rows), n_s))
    vec = {name: np.zeros(len(rows)) for name in
           ("r_min", "r_max", "av_min", "av_max", "leak_min", "leak_max")}
    index = RowIndex(ctx.n_u, ctx.n_w)
    for out_i, row in enumerate(rows):
        k, j, i = index.kji(row)
        res = _compute_one_row(ctx, row, k, j, i)
        t_min[out_i] = res[0]
        t_max[out_i] = res[1]
        for name, val in zip(("r_min", "r_max", "av_min", "av_max",
                              "leak_min", "leak_max"), res[2:]):
            vec[name][out_i] = val
    return rows[0], t_min, t_max, vec


def _compute_one_row(ctx, row, k, j, i):
    cell = _source_cell(ctx, int(ctx.labels.safe[k]))
    u = ctx.input_reps[j]
    w = ctx.disturb_reps[i]
    base_env = {f"u{d + 1}": u[d] for d in range(len(u))}
    base_env.update({f"w{d + 1}": w[d] for d in range(len(w))})

    if isinstance(ctx.noise, DiagonalNormal):
        return _row_diagonal(ctx, cell, base_env)
    return _row_monte_carlo(ctx, cell, u, w, row)


def _row_diagonal(ctx, cell, base_env):
    n = ctx.state_space.dim
    noise = ctx.noise
    cutoff = ctx.opts.zero_cutoff
    m_lo, m_hi = _mean_ranges(ctx, cell, base_env)

    gmin, gmax = [], []
    for d in range(n):
        lo_d, hi_d = _dim_prob_extremes(noise.sigma[d],
                                        ctx.state_space.eta[d],
                                        ctx.edges[d], m_lo[d], m_hi[d])
        gmin.append(lo_d)
        gmax.append(hi_d)

    t_max = _gather_products(gmax, ctx.safe_multi)
    t_min = _gather_products(gmin, ctx.safe_multi)
    r_max_terms = _gather_products(gmax, ctx.target_multi)
    r_min_terms = _gather_products(gmin, ctx.target_multi)
    a_max_terms = _gather_products(gmax, ctx.avoid_multi)
    a_min_terms = _gather_products(gmin, ctx.avoid_multi)
    leak_lo_p, leak_hi_p = _box_prob_extremes(noise.sigma, ctx.cover.lo,
                                              ctx.cover.hi, m_lo, m_hi)

    if not ctx.separable:
        # The products above are only outer bounds when coordinates couple;
        # refine every entry above the cutoff with the simplex search.
        boxes_lo, boxes_hi, slots = [], [], []
        for multi, ub, tag in ((ctx.safe_multi, t_max, "t"),
                               (ctx.target_multi, r_max_terms, "r"),
                               (ctx.avoid_multi, a_max_terms, "a")):
            live = np.nonzero(ub > cutoff)[0]
            if len(live):
                lo_arr, hi_arr = _state_cells(ctx, multi[live])
                boxes_lo.append(lo_arr)
                boxes_hi.append(hi_arr)
            slots.append(live)
        boxes_lo.append(ctx.cover.lo[None, :])
        boxes_hi.append(ctx.cover.hi[None, :])
        mins, maxes = _optimize_boxes(ctx, cell, base_env,
                                      np.vstack(boxes_lo), np.vstack(boxes_hi))
        t_min = np.zeros_like(t_min)
        t_max = np.zeros_like(t_max)
        pos = 0
        for arr_min, arr_max, live in (
                (t_min, t_max, slots[0]),
                (r_min_terms, r_max_terms, slots[1]),
                (a_min_terms, a_max_terms, slots[2])):
            arr_min[:] = 0.0
            arr_max[:] = 0.0
            arr_min[live] = mins[pos:pos + len(live)]
            arr_max[live] = maxes[pos:pos + len(live)]
            pos += len(live)
        leak_lo_p = mins[pos]
        leak_hi_p = maxes[pos]
    else:
        zero = t_max <= cutoff
        t_max[zero] = 0.0
        t_min[zero] = 0.0
        t_min = np.minimum(t_min, t_max)

    if ctx.opts.low_cost:
        t_min[t_max <= cutoff] = 0.0

    return (t_min, t_max,
            float(np.sum(r_min_terms)), float(np.sum(r_max_terms)),
            float(np.sum(a_min_terms)), float(np.sum(a_max_terms)),
            max(0.0, 1.0 - leak_hi_p), max(0.0, 1.0 - leak_lo_p))


def _row_monte_carlo(ctx, cell, u, w, row):
    n_s = len(ctx.labels.safe)
    cutoff = ctx.opts.zero_cutoff
    t_min = np.zeros(n_s)
    t_max = np.zeros(n_s)

    def extremes(multi_rows, flats):
        lo_arr, hi_arr = _state_cells(ctx, multi_rows)
        mins = np.zeros(len(flats))
        maxes = np.zeros(len(flats))
        for idx, flat in enumerate(flats):
            box = Cell(lo=lo_arr[idx], hi=hi_arr[idx])
            pmin, pmax = _mc_prob_extremes(ctx, cell, u, w, box, row,
                                           int(flat))
            if pmax <= cutoff:
                pmin = pmax = 0.0
            elif ctx.opts.low_cost and pmax <= cutoff:
                pmin = 0.0
            mins[idx] = min(pmin, pmax)
            maxes[idx] = pmax
        return mins, maxes

    t_min[:], t_max[:] = extremes(ctx.safe_multi, ctx.labels.safe)
    r_mins, r_maxes = extremes(ctx.target_multi, ctx.labels.target)
    a_mins, a_maxes = extremes(ctx.avoid_multi, ctx.labels.avoid)
    leak_lo_p, leak_hi_p = _mc_prob_extremes(
        ctx, cell, u, w, ctx.cover, row, ctx.state_space.total)
    return (t_min, t_max, float(np.sum(r_mins)), float(np.sum(r_maxes)),
            float(np.sum(a_mins)), float(np.sum(a_maxes)),
            max(0.0, 1.0 - leak_hi_p), max(0.0, 1.0 - leak_lo_p))


_CTX = None


def _init_worker(ctx):
    global _CTX
    _CTX = ctx


def build_abstraction(dyn, noise, spaces, labels, opts=None) -> Imdp:
    """Construct the full interval abstraction.

    spaces is (state, input or None, disturbance or None).  Verification
    problems pass input=None; the row layout then has a single dummy input.
    """
    opts = opts or AbstractionOptions()
    ctx = _make_context(dyn, noise, spaces, labels, opts)
    n_s = len(labels.safe)
    n_rows = n_s * ctx.n_u * ctx.n_w

    t_min = np.empty((n_rows, n_s))
    t_max = np.empty((n_rows, n_s))
    r_min = np.empty(n_rows)
    r_max = np.empty(n_rows)
    av_min = np.empty(n_rows)
    av_max = np.empty(n_rows)
    leak_min = np.empty(n_rows)
    leak_max = np.empty(n_rows)

    chunks = _row_chunks(n_rows, opts.workers)
    if opts.workers <= 1:
        _init_worker(ctx)
        results = [_compute_rows(c) for c in chunks]
    else:
        global _CTX
        _CTX = ctx  # inherited by forked workers, no pickling of closures
        mp = multiprocessing.get_context("fork")
        with mp.Pool(opts.workers) as pool:
            results = pool.map(_compute_rows, chunks)
        _CTX = None

    for start, tmin_c, tmax_c, vec in results:
        stop = start + len(tmin_c)
        t_min[start:stop] = tmin_c
        t_max[start:stop] = tmax_c
        r_min[start:stop] = vec["r_min"]
        r_max[start:stop] = vec["r_max"]
        av_min[start:stop] = vec["av_min"]
        av_max[start:stop] = vec["av_max"]
        leak_min[start:stop] = vec["leak_min"]
        leak_max[start:stop] = vec["leak_max"]

    imdp = _assemble(ctx, t_min, t_max, r_min, r_max, av_min, av_max,
                     leak_min, leak_max)
    frac_zero = float(np.mean(imdp.t_max <= opts.zero_cutoff))
    log.info("abstraction built: %d rows x %d cols, %.1f%% of t_max at zero",
             n_rows, n_s, 100 * frac_zero)
    return imdp


def _row_chunks(n_rows, workers):
    per = max(1, -(-n_rows // max(1, 4 * workers)))
    return [range(s, min(s + per, n_rows)) for s in range(0, n_rows, per)]


def _assemble(ctx, t_min, t_max, r_min, r_max, av_min, av_max,
              leak_min, leak_max):
    np.clip(t_min, 0.0, 1.0, out=t_min)
    np.clip(t_max, 0.0, 1.0, out=t_max)
    np.minimum(t_min, t_max, out=t_min)
    for lo, hi in ((r_min, r_max), (av_min, av_max), (leak_min, leak_max)):
        np.clip(lo, 0.0, 1.0, out=lo)
        np.clip(hi, 0.0, 1.0, out=hi)
        np.minimum(lo, hi, out=lo)
    a_min = np.clip(leak_min + av_min, 0.0, 1.0)
    a_max = np.clip(leak_max + av_max, 0.0, 1.0)

    # Row-sum repair: shave any excess on the min side off the out-of-domain
    # leakage component first; top up a_max for any deficit on the max side.
    # Closed-form rows must balance to 1e-6 or the model is inconsistent;
    # Monte Carlo rows carry independent sampling error per destination, so
    # their residual is scaled out of the whole row instead.
    monte_carlo = not isinstance(ctx.noise, DiagonalNormal)
    s_min = t_min.sum(axis=1) + r_min + a_min
    excess = np.maximum(s_min - 1.0, 0.0)
    if not monte_carlo:
        bad = np.nonzero(excess > _ROW_SUM_HARD)[0]
        if len(bad):
            raise AbstractionError(
                f"row {int(bad[0])}: min-side sum exceeds 1 by "
                f"{float(excess[bad[0]])!r}")
    shaved = np.minimum(excess, a_min)
    a_min = a_min - shaved
    rest = excess - shaved
    hot = np.nonzero(rest > 0)[0]
    if len(hot):
        s = t_min[hot].sum(axis=1) + r_min[hot]
        scale = np.where(s > 0, 1.0 - rest[hot] / np.maximum(s, 1e-300), 1.0)
        t_min[hot] *= scale[:, None]
        r_min[hot] *= scale

    s_max = t_max.sum(axis=1) + r_max + a_max
    deficit = np.maximum(1.0 - s_max, 0.0)
    if not monte_carlo:
        bad = np.nonzero(deficit > _ROW_SUM_HARD)[0]
        if len(bad):
            raise AbstractionError(
                f"row {int(bad[0])}: max-side sum falls short of 1 by "
                f"{float(deficit[bad[0]])!r}")
    a_max = np.minimum(a_max + deficit, 1.0)
    a_min = np.minimum(a_min, a_max)

    imdp = Imdp(state_space=ctx.state_space, input_space=ctx.input_space,
                disturb_space=ctx.disturb_space, labels=ctx.labels,
                t_min=t_min, t_max=t_max, r_min=r_min, r_max=r_max,
                a_min=a_min, a_max=a_max)
    imdp.validate()
    return imdp
