"""Uniform lattice partitions of continuous boxes.

A space is a box [lb, ub] discretized with pitch eta per dimension.  The
representative points are the lattice points lb + i*eta (endpoints included)
and every point owns the axis-aligned cell of half-width eta/2 around it, so
the cells tile [lb - eta/2, ub + eta/2].

Index layout is row-major with dimension 0 slowest; this layout is the
contract for matrix rows and on-disk files.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GridError

__all__ = ["Space", "Cell", "LabeledStates", "build_space", "rep_point",
           "cell_of", "quantize", "label_states"]


@dataclass(frozen=True)
class Space:
    lb: np.ndarray
    ub: np.ndarray
    eta: np.ndarray
    counts: np.ndarray
    total: int

    @property
    def dim(self):
        return len(self.lb)

    def rep_points(self):
        """All representative points as a (total, dim) array, index order."""
        axes = [self.lb[d] + self.eta[d] * np.arange(self.counts[d])
                for d in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class Cell:
    lo: np.ndarray
    hi: np.ndarray


@dataclass(frozen=True)
class LabeledStates:
    safe: np.ndarray
    target: np.ndarray
    avoid: np.ndarray

    total: int = field(default=0)

    @property
    def n_safe(self):
        return len(self.safe)


def build_space(lb, ub, eta) -> Space:
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if not (lb.shape == ub.shape == eta.shape) or lb.ndim != 1 or len(lb) == 0:
        raise GridError("lb, ub, eta must be equal-length 1-D vectors")
    for d in range(len(lb)):
        if not eta[d] > 0:
            raise GridError(f"eta must be positive (dimension {d}: {eta[d]})")
        if ub[d] < lb[d]:
            raise GridError(f"ub < lb in dimension {d}")
    ratio = (ub - lb) / eta
    steps = np.round(ratio).astype(int)
    frac = np.abs(ratio - steps)
    bad = np.nonzero(frac > 1e-6 * np.maximum(np.abs(ratio), 1.0))[0]
    if len(bad):
        d = int(bad[0])
        raise GridError(
            f"lattice does not fit in dimension {d}: "
            f"(ub-lb)/eta = {ratio[d]!r} is not an integer")
    counts = steps + 1
    total = int(np.prod(counts, dtype=object))
    return Space(lb=lb, ub=ub, eta=eta, counts=counts, total=total)


def _multi_index(space: Space, index: int) -> np.ndarray:
    if not 0 <= index < space.total:
        raise GridError(f"index {index} out of range [0, {space.total})")
    idx = np.empty(space.dim, dtype=int)
    rem = int(index)
    for d in range(space.dim - 1, -1, -1):
        idx[d] = rem % space.counts[d]
        rem //= space.counts[d]
    return idx


def _flat_index(space: Space, multi) -> int:
    flat = 0
    for d in range(space.dim):
        flat = flat * int(space.counts[d]) + int(multi[d])
    return flat


def rep_point(space: Space, index: int) -> np.ndarray:
    return space.lb + _multi_index(space, index) * space.eta


def cell_of(space: Space, index: int) -> Cell:
    rep = rep_point(space, index)
    return Cell(lo=rep - space.eta / 2, hi=rep + space.eta / 2)


def domain_box(space: Space) -> Cell:
    """The box covered by the union of all cells."""
    return Cell(lo=space.lb - space.eta / 2, hi=space.ub + space.eta / 2)


def quantize(space: Space, x) -> int:
    """Index of the nearest representative point; ties round to the lower index."""
    x = np.asarray(x, dtype=float)
    if x.shape != space.lb.shape:
        raise GridError(f"point has dimension {x.shape}, space {space.lb.shape}")
    half = space.eta / 2
    tol = 1e-9 * np.maximum(space.eta, 1.0)
    if np.any(x < space.lb - half - tol) or np.any(x > space.ub + half + tol):
        d = int(np.argmax(np.maximum(space.lb - half - x, x - space.ub - half)))
        raise GridError(f"point {x.tolist()} outside domain in dimension {d}")
    r = (x - space.lb) / space.eta
    # Ties at .5 go to the lower index: ceil(r - 1/2).
    idx = np.ceil(r - 0.5).astype(int)
    idx = np.clip(idx, 0, space.counts - 1)
    return _flat_index(space, idx)


def label_states(space: Space, target_pred=None, avoid_pred=None) -> LabeledStates:
    """Classify every representative point; avoid wins over target on overlap."""
    points = space.rep_points()
    env = {f"x{d + 1}": points[:, d] for d in range(space.dim)}
    if avoid_pred is not None:
        avoid_mask = np.asarray(avoid_pred.evaluate_env(env), dtype=bool)
        avoid_mask = np.broadcast_to(avoid_mask, (space.total,)).copy()
    else:
        avoid_mask = np.zeros(space.total, dtype=bool)
    if target_pred is not None:
        target_mask = np.asarray(target_pred.evaluate_env(env), dtype=bool)
        target_mask = np.broadcast_to(target_mask, (space.total,)).copy()
        target_mask &= ~avoid_mask
    else:
        target_mask = np.zeros(space.total, dtype=bool)
    safe_mask = ~(target_mask | avoid_mask)
    return LabeledStates(
        safe=np.nonzero(safe_mask)[0],
        target=np.nonzero(target_mask)[0],
        avoid=np.nonzero(avoid_mask)[0],
        total=space.total,
    )
