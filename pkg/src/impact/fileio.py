"""Plain-text serialization of every artifact the pipeline produces.

All files are newline-terminated ASCII with space-separated fields and a
one-line magic header carrying a format version.  Reals are printed with 17
significant digits, which round-trips IEEE 754 doubles bit-exactly, so
load(save(x)) == x for every artifact.  Lines starting with '#' are comments
and are skipped on load.  Formats:

  imdpmat 1 R C      R subsequent lines of C reals       (bound matrices)
  imdpvec 1 N        N subsequent lines of one real      (bound vectors)
  imdpspace 1 D      lines "lb ...", "ub ...", "eta ..." (lattice spaces)
  imdplabels 1 T     lines "safe ...", "target ...", "avoid ..." (indices)
  imdpctrl 1         key-value header, then one line per safe state

The controller body has one line per safe state: flat state index, the n
state coordinates, then (unless policy=none) the input index and its m
coordinates, then p_min and p_max.
"""

import os

import numpy as np

from .errors import FileFormatError
from .grid import LabeledStates, Space, build_space
from .synthesis import Controller

__all__ = ["save_matrix", "load_matrix", "save_vector", "load_vector",
           "save_space", "load_space", "save_labels", "load_labels",
           "save_controller", "load_controller", "save_abstraction",
           "load_abstraction"]


def _fmt(x):
    return format(float(x), ".17g")


def _fmt_row(values):
    return " ".join(_fmt(v) for v in values)


class _LineReader:
    """Line iterator that skips comments and reports 1-based line numbers."""

    def __init__(self, path):
        self.path = path
        try:
            with open(path, "r", encoding="ascii") as fh:
                self._lines = fh.readlines()
        except OSError as exc:
            raise FileFormatError(f"{path}: {exc}") from exc
        self.pos = 0

    def next_line(self, what="line"):
        while self.pos < len(self._lines):
            self.pos += 1
            line = self._lines[self.pos - 1].strip()
            if line and not line.startswith("#"):
                return line
        raise FileFormatError(f"{self.path}: unexpected end of file, "
                              f"expected {what}")

    def at_end(self):
        for line in self._lines[self.pos:]:
            s = line.strip()
            if s and not s.startswith("#"):
                return False
        return True

    def fail(self, msg):
        raise FileFormatError(f"{self.path}:{self.pos}: {msg}")


def _parse_floats(reader, line, count, what):
    parts = line.split()
    if len(parts) != count:
        reader.fail(f"expected {count} values for {what}, got {len(parts)}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        reader.fail(f"non-numeric token in {what}")


def _parse_header(reader, magic, n_fields):
    line = reader.next_line("header")
    parts = line.split()
    if len(parts) != 2 + n_fields or parts[0] != magic or parts[1] != "1":
        reader.fail(f"bad header, expected '{magic} 1' with "
                    f"{n_fields} size field(s)")
    try:
        return [int(p) for p in parts[2:]]
    except ValueError:
        reader.fail("non-integer size field in header")


def save_matrix(path, matrix):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"imdpmat 1 {matrix.shape[0]} {matrix.shape[1]}\n")
        for row in matrix:
            fh.write(_fmt_row(row) + "\n")


def load_matrix(path):
    reader = _LineReader(path)
    rows, cols = _parse_header(reader, "imdpmat", 2)
    if rows < 0 or cols < 0:
        reader.fail("negative size in header")
    out = np.empty((rows, cols))
    for r in range(rows):
        out[r] = _parse_floats(reader, reader.next_line(f"row {r}"),
                               cols, f"row {r}")
    if not reader.at_end():
        reader.fail("trailing data after the declared rows")
    return out


def save_vector(path, vector):
    vector = np.asarray(vector, dtype=float).ravel()
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"imdpvec 1 {len(vector)}\n")
        for v in vector:
            fh.write(_fmt(v) + "\n")


def load_vector(path):
    reader = _LineReader(path)
    (n,) = _parse_header(reader, "imdpvec", 1)
    out = np.empty(n)
    for i in range(n):
        out[i] = _parse_floats(reader, reader.next_line(f"entry {i}"),
                               1, f"entry {i}")[0]
    if not reader.at_end():
        reader.fail("trailing data after the declared entries")
    return out


def save_space(path, space):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"imdpspace 1 {space.dim}\n")
        fh.write("lb " + _fmt_row(space.lb) + "\n")
        fh.write("ub " + _fmt_row(space.ub) + "\n")
        fh.write("eta " + _fmt_row(space.eta) + "\n")


def load_space(path) -> Space:
    reader = _LineReader(path)
    (dim,) = _parse_header(reader, "imdpspace", 1)
    vals = {}
    for key in ("lb", "ub", "eta"):
        line = reader.next_line(key)
        parts = line.split(None, 1)
        if parts[0] != key:
            reader.fail(f"expected '{key}' line, found {parts[0]!r}")
        vals[key] = _parse_floats(reader, parts[1] if len(parts) > 1 else "",
                                  dim, key)
    if not reader.at_end():
        reader.fail("trailing data in space file")
    return build_space(vals["lb"], vals["ub"], vals["eta"])


def save_labels(path, labels):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"imdplabels 1 {labels.total}\n")
        for key in ("safe", "target", "avoid"):
            idx = getattr(labels, key)
            fh.write(key + " " + " ".join(str(int(i)) for i in idx) + "\n")


def load_labels(path) -> LabeledStates:
    reader = _LineReader(path)
    (total,) = _parse_header(reader, "imdplabels", 1)
    out = {}
    for key in ("safe", "target", "avoid"):
        line = reader.next_line(key)
        parts = line.split()
        if parts[0] != key:
            reader.fail(f"expected '{key}' line, found {parts[0]!r}")
        try:
            idx = np.array([int(p) for p in parts[1:]], dtype=np.int64)
        except ValueError:
            reader.fail(f"non-integer index in {key} list")
        if len(idx) and (idx.min() < 0 or idx.max() >= total):
            reader.fail(f"{key} index out of range [0, {total})")
        out[key] = idx
    if not reader.at_end():
        reader.fail("trailing data in label file")
    return LabeledStates(safe=out["safe"], target=out["target"],
                         avoid=out["avoid"], total=total)


def save_controller(path, ctrl):
    n = ctrl.coords.shape[1]
    m = ctrl.inputs.shape[1] if ctrl.inputs is not None else 0
    meta = ctrl.meta
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("imdpctrl 1\n")
        fh.write(f"spec {meta.get('spec', 'reach')}\n")
        fh.write(f"mode {meta.get('mode', 'pessimistic')}\n")
        fh.write(f"eps {_fmt(meta.get('eps', 0.0))}\n")
        fh.write(f"horizon {meta.get('horizon', 'infinite')}\n")
        it = meta.get("iterations", (0, 0))
        fh.write(f"iterations {int(it[0])} {int(it[1])}\n")
        fh.write(f"policy {'inputs' if ctrl.policy is not None else 'none'}\n")
        fh.write(f"dims {n} {m}\n")
        fh.write(f"states {len(ctrl.states)}\n")
        for k in range(len(ctrl.states)):
            fields = [str(int(ctrl.states[k])), _fmt_row(ctrl.coords[k])]
            if ctrl.policy is not None:
                fields.append(str(int(ctrl.policy[k])))
                if m:
                    fields.append(_fmt_row(ctrl.inputs[k]))
            fields.append(_fmt(ctrl.p_min[k]))
            fields.append(_fmt(ctrl.p_max[k]))
            fh.write(" ".join(fields) + "\n")


def load_controller(path) -> Controller:
    reader = _LineReader(path)
    _parse_header(reader, "imdpctrl", 0)
    header = {}
    for key in ("spec", "mode", "eps", "horizon", "iterations", "policy",
                "dims", "states"):
        line = reader.next_line(key)
        parts = line.split(None, 1)
        if parts[0] != key:
            reader.fail(f"expected '{key}' line, found {parts[0]!r}")
        header[key] = parts[1] if len(parts) > 1 else ""
    try:
        n, m = (int(v) for v in header["dims"].split())
        count = int(header["states"])
        iterations = tuple(int(v) for v in header["iterations"].split())
        eps = float(header["eps"])
    except ValueError:
        reader.fail("malformed numeric header field")
    with_policy = header["policy"] == "inputs"
    horizon = header["horizon"]
    if horizon != "infinite":
        try:
            horizon = int(horizon)
        except ValueError:
            reader.fail("horizon must be 'infinite' or an integer")

    states = np.empty(count, dtype=np.int64)
    coords = np.empty((count, n))
    policy = np.empty(count, dtype=np.int64) if with_policy else None
    inputs = np.empty((count, m)) if with_policy else None
    p_min = np.empty(count)
    p_max = np.empty(count)
    width = 3 + n + (1 + m if with_policy else 0)
    for k in range(count):
        parts = reader.next_line(f"state row {k}").split()
        if len(parts) != width:
            reader.fail(f"state row {k}: expected {width} fields, "
                        f"got {len(parts)}")
        try:
            states[k] = int(parts[0])
            coords[k] = [float(p) for p in parts[1:1 + n]]
            pos = 1 + n
            if with_policy:
                policy[k] = int(parts[pos])
                inputs[k] = [float(p) for p in parts[pos + 1:pos + 1 + m]]
                pos += 1 + m
            p_min[k] = float(parts[pos])
            p_max[k] = float(parts[pos + 1])
        except ValueError:
            reader.fail(f"state row {k}: non-numeric token")
        if p_min[k] > p_max[k]:
            reader.fail(f"state row {k}: p_min > p_max")
    if not reader.at_end():
        reader.fail("trailing data after the declared state rows")
    meta = {"spec": header["spec"], "mode": header["mode"], "eps": eps,
            "horizon": horizon, "iterations": iterations}
    return Controller(states=states, coords=coords, policy=policy,
                      inputs=inputs, p_min=p_min, p_max=p_max, meta=meta)


_ABSTRACTION_FILES = {
    "t_min": "t_min.txt", "t_max": "t_max.txt",
    "r_min": "r_min.txt", "r_max": "r_max.txt",
    "a_min": "a_min.txt", "a_max": "a_max.txt",
}


def save_abstraction(directory, imdp):
    """Write every matrix, vector, space, and label file of an abstraction."""
    os.makedirs(directory, exist_ok=True)
    save_matrix(os.path.join(directory, "t_min.txt"), imdp.t_min)
    save_matrix(os.path.join(directory, "t_max.txt"), imdp.t_max)
    for name in ("r_min", "r_max", "a_min", "a_max"):
        save_vector(os.path.join(directory, f"{name}.txt"),
                    getattr(imdp, name))
    save_space(os.path.join(directory, "state_space.txt"), imdp.state_space)
    if imdp.input_space is not None:
        save_space(os.path.join(directory, "input_space.txt"),
                   imdp.input_space)
    if imdp.disturb_space is not None:
        save_space(os.path.join(directory, "disturb_space.txt"),
                   imdp.disturb_space)
    save_labels(os.path.join(directory, "labels.txt"), imdp.labels)


def load_abstraction(directory):
    """Rebuild an Imdp from a directory written by save_abstraction."""
    from .abstraction import Imdp

    def optional_space(name):
        p = os.path.join(directory, name)
        return load_space(p) if os.path.exists(p) else None

    imdp = Imdp(
        state_space=load_space(os.path.join(directory, "state_space.txt")),
        input_space=optional_space("input_space.txt"),
        disturb_space=optional_space("disturb_space.txt"),
        labels=load_labels(os.path.join(directory, "labels.txt")),
        t_min=load_matrix(os.path.join(directory, "t_min.txt")),
        t_max=load_matrix(os.path.join(directory, "t_max.txt")),
        r_min=load_vector(os.path.join(directory, "r_min.txt")),
        r_max=load_vector(os.path.join(directory, "r_max.txt")),
        a_min=load_vector(os.path.join(directory, "a_min.txt")),
        a_max=load_vector(os.path.join(directory, "a_max.txt")),
    )
    rows = imdp.n_rows
    if imdp.t_min.shape != (rows, imdp.n_s):
        raise FileFormatError(
            f"{directory}: matrix shape {imdp.t_min.shape} inconsistent "
            f"with spaces/labels (expected {(rows, imdp.n_s)})")
    return imdp
