"""Acceptance gate: ten end-to-end criteria, one printed verdict line each.

Verdict lines are collected in VERDICTS and echoed by conftest.py in the
terminal summary, so they survive pytest's output capture.  Criteria that
need the full 2D robot abstraction share one module-scoped build per worker
count.
"""

import csv
import math
import os
import sys
import time

import numpy as np
import pytest

from impact.abstraction import build_abstraction
from impact.cli import main
from impact.config import load_config
from impact.errors import ImpactError
from impact.feasible import FeasibleProblem, solve_bruteforce, solve_sorted
from impact.fileio import load_controller, save_abstraction, save_controller
from impact.grid import Cell, LabeledStates, build_space
from impact.noise import DiagonalNormal, FullNormal, box_probability
from impact.optimize import optimize_over_cell
from impact.synthesis import (ValuePair, bellman_step, synthesize_reach,
                              synthesize_safe, verify)

BENCH = os.path.join(os.path.dirname(__file__), os.pardir, "benchmarks")


VERDICTS = []


def report(num, ok, detail):
    verdict = "PASS" if ok else "FAIL"
    line = f"criterion {num:2d}: {verdict} - {detail}"
    VERDICTS.append(line)
    print(line, file=sys.__stdout__, flush=True)
    assert ok, f"criterion {num}: {detail}"


def bench_cfg(name):
    return load_config(os.path.join(BENCH, name))


@pytest.fixture(scope="module")
def robot2d(tmp_path_factory):
    """robot2d_reach abstractions for workers 1/4/8 plus the w=1 controller.

    Built once; criteria 4, 8, and 9 all read from here.  Wall-clock times
    for the worker-1 build and the synthesis are kept for criterion 9.
    """
    cfg = bench_cfg("robot2d_reach.cfg")
    labels = cfg.labels()
    spaces = (cfg.state_space, cfg.input_space, cfg.disturb_space)
    base = tmp_path_factory.mktemp("robot2d")
    dirs = {}
    imdps = {}
    t_abs = None
    for w in (1, 4, 8):
        cfg.workers = w
        t0 = time.perf_counter()
        imdp = build_abstraction(cfg.dynamics, cfg.noise, spaces, labels,
                                 cfg.abstraction_options())
        elapsed = time.perf_counter() - t0
        if w == 1:
            t_abs = elapsed
        d = base / f"w{w}"
        save_abstraction(d, imdp)
        dirs[w] = d
        imdps[w] = imdp
    t0 = time.perf_counter()
    ctrl = synthesize_reach(imdps[1], mode="pessimistic", eps=1e-6)
    t_synth = time.perf_counter() - t0
    ctrl_path = base / "ctrl_w1.txt"
    save_controller(ctrl_path, ctrl)
    return {"cfg_path": os.path.join(BENCH, "robot2d_reach.cfg"),
            "dirs": dirs, "imdps": imdps, "ctrl": ctrl,
            "ctrl_path": ctrl_path, "base": base,
            "t_abs": t_abs, "t_synth": t_synth}


def test_criterion_1_grid_cardinalities():
    t0 = time.perf_counter()
    expect = {
        "robot2d_reach_disturb.cfg": (441, 121, 11),
        "robot2d_reachavoid.cfg": (1681, 441, None),
        "vehicle3d.cfg": (7938, 30, None),
        "room3d.cfg": (9261, 36, None),
        "room5d.cfg": (7776, 36, None),
        "bas4d.cfg": (1225, 4, None),
        "bas7d_verify.cfg": (107163, None, None),
        "dim14_verify.cfg": (16384, None, None),
    }
    bad = []
    for name, (n_x, n_u, n_w) in expect.items():
        cfg = bench_cfg(name)
        got = (cfg.state_space.total,
               cfg.input_space.total if cfg.input_space else None,
               cfg.disturb_space.total if cfg.disturb_space else None)
        if got != (n_x, n_u, n_w):
            bad.append(f"{name}: {got}")
    elapsed = time.perf_counter() - t0
    report(1, not bad and elapsed < 1.0,
           f"benchmark grid sizes exact in {elapsed:.2f} s"
           + (f"; mismatches {bad}" if bad else ""))


def test_criterion_2_feasible_optimality():
    t0 = time.perf_counter()
    rng = np.random.default_rng(12345)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        q = rng.dirichlet(np.ones(n))
        lower = np.clip(q - rng.uniform(0, 0.3, n), 0, 1)
        upper = np.clip(q + rng.uniform(0, 0.3, n), 0, 1)
        weights = rng.uniform(-1, 2, n)
        for direction in ("min", "max"):
            p = FeasibleProblem(lower, upper, weights, direction)
            v_sorted, _ = solve_sorted(p)
            v_brute, _ = solve_bruteforce(p)
            worst = max(worst, abs(v_sorted - v_brute))
    elapsed = time.perf_counter() - t0
    report(2, worst <= 1e-9 and elapsed < 10.0,
           f"1000 random LPs, max |sorted - bruteforce| = {worst:.2e} "
           f"in {elapsed:.1f} s")


def test_criterion_3_kernel_accuracy():
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    worst = 0.0
    noise = DiagonalNormal(np.array([0.7, 1.3]))
    for _ in range(200):
        mean = rng.uniform(-2, 2, 2)
        lo = rng.uniform(-3, 1, 2)
        hi = lo + rng.uniform(0.1, 3, 2)
        got = box_probability(noise, mean, Cell(lo=lo, hi=hi))
        want = 1.0
        for d in range(2):
            a = (lo[d] - mean[d]) / (0.7 if d == 0 else 1.3) / math.sqrt(2)
            b = (hi[d] - mean[d]) / (0.7 if d == 0 else 1.3) / math.sqrt(2)
            want *= 0.5 * (math.erf(b) - math.erf(a))
        worst = max(worst, abs(got - want))

    full = FullNormal(inv_cov=np.eye(2), det=1.0, samples=20000)
    unit = DiagonalNormal(np.ones(2))
    misses = 0
    from impact.noise import derive_seed, mc_box_probability
    for trial in range(100):
        mean = rng.uniform(-1, 1, 2)
        lo = rng.uniform(-2, 0, 2)
        hi = lo + rng.uniform(0.5, 2.5, 2)
        cell = Cell(lo=lo, hi=hi)
        est, stderr = mc_box_probability(full, mean, cell,
                                         derive_seed(9, trial, 0))
        exact = box_probability(unit, mean, cell)
        if abs(est - exact) > 4 * max(stderr, 1e-12):
            misses += 1
    elapsed = time.perf_counter() - t0
    report(3, worst <= 1e-12 and misses == 0 and elapsed < 60.0,
           f"erf max err {worst:.1e}; MC outside 4*stderr on {misses}/100 "
           f"cells; {elapsed:.1f} s")


def test_criterion_4_abstraction_soundness(robot2d):
    rng = np.random.default_rng(4242)
    sigma = 0.9
    worst = 0.0
    for _ in range(100):
        a = rng.uniform(-2, 2)
        b = rng.uniform(-3, 3)
        c_lo = rng.uniform(-2, 2)
        c_hi = c_lo + rng.uniform(0.1, 2.0)
        d_lo = rng.uniform(-4, 4)
        d_hi = d_lo + rng.uniform(0.2, 2.0)

        def f(x, a=a, b=b):
            m = a * x[0] + b
            z = math.sqrt(2) * sigma
            return 0.5 * (math.erf((d_hi - m) / z) - math.erf((d_lo - m) / z))

        xs = np.linspace(c_lo, c_hi, 1001)
        dense = np.array([f([x]) for x in xs])
        cell = Cell(lo=np.array([c_lo]), hi=np.array([c_hi]))
        worst = max(worst,
                    abs(optimize_over_cell(f, cell, "min") - dense.min()),
                    abs(optimize_over_cell(f, cell, "max") - dense.max()))

    imdp = robot2d["imdps"][1]
    try:
        imdp.validate()
        invariants = True
    except ImpactError:
        invariants = False
    sums_min = imdp.t_min.sum(axis=1) + imdp.r_min + imdp.a_min
    sums_max = imdp.t_max.sum(axis=1) + imdp.r_max + imdp.a_max
    rows_ok = bool(np.all(sums_min <= 1 + 1e-9)
                   and np.all(sums_max >= 1 - 1e-9))
    report(4, worst <= 1e-6 and invariants and rows_ok,
           f"1D optimizer vs 1001-point scan max err {worst:.1e}; "
           f"robot2d row invariants {'hold' if invariants and rows_ok else 'VIOLATED'}")


def test_criterion_5_bracket_and_oracle():
    def mdp_vi(t, r, eps=1e-12):
        v = np.zeros(len(r))
        while True:
            new = t @ v + r
            if np.max(np.abs(new - v)) <= eps:
                return new
            v = new

    seen = []
    orig = ValuePair.check_bracket

    def spy(self):
        seen.append(bool(np.all(self.v0 <= self.v1 + 1e-9)))
        return orig(self)

    ValuePair.check_bracket = spy
    try:
        rng = np.random.default_rng(999)
        worst = 0.0
        for _ in range(200):
            n_s = int(rng.integers(2, 21))
            full = rng.dirichlet(np.ones(n_s + 2), size=n_s)
            t = 0.95 * full[:, :n_s]
            r = full[:, n_s] + (1 - t.sum(axis=1) - full[:, n_s]
                                - full[:, n_s + 1]) / 2
            a = 1 - t.sum(axis=1) - r
            state = build_space([0.0], [float(n_s - 1)], [1.0])
            labels = LabeledStates(safe=np.arange(n_s),
                                   target=np.array([], dtype=np.int64),
                                   avoid=np.array([], dtype=np.int64),
                                   total=n_s)
            from impact.abstraction import Imdp
            m = Imdp(state_space=state, input_space=None, disturb_space=None,
                     labels=labels, t_min=t, t_max=t, r_min=r, r_max=r,
                     a_min=a, a_max=a)
            expected = mdp_vi(t, r)
            for mode in ("pessimistic", "optimistic"):
                c = synthesize_reach(m, mode=mode, eps=1e-11)
                worst = max(worst,
                            float(np.max(np.abs(c.p_min - expected))),
                            float(np.max(np.abs(c.p_max - expected))))
    finally:
        ValuePair.check_bracket = orig
    report(5, worst <= 1e-9 and seen and all(seen),
           f"200 degenerate IMDPs, max |synthesis - VI oracle| = "
           f"{worst:.1e}; bracket held at all {len(seen)} checks")


def make_chain(r, a, t):
    from impact.abstraction import Imdp
    state = build_space([0.0], [0.0], [1.0])
    labels = LabeledStates(safe=np.array([0]),
                           target=np.array([], dtype=np.int64),
                           avoid=np.array([], dtype=np.int64), total=1)
    return Imdp(state_space=state, input_space=None, disturb_space=None,
                labels=labels, t_min=np.array([[t]]), t_max=np.array([[t]]),
                r_min=np.array([r]), r_max=np.array([r]),
                a_min=np.array([a]), a_max=np.array([a]))


def test_criterion_6_hand_chains():
    reach = make_chain(0.2, 0.0, 0.8)
    safe = make_chain(0.0, 0.2, 0.8)
    values = {
        "reach inf": synthesize_reach(reach, eps=1e-10).p_min[0],
        "reach K=2": synthesize_reach(reach, horizon=2).p_min[0],
        "safety inf": synthesize_safe(safe, eps=1e-10).p_min[0],
        "safety K=2": synthesize_safe(safe, horizon=2).p_min[0],
    }
    expect = {"reach inf": 1.0, "reach K=2": 0.36,
              "safety inf": 0.0, "safety K=2": 0.64}
    errs = {k: abs(values[k] - expect[k]) for k in expect}
    worst = max(errs.values())
    report(6, worst <= 1e-9,
           "hand chains " + ", ".join(f"{k}={values[k]:.6f}" for k in expect)
           + f"; max err {worst:.1e}")


def test_criterion_7_complement_identity():
    rng = np.random.default_rng(8)
    full = rng.dirichlet(np.ones(7), size=5)
    t = 0.9 * full[:, :5]
    a = 1 - t.sum(axis=1)
    from impact.abstraction import Imdp
    state = build_space([0.0], [4.0], [1.0])
    labels = LabeledStates(safe=np.arange(5),
                           target=np.array([], dtype=np.int64),
                           avoid=np.array([], dtype=np.int64), total=5)
    m = Imdp(state_space=state, input_space=None, disturb_space=None,
             labels=labels, t_min=t, t_max=t,
             r_min=np.zeros(5), r_max=np.zeros(5), a_min=a, a_max=a)
    ctrl = synthesize_safe(m, eps=1e-10)
    v = np.zeros(5)
    for _ in range(ctrl.meta["iterations"][0]):
        v, _ = bellman_step(m, v, "max", "min", "safety")
    exact = bool(np.array_equal(ctrl.p_min, 1.0 - v))
    report(7, exact, "safety p_min equals 1 - avoid-reach value "
           + ("exactly (bitwise)" if exact else "ONLY APPROXIMATELY"))


def _dir_bytes(d):
    out = {}
    for name in sorted(os.listdir(d)):
        with open(os.path.join(d, name), "rb") as fh:
            out[name] = fh.read()
    return out


def test_criterion_8_determinism(robot2d):
    files = {w: _dir_bytes(robot2d["dirs"][w]) for w in (1, 4, 8)}
    matrices_equal = files[1] == files[4] == files[8]
    ctrl8 = synthesize_reach(robot2d["imdps"][8], mode="pessimistic",
                             eps=1e-6)
    p8 = robot2d["base"] / "ctrl_w8.txt"
    save_controller(p8, ctrl8)
    with open(robot2d["ctrl_path"], "rb") as f1, open(p8, "rb") as f2:
        controllers_equal = f1.read() == f2.read()
    report(8, matrices_equal and controllers_equal,
           f"abstraction files byte-identical across workers 1/4/8: "
           f"{matrices_equal}; controllers byte-identical: "
           f"{controllers_equal}")


def test_criterion_9_end_to_end(robot2d, tmp_path, capsys):
    total = robot2d["t_abs"] + robot2d["t_synth"]
    ctrl = robot2d["ctrl"]
    bracket_ok = bool(np.all(ctrl.p_min <= ctrl.p_max))

    csv_path = tmp_path / "rollouts.csv"
    code = main(["simulate", "--config", robot2d["cfg_path"],
                 "--controller", str(robot2d["ctrl_path"]),
                 "--out", str(csv_path), "--rollouts", "500",
                 "--steps", "20", "--start-pmin", "0.8", "--seed", "11"])
    capsys.readouterr()
    sat = {}
    with open(csv_path) as fh:
        for row in csv.DictReader(fh):
            sat[int(row["rollout"])] = int(row["satisfied"])
    empirical = sum(sat.values()) / len(sat)
    p_floor = float(np.min(ctrl.p_min[ctrl.p_min >= 0.8]))
    stderr = math.sqrt(p_floor * (1 - p_floor) / 500)
    ok = (code == 0 and len(sat) == 500 and bracket_ok
          and total < 1800 and empirical >= p_floor - 3 * stderr)
    report(9, ok,
           f"abstraction {robot2d['t_abs']:.0f} s + synthesis "
           f"{robot2d['t_synth']:.0f} s (< 1800 s); p_min <= p_max: "
           f"{bracket_ok}; 500 rollouts: {empirical:.3f} vs floor "
           f"{p_floor:.3f} - 3*{stderr:.3f}")


def test_criterion_10_plan_predicts_without_running(capsys):
    t0 = time.perf_counter()
    outputs = {}
    for name in ("bas7d_verify.cfg", "dim14_verify.cfg"):
        code = main(["plan", "--config", os.path.join(BENCH, name)])
        outputs[name] = (code, capsys.readouterr().out)
    elapsed = time.perf_counter() - t0
    ok7 = (outputs["bas7d_verify.cfg"][0] == 0
           and "states total     107163" in outputs["bas7d_verify.cfg"][1])
    ok14 = (outputs["dim14_verify.cfg"][0] == 0
            and "states total     16384" in outputs["dim14_verify.cfg"][1])
    report(10, ok7 and ok14 and elapsed < 5.0,
           f"plan reports 7D=107163 and 14D=16384 states in "
           f"{elapsed:.2f} s without building")
