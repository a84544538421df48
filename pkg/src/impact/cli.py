"""Command-line driver.

  impact plan       --config FILE                cost/shape report
  impact abstract   --config FILE --out DIR      build and save abstraction
  impact synthesize --config FILE --in DIR --out FILE
  impact verify     --config FILE --in DIR --out FILE
  impact simulate   --config FILE --controller FILE --out FILE
                    --rollouts N --steps K [--seed S] [--start-pmin P]

Exit codes: 0 ok, 2 config error, 3 abstraction error, 4 synthesis
non-convergence, 5 io error.
"""

import argparse
import logging
import sys
import time

import numpy as np

from . import fileio
from .abstraction import build_abstraction, estimate_cost
from .config import load_config
from .errors import (AbstractionError, ConfigError, ConvergenceError,
                     EvalError, FileFormatError, GridError, NoiseError)
from .grid import quantize
from .noise import CustomNoise, DiagonalNormal, FullNormal, mc_generator, \
    derive_seed
from .synthesis import synthesize_reach, synthesize_safe, verify

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABSTRACTION = 3
EXIT_NONCONVERGENCE = 4
EXIT_IO = 5


def _add_common(sub):
    sub.add_argument("--config", required=True, help="run configuration file")
    sub.add_argument("--workers", type=int, default=None,
                     help="override [synthesis] workers")
    sub.add_argument("--seed", type=int, default=None,
                     help="override [synthesis] seed")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="impact",
        description="Interval abstraction and controller synthesis for "
                    "discrete-time stochastic systems.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("plan", help="report problem sizes and memory")
    _add_common(p)
    p.add_argument("--memory-warn", type=float, default=8e9,
                   help="warn when the estimate exceeds this many bytes")

    p = subs.add_parser("abstract", help="build and save the abstraction")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")

    for name in ("synthesize", "verify"):
        p = subs.add_parser(name)
        _add_common(p)
        p.add_argument("--in", dest="in_dir", required=True,
                       help="abstraction directory")
        p.add_argument("--out", required=True, help="controller file")

    p = subs.add_parser("simulate", help="closed-loop rollouts")
    _add_common(p)
    p.add_argument("--controller", required=True)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--rollouts", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--start-pmin", type=float, default=None,
                   help="only start from states with p_min >= this value")
    return parser


def _load(args, require):
    cfg = load_config(args.config, require=require)
    if args.workers is not None:
        cfg.workers = args.workers
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_plan(args):
    cfg = _load(args, require=("state",))
    labels = cfg.labels() if cfg.spec_type else None
    n_s = labels.n_safe if labels is not None else cfg.state_space.total
    n_u = cfg.input_space.total if cfg.input_space is not None else 1
    n_w = cfg.disturb_space.total if cfg.disturb_space is not None else 1
    d, nbytes, overflow = estimate_cost(n_s, n_u, n_w)
    print(f"states total     {cfg.state_space.total}")
    if labels is not None:
        print(f"states safe      {labels.n_safe}")
        print(f"states target    {len(labels.target)}")
        print(f"states avoid     {len(labels.avoid)}")
    print(f"inputs           {n_u if cfg.input_space is not None else 0}")
    print(f"disturbances     {n_w if cfg.disturb_space is not None else 0}")
    suffix = " (saturated)" if overflow else ""
    print(f"decision vars    {d}{suffix}")
    print(f"memory estimate  {nbytes} bytes{suffix}")
    if overflow or nbytes > args.memory_warn:
        print(f"warning: estimated memory exceeds "
              f"{args.memory_warn:.0f} bytes")
    return EXIT_OK


def cmd_abstract(args):
    cfg = _load(args, require=("state", "dynamics", "noise", "spec"))
    labels = cfg.labels()
    t0 = time.perf_counter()
    imdp = build_abstraction(cfg.dynamics, cfg.noise,
                             (cfg.state_space, cfg.input_space,
                              cfg.disturb_space),
                             labels, cfg.abstraction_options())
    elapsed = time.perf_counter() - t0
    fileio.save_abstraction(args.out, imdp)
    frac = float(np.mean(imdp.t_max <= cfg.zero_cutoff))
    print(f"abstraction: {imdp.n_rows} rows x {imdp.n_s} columns "
          f"in {elapsed:.1f} s")
    print(f"sparsity: {100 * frac:.1f}% of t_max entries are zero")
    print(f"written to {args.out}")
    return EXIT_OK


def _run_synthesis(cfg, imdp, with_inputs):
    kwargs = dict(mode=cfg.mode, eps=cfg.eps, horizon=cfg.horizon,
                  max_iterations=cfg.max_iterations)
    if not with_inputs:
        return verify(imdp, spec=cfg.spec_type, **kwargs)
    if cfg.spec_type == "safety":
        return synthesize_safe(imdp, **kwargs)
    ctrl = synthesize_reach(imdp, **kwargs)
    ctrl.meta["spec"] = cfg.spec_type
    return ctrl


def cmd_synthesize(args, with_inputs=True):
    cfg = _load(args, require=("spec",))
    imdp = fileio.load_abstraction(args.in_dir)
    if with_inputs and imdp.input_space is None:
        raise ConfigError("abstraction has no input space; use 'verify'")
    if not with_inputs and imdp.input_space is not None:
        raise ConfigError("abstraction has inputs; use 'synthesize'")
    ctrl = _run_synthesis(cfg, imdp, with_inputs)
    fileio.save_controller(args.out, ctrl)
    it1, it2 = ctrl.meta["iterations"]
    gap = float(np.max(ctrl.p_max - ctrl.p_min))
    print(f"iterations: phase 1 {it1}, phase 2 {it2}")
    print(f"max p_max - p_min over states: {gap:.3e}")
    print(f"controller written to {args.out}")
    return EXIT_OK


def cmd_verify(args):
    return cmd_synthesize(args, with_inputs=False)


def _noise_sampler(noise):
    if isinstance(noise, DiagonalNormal):
        sigma = noise.sigma
        return lambda rng: rng.normal(0.0, sigma)
    if isinstance(noise, FullNormal):
        cov = np.linalg.inv(noise.inv_cov)
        mean = np.zeros(noise.dim)
        return lambda rng: rng.multivariate_normal(mean, cov)
    if isinstance(noise, CustomNoise):
        raise ConfigError("simulate supports normal noise only; custom "
                          "densities have no built-in sampler")
    raise ConfigError("no noise model configured")


def cmd_simulate(args):
    cfg = _load(args, require=("state", "dynamics", "noise", "spec"))
    ctrl = fileio.load_controller(args.controller)
    if ctrl.coords.shape[1] != cfg.state_space.dim:
        raise ConfigError("controller dimension does not match [state]")
    if args.rollouts < 1 or args.steps < 1:
        raise ConfigError("--rollouts and --steps must be >= 1")
    sample = _noise_sampler(cfg.noise)
    labels = cfg.labels()
    target_set = set(int(i) for i in labels.target)
    avoid_set = set(int(i) for i in labels.avoid)
    # Controller lookup by flat state index.
    by_state = {int(s): k for k, s in enumerate(ctrl.states)}

    starts = np.arange(len(ctrl.states))
    if args.start_pmin is not None:
        starts = starts[ctrl.p_min >= args.start_pmin]
        if len(starts) == 0:
            raise ConfigError(f"no states with p_min >= {args.start_pmin}")
    w_center = ((cfg.disturb_space.lb + cfg.disturb_space.ub) / 2
                if cfg.disturb_space is not None else np.zeros(0))
    reach_like = cfg.spec_type in ("reach", "reach-avoid")
    n = cfg.state_space.dim

    rows = []
    successes = 0
    visited = []
    for r in range(args.rollouts):
        rng = mc_generator(derive_seed(cfg.seed, r, 0))
        k = int(starts[r % len(starts)])
        visited.append(k)
        x = ctrl.coords[k].copy()
        satisfied = not reach_like  # safety holds until violated
        trace = [(0, x.copy())]
        for step in range(1, args.steps + 1):
            try:
                state = quantize(cfg.state_space, x)
            except GridError:
                satisfied = False  # left the covered domain
                break
            if state in avoid_set:
                satisfied = False
                break
            if reach_like and state in target_set:
                satisfied = True
                break
            slot = by_state.get(state)
            if slot is None:
                satisfied = False
                break
            u = ctrl.inputs[slot] if ctrl.inputs is not None else np.zeros(0)
            x = cfg.dynamics.eval(x, u, w_center) + sample(rng)
            trace.append((step, x.copy()))
        successes += bool(satisfied)
        for step, pt in trace:
            rows.append((r, step, pt, int(satisfied)))

    try:
        with open(args.out, "w", encoding="ascii", newline="\n") as fh:
            coords = ",".join(f"x{d + 1}" for d in range(n))
            fh.write(f"rollout,step,{coords},satisfied\n")
            for r, step, pt, sat in rows:
                vals = ",".join(format(v, ".17g") for v in pt)
                fh.write(f"{r},{step},{vals},{sat}\n")
    except OSError as exc:
        raise FileFormatError(f"cannot write {args.out}: {exc}")

    frac = successes / args.rollouts
    visited = np.array(sorted(set(visited)))
    print(f"rollouts: {args.rollouts}, steps: {args.steps}")
    print(f"empirical satisfaction: {frac:.4f}")
    print(f"controller bounds over start states: "
          f"[{float(np.mean(ctrl.p_min[visited])):.4f}, "
          f"{float(np.mean(ctrl.p_max[visited])):.4f}]")
    return EXIT_OK


_COMMANDS = {
    "plan": cmd_plan,
    "abstract": cmd_abstract,
    "synthesize": cmd_synthesize,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
}


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AbstractionError, NoiseError, EvalError, GridError) as exc:
        print(f"abstraction error: {exc}", file=sys.stderr)
        return EXIT_ABSTRACTION
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        print(f"per-bound self-convergence: k0={exc.k0}, k1={exc.k1}; "
              "rerun with horizon set to the larger value",
              file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (FileFormatError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
