"""Sectioned key=value run configuration.

A run is described by one INI-style text file:

  [state] / [input] / [disturb]   lb, ub, eta as space-separated reals
  [dynamics]                      f1..fn, one expression per coordinate
  [noise]                         type = diagonal | full | custom, plus
                                  sigma, or inv_cov/det/samples, or
                                  density/samples
  [spec]                          type = safety | reach | reach-avoid,
                                  target/avoid predicate strings
  [synthesis]                     policy, epsilon, horizon, workers, seed,
                                  low_cost, max_iterations, optimizer knobs

Sections beyond what a given subcommand needs may be omitted; callers state
their requirements and get a ConfigError naming the missing piece.
"""

import configparser
from dataclasses import dataclass

import numpy as np

from .abstraction import AbstractionOptions
from .errors import ConfigError, GridError, NoiseError, ParseError
from .expr import (DynamicsSpec, parse_density, parse_expression,
                   parse_predicate)
from .grid import LabeledStates, Space, build_space, label_states
from .noise import DEFAULT_MC_SAMPLES, CustomNoise, DiagonalNormal, FullNormal

__all__ = ["RunConfig", "load_config"]


@dataclass
class RunConfig:
    state_space: Space | None
    input_space: Space | None
    disturb_space: Space | None
    dynamics: DynamicsSpec | None
    noise: object | None
    spec_type: str | None
    target_pred: object | None
    avoid_pred: object | None
    mode: str = "pessimistic"
    eps: float = 1e-6
    horizon: int | None = None
    workers: int = 1
    seed: int = 0
    low_cost: bool = False
    optimizer_max_evals: int = 0
    optimizer_tol: float = 1e-8
    zero_cutoff: float = 1e-12
    multistart: int = 0
    max_iterations: int = 10**6

    def abstraction_options(self):
        return AbstractionOptions(
            low_cost=self.low_cost,
            optimizer_max_evals=self.optimizer_max_evals,
            optimizer_tol=self.optimizer_tol,
            zero_cutoff=self.zero_cutoff,
            multistart=self.multistart,
            workers=self.workers,
            mc_seed=self.seed)

    def labels(self) -> LabeledStates:
        if self.state_space is None:
            raise ConfigError("[state] section required to label states")
        target = self.target_pred if self.spec_type != "safety" else None
        return label_states(self.state_space, target, self.avoid_pred)


def _floats(cp, section, key):
    raw = cp.get(section, key, fallback=None)
    if raw is None:
        raise ConfigError(f"[{section}] is missing key '{key}'")
    try:
        return np.array([float(t) for t in raw.replace(";", " ").split()])
    except ValueError:
        raise ConfigError(f"[{section}] {key}: non-numeric value in {raw!r}")


def _space(cp, section):
    if not cp.has_section(section):
        return None
    try:
        return build_space(_floats(cp, section, "lb"),
                           _floats(cp, section, "ub"),
                           _floats(cp, section, "eta"))
    except GridError as exc:
        raise ConfigError(f"[{section}]: {exc}")


def _dynamics(cp, dims):
    if not cp.has_section("dynamics"):
        return None
    n = dims[0]
    exprs = []
    for d in range(n):
        key = f"f{d + 1}"
        raw = cp.get("dynamics", key, fallback=None)
        if raw is None:
            raise ConfigError(f"[dynamics] is missing key '{key}' "
                              f"(state dimension is {n})")
        try:
            exprs.append(parse_expression(raw, dims))
        except ParseError as exc:
            raise ConfigError(f"[dynamics] {key}: {exc}")
    extra = [k for k in cp.options("dynamics")
             if k.startswith("f") and k[1:].isdigit() and int(k[1:]) > n]
    if extra:
        raise ConfigError(f"[dynamics] has {extra[0]} but the state "
                          f"dimension is {n}")
    return DynamicsSpec(exprs=tuple(exprs), dims=dims)


def _noise(cp, n):
    if not cp.has_section("noise"):
        return None
    kind = cp.get("noise", "type", fallback=None)
    samples = cp.getint("noise", "samples", fallback=DEFAULT_MC_SAMPLES)
    try:
        if kind == "diagonal":
            sigma = _floats(cp, "noise", "sigma")
            if len(sigma) != n:
                raise ConfigError(f"[noise] sigma needs {n} entries, "
                                  f"got {len(sigma)}")
            return DiagonalNormal(sigma)
        if kind == "full":
            inv_cov = _floats(cp, "noise", "inv_cov")
            if len(inv_cov) != n * n:
                raise ConfigError(f"[noise] inv_cov needs {n * n} entries, "
                                  f"got {len(inv_cov)}")
            det = _floats(cp, "noise", "det")
            return FullNormal(inv_cov=inv_cov.reshape(n, n),
                              det=float(det[0]), samples=samples)
        if kind == "custom":
            raw = cp.get("noise", "density", fallback=None)
            if raw is None:
                raise ConfigError("[noise] custom type needs 'density'")
            return CustomNoise(density_expr=parse_density(raw, n), dim=n,
                               samples=samples)
    except (NoiseError, ParseError, ValueError) as exc:
        raise ConfigError(f"[noise]: {exc}")
    raise ConfigError(f"[noise] type must be diagonal, full or custom, "
                      f"got {kind!r}")


def _predicate(cp, key, n):
    raw = cp.get("spec", key, fallback=None)
    if raw is None:
        return None
    try:
        return parse_predicate(raw, n)
    except ParseError as exc:
        raise ConfigError(f"[spec] {key}: {exc}")


_SPEC_TYPES = ("safety", "reach", "reach-avoid")


def load_config(path, require=()) -> RunConfig:
    """Parse and validate one configuration file.

    require lists section names that must be present for the calling
    subcommand ('state', 'dynamics', 'noise', 'spec', 'synthesis').
    """
    cp = configparser.ConfigParser(delimiters=("=",), interpolation=None,
                                   inline_comment_prefixes=("#",))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}")

    for section in require:
        if not cp.has_section(section):
            raise ConfigError(f"config {path} is missing the "
                              f"[{section}] section")

    state = _space(cp, "state")
    inp = _space(cp, "input")
    dist = _space(cp, "disturb")
    n = state.dim if state is not None else 0
    m = inp.dim if inp is not None else 0
    p = dist.dim if dist is not None else 0
    dyn = _dynamics(cp, (n, m, p)) if state is not None else None
    noise = _noise(cp, n) if state is not None else None

    spec_type = None
    target = avoid = None
    if cp.has_section("spec"):
        spec_type = cp.get("spec", "type", fallback=None)
        if spec_type not in _SPEC_TYPES:
            raise ConfigError(f"[spec] type must be one of {_SPEC_TYPES}, "
                              f"got {spec_type!r}")
        target = _predicate(cp, "target", n)
        avoid = _predicate(cp, "avoid", n)
        if spec_type == "safety" and target is not None:
            raise ConfigError("[spec] safety forbids a target predicate")
        if spec_type in ("reach", "reach-avoid") and target is None:
            raise ConfigError(f"[spec] {spec_type} requires a target "
                              "predicate")
        if spec_type == "reach" and avoid is not None:
            raise ConfigError("[spec] plain reach forbids an avoid "
                              "predicate; use type = reach-avoid")

    cfg = RunConfig(state_space=state, input_space=inp, disturb_space=dist,
                    dynamics=dyn, noise=noise, spec_type=spec_type,
                    target_pred=target, avoid_pred=avoid)
    if cp.has_section("synthesis"):
        s = cp["synthesis"]
        try:
            cfg.mode = s.get("policy", cfg.mode)
            if cfg.mode not in ("pessimistic", "optimistic"):
                raise ConfigError(f"[synthesis] policy must be pessimistic "
                                  f"or optimistic, got {cfg.mode!r}")
            cfg.eps = float(s.get("epsilon", cfg.eps))
            horizon = s.get("horizon", "infinite")
            cfg.horizon = None if horizon == "infinite" else int(horizon)
            cfg.workers = int(s.get("workers", cfg.workers))
            cfg.seed = int(s.get("seed", cfg.seed))
            cfg.low_cost = s.getboolean("low_cost", cfg.low_cost)
            cfg.optimizer_max_evals = int(s.get("max_evals",
                                                cfg.optimizer_max_evals))
            cfg.optimizer_tol = float(s.get("tol", cfg.optimizer_tol))
            cfg.zero_cutoff = float(s.get("zero_cutoff", cfg.zero_cutoff))
            cfg.multistart = int(s.get("multistart", cfg.multistart))
            cfg.max_iterations = int(s.get("max_iterations",
                                           cfg.max_iterations))
        except ValueError as exc:
            raise ConfigError(f"[synthesis]: {exc}")
        if cfg.eps <= 0:
            raise ConfigError("[synthesis] epsilon must be positive")
        if cfg.horizon is not None and cfg.horizon < 1:
            raise ConfigError("[synthesis] horizon must be a positive "
                              "integer or 'infinite'")
        if cfg.workers < 1:
            raise ConfigError("[synthesis] workers must be >= 1")
    return cfg
