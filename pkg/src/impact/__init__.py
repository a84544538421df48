"""Interval abstraction and controller synthesis for discrete-time
stochastic control systems."""

from .abstraction import (AbstractionOptions, Imdp, RowIndex,
                          build_abstraction, estimate_cost)
from .errors import (AbstractionError, ConfigError, ConvergenceError,
                     EvalError, FileFormatError, GridError, ImpactError,
                     InfeasibleError, NoiseError, ParseError)
from .expr import (DynamicsSpec, Expr, PredicateExpr, parse_density,
                   parse_expression, parse_predicate)
from .grid import (Cell, LabeledStates, Space, build_space, cell_of,
                   label_states, quantize, rep_point)
from .noise import (CustomNoise, DiagonalNormal, FullNormal,
                    box_probability, derive_seed, mc_generator)
from .synthesis import (Controller, ValuePair, bellman_step,
                        diagnose_convergence, synthesize_reach,
                        synthesize_safe, verify)

__version__ = "0.1.0"
