"""Smallest possible sanity check: one grid cell, identity dynamics.

With a single lattice point at the origin, unit noise, and f(x) = x, the
probability of landing back in the cell [-1/2, 1/2] is P(|N(0,1)| <= 1/2),
which has a closed form.  The abstraction should reproduce it in both the
lower and upper transition bound, with everything left over credited to
the out-of-domain (avoid) mass.

Run:  python3 demos/single_cell_sanity.py
"""

import math

import numpy as np

from impact import (AbstractionOptions, DiagonalNormal, DynamicsSpec,
                    build_abstraction, build_space, label_states,
                    parse_expression)

state = build_space([0.0], [0.0], [1.0])
labels = label_states(state, None, None)

dyn = DynamicsSpec(exprs=(parse_expression("x1", (1, 0, 0)),), dims=(1, 0, 0))
noise = DiagonalNormal(np.array([1.0]))

imdp = build_abstraction(dyn, noise, (state, None, None), labels,
                         AbstractionOptions())

expected = math.erf(0.5 / math.sqrt(2))  # P(|N(0,1)| <= 1/2)
print(f"t_min          {imdp.t_min[0, 0]:.16f}")
print(f"t_max          {imdp.t_max[0, 0]:.16f}")
print(f"closed form    {expected:.16f}")
print(f"avoid interval [{imdp.a_min[0]:.16f}, {imdp.a_max[0]:.16f}]")
print(f"t + a          {imdp.t_min[0, 0] + imdp.a_min[0]:.16f}  (should be 1)")
