"""Verification mode and the non-convergence diagnostic.

Two small input-free chains.  The first is an honest contractive chain whose
interval iteration closes its gap and certifies the safety probability.  The
second has an absorbing safe state, the classic case where the upper iterate
stays pinned at one: the gap never closes, diagnose_convergence exposes the
per-bound self-convergence horizons, and the synthesis falls back to the
value-iteration answer on the lower track.

Run:  python3 demos/verify_and_diagnose.py
"""

import numpy as np

from impact import (Imdp, LabeledStates, build_space, diagnose_convergence,
                    verify)


def chain(t_rows, r, a):
    t = np.asarray(t_rows, dtype=float)
    n = t.shape[0]
    state = build_space([0.0], [float(n - 1)], [1.0])
    labels = LabeledStates(safe=np.arange(n),
                           target=np.array([], dtype=np.int64),
                           avoid=np.array([], dtype=np.int64), total=n)
    r = np.asarray(r, dtype=float)
    a = np.asarray(a, dtype=float)
    return Imdp(state_space=state, input_space=None, disturb_space=None,
                labels=labels, t_min=t, t_max=t, r_min=r, r_max=r,
                a_min=a, a_max=a)


# leaky chain: every state loses 10% to the unsafe region each step
leaky = chain([[0.6, 0.3], [0.2, 0.7]], [0.0, 0.0], [0.1, 0.1])
ctrl = verify(leaky, spec="safety", eps=1e-9)
print("leaky chain, infinite-horizon safety:")
for k in range(2):
    print(f"  state {k}: P in [{ctrl.p_min[k]:.6f}, {ctrl.p_max[k]:.6f}]")
print(f"  fallback used: {ctrl.meta['fallback']}")

# same chain, 10-step horizon: survival is still substantial
ctrl10 = verify(leaky, spec="safety", horizon=10)
print(f"  10-step safety of state 0: {ctrl10.p_min[0]:.6f}")

# absorbing chain: state 1 self-loops with probability one, so the reach
# iteration's upper bound never moves and the gap criterion cannot fire
absorbing = chain([[0.5, 0.3], [0.0, 1.0]], [0.2, 0.0], [0.0, 0.0])
k0, k1 = diagnose_convergence(absorbing, spec="reach", eps=1e-6)
print("\nabsorbing chain, reach:")
print(f"  self-convergence horizons k0={k0}, k1={k1}")
ctrl = verify(absorbing, spec="reach", eps=1e-6)
print(f"  fallback used: {ctrl.meta['fallback']}")
for k in range(2):
    print(f"  state {k}: P in [{ctrl.p_min[k]:.6f}, {ctrl.p_max[k]:.6f}]")
